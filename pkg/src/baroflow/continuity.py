"""Implicit-Euler solver for the diffusive continuity equation.

The weak form solved at every step, for all grid test functions phi:

    int (rho' - rho) phi = dt [ int (rho' u . grad phi - eps grad rho' . grad phi)
                                - bdry phi rho' u_B.n
                                + bdry phi (rho' - rho_B) min(u_B.n, 0)
                                + int g phi ]

with all fields at the new level (rho') and grad phi taken by the SBP
difference operators.  Because the discrete divergence theorem is exact for
that pairing, the constant test function reproduces the mass ledger to
solver precision, and the renormalized identity with B(r) = r collapses to
the same ledger.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .errors import StepRejection


class ContinuitySolver:
    def __init__(self, domain, boundary, eps):
        self.domain = domain
        self.boundary = boundary
        self.eps = float(eps)
        self._wd, self._dx, self._dy, self._lap = domain.sparse_operators()
        self._wflat = domain.W.ravel()
        self._flux_full = sparse.diags(boundary.flux_full.ravel())
        self._flux_neg = sparse.diags(boundary.flux_negative.ravel())
        self._rhob_flat = boundary.rho_b_grid.ravel()

    def _convection(self, u):
        wu1 = self._wflat * u[..., 0].ravel()
        wu2 = self._wflat * u[..., 1].ravel()
        return self._dx.T @ sparse.diags(wu1) + self._dy.T @ sparse.diags(wu2)

    def step(self, rho, u, dt, source=None):
        """Advance the density one implicit step; returns (rho_new, residual).

        Raises :class:`StepRejection` when the linear solve degrades or the
        new density loses positivity.
        """
        if dt <= 0:
            raise StepRejection("nonpositive dt", suggested_dt=None)
        conv = self._convection(u)
        system = (
            self._wd
            - dt * conv
            + dt * self.eps * self._lap
            + dt * self._flux_full
            - dt * self._flux_neg
        ).tocsc()
        rhs = self._wflat * rho.ravel() - dt * (
            self.boundary.flux_negative.ravel() * self._rhob_flat
        )
        if source is not None:
            rhs = rhs + dt * self._wflat * source.ravel()
        try:
            lu = spla.splu(system)
            new_flat = lu.solve(rhs)
        except RuntimeError as exc:
            raise StepRejection(
                f"density solve failed ({exc}); try a smaller step",
                suggested_dt=dt / 2.0,
            ) from exc
        if not np.all(np.isfinite(new_flat)):
            raise StepRejection(
                "density solve produced non-finite values", suggested_dt=dt / 2.0
            )
        resid = system @ new_flat - rhs
        scale = max(float(np.abs(rhs).max()), 1e-300)
        rel = float(np.abs(resid).max()) / scale
        if rel > 1e-11:
            raise StepRejection(
                f"density solve residual {rel:.2e} exceeds 1e-11 of scale",
                suggested_dt=dt / 2.0,
                diagnostics={"relative_residual": rel},
            )
        rho_new = new_flat.reshape(self.domain.shape)
        if rho_new.min() <= 0.0:
            raise StepRejection(
                f"density positivity lost (min {rho_new.min():.3e}); "
                "the step is too aggressive for the current velocity",
                suggested_dt=dt / 2.0,
                diagnostics={"min_rho": float(rho_new.min())},
            )
        return rho_new, rel

    def mass_ledger_residual(self, rho0, rho1, dt, source=None):
        """phi = 1 instance of the solved weak form; zero to solver precision."""
        dom, bnd = self.domain, self.boundary
        lhs = dom.integrate(rho1 - rho0)
        rhs = -float(np.sum(bnd.flux_full * rho1)) + float(
            np.sum(bnd.flux_negative * (rho1 - bnd.rho_b_grid))
        )
        if source is not None:
            rhs += dom.integrate(source)
        return lhs - dt * rhs


# ---------------------------------------------------------------------------
# monitors over density histories (Trajectory or DensityRun)


@dataclass
class PrincipleReport:
    passed: bool
    margin: float
    bounds: np.ndarray
    extremes: np.ndarray
    times: np.ndarray


def mass_ledger(run, eps=None):
    """Per-step ledger residuals and the worst relative magnitude."""
    solver = ContinuitySolver(run.domain, run.boundary, eps if eps is not None else run.eps)
    residuals = []
    worst = 0.0
    for step in run.density_steps():
        r = solver.mass_ledger_residual(step.rho0, step.rho1, step.dt, step.source)
        scale = max(run.domain.integrate(np.abs(step.rho1)), 1e-300)
        residuals.append((step.t1, r, abs(r) / scale))
        worst = max(worst, abs(r) / scale)
    return residuals, worst


def _data_bounds(run):
    steps = list(run.density_steps())
    rho0 = steps[0].rho0
    bnd = run.boundary
    inflow = bnd.inflow_density_bounds()
    return steps, rho0, inflow


def max_principle_bound(run, tolerance=1e-8):
    """Time-integrated form of the parabolic maximum principle."""
    steps, rho0, inflow = _data_bounds(run)
    cap = max(float(rho0.max()), run.boundary.max_boundary_speed())
    if inflow is not None:
        cap = max(cap, inflow[1])
    times, bounds, extremes = [], [], []
    integral = 0.0
    for step in steps:
        integral += step.dt * step.div_u_norm
        times.append(step.t1)
        bounds.append(cap * np.exp(integral))
        extremes.append(float(step.rho1.max()))
    bounds = np.array(bounds)
    extremes = np.array(extremes)
    margin = float((bounds - extremes).min()) if len(bounds) else np.inf
    scale = max(cap, 1.0)
    return PrincipleReport(
        passed=bool(margin >= -tolerance * scale),
        margin=margin,
        bounds=bounds,
        extremes=extremes,
        times=np.array(times),
    )


def min_principle_bound(run, tolerance=1e-8):
    """Strict-positivity bound: rho >= (min data) exp(-int ||div u||)."""
    steps, rho0, inflow = _data_bounds(run)
    floor = float(rho0.min())
    if inflow is not None:
        floor = min(floor, inflow[0])
    times, bounds, extremes = [], [], []
    integral = 0.0
    for step in steps:
        integral += step.dt * step.div_u_norm
        times.append(step.t1)
        bounds.append(floor * np.exp(-integral))
        extremes.append(float(step.rho1.min()))
    bounds = np.array(bounds)
    extremes = np.array(extremes)
    margin = float((extremes - bounds).min()) if len(bounds) else np.inf
    scale = max(floor, 1.0)
    return PrincipleReport(
        passed=bool(margin >= -tolerance * scale),
        margin=margin,
        bounds=bounds,
        extremes=extremes,
        times=np.array(times),
    )


def minimum_principle_floor(run):
    """The comparison function chi(t) = (min data) exp(-int ||div u||) per step."""
    steps, rho0, inflow = _data_bounds(run)
    floor = float(rho0.min())
    if inflow is not None:
        floor = min(floor, inflow[0])
    chis = [floor]
    integral = 0.0
    for step in steps:
        integral += step.dt * step.div_u_norm
        chis.append(floor * np.exp(-integral))
    return np.array(chis)


@dataclass
class ScalarC2:
    """A C^2 renormalization profile B with its first two derivatives."""

    value: callable
    derivative: callable
    second: callable


IDENTITY_B = ScalarC2(lambda r: r, lambda r: np.ones_like(r), lambda r: np.zeros_like(r))
SQUARE_B = ScalarC2(lambda r: r**2, lambda r: 2.0 * r, lambda r: np.full_like(r, 2.0))


def renormalized_residual(run, B, chi=None):
    """Defect of the integrated renormalized identity, one value per step.

    ``chi`` is either None (zero shift), a callable of time, or an array of
    per-state values aligned with the step sequence.  Divergences of nodal
    products use the SBP operators, so B(r) = r reproduces the mass ledger
    identically.
    """
    dom, bnd = run.domain, run.boundary
    eps = run.eps
    residuals = []
    steps = list(run.density_steps())

    def chi_at(idx, t):
        if chi is None:
            return 0.0
        if callable(chi):
            return float(chi(t))
        return float(chi[idx])

    for k, step in enumerate(steps):
        chi0 = chi_at(k, step.t0)
        chi1 = chi_at(k + 1, step.t1)
        r0 = step.rho0 - chi0
        r1 = step.rho1 - chi1
        u1, u2 = step.u[..., 0], step.u[..., 1]
        div_ru = dom.dx1(r1 * u1) + dom.dx2(r1 * u2)
        div_u = dom.dx1(u1) + dom.dx2(u2)
        g1, g2 = dom.dx1(step.rho1), dom.dx2(step.rho1)
        b1 = B.derivative(r1)
        res = dom.integrate(B.value(r1) - B.value(r0))
        res += step.dt * dom.integrate(div_ru * b1)
        res += step.dt * eps * dom.integrate((g1 * g1 + g2 * g2) * B.second(r1))
        res += step.dt * dom.integrate(((chi1 - chi0) / step.dt + chi1 * div_u) * b1)
        res -= step.dt * float(
            np.sum(bnd.flux_negative * b1 * (step.rho1 - bnd.rho_b_grid))
        )
        if step.source is not None:
            res -= step.dt * dom.integrate(step.source * b1)
        residuals.append((step.t1, res))
    return residuals


def negative_part_functional(run, chi_values):
    """int max(chi - rho, 0) per state; zero iff rho >= chi everywhere."""
    vals = []
    steps = list(run.density_steps())
    if not steps:
        return vals
    vals.append(run.domain.integrate(np.maximum(chi_values[0] - steps[0].rho0, 0.0)))
    for k, step in enumerate(steps):
        vals.append(run.domain.integrate(np.maximum(chi_values[k + 1] - step.rho1, 0.0)))
    return vals


def parabolic_energy_monitor(run):
    """Discrete versions of the parabolic a-priori quantities.

    Returns cumulative int ||d_t rho||_L2^2 dt and the series eps ||grad rho||^2.
    """
    dom = run.domain
    eps = run.eps
    time_derivative_sq = 0.0
    eps_grad_series = []
    times = []
    first = True
    for step in run.density_steps():
        if first:
            g1, g2 = dom.dx1(step.rho0), dom.dx2(step.rho0)
            eps_grad_series.append(eps * dom.integrate(g1 * g1 + g2 * g2))
            times.append(step.t0)
            first = False
        dtr = (step.rho1 - step.rho0) / step.dt
        time_derivative_sq += step.dt * dom.integrate(dtr * dtr)
        g1, g2 = dom.dx1(step.rho1), dom.dx2(step.rho1)
        eps_grad_series.append(eps * dom.integrate(g1 * g1 + g2 * g2))
        times.append(step.t1)
    return {
        "time_derivative_l2_sq": time_derivative_sq,
        "eps_grad_rho_sq": np.array(eps_grad_series),
        "times": np.array(times),
        "eps_sup_grad_rho_sq": float(np.max(eps_grad_series)) if eps_grad_series else 0.0,
    }
