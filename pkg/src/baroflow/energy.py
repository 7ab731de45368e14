"""Term-by-term energy ledgers, weak-form residuals, and defect diagnostics.

Every evaluator uses the solver's own quadrature (trapezoid weights, SBP
differences, analytic basis gradients) so the reported slacks measure the
inequalities themselves, not a change of discretization.  The diffusion
term of the energy inequality is quadrated in the chain-consistent form
eps * sum W grad(rho) . grad(P'(rho)), a nonnegative discretization of
eps * int P''(rho) |grad rho|^2 that makes the discrete ledger close.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .domain import BoundaryData, Domain
from .eos import make_law
from .errors import DomainError
from .expressions import ScalarField, VectorField
from .rheology import NewtonianPotential, PowerLawPotential, deviator, fenchel_young_gap


@dataclass
class EnergyReport:
    """All terms of the energy inequality over one time interval.

    Flux and dissipation entries are already integrated in time; ``slack``
    is RHS - LHS and must stay above -tolerance * energy_scale.
    """

    t_start: float
    t_end: float
    energy_start: float
    energy_end: float
    dissipation: float
    outflow_potential_flux: float
    inflow_relative_potential: float
    eps_potential_diffusion: float
    rhs_convective: float
    rhs_kinetic_boundary: float
    rhs_stress_boundary: float
    rhs_inflow_potential: float
    source_momentum_work: float = 0.0
    source_kinetic_work: float = 0.0
    source_potential_work: float = 0.0
    per_step: list = field(default_factory=list, repr=False)

    @property
    def lhs_total(self):
        return (
            self.energy_end
            - self.energy_start
            + self.dissipation
            + self.outflow_potential_flux
            + self.inflow_relative_potential
            + self.eps_potential_diffusion
        )

    @property
    def rhs_total(self):
        return (
            self.rhs_convective
            + self.rhs_kinetic_boundary
            + self.rhs_stress_boundary
            + self.rhs_inflow_potential
            + self.source_momentum_work
            + self.source_kinetic_work
            + self.source_potential_work
        )

    @property
    def slack(self):
        return self.rhs_total - self.lhs_total

    @property
    def energy_scale(self):
        return max(abs(self.energy_start), abs(self.energy_end), 1e-30)

    CSV_FIELDS = (
        "t_start",
        "t_end",
        "energy_start",
        "energy_end",
        "dissipation",
        "outflow_potential_flux",
        "inflow_relative_potential",
        "eps_potential_diffusion",
        "rhs_convective",
        "rhs_kinetic_boundary",
        "rhs_stress_boundary",
        "rhs_inflow_potential",
        "source_momentum_work",
        "source_kinetic_work",
        "source_potential_work",
        "slack",
    )

    def csv_row(self):
        return [getattr(self, name) for name in self.CSV_FIELDS]


def total_energy(model, state):
    return model.total_energy(state)


def _step_energy_report(model, s0, s1):
    dom = model.domain
    bnd = model.boundary
    law = model.law
    dt = s1.t - s0.t
    W = dom.W

    e0 = model.total_energy(s0)
    e1 = model.total_energy(s1)

    strain = model.strain(s1.coeffs)
    stress = model.potential.gradient(strain)
    u1 = model.velocity(s1.coeffs)
    v1 = model.interior_velocity(s1.coeffs)
    rho1 = s1.rho

    dissipation = dt * float(np.sum(W * np.einsum("xyab,xyab->xy", stress, strain)))

    pot1 = law.potential(rho1)
    outflow = dt * bnd.boundary_integral(pot1, where="out")
    breg_in = (
        law.potential(bnd.rho_b_grid)
        - law.potential_derivative(rho1) * (bnd.rho_b_grid - rho1)
        - pot1
    )
    inflow_breg = -dt * bnd.boundary_integral(breg_in, where="in")

    gr1, gr2 = dom.dx1(rho1), dom.dx2(rho1)
    dp1, dp2 = dom.dx1(law.potential_derivative(rho1)), dom.dx2(
        law.potential_derivative(rho1)
    )
    eps_term = dt * model.eps * float(np.sum(W * (gr1 * dp1 + gr2 * dp2)))

    conv = -dt * float(
        np.sum(
            W
            * (
                rho1 * np.einsum("xya,xyb,xyab->xy", u1, u1, bnd.grad_ub)
                + law.pressure(rho1) * bnd.div_ub
            )
        )
    )
    kin_b = dt * float(
        np.sum(W * rho1 * np.einsum("xya,xya->xy", u1, bnd.grad_half_ub2))
    )
    stress_b = dt * float(
        np.sum(W * np.einsum("xyab,xyab->xy", stress, bnd.grad_ub))
    )
    inflow_pot = -dt * bnd.boundary_integral(law.potential(bnd.rho_b_grid), where="in")

    src_mom = src_kin = src_pot = 0.0
    force = model.force_at(s1.t)
    if force is not None:
        src_mom = dt * float(np.sum(W * np.einsum("xya,xya->xy", force, v1)))
    g = model.mass_source_at(s1.t)
    if g is not None:
        phi_v = 0.5 * np.einsum("xya,xya->xy", v1, v1) + np.einsum(
            "xya,xya->xy", bnd.ub, v1
        )
        src_kin = dt * float(np.sum(W * g * phi_v))
        src_pot = dt * float(np.sum(W * g * law.potential_derivative(rho1)))

    return EnergyReport(
        t_start=s0.t,
        t_end=s1.t,
        energy_start=e0,
        energy_end=e1,
        dissipation=dissipation,
        outflow_potential_flux=outflow,
        inflow_relative_potential=inflow_breg,
        eps_potential_diffusion=eps_term,
        rhs_convective=conv,
        rhs_kinetic_boundary=kin_b,
        rhs_stress_boundary=stress_b,
        rhs_inflow_potential=inflow_pot,
        source_momentum_work=src_mom,
        source_kinetic_work=src_kin,
        source_potential_work=src_pot,
    )


def _select_steps(traj, interval):
    states = traj.states
    if interval is None:
        return list(range(len(states) - 1))
    t0, t1 = interval
    idx = []
    for k in range(len(states) - 1):
        if states[k].t >= t0 - 1e-12 and states[k + 1].t <= t1 + 1e-12:
            idx.append(k)
    return idx


def evaluate_E7(traj, interval=None):
    """Approximate energy inequality, aggregated over the interval.

    The returned report carries per-step reports in ``per_step``; the
    per-step slacks are the quantity the acceptance gate bounds from below.
    """
    idx = _select_steps(traj, interval)
    if not idx:
        raise DomainError("interval selects no steps")
    per_step = [
        _step_energy_report(traj.model, traj.states[k], traj.states[k + 1]) for k in idx
    ]
    agg = EnergyReport(
        t_start=per_step[0].t_start,
        t_end=per_step[-1].t_end,
        energy_start=per_step[0].energy_start,
        energy_end=per_step[-1].energy_end,
        dissipation=sum(r.dissipation for r in per_step),
        outflow_potential_flux=sum(r.outflow_potential_flux for r in per_step),
        inflow_relative_potential=sum(r.inflow_relative_potential for r in per_step),
        eps_potential_diffusion=sum(r.eps_potential_diffusion for r in per_step),
        rhs_convective=sum(r.rhs_convective for r in per_step),
        rhs_kinetic_boundary=sum(r.rhs_kinetic_boundary for r in per_step),
        rhs_stress_boundary=sum(r.rhs_stress_boundary for r in per_step),
        rhs_inflow_potential=sum(r.rhs_inflow_potential for r in per_step),
        source_momentum_work=sum(r.source_momentum_work for r in per_step),
        source_kinetic_work=sum(r.source_kinetic_work for r in per_step),
        source_potential_work=sum(r.source_potential_work for r in per_step),
        per_step=per_step,
    )
    return agg


def worst_step_slack(report):
    """Most negative per-step slack, normalized by the energy scale."""
    return min(r.slack / r.energy_scale for r in report.per_step)


@dataclass
class C1Report:
    """Total-energy equality viewed as a refinement diagnostic."""

    defect: float
    boundary_flux_all: float
    robin_relaxation_work: float
    energy_report: EnergyReport


def evaluate_C1(traj, interval=None):
    """Energy-equality defect: |slack| accumulated per step.

    For a smooth solution the inequality is an equality, so the defect is
    pure discretization and must shrink under (dt, grid) refinement.
    """
    report = evaluate_E7(traj, interval)
    defect = sum(abs(r.slack) for r in report.per_step)
    bnd = traj.model.boundary
    law = traj.model.law
    flux_all = 0.0
    robin = 0.0
    for k, r in zip(_select_steps(traj, interval), report.per_step):
        s1 = traj.states[k + 1]
        dt = r.t_end - r.t_start
        flux_all += dt * bnd.boundary_integral(law.potential(s1.rho), where="all")
        robin += dt * bnd.boundary_integral(
            law.potential_derivative(s1.rho) * (bnd.rho_b_grid - s1.rho), where="in"
        )
    return C1Report(
        defect=defect,
        boundary_flux_all=flux_all,
        robin_relaxation_work=robin,
        energy_report=report,
    )


def fenchel_closure_check(traj, samples=100, seed=0):
    """Worst Fenchel-Young gap of the stress actually used by the solver."""
    rng = np.random.default_rng(seed)
    model = traj.model
    worst = 0.0
    m1, m2 = model.domain.shape
    for _ in range(samples):
        k = int(rng.integers(1, len(traj.states)))
        i = int(rng.integers(0, m1))
        j = int(rng.integers(0, m2))
        strain = model.strain(traj.states[k].coeffs)[i, j]
        stress = model.potential.gradient(strain)
        worst = max(worst, abs(fenchel_young_gap(model.potential, strain, stress)))
    return worst


# ---------------------------------------------------------------------------
# weak-form residuals


def weak_residual_continuity(traj, phi):
    """Residual of the limit continuity identity for a C^1 test function.

    For the diffusive solver the residual per step equals the pairing
    -eps dt sum W grad(rho) . grad(phi) exactly (both are returned), so it
    vanishes linearly as eps does.
    """
    if not isinstance(phi, ScalarField):
        phi = ScalarField(phi)
    model = traj.model
    dom, bnd = model.domain, model.boundary
    X1, X2 = dom.X1, dom.X2
    residuals, pairings = [], []
    for k in range(len(traj.states) - 1):
        s0, s1 = traj.states[k], traj.states[k + 1]
        dt = s1.t - s0.t
        p0 = phi(s0.t, X1, X2)
        p1 = phi(s1.t, X1, X2)
        u1 = traj.velocity_at(k + 1)
        res = dom.integrate(s1.rho * p1 - s0.rho * p0)
        res += dt * bnd.boundary_integral(p1 * s1.rho, where="out")
        res += dt * bnd.boundary_integral(p1 * bnd.rho_b_grid, where="in")
        res -= dom.integrate(s0.rho * (p1 - p0))
        gp1, gp2 = dom.dx1(p1), dom.dx2(p1)
        res -= dt * dom.integrate(s1.rho * (u1[..., 0] * gp1 + u1[..., 1] * gp2))
        g = model.mass_source_at(s1.t)
        if g is not None:
            res -= dt * dom.integrate(g * p1)
        gr1, gr2 = dom.dx1(s1.rho), dom.dx2(s1.rho)
        pairing = -model.eps * dt * dom.integrate(gr1 * gp1 + gr2 * gp2)
        residuals.append((s1.t, res))
        pairings.append((s1.t, pairing))
    return residuals, pairings


def _test_field_arrays(traj, phi, t):
    """(values, grads) of a momentum test field at time t."""
    model = traj.model
    if isinstance(phi, int):
        basis = model.basis
        return basis.values[phi], basis.grads[phi]
    if isinstance(phi, tuple) and len(phi) == 2 and hasattr(phi[0], "values"):
        basis, j = phi
        return basis.values[j], basis.grads[j]
    if isinstance(phi, VectorField):
        dom = model.domain
        vals = phi(t, dom.X1, dom.X2)
        grads = phi.gradient(t, dom.X1, dom.X2)
        return vals, grads
    raise DomainError("unsupported momentum test function")


def weak_residual_momentum(traj, phi):
    """Residual of the discrete momentum identity for a test field.

    The evaluation includes the artificial-viscosity coupling term of the
    level-I balance; for basis fields it reproduces the solver's own Newton
    residual, for fields outside the span it measures Galerkin truncation.
    The test field must vanish on the boundary.
    """
    model = traj.model
    dom = model.domain
    W = dom.W
    mask = dom.boundary_mask()
    vals0, _ = _test_field_arrays(traj, phi, traj.states[0].t)
    scale = max(1.0, float(np.max(np.abs(vals0))))
    if float(np.max(np.abs(vals0[mask]))) > 1e-10 * scale:
        raise DomainError("momentum test fields must vanish on the boundary")
    residuals = []
    for k in range(len(traj.states) - 1):
        s0, s1 = traj.states[k], traj.states[k + 1]
        dt = s1.t - s0.t
        v0, _ = _test_field_arrays(traj, phi, s0.t)
        v1, g1 = _test_field_arrays(traj, phi, s1.t)
        u0 = traj.velocity_at(k)
        u1 = traj.velocity_at(k + 1)
        res = float(np.sum(W * s1.rho * np.einsum("xya,xya->xy", u1, v1)))
        res -= float(np.sum(W * s0.rho * np.einsum("xya,xya->xy", u0, v0)))
        res -= float(np.sum(W * s0.rho * np.einsum("xya,xya->xy", u0, v1 - v0)))
        conv = float(
            np.sum(W * s1.rho * np.einsum("xya,xyb,xyab->xy", u1, u1, g1))
        )
        pres = float(
            np.sum(W * model.law.pressure(s1.rho) * (g1[..., 0, 0] + g1[..., 1, 1]))
        )
        stress = model.potential.gradient(model.strain(s1.coeffs))
        visc = float(np.sum(W * np.einsum("xyab,xyab->xy", stress, g1)))
        grad_rho = np.stack([dom.dx1(s1.rho), dom.dx2(s1.rho)], axis=-1)
        grad_u = model.velocity_gradient(s1.coeffs)
        drag = np.einsum("xyb,xyab->xya", grad_rho, grad_u)
        epsrow = model.eps * float(np.sum(W * np.einsum("xya,xya->xy", drag, v1)))
        rhs = conv + pres - visc - epsrow
        force = model.force_at(s1.t)
        if force is not None:
            rhs += float(np.sum(W * np.einsum("xya,xya->xy", force, v1)))
        residuals.append((s1.t, res - dt * rhs))
    return residuals


# ---------------------------------------------------------------------------
# defect proxies and compatibility


def kinetic_energy_lsc(rho, momentum, direction):
    """The convex l.s.c. kinetic-energy density |m.xi|^2 / rho.

    Returns 0 at (0, 0) and +inf whenever the momentum (or a negative
    density) is incompatible with vacuum.
    """
    momentum = np.asarray(momentum, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if rho > 0:
        return float(np.dot(momentum, direction) ** 2 / rho)
    if rho == 0 and np.all(momentum == 0):
        return 0.0
    return float("inf")


@dataclass
class DefectReport:
    """Grid proxies for the Reynolds-stress and energy defects."""

    pressure_gap: np.ndarray  # mean p - p(mean rho), >= 0 by convexity
    energy_defect: np.ndarray  # mean P - P(mean rho)
    dimension: int
    d_lower: float
    d_upper: float

    @property
    def tr_reynolds(self):
        return self.dimension * self.pressure_gap

    def reynolds_tensor(self):
        eye = np.eye(self.dimension)
        return self.pressure_gap[..., None, None] * eye


def mixture_defects(law, densities, weights, dimension=2):
    """Defect proxies from a k-point mixture of densities (Jensen gaps)."""
    dens = np.asarray(densities, dtype=float)
    lam = np.asarray(weights, dtype=float)
    if lam.ndim != 1 or lam.size != dens.shape[0]:
        raise DomainError("one weight per mixture component")
    if np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-12:
        raise DomainError("mixture weights must be a convex combination")
    mean_rho = np.einsum("k,k...->...", lam, dens)
    mean_p = np.einsum("k,k...->...", lam, law.pressure(dens))
    mean_P = np.einsum("k,k...->...", lam, law.potential(dens))
    gap_p = mean_p - law.pressure(mean_rho)
    gap_P = mean_P - law.potential(mean_rho)
    return DefectReport(
        pressure_gap=np.asarray(gap_p),
        energy_defect=np.asarray(gap_P),
        dimension=dimension,
        d_lower=dimension / law.a_upper,
        d_upper=dimension / law.a_lower,
    )


def check_compatibility(report, tol=1e-12):
    """Two-sided bound d_lower * E <= tr R <= d_upper * E on the proxies."""
    tr = np.asarray(report.tr_reynolds, dtype=float)
    ed = np.asarray(report.energy_defect, dtype=float)
    scale = max(float(np.max(np.abs(tr), initial=0.0)),
                float(np.max(np.abs(ed), initial=0.0)), 1e-30)
    lower_violation = float(np.max(report.d_lower * ed - tr, initial=0.0))
    upper_violation = float(np.max(tr - report.d_upper * ed, initial=0.0))
    worst = max(lower_violation, upper_violation) / scale
    return bool(worst <= tol), worst


def reynolds_psd_margin(report, n_directions=1000, seed=0):
    """min over sampled xi of R : xi x xi; nonnegative iff the proxy is PSD."""
    rng = np.random.default_rng(seed)
    d = report.dimension
    xs = rng.standard_normal((n_directions, d))
    xs /= np.linalg.norm(xs, axis=1, keepdims=True)
    tensor = report.reynolds_tensor()
    quad = np.einsum("...ab,na,nb->n...", tensor, xs, xs)
    return float(quad.min())


# ---------------------------------------------------------------------------
# dissipative-solution (audit) evaluator


def _conjugate_array(pot, stress):
    """Vectorized Fenchel conjugate over a stacked stress array.

    Entries outside the effective domain come back as +inf (flagged rows);
    the scalar path raises instead.
    """
    stress = np.asarray(stress, dtype=float)
    d = stress.shape[-1]
    tr = np.einsum("...ii", stress)
    dev = deviator(stress)
    dev2 = np.einsum("...ij,...ij", dev, dev)
    norm = np.sqrt(np.einsum("...ij,...ij", stress, stress))
    if isinstance(pot, NewtonianPotential):
        out = dev2 / (4.0 * pot.mu)
        if pot.eta > 0:
            out = out + tr**2 / (4.0 * d**2 * pot.eta)
        else:
            out = np.where(np.abs(tr) <= 1e-10 * (1.0 + norm), out, np.inf)
        return out
    if isinstance(pot, PowerLawPotential):
        ok = np.abs(tr) <= 1e-10 * (1.0 + norm)
        s = np.sqrt(dev2)
        if pot.delta == 0.0 and pot.mu1 == 0.0:
            q = pot.p / (pot.p - 1.0)
            vals = pot.mu0 ** (1.0 - q) * s**q / q
        else:
            flat = s.ravel()
            vals = np.array([pot.conjugate(_traceless_rep(si, d)) for si in flat])
            vals = vals.reshape(s.shape)
        return np.where(ok, vals, np.inf)
    raise DomainError(f"no vectorized conjugate for {type(pot).__name__}")


def _traceless_rep(norm_value, d):
    rep = np.zeros((d, d))
    rep[0, 1] = rep[1, 0] = norm_value / np.sqrt(2.0)
    return rep


@dataclass
class AuditFields:
    """Externally supplied (or trajectory-sampled) dissipative-solution data."""

    domain: Domain
    boundary: BoundaryData
    law: object
    potential: object
    times: np.ndarray
    rho: np.ndarray  # (K, m1, m2)
    velocity: np.ndarray  # (K, m1, m2, 2)
    stress: np.ndarray  # (K, m1, m2, 2, 2)
    strain: np.ndarray | None = None
    reynolds: np.ndarray | None = None  # (K, m1, m2, 2, 2)
    energy_defect: np.ndarray | None = None  # (K, m1, m2)

    @classmethod
    def from_trajectory(cls, traj, reynolds=None, energy_defect=None):
        model = traj.model
        K = len(traj.states)
        m1, m2 = model.domain.shape
        rho = np.stack([s.rho for s in traj.states])
        vel = np.stack([traj.velocity_at(k) for k in range(K)])
        strain = np.stack([model.strain(s.coeffs) for s in traj.states])
        stress = np.stack([model.potential.gradient(st) for st in strain])
        return cls(
            domain=model.domain,
            boundary=model.boundary,
            law=model.law,
            potential=model.potential,
            times=traj.times,
            rho=rho,
            velocity=vel,
            stress=stress,
            strain=strain,
            reynolds=reynolds,
            energy_defect=energy_defect,
        )

    def strain_at(self, k):
        if self.strain is not None:
            return self.strain[k]
        dom = self.domain
        g = np.empty(dom.shape + (2, 2))
        for a in range(2):
            g[..., a, 0] = dom.dx1(self.velocity[k, ..., a])
            g[..., a, 1] = dom.dx2(self.velocity[k, ..., a])
        return 0.5 * (g + np.swapaxes(g, -1, -2))


@dataclass
class W5Report:
    t_start: float
    t_end: float
    energy_start: float
    energy_end: float
    dissipation_pair: float
    outflow_potential_flux: float
    inflow_potential_flux: float
    energy_defect_end: float
    rhs_convective: float
    rhs_kinetic_boundary: float
    rhs_stress_boundary: float
    rhs_reynolds_boundary: float
    flagged_rows: list = field(default_factory=list)

    @property
    def lhs_total(self):
        return (
            self.energy_end
            - self.energy_start
            + self.dissipation_pair
            + self.outflow_potential_flux
            + self.inflow_potential_flux
            + self.energy_defect_end
        )

    @property
    def rhs_total(self):
        return (
            self.rhs_convective
            + self.rhs_kinetic_boundary
            + self.rhs_stress_boundary
            + self.rhs_reynolds_boundary
        )

    @property
    def slack(self):
        return self.rhs_total - self.lhs_total

    CSV_FIELDS = (
        "t_start",
        "t_end",
        "energy_start",
        "energy_end",
        "dissipation_pair",
        "outflow_potential_flux",
        "inflow_potential_flux",
        "energy_defect_end",
        "rhs_convective",
        "rhs_kinetic_boundary",
        "rhs_stress_boundary",
        "rhs_reynolds_boundary",
        "slack",
    )

    def csv_row(self):
        return [getattr(self, name) for name in self.CSV_FIELDS]


def evaluate_W5(fields, interval=None):
    """Dissipative-solution energy inequality on supplied fields."""
    dom, bnd, law, pot = fields.domain, fields.boundary, fields.law, fields.potential
    W = dom.W
    times = fields.times
    if interval is None:
        k0, k1 = 0, len(times) - 1
    else:
        k0 = int(np.argmin(np.abs(times - interval[0])))
        k1 = int(np.argmin(np.abs(times - interval[1])))
    if k1 <= k0:
        raise DomainError("empty audit interval")

    def energy_at(k):
        v = fields.velocity[k] - bnd.ub
        kin = 0.5 * fields.rho[k] * np.einsum("xya,xya->xy", v, v)
        return float(np.sum(W * (kin + law.potential(fields.rho[k]))))

    flagged = []
    diss = out = infl = conv = kin_b = stress_b = reyn = 0.0
    for k in range(k0 + 1, k1 + 1):
        dt = times[k] - times[k - 1]
        strain = fields.strain_at(k)
        fvals = pot.value(strain)
        fstar = _conjugate_array(pot, fields.stress[k])
        if np.any(~np.isfinite(fstar)):
            flagged.append((float(times[k]), "conjugate infinite at some nodes"))
            fstar = np.where(np.isfinite(fstar), fstar, 0.0)
        diss += dt * float(np.sum(W * (fvals + fstar)))
        potk = law.potential(fields.rho[k])
        out += dt * bnd.boundary_integral(potk, where="out")
        infl += dt * bnd.boundary_integral(law.potential(bnd.rho_b_grid), where="in")
        rho = fields.rho[k]
        u = fields.velocity[k]
        conv -= dt * float(
            np.sum(
                W
                * (
                    rho * np.einsum("xya,xyb,xyab->xy", u, u, bnd.grad_ub)
                    + law.pressure(rho) * bnd.div_ub
                )
            )
        )
        kin_b += dt * float(
            np.sum(W * rho * np.einsum("xya,xya->xy", u, bnd.grad_half_ub2))
        )
        stress_b += dt * float(
            np.sum(W * np.einsum("xyab,xyab->xy", fields.stress[k], bnd.grad_ub))
        )
        if fields.reynolds is not None:
            reyn -= dt * float(
                np.sum(W * np.einsum("xyab,xyab->xy", bnd.grad_ub, fields.reynolds[k]))
            )
    defect_end = 0.0
    if fields.energy_defect is not None:
        defect_end = float(np.sum(W * fields.energy_defect[k1]))
    return W5Report(
        t_start=float(times[k0]),
        t_end=float(times[k1]),
        energy_start=energy_at(k0),
        energy_end=energy_at(k1),
        dissipation_pair=diss,
        outflow_potential_flux=out,
        inflow_potential_flux=infl,
        energy_defect_end=defect_end,
        rhs_convective=conv,
        rhs_kinetic_boundary=kin_b,
        rhs_stress_boundary=stress_b,
        rhs_reynolds_boundary=reyn,
        flagged_rows=flagged,
    )


# ---------------------------------------------------------------------------
# audit-file round trip


def save_audit_json(fields, path, boundary_exprs, eos_spec, potential_spec):
    levels = []
    for k in range(len(fields.times)):
        rec = {
            "t": float(fields.times[k]),
            "rho": fields.rho[k].tolist(),
            "u": fields.velocity[k].tolist(),
            "stress": fields.stress[k].tolist(),
        }
        if fields.strain is not None:
            rec["strain"] = fields.strain[k].tolist()
        if fields.reynolds is not None:
            rec["reynolds"] = fields.reynolds[k].tolist()
        if fields.energy_defect is not None:
            rec["energy_defect"] = fields.energy_defect[k].tolist()
        levels.append(rec)
    doc = {
        "grid": {
            "lengths": list(fields.domain.lengths),
            "shape": list(fields.domain.shape),
        },
        "boundary": boundary_exprs,
        "eos": eos_spec,
        "potential": potential_spec,
        "levels": levels,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_audit_json(path):
    from .scenario import make_potential  # late import to avoid a cycle

    with open(path) as fh:
        doc = json.load(fh)
    dom = Domain(tuple(doc["grid"]["lengths"]), tuple(doc["grid"]["shape"]))
    bnd = BoundaryData(dom, doc["boundary"]["u_B"], doc["boundary"]["rho_B"])
    law = make_law(doc["eos"])
    pot = make_potential(doc["potential"])
    levels = doc["levels"]
    times = np.array([lv["t"] for lv in levels])
    rho = np.array([lv["rho"] for lv in levels])
    vel = np.array([lv["u"] for lv in levels])
    stress = np.array([lv["stress"] for lv in levels])
    strain = (
        np.array([lv["strain"] for lv in levels]) if "strain" in levels[0] else None
    )
    reyn = (
        np.array([lv["reynolds"] for lv in levels])
        if "reynolds" in levels[0]
        else None
    )
    edef = (
        np.array([lv["energy_defect"] for lv in levels])
        if "energy_defect" in levels[0]
        else None
    )
    return AuditFields(
        domain=dom,
        boundary=bnd,
        law=law,
        potential=pot,
        times=times,
        rho=rho,
        velocity=vel,
        stress=stress,
        strain=strain,
        reynolds=reyn,
        energy_defect=edef,
    )
