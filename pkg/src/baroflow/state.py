"""Discrete states, step records, and trajectories."""

import json
from dataclasses import dataclass, field

import numpy as np

from .rheology import deviator, inner  # noqa: F401  (re-exported convenience)


@dataclass
class DiscreteState:
    """Density nodal values plus velocity coefficients at one time level."""

    rho: np.ndarray
    coeffs: np.ndarray
    t: float

    def copy(self):
        return DiscreteState(self.rho.copy(), self.coeffs.copy(), self.t)


@dataclass
class StepRecord:
    """Solver diagnostics for one accepted step."""

    t0: float
    t1: float
    dt: float
    picard_iterations: int = 0
    newton_residual: float = 0.0
    density_solve_residual: float = 0.0
    mass_ledger_residual: float = 0.0
    min_rho: float = 0.0
    max_rho: float = 0.0
    eps_grad_rho_sq: float = 0.0
    div_u_norm: float = 0.0


class Model:
    """Everything fixed over a run: geometry, data, constitutive laws."""

    def __init__(
        self,
        domain,
        boundary,
        basis,
        law,
        potential,
        eps,
        force=None,
        mass_source=None,
    ):
        self.domain = domain
        self.boundary = boundary
        self.basis = basis
        self.law = law
        self.potential = potential
        self.eps = float(eps)
        self.force = force  # VectorField or None
        self.mass_source = mass_source  # ScalarField or None
        self._field_cache = {}

    def velocity(self, coeffs):
        return self.boundary.ub + self.basis.velocity(coeffs)

    def interior_velocity(self, coeffs):
        return self.basis.velocity(coeffs)

    def velocity_gradient(self, coeffs):
        return self.boundary.grad_ub + self.basis.velocity_gradient(coeffs)

    def strain(self, coeffs):
        g = self.velocity_gradient(coeffs)
        return 0.5 * (g + np.swapaxes(g, -1, -2))

    def stress(self, coeffs):
        return self.potential.gradient(self.strain(coeffs))

    def div_velocity(self, coeffs):
        return self.boundary.div_ub + self.basis.divergence(coeffs)

    def div_velocity_norm(self, coeffs):
        return float(np.max(np.abs(self.div_velocity(coeffs))))

    def force_at(self, t):
        if self.force is None:
            return None
        key = ("force", t)
        if key not in self._field_cache:
            if len(self._field_cache) > 64:
                self._field_cache.clear()
            self._field_cache[key] = self.force(t, self.domain.X1, self.domain.X2)
        return self._field_cache[key]

    def mass_source_at(self, t):
        if self.mass_source is None:
            return None
        key = ("source", t)
        if key not in self._field_cache:
            if len(self._field_cache) > 64:
                self._field_cache.clear()
            self._field_cache[key] = self.mass_source(t, self.domain.X1, self.domain.X2)
        return self._field_cache[key]

    def total_energy(self, state):
        """int [ rho |u - u_B|^2 / 2 + P(rho) ] at one state."""
        v = self.basis.velocity(state.coeffs)
        kinetic = 0.5 * state.rho * np.einsum("xya,xya->xy", v, v)
        return self.domain.integrate(kinetic + self.law.potential(state.rho))


@dataclass
class StepView:
    """One step of a density history, as the continuity monitors see it."""

    t0: float
    t1: float
    dt: float
    rho0: np.ndarray
    rho1: np.ndarray
    u: np.ndarray  # velocity at t1, (m1, m2, 2)
    div_u_norm: float
    source: np.ndarray | None = None


class Trajectory:
    """A sequence of accepted states with per-step diagnostics."""

    def __init__(self, model, states=None, records=None):
        self.model = model
        self.states = states or []
        self.records = records or []
        self._velocity_cache = {}

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    @property
    def domain(self):
        return self.model.domain

    @property
    def boundary(self):
        return self.model.boundary

    @property
    def eps(self):
        return self.model.eps

    def velocity_at(self, k):
        if k not in self._velocity_cache:
            self._velocity_cache[k] = self.model.velocity(self.states[k].coeffs)
        return self._velocity_cache[k]

    def density_steps(self):
        for k in range(len(self.states) - 1):
            s0, s1 = self.states[k], self.states[k + 1]
            src = self.model.mass_source_at(s1.t)
            yield StepView(
                t0=s0.t,
                t1=s1.t,
                dt=s1.t - s0.t,
                rho0=s0.rho,
                rho1=s1.rho,
                u=self.velocity_at(k + 1),
                div_u_norm=self.model.div_velocity_norm(s1.coeffs),
                source=src,
            )

    # persistence -----------------------------------------------------------
    def save_checkpoints(self, path):
        """One JSON record per accepted step (JSON-lines)."""
        with open(path, "w") as fh:
            for state in self.states:
                rec = {
                    "time": state.t,
                    "density": state.rho.ravel().tolist(),
                    "velocity_coefficients": state.coeffs.tolist(),
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @staticmethod
    def load_checkpoints(path, shape):
        states = []
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                states.append(
                    DiscreteState(
                        rho=np.array(rec["density"]).reshape(shape),
                        coeffs=np.array(rec["velocity_coefficients"]),
                        t=float(rec["time"]),
                    )
                )
        return states

    def density_csv_rows(self):
        """Rows (t, mass, min rho, max rho, eps |grad rho|^2, ledger residual)."""
        rows = []
        dom = self.model.domain
        eps = self.model.eps
        for k, state in enumerate(self.states):
            g1 = dom.dx1(state.rho)
            g2 = dom.dx2(state.rho)
            egr = eps * dom.integrate(g1 * g1 + g2 * g2)
            ledger = self.records[k - 1].mass_ledger_residual if k > 0 else 0.0
            rows.append(
                (
                    state.t,
                    dom.integrate(state.rho),
                    float(state.rho.min()),
                    float(state.rho.max()),
                    egr,
                    ledger,
                )
            )
        return rows


class DensityRun:
    """Density-only history driven by a prescribed velocity field."""

    def __init__(self, domain, boundary, eps):
        self.domain = domain
        self.boundary = boundary
        self.eps = eps
        self.steps = []

    def add_step(self, view):
        self.steps.append(view)

    def density_steps(self):
        yield from self.steps
