"""Scenario configuration, presets, run orchestration, refinement studies."""

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .continuity import (
    SQUARE_B,
    mass_ledger,
    max_principle_bound,
    min_principle_bound,
    renormalized_residual,
)
from .domain import BoundaryData, Domain, SineBasis
from .energy import evaluate_E7, fenchel_closure_check, worst_step_slack
from .eos import make_law
from .errors import ConfigurationError, DomainError, StructureError
from .expressions import ScalarField, VectorField
from .momentum import MomentumSolver
from .relative import StrongSolution, rel_energy, trace_relative_energy
from .rheology import NewtonianPotential, PowerLawPotential
from .state import DiscreteState, Model


def make_potential(spec):
    kind = spec.get("kind", "newtonian").lower()
    if kind == "newtonian":
        return NewtonianPotential(
            mu=spec.get("mu", 1.0),
            eta=spec.get("eta", 0.0),
            delta=spec.get("delta", 0.0),
        )
    if kind in ("p_potential", "power_law"):
        return PowerLawPotential(
            mu0=spec.get("mu0", 1.0),
            mu1=spec.get("mu1", 0.0),
            p=spec.get("p", 2.0),
            delta=spec.get("delta", 0.0),
        )
    raise ConfigurationError(f"unknown potential kind {spec.get('kind')!r}")


@dataclass
class Scenario:
    """A fully resolved run configuration."""

    data: dict

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls(json.load(fh))

    @classmethod
    def preset(cls, name, **overrides):
        try:
            base = copy.deepcopy(PRESETS[name])
        except KeyError:
            raise ConfigurationError(
                f"unknown preset {name!r}; available: {sorted(PRESETS)}"
            ) from None
        sc = cls(base)
        for key, value in overrides.items():
            sc.override(key, value)
        return sc

    def override(self, dotted_key, value):
        node = self.data
        parts = dotted_key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")

    # construction -----------------------------------------------------------
    def build(self):
        d = self.data
        dom_spec = d.get("domain", {})
        domain = Domain(
            tuple(dom_spec.get("lengths", (1.0, 1.0))), dom_spec.get("grid", 33)
        )
        boundary = BoundaryData(
            domain,
            d.get("boundary", {}).get("u_B", ["0", "0"]),
            d.get("boundary", {}).get("rho_B", "1"),
        )
        law = make_law(d.get("eos", {}))
        potential = make_potential(d.get("potential", {}))
        num = d.get("numerics", {})
        basis = SineBasis(domain, num.get("n_modes", 8))
        eps = num.get("eps", 1e-2)

        force = mass_source = None
        if "force" in d:
            blk = d["force"]
            if "u" in blk:
                force = VectorField(blk["u"])
            if "mass" in blk:
                mass_source = ScalarField(blk["mass"])

        model = Model(
            domain=domain,
            boundary=boundary,
            basis=basis,
            law=law,
            potential=potential,
            eps=eps,
            force=force,
            mass_source=mass_source,
        )

        strong = None
        if "strong_solution" in d:
            blk = d["strong_solution"]
            strong = StrongSolution(model, blk["rho"], blk["u"])
            if blk.get("inject_sources", False):
                if force is not None or mass_source is not None:
                    raise ConfigurationError(
                        "cannot combine an explicit force block with injected "
                        "strong-solution sources"
                    )
                model.force, model.mass_source = strong.source_fields()

        initial = self._initial_state(model, d.get("initial", {}))
        return model, initial, strong

    def _initial_state(self, model, blk):
        dom = model.domain
        rho0 = ScalarField(blk.get("rho0", "1"))(0.0, dom.X1, dom.X2)
        if not np.all(np.isfinite(rho0)):
            raise ConfigurationError("initial density does not evaluate finitely")
        if rho0.min() < 0:
            raise ConfigurationError("initial density must be nonnegative")
        if "m0" in blk:
            m0 = VectorField(blk["m0"])(0.0, dom.X1, dom.X2)
            vac = rho0 <= 0
            if np.any(vac & (np.linalg.norm(m0, axis=-1) > 0)):
                raise ConfigurationError(
                    "initial momentum on vacuum makes the energy infinite"
                )
            with np.errstate(divide="ignore", invalid="ignore"):
                u0 = np.where(rho0[..., None] > 0, m0 / rho0[..., None], 0.0)
        else:
            u0 = VectorField(blk.get("u0", ["0", "0"]))(0.0, dom.X1, dom.X2)
        energy = dom.integrate(
            0.5 * rho0 * np.einsum("xya,xya->xy", u0, u0)
            + model.law.potential(rho0)
        )
        if not np.isfinite(energy):
            raise ConfigurationError("initial data have infinite energy")
        coeffs = model.basis.project(u0 - model.boundary.ub)
        return DiscreteState(rho=rho0, coeffs=coeffs, t=0.0)

    def validate(self):
        """Raise ConfigurationError on the first offending entry."""
        model, initial, strong = self.build()
        num = self.data.get("numerics", {})
        if num.get("dt", 1e-3) <= 0 or num.get("t_final", 0.0) < 0:
            raise ConfigurationError("dt must be positive and t_final nonnegative")
        return model, initial, strong


@dataclass
class RunResult:
    scenario: Scenario
    trajectory: object
    energy_report: object
    summary: dict
    strong: object = None
    relative_trace: object = None


def run_scenario(scenario, solver_kwargs=None):
    """Execute a scenario and collect every monitor verdict."""
    model, initial, strong = scenario.validate()
    num = scenario.data.get("numerics", {})
    solver = MomentumSolver(
        model,
        picard_tol=num.get("picard_tol", 1e-12),
        max_picard=num.get("max_picard", 60),
        **(solver_kwargs or {}),
    )
    traj = solver.advance(initial, num.get("t_final", 0.1), num.get("dt", 1e-3))

    summary = {"name": scenario.data.get("name", "unnamed"), "checks": {}}
    checks = summary["checks"]

    if len(traj.states) > 1:
        _, ledger_worst = mass_ledger(traj)
        checks["mass_ledger"] = {
            "worst_relative_residual": ledger_worst,
            "passed": ledger_worst <= 1e-10,
        }
        maxp = max_principle_bound(traj)
        checks["max_principle"] = {"margin": maxp.margin, "passed": maxp.passed}
        minp = min_principle_bound(traj)
        checks["min_principle"] = {"margin": minp.margin, "passed": minp.passed}
        report = evaluate_E7(traj)
        worst_slack = worst_step_slack(report)
        checks["energy_inequality"] = {
            "worst_step_slack": worst_slack,
            "passed": worst_slack >= -1e-8,
        }
        closure = fenchel_closure_check(traj, samples=64)
        checks["fenchel_closure"] = {"worst_gap": closure, "passed": closure <= 1e-8}
        renorm = renormalized_residual(traj, SQUARE_B)
        checks["renormalization_square"] = {
            "accumulated": float(sum(abs(r) for _, r in renorm))
        }
        checks["boundary_trace"] = {
            "max": model.basis.boundary_trace_max(),
            "passed": model.basis.boundary_trace_max() == 0.0,
        }
        energy_report = report
    else:
        energy_report = None

    trace = None
    if strong is not None and len(traj.states) > 1:
        trace = trace_relative_energy(traj, strong)
        checks["relative_energy"] = {
            "final": float(trace.energy[-1]),
            "worst_rr5_slack": float(trace.slack.min()) if len(trace.slack) else 0.0,
            "c_lip": trace.c_lip,
        }

    summary["passed"] = all(
        blk.get("passed", True) for blk in checks.values()
    )
    return RunResult(
        scenario=scenario,
        trajectory=traj,
        energy_report=energy_report,
        summary=summary,
        strong=strong,
        relative_trace=trace,
    )


# ---------------------------------------------------------------------------
# refinement studies


_REFINE_AXES = ("dt", "m", "n", "eps", "delta")


def refined_scenario(scenario, axis, level):
    sc = Scenario(copy.deepcopy(scenario.data))
    num = sc.data.setdefault("numerics", {})
    if axis == "dt":
        num["dt"] = scenario.data["numerics"]["dt"] / 2.0**level
    elif axis == "m":
        base = scenario.data.get("domain", {}).get("grid", 33)
        num_cells = int(round((base - 1) * 2.0 ** (level / 2.0)))
        sc.data.setdefault("domain", {})["grid"] = num_cells + 1
    elif axis == "n":
        num["n_modes"] = scenario.data["numerics"].get("n_modes", 8) + 2 * level
    elif axis == "eps":
        num["eps"] = scenario.data["numerics"].get("eps", 1e-2) / 2.0**level
    elif axis == "delta":
        pot = sc.data.setdefault("potential", {})
        pot["delta"] = scenario.data["potential"].get("delta", 0.1) / 10.0**level
    else:
        raise ConfigurationError(f"unknown refinement axis {axis!r}; use {_REFINE_AXES}")
    return sc


def refine(scenario, axis, levels):
    """Rerun a scenario along one axis and tabulate the monitored residuals."""
    if levels < 2:
        raise ConfigurationError("a refinement study needs at least 2 levels")
    rows = []
    for level in range(levels):
        sc = refined_scenario(scenario, axis, level)
        result = run_scenario(sc)
        traj = result.trajectory
        _, ledger_worst = mass_ledger(traj)
        report = result.energy_report
        renorm = renormalized_residual(traj, SQUARE_B)
        row = {
            "level": level,
            "dt": sc.data["numerics"].get("dt"),
            "grid": sc.data.get("domain", {}).get("grid"),
            "n_modes": sc.data["numerics"].get("n_modes"),
            "eps": sc.data["numerics"].get("eps"),
            "mass_ledger_worst": ledger_worst,
            "energy_slack_negative_part": max(
                0.0, -min(r.slack for r in report.per_step)
            ),
            "renormalization_sq_accumulated": float(
                sum(abs(r) for _, r in renorm)
            ),
        }
        if result.relative_trace is not None:
            row["relative_energy_final"] = float(result.relative_trace.energy[-1])
        rows.append(row)
    orders = {}
    for key in ("renormalization_sq_accumulated", "relative_energy_final"):
        vals = [r.get(key) for r in rows]
        if all(v is not None and v > 0 for v in vals):
            orders[key] = [
                float(np.log2(vals[i] / vals[i + 1])) for i in range(len(vals) - 1)
            ]
    return rows, orders


# ---------------------------------------------------------------------------
# presets (all desk scale)


PRESETS = {
    "rest": {
        "name": "rest",
        "domain": {"lengths": [1.0, 1.0], "grid": 17},
        "eos": {"kind": "isentropic", "a": 1.0, "gamma": 2.0},
        "potential": {"kind": "newtonian", "mu": 0.1, "eta": 0.1, "delta": 0.0},
        "boundary": {"u_B": ["0", "0"], "rho_B": "1"},
        "initial": {"rho0": "1", "u0": ["0", "0"]},
        "numerics": {"n_modes": 4, "eps": 0.01, "dt": 0.002, "t_final": 0.02},
    },
    "box-diffusion": {
        "name": "box-diffusion",
        "domain": {"lengths": [1.0, 1.0], "grid": 25},
        "eos": {"kind": "isentropic", "a": 1.0, "gamma": 2.0},
        "potential": {"kind": "newtonian", "mu": 0.1, "eta": 0.1, "delta": 0.0},
        "boundary": {"u_B": ["0", "0"], "rho_B": "1"},
        "initial": {
            "rho0": "1 + 0.2*sin(pi*x1)*sin(pi*x2)",
            "u0": ["0", "0"],
        },
        "numerics": {"n_modes": 6, "eps": 0.02, "dt": 0.002, "t_final": 0.05},
    },
    "channel": {
        "name": "channel",
        "domain": {"lengths": [1.0, 1.0], "grid": 33},
        "eos": {"kind": "isentropic", "a": 1.0, "gamma": 2.0},
        "potential": {"kind": "newtonian", "mu": 0.15, "eta": 0.05, "delta": 0.0},
        "boundary": {"u_B": ["0.3", "0"], "rho_B": "1"},
        "initial": {"rho0": "0.5", "u0": ["0.3", "0"]},
        "numerics": {"n_modes": 8, "eps": 0.02, "dt": 0.002, "t_final": 0.08},
    },
    "compressive": {
        "name": "compressive",
        "domain": {"lengths": [1.0, 1.0], "grid": 25},
        "eos": {"kind": "isentropic", "a": 1.0, "gamma": 2.0},
        "potential": {"kind": "newtonian", "mu": 0.1, "eta": 0.1, "delta": 0.0},
        "boundary": {"u_B": ["0", "0"], "rho_B": "1"},
        "initial": {
            "rho0": "1",
            "u0": ["0.4*sin(pi*x1)*sin(pi*x2)", "-0.3*sin(pi*x1)*sin(pi*x2)"],
        },
        "numerics": {"n_modes": 6, "eps": 0.02, "dt": 0.002, "t_final": 0.05},
    },
    "weak-strong": {
        "name": "weak-strong",
        "domain": {"lengths": [1.0, 1.0], "grid": 25},
        "eos": {"kind": "isentropic", "a": 1.0, "gamma": 2.0},
        "potential": {"kind": "newtonian", "mu": 0.1, "eta": 0.1, "delta": 0.0},
        "boundary": {"u_B": ["0", "0"], "rho_B": "1"},
        "initial": {
            "rho0": "1 + 0.2*cos(pi*x1)*cos(pi*x2)",
            "u0": [
                "0.3*sin(pi*x1)*sin(pi*x2)",
                "-0.2*sin(pi*x1)*sin(pi*x2)",
            ],
        },
        "strong_solution": {
            "rho": "1 + 0.2*exp(-t)*cos(pi*x1)*cos(pi*x2)",
            "u": [
                "0.3*exp(-t)*sin(pi*x1)*sin(pi*x2)",
                "-0.2*exp(-t)*sin(pi*x1)*sin(pi*x2)",
            ],
            "inject_sources": True,
        },
        "numerics": {"n_modes": 6, "eps": 0.01, "dt": 0.004, "t_final": 0.5},
    },
}
