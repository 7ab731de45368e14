"""baroflow: simulate barotropic viscous fluids and verify their inequalities."""

from .eos import (
    IsentropicLaw,
    IsentropicPlusLinearLaw,
    TabulatedLaw,
    check_structure,
    load_tabulated_csv,
    make_law,
)
from .rheology import (
    NewtonianPotential,
    PowerLawPotential,
    YoungFunction,
    build_A_R,
    check_coercivity_S5,
    conjugate,
    evaluate_F,
    fenchel_young_gap,
    mollify,
    subdifferential,
)
from .domain import BoundaryData, Domain, SineBasis, build_basis, decompose_boundary, project
from .state import DiscreteState, Model, Trajectory
from .continuity import (
    ContinuitySolver,
    mass_ledger,
    max_principle_bound,
    min_principle_bound,
    parabolic_energy_monitor,
    renormalized_residual,
)
from .momentum import MomentumSolver, advance
from .energy import (
    AuditFields,
    check_compatibility,
    evaluate_C1,
    evaluate_E7,
    evaluate_W5,
    kinetic_energy_lsc,
    mixture_defects,
    weak_residual_continuity,
    weak_residual_momentum,
)
from .relative import (
    StrongSolution,
    gronwall_monitor,
    rel_energy,
    rr5_terms,
    trace_relative_energy,
    vacuum_split_bound,
)
from .scenario import PRESETS, Scenario, refine, run_scenario

__version__ = "0.1.0"
