from .care import care_residual, relative_residual, solve_care, solve_dual_care, spectral_abscissa
from .design import (
    GainSet,
    LmiReport,
    SynthesisWeights,
    check_assumptions,
    check_lmis,
    design_gains,
    feasibility_report,
    is_hurwitz,
    kappa_condition,
    select_t1,
)
from .flows import DistributedDesignRun, FlowResult, distributed_design, consensus_matrix_flow, recover_plant_matrices, run_distributed_design
from .lyapunov import solve_lyapunov

__all__ = [
    "DistributedDesignRun", "FlowResult", "GainSet", "LmiReport", "SynthesisWeights", "distributed_design",
    "care_residual", "check_assumptions", "check_lmis", "consensus_matrix_flow", "design_gains",
    "feasibility_report", "is_hurwitz", "kappa_condition", "recover_plant_matrices",
    "relative_residual", "run_distributed_design", "select_t1", "solve_care", "solve_dual_care",
    "solve_lyapunov", "spectral_abscissa",
]
