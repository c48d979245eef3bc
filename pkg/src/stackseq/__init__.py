"""Stacking-sequence retrieval with tensor networks.

Ply stacks are searched against target lamination parameters by encoding
the quadratic loss and manufacturing-constraint penalties as matrix
product operators and sweeping a matrix product state with a two-site
DMRG solver.  Exhaustive oracles and a qubit-operator export cover
validation and downstream quantum tooling at desk scale.
"""

from .dmrg import (
    DmrgPlan,
    DmrgResult,
    SweepDirection,
    SweepTrace,
    dmrg_run,
    sweep_directions,
    sweep_schedule,
)
from .errors import (
    ConvergenceError,
    DomainError,
    EncodingError,
    NotCollapsedError,
    SamplingError,
    ShapeMismatchError,
    SizeGuardError,
    StackseqError,
    UnsupportedAngleSetError,
)
from .laminate import (
    AngleSet,
    Balanced,
    Contiguity,
    DihedralElement,
    Disorientation,
    LaminationPoint,
    MinCount,
    PlyWeights,
    SsrProblem,
    StackingSequence,
    dihedral_elements,
    euclidean_distance,
    is_valid,
    lamination_parameters,
    loss,
    orbit_representative,
    problem_from_dict,
    problem_to_dict,
    rmse,
    symmetry_orbit,
    target_from_dict,
    target_to_dict,
    target_transform,
    total_penalty,
    total_value,
    transform_target,
    violation_counts,
)
from .mpo import (
    DiagonalMpo,
    MpoSum,
    block_stack,
    loss_mpo_sum,
    m_quadratic,
    penalty_mpo,
    quadratic_sum_mpo,
)
from .mps import (
    Environment,
    Mps,
    basis_state_mps,
    expectation,
    extract_sequence,
    random_mps,
    rebuild_environments,
)
from .oracle import (
    OracleResult,
    all_sequences,
    batch_loss,
    batch_penalty,
    batch_violations,
    dense_diagonal,
    enumerate_valid,
    exhaustive_min,
    sequence_index,
    space_size,
)
from .pauli import (
    PauliExpansion,
    PauliZTerm,
    decode,
    encode,
    gate_cost,
    pauli_expand,
    term_census,
)
from .runner import (
    ExperimentConfig,
    RunRecord,
    config_hash,
    run_experiment,
    solve_single,
    summarize,
    trimmed_mean_duration,
)
from .targets import (
    TargetSet,
    gaussian_product_kde,
    inequivalent_targets,
    kde_uniform_targets,
    random_valid_sequence,
    random_valid_sequences,
    scott_bandwidth,
)
from .tensor import TruncationPolicy, contract, smallest_eigenpair, svd_truncate

__version__ = "0.1.0"

__all__ = [
    "AngleSet",
    "Balanced",
    "Contiguity",
    "ConvergenceError",
    "DiagonalMpo",
    "DihedralElement",
    "Disorientation",
    "DmrgPlan",
    "DmrgResult",
    "DomainError",
    "EncodingError",
    "Environment",
    "ExperimentConfig",
    "LaminationPoint",
    "MinCount",
    "MpoSum",
    "Mps",
    "NotCollapsedError",
    "OracleResult",
    "PauliExpansion",
    "PauliZTerm",
    "PlyWeights",
    "RunRecord",
    "SamplingError",
    "ShapeMismatchError",
    "SizeGuardError",
    "SsrProblem",
    "StackingSequence",
    "StackseqError",
    "SweepDirection",
    "SweepTrace",
    "TargetSet",
    "TruncationPolicy",
    "UnsupportedAngleSetError",
    "all_sequences",
    "basis_state_mps",
    "batch_loss",
    "batch_penalty",
    "batch_violations",
    "block_stack",
    "config_hash",
    "contract",
    "decode",
    "dense_diagonal",
    "dihedral_elements",
    "dmrg_run",
    "encode",
    "enumerate_valid",
    "euclidean_distance",
    "exhaustive_min",
    "expectation",
    "extract_sequence",
    "gate_cost",
    "gaussian_product_kde",
    "inequivalent_targets",
    "is_valid",
    "kde_uniform_targets",
    "lamination_parameters",
    "loss",
    "loss_mpo_sum",
    "m_quadratic",
    "orbit_representative",
    "pauli_expand",
    "penalty_mpo",
    "problem_from_dict",
    "problem_to_dict",
    "quadratic_sum_mpo",
    "random_mps",
    "random_valid_sequence",
    "random_valid_sequences",
    "rebuild_environments",
    "rmse",
    "run_experiment",
    "scott_bandwidth",
    "sequence_index",
    "smallest_eigenpair",
    "solve_single",
    "space_size",
    "summarize",
    "svd_truncate",
    "sweep_directions",
    "sweep_schedule",
    "symmetry_orbit",
    "target_from_dict",
    "target_to_dict",
    "target_transform",
    "term_census",
    "total_penalty",
    "total_value",
    "transform_target",
    "trimmed_mean_duration",
    "violation_counts",
]
