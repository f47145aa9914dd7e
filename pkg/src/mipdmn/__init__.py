"""Micromechanics-informed parametric deep material networks.

Binary trees of rotated rank-1 laminates whose node weights and rotations
are affine functions of microstructure parameters, with closed-form
stiffness, conductivity and thermal expansion kernels, a trainer built on
full-batch Rprop, a nonlinear fixed-point driver and inverse identification.
"""

from .data import Dataset
from .errors import (AllWeightsZero, ConfigError, DataError, DegenerateBase, DegenerateQuaternion, DimensionMismatch,
                     Diverged, DmnError, EmptySampling, MaxIterationsExceeded, NearIdenticalPhases, NoAnchors,
                     NonFiniteGradient, NotPositiveDefinite, PhaseHasNoWeight, RejectionBudgetExceeded,
                     ReturnMappingDiverged, SingularInterfaceMatrix)
from .identify import PhaseGuess, identify, identify_many
from .inelastic import DriverConfig, LoadPath, MaterialLaw, Simulator, cyclic_path, run_path
from .laminate import lam_conductivity, lam_cte, lam_stiffness, lam_tangent_residual
from .network import (DmnInstance, active_nodes, dmn_orientation_tensors, dmn_vf, forward_conductivity, forward_cte,
                      forward_stiffness, propagate_weights)
from .oracle import TeacherSpec, gen_dataset, gen_teacher
from .parametric import ParamNet, count_params, eval_params, init_params, interpolate_instances, transfer_scale
from .sampling import MaterialRanges, sample_materials, sobol_collocation, vf_collocation
from .tensors import iso_stiffness, ortho_stiffness, quat_to_rotmat, rotate_stiffness, transiso_stiffness
from .training import ConstraintTargets, TrainConfig, evaluate, loss_gradient, quantile_report, rprop_fit, total_loss

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "AllWeightsZero",
    "ConfigError",
    "DataError",
    "DegenerateBase",
    "DegenerateQuaternion",
    "DimensionMismatch",
    "Diverged",
    "DmnError",
    "EmptySampling",
    "MaxIterationsExceeded",
    "NearIdenticalPhases",
    "NoAnchors",
    "NonFiniteGradient",
    "NotPositiveDefinite",
    "PhaseHasNoWeight",
    "RejectionBudgetExceeded",
    "ReturnMappingDiverged",
    "SingularInterfaceMatrix",
    "PhaseGuess",
    "identify",
    "identify_many",
    "DriverConfig",
    "LoadPath",
    "MaterialLaw",
    "Simulator",
    "cyclic_path",
    "run_path",
    "lam_conductivity",
    "lam_cte",
    "lam_stiffness",
    "lam_tangent_residual",
    "DmnInstance",
    "active_nodes",
    "dmn_orientation_tensors",
    "dmn_vf",
    "forward_conductivity",
    "forward_cte",
    "forward_stiffness",
    "propagate_weights",
    "TeacherSpec",
    "gen_dataset",
    "gen_teacher",
    "ParamNet",
    "count_params",
    "eval_params",
    "init_params",
    "interpolate_instances",
    "transfer_scale",
    "MaterialRanges",
    "sample_materials",
    "sobol_collocation",
    "vf_collocation",
    "iso_stiffness",
    "ortho_stiffness",
    "quat_to_rotmat",
    "rotate_stiffness",
    "transiso_stiffness",
    "ConstraintTargets",
    "TrainConfig",
    "evaluate",
    "loss_gradient",
    "quantile_report",
    "rprop_fit",
    "total_loss",
]
