"""Discrete optimal transport with distance cost: Kantorovich solving,
transport rays, monotone gluing into a Monge map, Gaussian evolution
estimates and Wiener-space projection ladders."""
__version__ = "0.1.0"

from .errors import (BranchingError, DimensionMismatchError, EstimateViolation, InvalidInputError,
                     MassMismatchError, QuadratureError, ToleranceError)
from .measures import (DiscreteMeasure, OneDimMeasure, cm_distance, common_mass_split,
                       pairwise_distances, quantile_function)
from .transport import (DualPotentials, TransportPlan, check_cyclical_monotonicity, duality_gap,
                        solve_kantorovich, solve_with_common_mass)
from .rays import (Ray, RayDecomposition, build_gamma_prime, build_rays, decompose_plan,
                   disintegrate_along_rays)
from .glue import GluedMap, glue, monge_pipeline, monotone_coupling_1d, verify_map
from .densities import Density, DensityPair, make_density
from .evolution import (EvolutionReport, evolution_mass_1d, gaussian_pushforward_density, interpolate,
                        jacobian_interp_bound, reverse_evolution_mass_1d)
from .wiener import (CameronMartinBasis, PathEnsemble, dimension_ladder, make_basis, project_measure,
                     reweight, sample_paths)

__all__ = [
    "BranchingError", "CameronMartinBasis", "Density", "DensityPair", "DimensionMismatchError",
    "DiscreteMeasure", "DualPotentials", "EstimateViolation", "EvolutionReport", "GluedMap",
    "InvalidInputError", "MassMismatchError", "OneDimMeasure", "PathEnsemble", "QuadratureError",
    "Ray", "RayDecomposition", "ToleranceError", "TransportPlan", "build_gamma_prime", "build_rays",
    "check_cyclical_monotonicity", "cm_distance", "common_mass_split", "decompose_plan",
    "dimension_ladder", "disintegrate_along_rays", "duality_gap", "evolution_mass_1d",
    "gaussian_pushforward_density", "glue", "interpolate", "jacobian_interp_bound", "make_basis",
    "make_density", "monge_pipeline", "monotone_coupling_1d", "pairwise_distances",
    "project_measure", "quantile_function", "reverse_evolution_mass_1d", "reweight",
    "sample_paths", "solve_kantorovich", "solve_with_common_mass", "verify_map",
]
