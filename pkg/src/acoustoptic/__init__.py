"""Acousto-optic imaging with the steady radiative transfer equation."""
from .acousto import (InternalField, Measurer, MeasurementError, MeasurementSet, boundary_term,
                      first_order_ratios, internal_direct, lemma22_check, recover_H, synthesize)
from .decomposition import angular_products, ballistic, decompose, remainder, u1v1_closed
from .estimators import ErrorScalingModel, InternalDataRecovery
from .geometry import AngularGrid, Grids, RayTrace, SpatialGrid, build_grids, line_integral, trace_ray
from .media import (BeamSource, MediaCoefficients, ModulationParams, Patch, beam_trace, make_beam, modulate,
                    profile, total_sigma)
from .reconstruct import (attenuation_ratio, fit_scalings, reconstruct_sigma, relative_error_field)
from .transport import (PhaseSpaceField, SolveReport, TransportProblem, albedo, apply_L, check_apriori_bound,
                        solve)

__version__ = "0.1.0"

__all__ = [
    "AngularGrid", "BeamSource", "ErrorScalingModel", "Grids", "InternalDataRecovery", "InternalField",
    "MediaCoefficients", "MeasurementError", "MeasurementSet", "Measurer", "ModulationParams", "Patch",
    "PhaseSpaceField", "RayTrace", "SolveReport", "SpatialGrid", "TransportProblem", "albedo",
    "angular_products", "apply_L", "attenuation_ratio", "ballistic", "beam_trace", "boundary_term",
    "build_grids", "check_apriori_bound", "decompose", "fit_scalings", "first_order_ratios", "internal_direct",
    "lemma22_check",
    "line_integral", "make_beam", "modulate", "profile", "reconstruct_sigma", "recover_H",
    "relative_error_field", "remainder", "solve", "synthesize", "total_sigma", "trace_ray", "u1v1_closed",
]
