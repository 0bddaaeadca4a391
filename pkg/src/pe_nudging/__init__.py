"""Continuous data assimilation (nudging) for the hydrostatic primitive equations on a periodic layer."""

__version__ = "0.1.0"

from .grid import BcKind, GridSpec, HVelocity, ScalarField, SpectralScalar  # noqa: E402
from .hydrostatic import ProjectedVelocity, compute_w, depth_average, project  # noqa: E402
from .dynamics import ForcingSpec, SimParams, StateSnapshot, spin_up, step_reference  # noqa: E402
from .observation import Identity, LocalAverage, SpectralCutoff, estimate_constants  # noqa: E402
from .nudging import NudgeParams, TwinRecord, run_twin, step_assimilated, step_difference  # noqa: E402
from .linearized import GateConstants, GateReport, apply_A, bilinear_B, check_gates, coercivity_probe  # noqa: E402
from .diagnostics import DecayFit, PlateauEstimate, fit_decay, norm, plateau, scaling_fit  # noqa: E402

__all__ = [
    "BcKind", "GridSpec", "HVelocity", "ScalarField", "SpectralScalar",
    "ProjectedVelocity", "compute_w", "depth_average", "project",
    "ForcingSpec", "SimParams", "StateSnapshot", "spin_up", "step_reference",
    "Identity", "LocalAverage", "SpectralCutoff", "estimate_constants",
    "NudgeParams", "TwinRecord", "run_twin", "step_assimilated", "step_difference",
    "GateConstants", "GateReport", "apply_A", "bilinear_B", "check_gates", "coercivity_probe",
    "DecayFit", "PlateauEstimate", "fit_decay", "norm", "plateau", "scaling_fit",
]
