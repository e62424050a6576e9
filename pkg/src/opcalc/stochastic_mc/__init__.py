"""Seeded Monte Carlo on flat-torus bundle models with exact spectral oracles."""

from .bridge import BridgePath, sample_bridge, sample_bridge_batch, sample_winding
from .engine import (
    FkResult,
    apply_moment_pattern,
    batch_expm,
    fk_estimate,
    moment_scaling_probe,
    simulate_functionals,
)
from .levy import LevyAreaResult, levy_area_estimate
from .localize import (
    LocalizationResult,
    chain_block_perturbation,
    localization_check,
    localization_value,
    spin_torus_model,
)
from .model import (
    PerturbationSpec,
    TorusModel,
    heat_kernel,
    spectral_phi_kernel,
    winding_cutoff,
)

__all__ = [
    "BridgePath",
    "FkResult",
    "LevyAreaResult",
    "LocalizationResult",
    "PerturbationSpec",
    "TorusModel",
    "apply_moment_pattern",
    "batch_expm",
    "chain_block_perturbation",
    "fk_estimate",
    "heat_kernel",
    "levy_area_estimate",
    "localization_check",
    "localization_value",
    "moment_scaling_probe",
    "sample_bridge",
    "sample_bridge_batch",
    "sample_winding",
    "simulate_functionals",
    "spectral_phi_kernel",
    "spin_torus_model",
    "winding_cutoff",
]
