"""Active-learning workflows for diffraction-profile surrogates."""

from ._core import (
    CellParams,
    ModelState,
    SymmetryClass,
    compare_reports,
    d_spacing,
    forward,
    loss,
    preset_config,
    run_workflow,
    sample_al,
    sample_uniform,
    simulate_profile,
    sweep_grid,
    tof_grid,
    weights,
)

__all__ = [
    "CellParams",
    "ModelState",
    "SymmetryClass",
    "compare_reports",
    "d_spacing",
    "forward",
    "loss",
    "preset_config",
    "run_workflow",
    "sample_al",
    "sample_uniform",
    "simulate_profile",
    "sweep_grid",
    "tof_grid",
    "weights",
]
