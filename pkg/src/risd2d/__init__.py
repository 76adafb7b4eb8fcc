"""Joint pairing, power control, receive beamforming and multi-RIS phase design
for the uplink of a D2D-underlaid cellular cell."""
from .bcd_driver import BcdConfig, BcdTrace, bcd_solve, compute_robust_noise, robust_bcd_solve
from .channel_gen import CsiErrorModel, FadingConfig, apply_csi_error, generate_channels
from .core_model import (
    BeamformerSet, ChannelSet, Pairing, PowerAllocation, ScenarioConfig, SolutionState,
    evaluate_sinr,
)
from .experiments import ExperimentSpec, ResultRow, run_experiment

__all__ = [
    "BcdConfig", "BcdTrace", "bcd_solve", "compute_robust_noise", "robust_bcd_solve",
    "CsiErrorModel", "FadingConfig", "apply_csi_error", "generate_channels",
    "BeamformerSet", "ChannelSet", "Pairing", "PowerAllocation", "ScenarioConfig",
    "SolutionState", "evaluate_sinr", "ExperimentSpec", "ResultRow", "run_experiment",
]
__version__ = "0.1.0"
