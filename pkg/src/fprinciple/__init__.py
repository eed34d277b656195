"""Frequency-resolved diagnostics of neural-network training dynamics."""

from .nnet import BumpFunction, NetworkSpec, PopulationDensity, TargetFunction, Theta, forward, init_theta
from .spectral import BandMask, Grid, SampledField, Spectrum, dft, idft
from .grad import LossKind, grad_loss, grad_output
from .flow import FlowConfig, TrajectoryRecord, integrate
from .experiment import ExperimentConfig, load_preset, run

__version__ = "0.1.0"

__all__ = [
    "BandMask", "BumpFunction", "ExperimentConfig", "FlowConfig", "Grid", "LossKind", "NetworkSpec",
    "PopulationDensity", "SampledField", "Spectrum", "TargetFunction", "Theta", "TrajectoryRecord",
    "dft", "forward", "grad_loss", "grad_output", "idft", "init_theta", "integrate", "load_preset", "run",
]
