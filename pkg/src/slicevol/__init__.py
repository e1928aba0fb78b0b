"""Calibrated volume uncertainty for per-slice area predictions.

An SDE with state-dependent noise models the inner slices, a three-case jump
distribution models the outermost slices, and Monte Carlo integration turns
both into a volume distribution that is unbiased with respect to the point
prediction.
"""
from ._accel import backend_name
from .errors import SlicevolError
from .estimation import FitConfig, FitReport, ModelParams, fit_all, naive_baseline_std
from .jump_model import JumpParams
from .sde_core import SdeParams
from .slice_data import RawHeart, SliceSeries, load_dataset, preprocess, save_dataset
from .synth import SynthConfig, default_params, generate
from .volume_pipeline import VolumeDistribution, evaluate, simulate_heart

__version__ = "0.1.0"

__all__ = [
    "FitConfig",
    "FitReport",
    "JumpParams",
    "ModelParams",
    "RawHeart",
    "SdeParams",
    "SliceSeries",
    "SlicevolError",
    "SynthConfig",
    "VolumeDistribution",
    "backend_name",
    "default_params",
    "evaluate",
    "fit_all",
    "generate",
    "load_dataset",
    "naive_baseline_std",
    "preprocess",
    "save_dataset",
    "simulate_heart",
]
