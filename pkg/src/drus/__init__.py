"""Ultrasound image reconstruction by diffusion restoration in SVD spectral space.

A pulse-echo operator ``H`` maps a reflectivity image to channel data, a
beamformer ``B`` projects channel data back to the image domain, and a
conditional reverse-diffusion sampler reconstructs the image from ``B y``
(optionally after whitening the beamformed noise).
"""

from .beamforming import (
    Beamformer,
    BeamformerKind,
    beamform,
    compose_model,
    das_beamformer,
    matched_filter,
)
from .config import ConfigError, RunConfig
from .ddrm import (
    DenoiserError,
    DiffusionSchedule,
    GaussianPrior,
    Identity,
    PriorDenoiser,
    SamplerConfig,
    ScaleMap,
    SoftThreshold,
    make_schedule,
    reconstruct,
    reference_denoisers,
    sample_chains,
    step_coefficients,
)
from .forward import ForwardOperator, apply_forward, build_forward_operator
from .geometry import (
    AcquisitionSetup,
    ApodizationLaw,
    ArrayGeometry,
    ImageGrid,
    PulseEchoResponse,
    Transmit,
    Window,
)
from .kernels import BACKEND
from .spectral import LinearModel, SpectralDecomposition, svd
from .whitening import Whitener, build_whitener, compose_whitened_model, eigendecompose_gram

__version__ = "0.1.0"

__all__ = [
    "AcquisitionSetup", "ApodizationLaw", "ArrayGeometry", "BACKEND", "Beamformer",
    "BeamformerKind", "ConfigError", "DenoiserError", "DiffusionSchedule", "ForwardOperator",
    "GaussianPrior", "Identity", "ImageGrid", "LinearModel", "PriorDenoiser", "PulseEchoResponse",
    "RunConfig", "SamplerConfig", "ScaleMap", "SoftThreshold", "SpectralDecomposition",
    "Transmit", "Whitener", "Window", "apply_forward", "beamform", "build_forward_operator",
    "build_whitener", "compose_model", "compose_whitened_model", "das_beamformer",
    "eigendecompose_gram", "make_schedule", "matched_filter", "reconstruct",
    "reference_denoisers", "sample_chains", "step_coefficients", "svd",
]
