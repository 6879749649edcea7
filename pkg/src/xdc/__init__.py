"""Masked low-frequency guidance engine for diffusion-based compositing."""

from .denoiser import (
    GaussianMixture,
    OracleDenoiser,
    cfg_combine,
    demo_mixture,
    oracle_eps,
    oracle_posterior_x0,
    reference_oracle,
)
from .filters import blend_filter, low_pass
from .grids import as_grid, as_mask, load_image, load_mask, paste, save_image, save_mask
from .maskops import SmoothedMask, blur_outwards, default_blend_pixels, dilate
from .sampler import (
    GuidanceConfig,
    boundary_energy,
    ddim_step,
    ddpm_step,
    guidance_update_x0,
    guidance_update_xt,
    renoise_step,
    run_composite,
)
from .schedule import (
    NoiseSchedule,
    ResampleSchedule,
    TimeMask,
    build_resample_schedule,
    build_time_mask,
    forward_noise,
    make_schedule,
    predict_x0,
)

__version__ = "0.1.0"

__all__ = [
    "GaussianMixture",
    "GuidanceConfig",
    "NoiseSchedule",
    "OracleDenoiser",
    "ResampleSchedule",
    "SmoothedMask",
    "TimeMask",
    "as_grid",
    "as_mask",
    "blend_filter",
    "blur_outwards",
    "boundary_energy",
    "build_resample_schedule",
    "build_time_mask",
    "cfg_combine",
    "ddim_step",
    "ddpm_step",
    "default_blend_pixels",
    "demo_mixture",
    "dilate",
    "forward_noise",
    "guidance_update_x0",
    "guidance_update_xt",
    "load_image",
    "load_mask",
    "low_pass",
    "make_schedule",
    "oracle_eps",
    "oracle_posterior_x0",
    "paste",
    "predict_x0",
    "reference_oracle",
    "renoise_step",
    "run_composite",
    "save_image",
    "save_mask",
]
