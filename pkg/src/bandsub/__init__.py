"""Frequency band substitution of diffusion features.

Text-driven image-to-image translation as pure numerics: DCT band
transplants between DDIM trajectories in latent space, behind a pluggable
noise-prediction boundary so every claim is testable against a closed-form
oracle.
"""

from .dct import AXIS_HEIGHT, AXIS_WIDTH, dct1d_axis, dct2d, idct1d_axis, idct2d
from .denoisers import AnalyticGaussianDenoiser, BridgeDenoiser, Denoiser
from .diffusion import (COND_NULL, COND_TARGET, Schedule, cfg_eps, ddim_invert_step,
                        ddim_sample_step, make_schedule, predict_x0, with_grid)
from .masks import (BandSpec, KIND_ABSOLUTE, KIND_PERCENTILE, MODE_HIGH, MODE_LOW,
                    MODE_MID, band_regions, make_mask_2d, make_mask_pair_1d, union_region)
from .ops import (SpatialTransformParams, apply_spatial_transform, blend_masked,
                  identity_transform, mirror_expand, sample_spatial_transform,
                  substitute_band_2d, substitute_band_axes)
from .pipelines import (PipelineConfig, RunReport, TraceRow, VARIANT_INVERSION,
                        VARIANT_RECON, band_energy_fractions, expected_denoiser_calls,
                        run_inversion_guided, run_localized, run_recon_guided,
                        run_style_specific, schedule_from_table, spectral_correlation)
from .protocol import (BridgeClient, BridgeError, FrameRecorder, ProtocolError,
                       RemoteError, TransportError)
from .tensor_io import (BadMagicError, PayloadSizeError, TensorFormatError,
                        TruncatedPayloadError, downsample_mask, load_tensor,
                        save_tensor, validate_feature, validate_mask)

__all__ = [name for name in dir() if not name.startswith("_")]
