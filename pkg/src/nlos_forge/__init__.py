"""nlos-forge: confocal non-line-of-sight transient imaging toolkit.

Synthesize transients from hidden scenes, corrupt them with a SPAD noise
model, hide scanning points behind scanning-pattern masks, complete the
missing transients with a masked autoencoder, reconstruct hidden geometry
with backprojection / light-cone transform / f-k migration, and score the
results.
"""

from .core import (OUT_OF_RANGE, SPEED_OF_LIGHT, ReconVolume, ScanGeometry,
                   TransientVolume, normalize_per_transient, round_trip_bin,
                   round_trip_bins)
from .masking import (SpmMask, combine_predictions, fill_masked,
                      gather_unmasked, make_random_mask, make_regular_mask,
                      scatter_histograms)
from .metrics import MetricReport, evaluate
from .noise import NoiseParams, apply_jitter, apply_spad_noise, jitter_kernel
from .recon import (ReconOptions, backproject, depth_from_argmax, fk_migrate,
                    lct, max_projection, reconstruct)
from .renderer import RenderOptions, downsample_spatial, render_confocal
from .scenes import HiddenScene, SceneSpec, generate_dataset, generate_scene

__version__ = "0.1.0"

__all__ = [
    "SPEED_OF_LIGHT", "OUT_OF_RANGE",
    "ScanGeometry", "TransientVolume", "ReconVolume",
    "round_trip_bin", "round_trip_bins", "normalize_per_transient",
    "HiddenScene", "SceneSpec", "generate_scene", "generate_dataset",
    "RenderOptions", "render_confocal", "downsample_spatial",
    "NoiseParams", "jitter_kernel", "apply_jitter", "apply_spad_noise",
    "SpmMask", "make_random_mask", "make_regular_mask", "gather_unmasked",
    "scatter_histograms", "combine_predictions", "fill_masked",
    "ReconOptions", "reconstruct", "backproject", "lct", "fk_migrate",
    "max_projection", "depth_from_argmax",
    "MetricReport", "evaluate",
    "__version__",
]
