"""splitsense: hyperspectral tomato split detection with a convolutional VAE.

Pipeline: ENVI ingestion -> radiometric calibration -> ROI extraction
(bounding box, mask, band slice, resize) -> VAE trained on normal fruit ->
reconstruction-loss scoring with an F1-optimal threshold.
"""

import os as _os

# SPLITSENSE_THREADS caps worker parallelism; it must reach the BLAS layer
# before numpy first loads it.
_threads = _os.environ.get("SPLITSENSE_THREADS")
if _threads:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .band_analysis import PatchSpec, Spectrum, patch_mean_spectrum, \
    recommend_range, reflectance_difference
from .detector import (
    EvalMetrics,
    Heatmap,
    ScoreRecord,
    ThresholdReport,
    classify,
    evaluate,
    heatmap,
    mean_reflectance_report,
    regularity,
    score,
    score_many,
    select_threshold,
    threshold_report,
)
from .hsi_io import EnviHeader, HsiCube, nearest_band, parse_envi_header, \
    read_cube, read_cube_file, write_cube, write_cube_files
from .preprocess import (
    BoundingBox,
    ForegroundMask,
    RoiTensor,
    ScaleFactors,
    apply_mask,
    augment,
    calibrate,
    crop_resize,
    extract_rgb,
    extract_roi,
    scale_bbox,
    slice_bands,
)
from .synth import SynthConfig, SynthSample, gen_dataset, gen_sample
from .trainer import (
    Checkpoint,
    DatasetSplit,
    TrainConfig,
    beta_schedule,
    load_checkpoint,
    save_checkpoint,
    split_dataset,
    train,
)
from .vae import LossBreakdown, VaeConfig, VaeParams, decode, encode, \
    init_params, loss_and_grads, reparameterize, vae_loss

__version__ = "0.1.0"
