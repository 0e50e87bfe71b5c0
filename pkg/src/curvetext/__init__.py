"""Differentiable scene-text rectification and recognition at desk scale."""

from .autodiff import Parameter, ParameterStore, Tensor, backward, no_grad
from .decoder import BidiDecoder, Direction, Hypothesis, Vocabulary
from .encoder import EncoderConfig, RecognitionEncoder
from .imaging import Image, resize_bilinear
from .poly_grid import ControlGrid, GridConfig, build_grid, eval_poly, identity_raw
from .rectifier import RectifierNet, RectNetConfig, baseline_curvature
from .tps import TargetGrid, TpsMapping, map_point, rectify_image, sample_bilinear, solve_tps, tps_kernel
from .training import Model, TrainConfig, evaluate, normalize_text, train

__all__ = [
    "BidiDecoder",
    "ControlGrid",
    "Direction",
    "EncoderConfig",
    "GridConfig",
    "Hypothesis",
    "Image",
    "Model",
    "Parameter",
    "ParameterStore",
    "RecognitionEncoder",
    "RectNetConfig",
    "RectifierNet",
    "TargetGrid",
    "Tensor",
    "TpsMapping",
    "TrainConfig",
    "Vocabulary",
    "backward",
    "baseline_curvature",
    "build_grid",
    "eval_poly",
    "evaluate",
    "identity_raw",
    "map_point",
    "no_grad",
    "normalize_text",
    "rectify_image",
    "resize_bilinear",
    "sample_bilinear",
    "solve_tps",
    "tps_kernel",
    "train",
]
