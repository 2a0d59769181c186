"""Semantic-discriminative Mixup for cross-domain sensor-window classification."""

from .autodiff import Tape, Tensor, backward, finite_difference, input_gradient
from .data import DomainDataset, SensorSeries, SensorWindow, SplitSpec, SyntheticSpec, generate_synthetic
from .margin import MarginConfig, margin_loss_hard, sdmix_loss
from .model import ActivityNet, ArchSpec
from .semantics import SemanticProfile, semantic_factor, semantic_mix
from .training import TrainConfig, fit

__all__ = [
    "ActivityNet", "ArchSpec", "DomainDataset", "MarginConfig", "SemanticProfile", "SensorSeries",
    "SensorWindow", "SplitSpec", "SyntheticSpec", "Tape", "Tensor", "TrainConfig", "backward",
    "finite_difference", "fit", "generate_synthetic", "input_gradient", "margin_loss_hard", "sdmix_loss",
    "semantic_factor", "semantic_mix",
]
__version__ = "0.1.0"
