"""Multi-task aspect-category sentiment with category-name-augmented input,
three attention decoder heads, incremental-learning workflows, and a
finite-difference-verified autodiff kernel."""

from .data import CategorySchema, Dataset, PolaritySet, Sample
from .encoder import EncoderConfig, Vocabulary
from .heads import DecoderMode, HeadKind
from .numerics import NdArray, Tape, grad_check
from .training import TrainConfig, TrainedModel

__all__ = [
    "CategorySchema", "Dataset", "PolaritySet", "Sample",
    "EncoderConfig", "Vocabulary", "DecoderMode", "HeadKind",
    "NdArray", "Tape", "grad_check", "TrainConfig", "TrainedModel",
]

__version__ = "0.1.0"
