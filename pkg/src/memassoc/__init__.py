"""Memory association networks: short-term queues, long-term generative recall."""

from .long_memory import (ClassPriorSet, GaussianPosterior, LambdaHotConfig, LongTermModel, Variant,
                          lambda_hot, recall, recognize, total_loss)
from .rng import Rng
from .short_memory import Batch, Sample, ShortTermMemory, onehot

__all__ = [
    "Batch", "ClassPriorSet", "GaussianPosterior", "LambdaHotConfig", "LongTermModel", "Rng",
    "Sample", "ShortTermMemory", "Variant", "lambda_hot", "onehot", "recall", "recognize", "total_loss",
]
__version__ = "0.1.0"
