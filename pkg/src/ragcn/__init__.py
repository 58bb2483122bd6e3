"""Adversarially re-weighted graph convolutional networks for imbalanced node classification."""

from .datasets import AttributedGraph, DatasetSchema, SyntheticSpec, generate_gaussian_toy, generate_synthetic, load_csv_dataset
from .experiments import ExperimentConfig, preset, run
from .metrics import MetricsReport, evaluate
from .training import TrainConfig, fit_and_evaluate, train

__version__ = "0.1.0"

__all__ = [
    "AttributedGraph",
    "DatasetSchema",
    "ExperimentConfig",
    "MetricsReport",
    "SyntheticSpec",
    "TrainConfig",
    "evaluate",
    "fit_and_evaluate",
    "generate_gaussian_toy",
    "generate_synthetic",
    "load_csv_dataset",
    "preset",
    "run",
    "train",
]
