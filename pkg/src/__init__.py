"""bagshrink - multi-task mean estimation by test-based neighborhood shrinkage."""

from .config import ExperimentConfig
from .estimators import Method, ShrinkageMode, WeightMatrix
from .exceptions import (
    BagShrinkError,
    BagTooSmallError,
    ConfigurationError,
    DataFormatError,
    DegenerateShrinkageError,
    DimensionMismatchError,
    InvalidParameterError,
    SingularSystemError,
    UnsupportedCheckError,
)
from .harness import BenchReport, run_benchmark, tune
from .kernel_core import Bag, KernelSpec
from .similarity_tests import NeighborGraph, TestConfig

__all__ = [
    "Bag",
    "KernelSpec",
    "NeighborGraph",
    "TestConfig",
    "Method",
    "ShrinkageMode",
    "WeightMatrix",
    "ExperimentConfig",
    "BenchReport",
    "tune",
    "run_benchmark",
    "BagShrinkError",
    "ConfigurationError",
    "InvalidParameterError",
    "DimensionMismatchError",
    "BagTooSmallError",
    "DegenerateShrinkageError",
    "SingularSystemError",
    "DataFormatError",
    "UnsupportedCheckError",
]
