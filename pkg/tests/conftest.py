"""Pytest configuration and fixtures for bagshrink tests."""

import tempfile
from pathlib import Path

import numpy as np
import pytest
import yaml

from src.config import ExperimentConfig
from src.kernel_core import Bag, KernelSpec

# ============================================================================
# Configuration Fixtures
# ============================================================================


@pytest.fixture
def temp_config_file():
    """Create a temporary config file for testing."""
    config_data = {
        "experiment": {
            "setting": "kme",
            "generator": "b_num_bags",
            "B": 6,
            "N": 8,
            "test_size": 30,
            "kernel": "rbf",
            "kernel_width": 1.5,
            "methods": ["NE", "STB-0", "STB-weight"],
            "zeta_grid": [1, 2],
            "gamma_grid": [0, 0.5, 1],
            "trials_tune": 2,
            "trials_eval": 3,
            "seed": 7,
            "threads": 2,
            "output": "out.csv",
        }
    }

    with tempfile.NamedTemporaryFile(mode="w", suffix=".yaml", delete=False) as f:
        yaml.dump(config_data, f)
        temp_path = f.name

    yield temp_path

    # Cleanup
    Path(temp_path).unlink(missing_ok=True)


@pytest.fixture
def invalid_config_file():
    """Create an invalid YAML config file for testing."""
    with tempfile.NamedTemporaryFile(mode="w", suffix=".yaml", delete=False) as f:
        f.write("invalid: yaml: content: [")
        temp_path = f.name

    yield temp_path

    # Cleanup
    Path(temp_path).unlink(missing_ok=True)


@pytest.fixture
def minimal_config_file():
    """Create a config file with an empty experiment section."""
    with tempfile.NamedTemporaryFile(mode="w", suffix=".yaml", delete=False) as f:
        yaml.dump({"experiment": {}}, f)
        temp_path = f.name

    yield temp_path

    # Cleanup
    Path(temp_path).unlink(missing_ok=True)


@pytest.fixture
def small_kme_config():
    """A toy kme experiment small enough to run in a unit test."""
    return ExperimentConfig(
        setting="kme",
        generator="b_num_bags",
        B=6,
        N=8,
        test_size=40,
        kernel_width=2.0,
        zeta_grid=[0.5, 2.0],
        gamma_grid=[0.0, 0.5],
        c_grid=[1.0],
        mta_strength_grid=[0.5, 4.0],
        trials_tune=2,
        trials_eval=3,
        seed=11,
    )


@pytest.fixture
def small_gaussian_config():
    """A Gaussian experiment small enough to run in a unit test."""
    return ExperimentConfig(
        setting="gaussian",
        generator="CLUSTER",
        B=40,
        d=30,
        N=1,
        zeta_grid=[1.0, 2.0, 4.0],
        gamma_grid=[0.0, 0.5, 1.0],
        c_grid=[0.5, 1.0],
        mta_strength_grid=[0.25, 1.0, 4.0],
        trials_tune=2,
        trials_eval=4,
        seed=3,
    )


# ============================================================================
# Bag Fixtures
# ============================================================================


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_bags(rng):
    """Four small 2-d bags of unequal sizes (at most 5 samples)."""
    sizes = [3, 5, 4, 2]
    offsets = [0.0, 0.2, 3.0, 3.1]
    return [
        Bag(str(i), offset + rng.standard_normal((size, 2)))
        for i, (size, offset) in enumerate(zip(sizes, offsets))
    ]


@pytest.fixture
def clustered_bags(rng):
    """Two well separated groups of three 2-d bags with 30 samples each."""
    centres = [(0.0, 0.0)] * 3 + [(8.0, 8.0)] * 3
    return [
        Bag(f"b{i}", np.asarray(centre) + rng.standard_normal((30, 2)))
        for i, centre in enumerate(centres)
    ]


@pytest.fixture
def linear_kernel():
    return KernelSpec.linear()


@pytest.fixture
def rbf_kernel():
    return KernelSpec.rbf(1.0)


# ============================================================================
# File Fixtures
# ============================================================================


@pytest.fixture
def temp_dir():
    """Temporary directory removed after the test."""
    with tempfile.TemporaryDirectory() as path:
        yield Path(path)


@pytest.fixture
def bag_csv(temp_dir):
    """Write CSV text to a file in the temporary directory and return its path."""

    def write(text: str, name: str = "bags.csv") -> Path:
        path = temp_dir / name
        path.write_text(text)
        return path

    return write
