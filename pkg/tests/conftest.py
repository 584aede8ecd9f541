"""Pytest configuration and fixtures."""

import logging
from pathlib import Path

import numpy as np
import pytest
import yaml

from sparse_diffusion.codec import ScaleSpec
from sparse_diffusion.data import SyntheticSpec, from_synthetic
from sparse_diffusion.denoiser import init
from sparse_diffusion.numerics import Rng
from sparse_diffusion.schedule import NoiseSchedule


CONFIG_DIR = Path(__file__).parent.parent / "config"


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    """SDD_SEED from the outer environment must not leak into tests."""
    monkeypatch.delenv("SDD_SEED", raising=False)


@pytest.fixture(autouse=True)
def restore_logging():
    """The CLI reconfigures the root logger; put it back after each test."""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def sample_config():
    """Load the shipped run configuration."""
    with open(CONFIG_DIR / "train.yaml") as f:
        return yaml.safe_load(f)


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def unit_scale():
    """Maps [0, 1] onto [-1, 1]."""
    return ScaleSpec(0.0, 1.0)


@pytest.fixture
def cosine():
    return NoiseSchedule()


@pytest.fixture
def sparse_batch():
    """8 x 6 batch in [0, 1] with about half the entries exactly zero."""
    gen = np.random.default_rng(7)
    values = gen.uniform(0.05, 1.0, size=(8, 6))
    mask = gen.uniform(size=(8, 6)) < 0.5
    values[mask] = 0.0
    values[0, 0] = 1.0
    return values


@pytest.fixture
def small_params():
    """Sparse-bit denoiser for d=3 with two narrow hidden layers."""
    return init(Rng(5), 3, [8, 6], temb_dim=8)


@pytest.fixture
def dense_params():
    return init(Rng(5), 3, [8, 6], temb_dim=8, sparsity_bits=False)


@pytest.fixture
def toy_dataset():
    """Small clustered dataset: 64 rows of 4x4 images, ~75% sparse."""
    spec = SyntheticSpec(kind="clustered-deposits", d=16, target_sparsity=0.75, cluster_count=2, seed=3)
    return from_synthetic(spec, 64)


@pytest.fixture
def tiny_run_config(tmp_path):
    """Config file for a few-step CLI training run."""
    config = {
        "train": {"batch_size": 16, "total_steps": 5, "seed": 11, "log_every": 0},
        "model": {"hidden": [16, 16], "temb_dim": 8},
        "data": {"synthetic": {"kind": "clustered-deposits", "d": 16, "target_sparsity": 0.75}, "n": 48},
        "sample": {"steps": 4, "batch": 8},
    }
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(config))
    return path
