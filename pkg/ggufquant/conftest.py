# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: conftest.py
"""Shared pytest fixtures: a tiny F16 model, its GGUF file and the shipped results."""

import numpy as np
import pytest

from .analysis import load_results
from .gguf_io import write_gguf
from .utils.synthetic import make_synthetic_model

TINY_DIMS = dict(n_layers=2, hidden=256, ffn=512, kv=128, vocab=512)


@pytest.fixture
def rng():
    return np.random.default_rng(111)


@pytest.fixture
def tiny_model():
    return make_synthetic_model(seed=111, **TINY_DIMS)


@pytest.fixture
def tiny_gguf(tmp_path, tiny_model):
    path = str(tmp_path / 'tiny-f16.gguf')
    write_gguf(tiny_model, path)
    return path


@pytest.fixture(scope='session')
def shipped_rows():
    return load_results()
