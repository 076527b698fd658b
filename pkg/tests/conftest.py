"""Shared test helpers."""

from __future__ import annotations

import numpy as np
import pytest

from ebo.core import Box


@pytest.fixture
def unit_box():
    return Box([0.0], [1.0])


@pytest.fixture
def unit_square():
    return Box([0.0, 0.0], [1.0, 1.0])


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
