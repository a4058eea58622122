"""Shared fixtures: canonical measures and fields reused across test modules.

Session scope keeps the expensive grid/normalization work to one pass; the
fixtures expose frozen, deterministic objects so tests can pin values.
"""

from pathlib import Path

import pytest

from covlab import make_gaussian, smooth_measure
from covlab.suites import coord_field, tanh_field

REPO = Path(__file__).resolve().parents[1]
CONFIGS = REPO / "configs"


@pytest.fixture(scope="session")
def gauss1():
    return smooth_measure(make_gaussian(1), 129)


@pytest.fixture(scope="session")
def gauss2():
    return smooth_measure(make_gaussian(2), 129)


@pytest.fixture(scope="session")
def gauss1_x(gauss1):
    return coord_field(gauss1.grid)


@pytest.fixture(scope="session")
def gauss1_tanh(gauss1):
    return tanh_field(gauss1.grid)
