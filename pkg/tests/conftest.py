from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from branchctl.configuration import Configuration

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

labels = st.lists(st.integers(0, 9), max_size=6).map(tuple)


def one_atom(x: float = 0.0) -> Configuration:
    return Configuration([((0,), np.array([float(x)]))], dim=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
