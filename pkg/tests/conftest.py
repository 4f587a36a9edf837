"""Shared generators for randomized property tests."""
import numpy as np
import pytest

import riskdesign as rd

CONFIG_DIR = None


def pytest_configure(config):
    global CONFIG_DIR
    CONFIG_DIR = config.rootpath / "configs"


@pytest.fixture
def config_dir(request):
    return request.config.rootpath / "configs"


def random_sample(rng, n=None):
    """Loss sample from a mix of shapes; occasionally constant."""
    if n is None:
        n = int(rng.integers(3, 40))
    kind = int(rng.integers(4))
    if kind == 0:
        return rng.normal(rng.uniform(-2, 2), rng.uniform(0.5, 2.0), n)
    if kind == 1:
        return rng.exponential(rng.uniform(0.5, 2.0), n)
    if kind == 2:
        return rng.uniform(-5, 5, n)
    return np.full(n, rng.uniform(-3, 3))


def random_level(rng):
    return float(rng.uniform(0.0, 0.95))


def random_spectrum(rng, max_steps=4):
    """Valid step spectrum with 1..max_steps jumps, unit mass."""
    k = int(rng.integers(1, max_steps + 1))
    if k == 1:
        taus = np.array([0.0])
    else:
        inner = np.unique(np.round(rng.uniform(0.05, 0.9, k - 1), 6))
        taus = np.concatenate(([0.0], inner))
    raw = rng.uniform(0.05, 2.0, taus.size)
    if rng.uniform() < 0.3:
        raw[0] = 0.0
    mass = float(np.dot(raw, 1.0 - taus))
    if mass <= 0.0:
        raw[-1] = 1.0
        mass = float(np.dot(raw, 1.0 - taus))
    return rd.RiskSpectrum(taus, raw / mass)


def random_type_space(rng, m=None, max_steps=3):
    if m is None:
        m = int(rng.integers(1, 5))
    locations = np.cumsum(rng.uniform(0.2, 1.0, m))
    return rd.TypeSpace(locations, [random_spectrum(rng, max_steps)
                                    for _ in range(m)])


def random_distribution(rng, m):
    w = rng.uniform(0.05, 1.0, m)
    return rd.TypeDistribution(w / w.sum())
