"""Shared fixtures and independent oracles used across the test suite.

Oracles here are deliberately written with different algorithms than the
library code (explicit loops, O(N^2) scans, logaddexp-based activations)
so that agreement is evidence, not tautology.
"""

import numpy as np
import pytest
from hypothesis import settings

from occfit import cloud as cloud_mod
from occfit import field as field_mod
from occfit import shapes
from occfit.diffnet import NetworkConfig
from occfit.field import InitConfig

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")


def central_difference(f, x0, h=1e-6):
    """Dense central-difference gradient of a scalar function of a vector."""
    x0 = np.asarray(x0, dtype=np.float64)
    g = np.zeros_like(x0)
    for i in range(x0.size):
        e = np.zeros_like(x0)
        e[i] = h
        g[i] = (f(x0 + e) - f(x0 - e)) / (2.0 * h)
    return g


def pairwise_sq_dists(a, b):
    """All squared distances between two point sets, by explicit loop."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros((len(a), len(b)))
    for i in range(len(a)):
        for j in range(len(b)):
            d = a[i] - b[j]
            # plain elementwise arithmetic, not a BLAS dot: the package
            # promises bitwise agreement with exactly this form
            out[i, j] = (d * d).sum()
    return out


def brute_nearest(a, b):
    """For each row of a: (index into b, squared distance), O(N*M) scan."""
    d2 = pairwise_sq_dists(a, b)
    idx = d2.argmin(axis=1)
    return idx, d2[np.arange(len(a)), idx]


@pytest.fixture(scope="session")
def tiny_cfg():
    return NetworkConfig(num_hidden_layers=2, hidden_width=16,
                         skip_layer_index=1)


@pytest.fixture(scope="session")
def tiny_params(tiny_cfg):
    p = field_mod.geometric_init(tiny_cfg, InitConfig(),
                                 np.random.default_rng(11))
    # jitter off the symmetric start so gradients are generic
    return p + 0.01 * np.random.default_rng(12).normal(size=p.size)


@pytest.fixture(scope="session")
def sphere_cloud():
    pts, _ = shapes.generate("sphere", 300, 0.005, np.random.default_rng(7))
    return cloud_mod.normalize(cloud_mod.PointCloud(points=pts))
