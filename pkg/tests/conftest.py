import math

import numpy as np
import pytest

from cg_analytics import TwoDSpec
from cg_model import SystemSpec, normalize_map
from cg_systems import build_2d


def random_spd(rng, dim, floor=0.1):
    m = rng.standard_normal((dim, dim))
    return m @ m.T / dim + floor * np.eye(dim)


def random_orthonormal_rows(rng, n, dim):
    q, _ = np.linalg.qr(rng.standard_normal((dim, n)))
    return q[:, :n].T


def random_system(rng, dim, n, beta=1.0):
    sys = SystemSpec(a=random_spd(rng, dim), beta=beta)
    cg = normalize_map(random_orthonormal_rows(rng, n, dim))
    return sys, cg


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def system_2d():
    """lambda=2, theta=pi/4, beta=1: a0=1.5, alpha=0.5, a1=1.5, B=4/3, C=0.9"""
    return build_2d(TwoDSpec(lam=2.0, theta=math.pi / 4), beta=1.0)


@pytest.fixture
def aligned_2d():
    return build_2d(TwoDSpec(lam=2.0, theta=0.0), beta=1.0)
