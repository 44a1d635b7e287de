"""Shared fixtures and samplers for the test suites."""

import numpy as np
import pytest

from geometry import HullParams, StateZ, hull_min_slack
from lab_config import LabConfig, write_config
from subsolution import MixingGeometry, SubsolutionField, flat_field


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def params():
    return HullParams(M=5.0, margin_delta=0.05)


@pytest.fixture
def flat_geometry():
    return MixingGeometry(1.0)


@pytest.fixture
def flat_base(flat_geometry):
    return flat_field(flat_geometry)


def random_constraint_states(rng, n, M=5.0):
    """States of K_M: |rho| = 1, |v| <= M, m = rho v / 2."""
    rho = rng.choice([-1.0, 1.0], size=n)
    r = M * np.sqrt(rng.uniform(0.0, 1.0, n))
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    v = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    m = 0.5 * rho[:, None] * v
    return np.column_stack([rho, v, m])


def random_interior_states(rng, n, M=5.0, min_slack=0.05, rho_max=0.8):
    """Rejection sample of hull states with normalized slack above ``min_slack``."""
    kept = []
    while sum(len(k) for k in kept) < n:
        size = 4 * n
        rho = rng.uniform(-rho_max, rho_max, size)
        r = 3.0 * np.sqrt(rng.uniform(0.0, 1.0, size))
        phi = rng.uniform(0.0, 2.0 * np.pi, size)
        v = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
        w = rng.uniform(-0.6, 0.6, (size, 2))
        m = 0.5 * rho[:, None] * v + 0.5 * (1.0 - rho ** 2)[:, None] * w
        Z = np.column_stack([rho, v, m])
        kept.append(Z[hull_min_slack(Z, M) > min_slack])
    return np.concatenate(kept)[:n]


def random_cone_direction(rng, scale=0.5):
    """A wave-cone vector: |rho| = |v|, arbitrary flux."""
    a = scale * rng.uniform(0.2, 1.0) * rng.choice([-1.0, 1.0])
    phi = rng.uniform(0.0, 2.0 * np.pi)
    m = scale * rng.normal(size=2)
    return StateZ(a, (abs(a) * np.cos(phi), abs(a) * np.sin(phi)), (m[0], m[1]))


def constant_field(geometry, z):
    z = np.asarray(z, dtype=float)
    return SubsolutionField(geometry, lambda X: np.tile(z, (len(X), 1)), label="constant")


def linear_density_field(geometry, slope=0.1):
    """rho = slope * x2, everything else zero."""
    def evaluator(X):
        out = np.zeros((len(X), 5))
        out[:, 0] = slope * X[:, 1]
        return out
    return SubsolutionField(geometry, evaluator, label="linear")


SMALL_WINDOW = (-0.25, 0.25, -0.25, 0.25, 0.75, 1.0)


@pytest.fixture
def small_config():
    """A flat run small enough for a unit test: 31 cubes per pass."""
    return LabConfig(window=SMALL_WINDOW, s_initial=0.125, s_min=0.0625, passes_max=1,
                     k0=4, k_cap=16, quadrature=64, time_slices=8, bs_resolution=16)


@pytest.fixture
def config_file(tmp_path, small_config):
    return write_config(small_config, tmp_path / "run.env")
