"""Shared test fixtures: rate sets from both regimes and small geometries."""

from __future__ import annotations

import numpy as np
import pytest
from factories import rates, step

from savanna_coexistence.lattice import Geometry
from savanna_coexistence.models import RateParams


@pytest.fixture(autouse=True)
def _quiet_logging(monkeypatch):
    """Keep SAVANNA_LOG_LEVEL from the developer's shell out of the suite."""
    monkeypatch.delenv("SAVANNA_LOG_LEVEL", raising=False)


@pytest.fixture
def survival_rates() -> RateParams:
    """Krone's model inside the survival region: mu*nu = 0.25 < omega*(beta-nu) = 1.5."""
    return rates(2.0, 0.5, 0.5, 1.0)


@pytest.fixture
def extinction_rates() -> RateParams:
    """Krone's model in the extinction region: mu*nu = 1.5 > omega*(beta-nu) = 0.2."""
    return rates(1.2, 1.5, 1.0, 1.0)


@pytest.fixture
def plateau_rates() -> RateParams:
    """Step growth rate satisfying the expanding test-function hypotheses in d=1."""
    return rates(10.0, 0.5, 0.5, step(1.0, 0.2, 0.05))


@pytest.fixture
def tiny_geometry() -> Geometry:
    return Geometry(d=1, L=1, side=6)


@pytest.fixture
def boxed_geometry() -> Geometry:
    """d=1, L=5 with boxes of 2 sites (ell=1) on a 40-site ring."""
    return Geometry(d=1, L=5, epsilon0=0.2, side=40)


@pytest.fixture
def plane_geometry() -> Geometry:
    return Geometry(d=2, L=5, epsilon0=0.2, side=20, kappa=1.5)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)
