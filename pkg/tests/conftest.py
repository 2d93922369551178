import os
import sys

import numpy as np
import pytest

os.environ.setdefault("POLYSPOT_THREADS", "1")
sys.path.insert(0, os.path.dirname(__file__))

import polyspot as ps
from polyspot.calibrate import PriceSeries


# Canonical parameter sets used across the suite.  TABLE_1998_DEG5 and
# TABLE_2010_DEG4 are the unrounded conversions of reference calibrations.
TABLE_1998_DEG5 = ps.JacobiParams(kappa=140.10, theta=0.42, sigma=6.09)
TABLE_2010_DEG4 = ps.JacobiParams(kappa=162.62, theta=0.43, sigma=6.94)


@pytest.fixture(scope="session")
def table_1998_deg5():
    return TABLE_1998_DEG5


@pytest.fixture(scope="session")
def table_2010_deg4():
    return TABLE_2010_DEG4


def make_regime_test_model():
    """Frequent-mixing regime model whose spikes a bootstrap PF can track."""
    return ps.RegimeModel(
        x_factor=ps.JacobiParams.from_shape(4.0, 8.0, 1.3),
        lambda01=50.0,
        lambda10=100.0,
        map0=ps.map_from_c([0.1], 1000.0),
        map1=ps.map_from_c([-0.1], 1000.0),
    )


def make_dj_test_model():
    """Double-Jacobi model resolvable on a 32-node quadrature grid."""
    return ps.DoubleJacobiModel(
        x_factor=ps.JacobiParams.from_shape(4.0, 8.0, 1.5),
        y_factor=ps.JacobiParams.from_shape(2.5, 2.0, 4.5),
        map0=ps.map_from_c([0.3], 1000.0),
        map1=ps.map_from_c([-0.3], 1000.0),
    )


@pytest.fixture(scope="session")
def regime_series_200():
    model = make_regime_test_model()
    sim = ps.simulate_model(model, 200, rng=11)
    return model, PriceSeries.from_prices(sim["price"])


@pytest.fixture(scope="session")
def dj_series_200():
    model = make_dj_test_model()
    sim = ps.simulate_model(model, 200, rng=11)
    return model, PriceSeries.from_prices(sim["price"])
