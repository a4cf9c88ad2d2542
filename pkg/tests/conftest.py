import json
import math
import pathlib

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = pathlib.Path(__file__).parent / "data"
ROOT = pathlib.Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def frozen_oracle():
    return json.loads((DATA / "frozen_oracle.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def interior_grid(h, nx=12, ny=8, margin=0.08):
    top = h if math.isfinite(h) else 2.0
    x = np.linspace(0.1, 2 * math.pi - 0.1, nx)
    y = np.linspace(margin * top, (1 - margin) * top, ny)
    X, Y = np.meshgrid(x, y)
    return (X + 1j * Y).ravel()


def write_config(path, domain="channel", height=2.0, period=2 * math.pi, singularities=(), **extra):
    geo = {"domain": domain, "period_l": period}
    if domain == "channel":
        geo["height_h"] = height
    data = {"geometry": geo, "singularities": list(singularities)}
    data.update(extra)
    path.write_text(json.dumps(data))
    return path


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
