import math

import numpy as np
import pytest

from stokes_lattice import (ChannelGeometry, ConfigurationError, HalfPlaneGeometry, Kind, Singularity,
                            SingularitySpec, canonicalize)
from stokes_lattice.model import TWO_PI, z_of_zeta, zeta_of_z


@pytest.mark.parametrize("text, kind", [
    ("stokeslet", Kind.STOKESLET), ("Stresslet", Kind.STRESSLET),
    ("force-quadrupole", Kind.FORCE_QUADRUPOLE), ("source dipole", Kind.SOURCE_DIPOLE),
    ("quadrupole", Kind.SOURCE_QUADRUPOLE), (Kind.STOKESLET, Kind.STOKESLET),
])
def test_kind_parse(text, kind):
    assert Kind.parse(text) is kind


def test_kind_parse_rejects_unknown():
    with pytest.raises(ConfigurationError):
        Kind.parse("rotlet")


def test_strength_orders_match_pole_order():
    assert [k.strength_order for k in Kind] == [0, 1, 2, 2, 3]


@pytest.mark.parametrize("period, height", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (math.inf, 1.0),
                                            (1.0, math.nan)])
def test_channel_geometry_validation(period, height):
    with pytest.raises(ConfigurationError):
        ChannelGeometry(period, height)


def test_channel_geometry_canonical_values():
    g = ChannelGeometry(4 * math.pi, 3.0)
    assert g.scale_c == pytest.approx(0.5)
    assert g.canonical_h == pytest.approx(1.5)
    assert g.rho == pytest.approx(math.exp(-1.5))


def test_spec_rejects_points_outside_fluid():
    g = ChannelGeometry.canonical(2.0)
    for z0 in (1.0 + 0j, 1.0 - 0.1j, 1.0 + 2.0j, 1.0 + 2.5j):
        with pytest.raises(ConfigurationError):
            SingularitySpec(Singularity(Kind.STOKESLET, 1.0), z0).check_inside(g)
    SingularitySpec(Singularity(Kind.STOKESLET, 1.0), 1.0 + 1.0j).check_inside(g)


def test_canonicalize_scales_positions_and_strengths():
    g = ChannelGeometry(4 * math.pi, 4.0)
    sings = [(Singularity(k, 1.0 + 1.0j), complex(2.0, 1.0)) for k in Kind]
    prob = canonicalize(g, sings)
    c = 0.5
    for spec, factor, k in zip(prob.specs, prob.strength_factors, Kind):
        assert spec.z0 == pytest.approx(complex(1.0, 0.5))
        assert factor == pytest.approx(c ** k.strength_order)
        assert spec.mu == pytest.approx((1.0 + 1.0j) * factor)


def test_halfplane_geometry():
    g = HalfPlaneGeometry(TWO_PI)
    assert g.domain == "halfplane"
    assert g.scale_c == pytest.approx(1.0)


def test_zeta_map_round_trip():
    z = np.array([0.3 + 0.2j, 5.0 + 1.7j])
    assert np.allclose(z_of_zeta(zeta_of_z(z)), z)
