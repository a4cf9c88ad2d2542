import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stokes_lattice import (ConfigurationError, KINDS, Kind, build_channel_solution,
                            build_halfplane_solution, evaluate)
from stokes_lattice.flow import contour_diagnostics

from conftest import interior_grid


@given(kind=st.sampled_from(KINDS), y0=st.floats(0.05, 5.0),
       x0=st.floats(0.0, 2 * math.pi, exclude_max=True),
       mu_re=st.floats(-2, 2), mu_im=st.floats(-2, 2))
def test_noslip_property(kind, y0, x0, mu_re, mu_im):
    sol = build_halfplane_solution(kind, complex(mu_re, mu_im), complex(x0, y0))
    x = np.linspace(0, 2 * math.pi, 129)
    w = evaluate(sol.parts, x + 0j).velocity
    # the field scales like |mu| / y0**m near the wall
    scale = max(1.0, abs(complex(mu_re, mu_im))) * max(1.0, y0 ** -(kind.strength_order + 1))
    assert np.max(np.abs(w)) <= 1e-13 * scale


@pytest.mark.parametrize("kind, mu", [(Kind.STOKESLET, 1j), (Kind.STRESSLET, 1.0),
                                      (Kind.FORCE_QUADRUPOLE, 1 + 2j), (Kind.SOURCE_DIPOLE, 2 - 1j),
                                      (Kind.SOURCE_QUADRUPOLE, 1j)])
def test_wide_channel_reduces_to_halfplane(kind, mu):
    # strengths for which the channel has no linear log(zeta) term
    z0 = math.pi + 1j
    z = interior_grid(math.inf, 20, 10)
    hp = evaluate(build_halfplane_solution(kind, mu, z0).parts, z).velocity
    ch = build_channel_solution(kind, mu, z0, 30.0)
    assert ch.a == 0.0
    assert np.max(np.abs(evaluate(ch.parts, z).velocity - hp)) <= 1e-8


def test_far_field_decay_of_source_kinds():
    # no net force and no flux: the disturbance dies off exponentially with height
    for kind in (Kind.SOURCE_DIPOLE, Kind.SOURCE_QUADRUPOLE, Kind.FORCE_QUADRUPOLE):
        sol = build_halfplane_solution(kind, 1.0, math.pi + 1j)
        w5 = np.abs(evaluate(sol.parts, np.linspace(0, 6, 7) + 5j).velocity).max()
        w10 = np.abs(evaluate(sol.parts, np.linspace(0, 6, 7) + 10j).velocity).max()
        assert w10 < 0.05 * w5


def test_stokeslet_force_above_wall():
    sol = build_halfplane_solution("stokeslet", 2 + 1j, math.pi + 1j)
    res = contour_diagnostics(sol, sol.spec.z0, 0.5, eta=2.0)
    assert abs(res.force - (-8 * math.pi * 2.0 * (2 + 1j))) <= 1e-10 * 8 * math.pi * 2 * abs(2 + 1j)
    assert abs(res.mass_flux) <= 1e-10


def test_halfplane_rejects_points_below_wall():
    with pytest.raises(ConfigurationError):
        build_halfplane_solution("stokeslet", 1.0, 1 - 0.5j)


def test_halfplane_metadata():
    sol = build_halfplane_solution("stresslet", 1.0, 1 + 1j)
    assert sol.domain == "halfplane" and math.isinf(sol.h) and sol.N == 0
