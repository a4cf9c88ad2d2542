import math

import numpy as np
import pytest

from stokes_lattice import ConfigurationError, DomainError, assemble_and_solve, oracle_eval, pf_roots
from stokes_lattice.transform import (global_relation_residual, papkovich_fadle_table, quadruple,
                                      side_velocity, singular_forcings)

H = 2.0
Z0 = complex(math.pi, 1.0)

# first roots of sinh(s) = -s and sinh(s) = +s: tabulated six-decimal values of sin z +- z = 0
# with the real and imaginary parts swapped
TABULATED = [(complex(2.250729, 4.212392), -1), (complex(2.768678, 7.497676), 1),
             (complex(3.103149, 10.712537), -1), (complex(3.352210, 13.899960), 1)]


@pytest.fixture(scope="module")
def stokeslet_system():
    return assemble_and_solve("stokeslet", 1j, Z0, H)


def test_pf_roots_match_tabulated_values():
    table = papkovich_fadle_table(4)
    for (s, sign), got, got_sign in zip(TABULATED, table.s, table.sign):
        assert abs(got - s) < 1e-6
        assert got_sign == sign


def test_pf_root_residuals():
    table = papkovich_fadle_table(40)
    assert np.max(table.residual) <= 1e-12
    assert np.max(table.rounded_residual) <= 1e-13
    assert np.all(np.diff(np.abs(table.s)) > 0)


def test_pf_roots_quadruples():
    k = pf_roots(H, 3).reshape(3, 4)
    for s, grp in zip(papkovich_fadle_table(3).s, k):
        assert np.allclose(grp, np.array([s, -s, s.conjugate(), -s.conjugate()]) / H)
    assert np.array_equal(quadruple([1 + 2j]), np.array([1 + 2j, -1 - 2j, 1 - 2j, -1 + 2j]))
    with pytest.raises(ConfigurationError):
        pf_roots(0.0, 3)
    with pytest.raises(ConfigurationError):
        papkovich_fadle_table(0)


def test_singular_forcing_jump_is_smooth_across_cut():
    # the log cut runs straight down from z0, so the period jump of f_s is continuous in y
    fc = singular_forcings("stokeslet", 1.0, Z0, H)
    y = np.linspace(0, H, 2001)
    jf = fc.jump_f(y)
    assert np.max(np.abs(np.diff(jf))) < 1e-2


def test_oracle_against_frozen_values(frozen_oracle, stokeslet_system):
    case = next(c for c in frozen_oracle["cases"] if c["kind"] == "stokeslet" and c["mu"] == [0.0, 1.0])
    z = np.array([complex(*p) for p in frozen_oracle["points"]])
    u, v = oracle_eval(stokeslet_system, z)
    assert np.max(np.abs((u - 1j * v) - (np.array(case["u"]) - 1j * np.array(case["v"])))) <= 1e-8


def test_side_data_satisfy_noslip_at_corners(stokeslet_system):
    w = side_velocity(stokeslet_system, np.array([0.0, H]))
    assert np.max(np.abs(w)) <= 1e-8


def test_oracle_on_walls_and_sides(stokeslet_system):
    z = np.array([0.0 + 0.7j, 2.0 + 0j, 4.0 + 2.0j])
    u, v = oracle_eval(stokeslet_system, z)
    assert abs(u[1]) + abs(v[1]) + abs(u[2]) + abs(v[2]) <= 1e-8
    assert np.isfinite(u[0]) and np.isfinite(v[0])


def test_global_relations_small_and_sensitive(stokeslet_system):
    rng = np.random.default_rng(7)
    s1 = papkovich_fadle_table(2).s
    radius = 0.5 * (abs(s1[0]) + abs(s1[1])) / H
    k = 0.7 * radius * np.sqrt(rng.uniform(0, 1, 20)) * np.exp(2j * np.pi * rng.uniform(0, 1, 20))
    res, res_hat = global_relation_residual(stokeslet_system, k, radius)
    assert max(res.max(), res_hat.max()) <= 10 * max(stokeslet_system.residual, 1e-14)
    with pytest.raises(ConfigurationError):
        global_relation_residual(stokeslet_system, np.array([radius]), radius)


def test_oracle_input_checks(stokeslet_system):
    with pytest.raises(DomainError):
        oracle_eval(stokeslet_system, np.array([1.0 + 2.5j]))
    with pytest.raises(ConfigurationError):
        assemble_and_solve("source_dipole", 1.0, Z0, H)
    with pytest.raises(ConfigurationError):
        assemble_and_solve("stokeslet", 1.0, complex(1.0, 2.5), H)
