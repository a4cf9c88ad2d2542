import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stokes_lattice import (AccuracyNotMetError, ChannelGeometry, ConfigurationError, KINDS, Kind,
                            build_channel_solution, coefficient_terms, evaluate)
from stokes_lattice.channel import (choose_truncation, denominators, forcing_coefficients,
                                    singular_parts, solve_coefficient_system, system_residuals,
                                    wall_rounding_floor)

from conftest import interior_grid

MU = 0.3 + 1.1j


# --------------------------------------------------------------------------
# Independent oracles
# --------------------------------------------------------------------------

def _row_sums(d):
    """Symmetric lattice sums of d_k**-m, d_k = d + 2 pi k, m = 1, 2, 3."""
    s1 = 0.5 / np.tan(d / 2)
    s2 = 0.25 / np.sin(d / 2) ** 2
    s3 = 0.125 * np.cos(d / 2) / np.sin(d / 2) ** 3
    return s1, s2, s3


def free_row_velocity(kind, mu, d):
    """Free-space periodic row of singularities, summed image by image.

    Uses conj(d_k) = d_k - 2 i Im(d) with the classical cot/csc sums; the
    Stokeslet log sum is log|2 sin(d/2)|**2 up to a constant.
    """
    mub = np.conj(mu)
    eta = d.imag
    s1, s2, s3 = _row_sums(d)
    if kind is Kind.STOKESLET:
        return -mub * np.log(np.abs(2 * np.sin(d / 2)) ** 2) - 2j * eta * mu * s1
    if kind is Kind.STRESSLET:
        return -mub * np.conj(s1) - mu * (s1 - 2j * eta * s2)
    if kind is Kind.FORCE_QUADRUPOLE:
        return -mub * np.conj(s2) - 2 * mu * (s2 - 2j * eta * s3)
    if kind is Kind.SOURCE_DIPOLE:
        return -mu * s2
    return -2 * mu * s3


@pytest.mark.parametrize("kind", KINDS)
def test_singular_part_matches_lattice_sum(kind, rng):
    z0 = 2.0 + 0.7j
    z = rng.uniform(0, 2 * math.pi, 40) + 1j * rng.uniform(0.05, 3.0, 40)
    w = evaluate(singular_parts(kind, MU, z0), z).velocity
    diff = w - free_row_velocity(kind, MU, z - z0)
    # periodic rows are fixed up to a constant; the Stokeslet row also up to a uniform shear
    basis = [np.ones_like(z.imag)] + ([z.imag] if kind is Kind.STOKESLET else [])
    A = np.column_stack(basis).astype(complex)
    coef, *_ = np.linalg.lstsq(A, diff, rcond=None)
    assert np.max(np.abs(A @ coef - diff)) < 1e-13 * max(1.0, np.max(np.abs(w)))


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("h", [1.0, 2.0, math.pi])
def test_forcing_coefficients_match_fft_of_wall_data(kind, h):
    z0 = 2.0 + 0.37 * h * 1j
    rho = math.exp(-h)
    N = 24
    M = 512
    x = 2 * math.pi * np.arange(M) / M
    fc = forcing_coefficients(kind, MU, np.exp(1j * z0), rho, N)
    sp = singular_parts(kind, MU, z0)
    for y, (plus, minus, c0) in ((0.0, (fc.d_plus, fc.d_minus, fc.d0)),
                                 (h, (fc.e_plus, fc.e_minus, fc.e0))):
        C = np.fft.fft(evaluate(sp, x + 1j * y).velocity) / M
        assert np.max(np.abs(-C[1:N + 1] - plus)) <= 1e-12
        assert np.max(np.abs(-C[-1:-N - 1:-1] - minus)) <= 1e-12
        assert abs(-C[0] - c0) <= 1e-12


def test_series_matches_frozen_transform_values(frozen_oracle):
    z = np.array([complex(*p) for p in frozen_oracle["points"]])
    geo = ChannelGeometry.canonical(frozen_oracle["h"])
    for case in frozen_oracle["cases"]:
        sol = build_channel_solution(case["kind"], complex(*case["mu"]), complex(*frozen_oracle["z0"]), geo)
        w = evaluate(sol.parts, z).velocity
        expected = np.array(case["u"]) - 1j * np.array(case["v"])
        assert np.max(np.abs(w - expected)) <= 1e-8, case["kind"]


# --------------------------------------------------------------------------
# Coefficient system
# --------------------------------------------------------------------------

@pytest.mark.parametrize("h", [0.3, 1.0, math.pi / 2, 2.0, 2 * math.pi, 12.0])
def test_denominators_positive_and_match_direct_formula(h):
    rho = math.exp(-h)
    N = 200
    den = denominators(rho, N)
    assert np.all(den > 0)
    n = np.arange(1, N + 1)
    x = n * h
    ok = (x > 0.5) & (x < 300)        # direct form cancels for small x, overflows for large
    x = x[ok]
    direct = 4.0 * np.exp(-2 * x) * (np.sinh(x) ** 2 - x ** 2)
    assert np.allclose(den[ok], direct, rtol=1e-12, atol=0)


def test_denominator_small_argument_series():
    # x = n h tiny: first factor ~ x**3/3 must not be lost to cancellation
    den = denominators(math.exp(-1e-4), 3)
    x = 1e-4 * np.arange(1, 4)
    approx = (2 * np.exp(-x) * (x ** 3 / 6 + x ** 5 / 120)) * (-np.expm1(-2 * x) + 2 * x * np.exp(-x))
    assert np.allclose(den, approx, rtol=1e-10)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("h", [math.pi / 2, 2.0, 2 * math.pi])
def test_mode_equations_satisfied(kind, h):
    z0 = math.pi + 0.4j * h
    rho = math.exp(-h)
    fc = forcing_coefficients(kind, MU, np.exp(1j * z0), rho, 64)
    co = solve_coefficient_system(fc, rho)
    assert np.max(system_residuals(fc, co, rho)) <= 1e-13


def test_solve_rejects_bad_inputs():
    fc = forcing_coefficients("stokeslet", 1.0, np.exp(1j * (1 + 1j)), math.exp(-2), 8)
    with pytest.raises(ConfigurationError):
        solve_coefficient_system(fc, 1.5)
    with pytest.raises(ConfigurationError):
        solve_coefficient_system(fc, math.exp(-2), N=9)
    with pytest.raises(ConfigurationError):
        forcing_coefficients("stokeslet", 1.0, 0.5, 0.2, 0)


def test_choose_truncation_monotone_in_tolerance():
    Ns = [choose_truncation(math.exp(-2), 0.5, tol) for tol in (1e-4, 1e-8, 1e-12)]
    assert Ns == sorted(Ns)
    with pytest.raises(ConfigurationError):
        choose_truncation(0.5, 0.4, 1e-12)


# --------------------------------------------------------------------------
# Builds
# --------------------------------------------------------------------------

@given(kind=st.sampled_from(KINDS),
       h=st.floats(0.6, 7.0),
       frac=st.floats(0.15, 0.85),
       x0=st.floats(0.0, 2 * math.pi, exclude_max=True),
       mu_re=st.floats(-2, 2), mu_im=st.floats(-2, 2))
def test_noslip_property(kind, h, frac, x0, mu_re, mu_im):
    # Close to a thin channel's wall the wall pieces are large and cancel; the
    # build then either meets the target or stops at its rounding floor.
    mu = complex(mu_re, mu_im)
    try:
        sol = build_channel_solution(kind, mu, complex(x0, frac * h), h)
    except AccuracyNotMetError as err:
        assert err.floor is not None and err.achieved <= 8 * err.floor
        return
    x = np.linspace(0, 2 * math.pi, 97)
    w = np.concatenate([evaluate(sol.parts, x).velocity, evaluate(sol.parts, x + 1j * h).velocity])
    bound = max(1e-11 * max(1.0, abs(mu)), 8 * wall_rounding_floor(sol.parts, h))
    assert np.max(np.abs(w)) <= bound


def test_rounding_floor_stops_the_build_early():
    # source quadrupole 0.14 from the top wall: the g' piece there is ~1e5
    with pytest.raises(AccuracyNotMetError) as err:
        build_channel_solution("source_quadrupole", 1j, complex(0.0, 0.609375), 0.75)
    assert err.value.floor is not None
    assert 1e-12 < err.value.achieved <= 8 * err.value.floor
    assert "rounding floor" in str(err.value)


def test_rounding_floor_is_far_below_target_in_ordinary_builds():
    sol = build_channel_solution("stokeslet", 1.0, complex(math.pi, 1.0), 2.0)
    assert wall_rounding_floor(sol.parts, 2.0) < 1e-13


def test_zero_strength_gives_zero_flow():
    sol = build_channel_solution("stresslet", 0.0, 1 + 1j, 2.0)
    z = interior_grid(2.0)
    assert np.max(np.abs(evaluate(sol.parts, z).velocity)) == 0.0


def test_fixed_truncation_is_respected():
    sol = build_channel_solution("stokeslet", 1.0, 1 + 1j, 2.0, N=12)
    assert sol.N == 12 and len(sol.parts.F) == 12
    assert sol.built_tolerance > 1e-12


def test_accuracy_not_met_reports_achieved():
    with pytest.raises(AccuracyNotMetError) as err:
        build_channel_solution("stokeslet", 1.0, 1 + 1j, 2.0, tol=1e-30)
    assert err.value.achieved > 0


def test_build_rejects_outside_points():
    with pytest.raises(ConfigurationError):
        build_channel_solution("stokeslet", 1.0, 1 + 2.5j, 2.0)


def test_linearity_in_strength():
    z = interior_grid(2.0)
    a = build_channel_solution("stresslet", 1.0, 2 + 0.8j, 2.0)
    b = build_channel_solution("stresslet", 1j, 2 + 0.8j, 2.0)
    c = build_channel_solution("stresslet", 2 - 3j, 2 + 0.8j, 2.0)
    # velocity is real-linear in mu
    wa, wb, wc = (evaluate(s.parts, z).velocity for s in (a, b, c))
    assert np.max(np.abs(wc - (2 * wa - 3 * wb))) <= 1e-12


def test_mirror_symmetry_of_vertical_stokeslet():
    # mu = i at mid-channel: the flow is symmetric under x -> 2 x0 - x
    z0 = math.pi + 1j
    sol = build_channel_solution("stokeslet", 1j, z0, 2.0)
    z = interior_grid(2.0)
    w = evaluate(sol.parts, z).velocity
    wm = evaluate(sol.parts, 2 * z0.real - z.conj()).velocity
    # (u, v)(x) = (-u, v)(mirror): u - i v -> -u - i v = -conj(u - i v)
    assert np.max(np.abs(w + np.conj(wm))) <= 1e-12


# --------------------------------------------------------------------------
# Coefficient terms
# --------------------------------------------------------------------------

def test_coefficient_terms_shape_and_zero_padding():
    sol = build_channel_solution("stokeslet", 1.0, -1j * math.log(0.6), math.pi)
    terms = coefficient_terms(sol, math.exp(-1), sol.N + 10)
    assert terms.n.tolist() == list(range(1, sol.N + 11))
    assert np.all(terms.fh[sol.N:] == 0) and np.all(terms.gk[sol.N:] == 0)
    assert np.all(np.isfinite(terms.fh))


def test_coefficient_terms_slope_matches_geometric_rate():
    # F_n decays like |zeta0|^n, so the F/H column at zeta follows |zeta0 zeta|^n
    sol = build_channel_solution("stokeslet", 1.0, -1j * math.log(0.6), 2 * math.pi, N=80)
    terms = coefficient_terms(sol, math.exp(-1), 80)
    assert terms.slope("fh") == pytest.approx(math.log(0.6) - 1.0, abs=0.01)


def test_coefficient_terms_validation():
    sol = build_channel_solution("stokeslet", 1.0, 1 + 1j, 2.0)
    with pytest.raises(ConfigurationError):
        coefficient_terms(sol, 1.5, 10)
    with pytest.raises(ConfigurationError):
        coefficient_terms(sol, 0.5, 0)
