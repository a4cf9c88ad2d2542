import dataclasses
import math

import numpy as np
import pytest

from stokes_lattice import (ConfigurationError, KINDS, ValidationReport, build_channel_solution,
                            build_halfplane_solution, validation_battery)
from stokes_lattice.validation import (derivative_identity_check, force_flux_check, interior_points,
                                       local_singularity_residual, noslip_residual, oracle_checks,
                                       periodicity_residual)

Z0 = math.pi + 1j


def test_report_pass_flag_and_dict():
    r = ValidationReport("x", 1e-3, 3, 1e-2)
    assert r.passed and r.as_dict()["passed"] is True
    assert not ValidationReport("x", float("nan"), 3, 1.0).passed
    assert "FAIL" in ValidationReport("x", 2.0, 3, 1.0).line()


@pytest.mark.parametrize("kind", KINDS)
def test_battery_passes_channel(kind):
    sol = build_channel_solution(kind, 1 + 0.5j, Z0, 2.0)
    reports = validation_battery(sol, seed=3)
    assert all(r.passed for r in reports), [r.line() for r in reports if not r.passed]


@pytest.mark.parametrize("kind", KINDS)
def test_battery_passes_halfplane(kind):
    sol = build_halfplane_solution(kind, 1 - 0.5j, Z0)
    reports = validation_battery(sol, seed=3)
    assert all(r.passed for r in reports), [r.line() for r in reports if not r.passed]


def test_noslip_detects_corrupted_coefficient():
    sol = build_channel_solution("stokeslet", 1.0, Z0, 2.0)
    F = np.array(sol.parts.F)
    F[2] += 1e-9
    bad = dataclasses.replace(sol, parts=sol.parts.replace(F=F))
    assert noslip_residual(sol).passed
    assert not noslip_residual(bad).passed


def test_local_check_detects_wrong_strength():
    sol = build_channel_solution("stresslet", 1.0, Z0, 2.0)
    wrong = dataclasses.replace(sol, parts=sol.parts.replace(f_poles=1.001 * np.array(sol.parts.f_poles)))
    assert local_singularity_residual(sol).passed
    assert not local_singularity_residual(wrong).passed


def test_periodicity_of_pressure():
    sol = build_channel_solution("force_quadrupole", 1j, Z0, 2.0)
    assert periodicity_residual(sol, quantity="pressure", tolerance=1e-13).passed


def test_interior_points_are_seeded_and_clear():
    sol = build_channel_solution("stokeslet", 1.0, Z0, 2.0)
    a = interior_points(sol, 50, seed=1)
    assert np.array_equal(a, interior_points(sol, 50, seed=1))
    d = a - Z0
    d = d - 2 * math.pi * np.round(d.real / (2 * math.pi))
    assert np.all(np.abs(d) > 0.1)


@pytest.mark.parametrize("kind", KINDS)
def test_force_flux(kind):
    sol = build_channel_solution(kind, 2 + 1j, Z0, 2.0)
    assert all(r.passed for r in force_flux_check(sol, eta=3.5))


@pytest.mark.parametrize("pair", [("stresslet", "force_quadrupole"), ("stokeslet", "source_dipole"),
                                  ("stresslet", "source_quadrupole")])
@pytest.mark.parametrize("geometry", [2.0, None])
def test_derivative_identities(pair, geometry):
    assert derivative_identity_check(*pair, mu=1 + 0.5j, geometry=geometry).passed


def test_derivative_identity_rejects_unknown_pair():
    with pytest.raises(ConfigurationError):
        derivative_identity_check("stokeslet", "stresslet")


def test_oracle_checks_pass():
    from stokes_lattice import assemble_and_solve

    system = assemble_and_solve("stresslet", 1.0, Z0, 2.0)
    reports = oracle_checks(system, seed=5)
    assert [r.name for r in reports] == ["pf_root_residual", "global_relations"]
    assert all(r.passed for r in reports)
