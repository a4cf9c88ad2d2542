"""Acceptance criteria 1-11, one test each, at the stated tolerances.

Each test records a one-line verdict that is printed in the pytest terminal
summary (and by running this file directly).  Criteria that cannot be met
fail; the reasons are recorded in the decisions ledger.
"""

import json
import math
import sys

import numpy as np
import pytest

from stokes_lattice import (KINDS, ChannelGeometry, Kind, assemble_and_solve, build_channel_solution,
                            build_halfplane_solution, coefficient_terms, contour_diagnostics, evaluate)
from stokes_lattice.channel import system_residuals
from stokes_lattice.cli import main as cli_main
from stokes_lattice.validation import (cross_method_compare, derivative_identity_check,
                                       incompressibility_residual, local_singularity_residual,
                                       momentum_residual, noslip_residual, oracle_checks,
                                       periodicity_residual)

RESULTS = {}
MU = 1 + 0.5j
HEIGHTS = (math.pi / 2, math.pi, 2 * math.pi, 2.0)
Y_FIG = -math.log(0.7)


def record(n, ok, detail):
    RESULTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, RESULTS[n]


def channel_builds():
    for kind in KINDS:
        for h in HEIGHTS:
            for z0 in (complex(math.pi, h / 2), complex(math.pi, Y_FIG)):
                yield build_channel_solution(kind, MU, z0, h, tol=1e-12)


def halfplane_builds():
    for kind in KINDS:
        for y0 in (1.0, Y_FIG):
            yield build_halfplane_solution(kind, MU, complex(math.pi, y0))


def test_criterion_01_noslip():
    ch = max(noslip_residual(s).max_residual for s in channel_builds())
    hp = max(noslip_residual(s).max_residual for s in halfplane_builds())
    record(1, ch <= 1e-11 and hp <= 1e-13,
           f"channel max wall |u-iv| {ch:.2e} <= 1e-11 (40 builds), half-plane {hp:.2e} <= 1e-13")


def test_criterion_02_periodicity():
    sols = [build_channel_solution(k, MU, complex(math.pi, 1.0), 2.0) for k in KINDS]
    sols += [build_halfplane_solution(k, MU, complex(math.pi, 1.0)) for k in KINDS]
    worst = max(periodicity_residual(s, n_samples=200, seed=2024).max_residual for s in sols)
    record(2, worst <= 1e-14, f"max |w(z+2pi)-w(z)| {worst:.2e} <= 1e-14 over 200 points, 10 solutions")


def test_criterion_03_force_and_flux():
    z0 = complex(math.pi, 1.0)
    f_err = flux = other = 0.0
    for mu in (1.0, 1j, 2 + 1j):
        for eta in (1.0, 3.5):
            for sol in (build_channel_solution("stokeslet", mu, z0, 2.0),
                        build_halfplane_solution("stokeslet", mu, z0)):
                res = contour_diagnostics(sol, z0, 0.5, eta=eta)
                expected = -8 * math.pi * eta * mu
                f_err = max(f_err, abs(res.force - expected) / abs(expected))
                flux = max(flux, abs(res.mass_flux))
    for kind in KINDS[1:]:
        for sol in (build_channel_solution(kind, MU, z0, 2.0), build_halfplane_solution(kind, MU, z0)):
            res = contour_diagnostics(sol, z0, 0.5)
            other = max(other, abs(res.force))
            flux = max(flux, abs(res.mass_flux))
    record(3, f_err <= 1e-10 and other <= 1e-10 and flux <= 1e-10,
           f"Stokeslet force rel err {f_err:.2e}, other kinds |force| {other:.2e}, |flux| {flux:.2e} (<= 1e-10)")


def test_criterion_04_local_forms():
    z0 = complex(math.pi, 1.0)
    worst, name = 0.0, ""
    for kind in KINDS:
        for sol in (build_channel_solution(kind, MU, z0, 2.0), build_halfplane_solution(kind, MU, z0)):
            r = local_singularity_residual(sol, radii=(1e-3, 1e-4, 1e-5))
            if r.max_residual >= worst:
                worst, name = r.max_residual, f"{kind.value}/{sol.domain}"
    record(4, worst <= 0.05, f"max remainder growth exponent {worst:.3f} <= 0.05 down to r=1e-5 ({name})")


def test_criterion_05_coefficient_system():
    worst, den_ok, n_builds = 0.0, True, 0
    for sol in channel_builds():
        worst = max(worst, float(np.max(system_residuals(sol.forcing, sol.coefficients, sol.geometry.rho))))
        den_ok &= bool(np.all(sol.coefficients.denominators > 0))
        n_builds += 1
    record(5, worst <= 1e-13 and den_ok,
           f"max relative mode-equation residual {worst:.2e} <= 1e-13; denominators positive: {den_ok} "
           f"({n_builds} builds)")


def test_criterion_06_decay():
    zeta, zeta0 = math.exp(-1.0), 0.6
    z0 = complex(0.0, -math.log(zeta0))
    heights = (math.pi / 2, math.pi, 2 * math.pi)
    small_ok, ordering_ok, parts = True, True, []
    for kind in (Kind.STOKESLET, Kind.STRESSLET):
        slopes = {"fh": [], "gk": []}
        for h in heights:
            sol = build_channel_solution(kind, 1.0, z0, h, N=80)
            terms = coefficient_terms(sol, zeta, 80)
            tail = terms.n >= 40
            small_ok &= bool(np.all(terms.fh[tail] < 1e-10) and np.all(terms.gk[tail] < 1e-10))
            for col in slopes:
                slopes[col].append(terms.slope(col))
        for col, s in slopes.items():
            ordering_ok &= bool(s[0] > s[1] > s[2])
            parts.append(f"{kind.value[:6]}.{col} " + "/".join(f"{v:.3f}" for v in s))
    record(6, small_ok and ordering_ok,
           f"terms < 1e-10 for n >= 40: {small_ok}; slopes strictly steeper with h: {ordering_ok} "
           f"[h = pi/2, pi, 2pi: {'; '.join(parts)}]")


def test_criterion_07_halfplane_limit():
    z0 = complex(math.pi, 1.0)
    x = np.linspace(0.0, 2 * math.pi, 20)
    y = np.linspace(0.1, 2.0, 10)
    X, Y = np.meshgrid(x, y)
    Z = (X + 1j * Y).ravel()
    worst, worst_a0, worst_case = 0.0, 0.0, ""
    for kind in KINDS:
        for mu in (1.0, 1j, 2 + 1j):
            ch = build_channel_solution(kind, mu, z0, 20.0)
            hp = build_halfplane_solution(kind, mu, z0)
            diff = float(np.max(np.abs(evaluate(ch.parts, Z).velocity - evaluate(hp.parts, Z).velocity)))
            if diff > worst:
                worst, worst_case = diff, f"{kind.value} mu={mu}"
            if ch.a == 0.0:
                worst_a0 = max(worst_a0, diff)
    record(7, worst <= 1e-8,
           f"max |w_channel(h=20) - w_halfplane| {worst:.2e} ({worst_case}) vs 1e-8; "
           f"cases without the linear log term: {worst_a0:.2e}")


def test_criterion_08_derivative_identities():
    lines, ok = [], True
    for pair in (("stresslet", "force_quadrupole"), ("stokeslet", "source_dipole"),
                 ("stresslet", "source_quadrupole")):
        for geometry in (2.0, None):
            r = derivative_identity_check(*pair, mu=MU, geometry=geometry)
            ok &= r.passed
            lines.append(f"{pair[1]}/{'ch' if geometry else 'hp'} {r.max_residual:.1e}<={r.tolerance:.0e}")
    record(8, ok, "; ".join(lines))


def test_criterion_09_pde_residuals():
    z0 = complex(math.pi, 1.0)
    inc = mom = 0.0
    for kind in KINDS:
        for sol in (build_channel_solution(kind, MU, z0, 2.0), build_halfplane_solution(kind, MU, z0)):
            inc = max(inc, incompressibility_residual(sol, n_samples=100).max_residual)
            mom = max(mom, momentum_residual(sol, n_samples=100).max_residual)
    record(9, inc <= 1e-6 and mom <= 1e-4,
           f"incompressibility {inc:.2e} <= 1e-6, momentum {mom:.2e} <= 1e-4 (100 points x 10 solutions)")


def test_criterion_10_cross_method():
    z0 = complex(math.pi, 1.0)
    diffs, root_res, gr_ok, gr_worst = [], 0.0, True, 0.0
    for kind, mu in (("stokeslet", 1.0), ("stresslet", 1.0)):
        sol = build_channel_solution(kind, mu, z0, 2.0)
        system = assemble_and_solve(kind, mu, z0, 2.0)
        diffs.append(cross_method_compare(sol, system).max_residual)
        checks = {r.name: r for r in oracle_checks(system, n_k=20, seed=11)}
        root_res = max(root_res, checks["pf_root_residual"].max_residual)
        gr_ok &= checks["global_relations"].passed
        gr_worst = max(gr_worst, checks["global_relations"].max_residual)
    ok = max(diffs) <= 1e-6 and root_res <= 1e-12 and gr_ok
    record(10, ok, f"series vs transform max |dw| stokeslet {diffs[0]:.2e}, stresslet {diffs[1]:.2e} "
                   f"(<= 1e-6); PF root residual {root_res:.1e}; global relations {gr_worst:.1e} "
                   f"at system-residual scale: {gr_ok}")


def test_criterion_11_topology_change(tmp_path, capsys):
    census = {}
    for h in (1.9, 2.1):
        cfg = tmp_path / f"fig6_{h}.json"
        cfg.write_text(json.dumps({"geometry": {"domain": "channel", "period_l": 2 * math.pi, "height_h": h},
                                   "singularities": [{"kind": "stokeslet", "mu": [0, 1],
                                                      "z0": [math.pi, Y_FIG]}]}))
        out = tmp_path / f"s_{h}.json"
        code = cli_main(["streamlines", "--config", str(cfg), "--out", str(out), "--format", "json",
                         "--seeds", "auto:6"])
        capsys.readouterr()
        assert code == 0
        census[h] = json.loads(out.read_text())["meta"]["census"]
    a, b = census[1.9], census[2.1]
    changed = a["line_count"] != b["line_count"]
    record(11, changed,
           f"stagnation points on the mirror line h=1.9: {a['line_count']}, h=2.1: {b['line_count']} "
           f"(eddy pair appears); midline u sign changes {a['midline_u_changes']} -> {b['midline_u_changes']}; "
           f"2D census centres/saddles {a['centres']}/{a['saddles']} -> {b['centres']}/{b['saddles']}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
