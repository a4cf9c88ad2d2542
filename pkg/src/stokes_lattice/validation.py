"""Residual and identity checks shared by the test-suite and the CLI."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import mpmath
import numpy as np

from stokes_lattice.channel import (
    DERIVATIVE_PAIRS,
    build_channel_solution,
    parametric_derivative_build,
    wall_points,
)
from stokes_lattice.errors import ConfigurationError
from stokes_lattice.flow import as_solutions, complex_velocity, eval_pressure_vorticity
from stokes_lattice.goursat import evaluate
from stokes_lattice.halfplane import build_halfplane_solution
from stokes_lattice.model import TWO_PI, Kind

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20240611
ABS_FLOOR = 1e-12


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of one check; ``passed`` is ``max_residual <= tolerance``."""

    name: str
    max_residual: float
    samples: int
    tolerance: float
    passed: bool = field(init=False)
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        ok = bool(np.isfinite(self.max_residual) and self.max_residual <= self.tolerance)
        object.__setattr__(self, "passed", ok)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["max_residual"] = float(self.max_residual)
        return d

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.name:<40s} {self.max_residual:10.3e} <= {self.tolerance:.1e}  (n={self.samples})"


def _rng(seed):
    return np.random.default_rng(DEFAULT_SEED if seed is None else seed)


def interior_points(solutions, n, seed=None, margin=0.05):
    """Seeded random points in the canonical cell, away from walls and images."""
    sols = as_solutions(solutions)
    h = sols[0].h if sols else 1.0
    top = h if math.isfinite(h) else 3.0
    rng = _rng(seed)
    pts = []
    while len(pts) < n:
        cand = rng.uniform(0.0, TWO_PI, 4 * n) + 1j * rng.uniform(margin * top, (1 - margin) * top, 4 * n)
        keep = np.ones(cand.shape, bool)
        for s in sols:
            d = cand - s.spec.z0
            d = d - TWO_PI * np.round(d.real / TWO_PI)
            keep &= np.abs(d) > 0.1
        pts.extend(cand[keep][: n - len(pts)])
    return np.array(pts, dtype=complex)


def noslip_residual(solution, samples_per_wall=256, tolerance=None) -> ValidationReport:
    sols = as_solutions(solution)
    h = sols[0].h
    bottom, top = wall_points(h, samples_per_wall)
    pts = np.concatenate([bottom, top]) if math.isfinite(h) else bottom
    res = float(np.max(np.abs(complex_velocity(sols, pts, exclusion_radius=0.0))))
    if tolerance is None:
        tolerance = 1e-11 if math.isfinite(h) else 1e-13
    return ValidationReport("noslip", res, len(pts), tolerance)


def periodicity_residual(solution, n_samples=200, seed=None, tolerance=1e-14,
                         quantity="velocity") -> ValidationReport:
    """``max |q(z + 2 pi) - q(z)|`` for velocity or for ``p/eta - i omega``.

    The difference is divided by ``max(1, |q|)``.
    """
    sols = as_solutions(solution)
    z = interior_points(sols, n_samples, seed)
    # snap x so that x + 2 pi is exactly representable: the two inputs then
    # differ by exactly one period and the check isolates the evaluator
    z = ((z.real + TWO_PI) - TWO_PI) + 1j * z.imag
    if quantity == "velocity":
        a = complex_velocity(sols, z)
        b = complex_velocity(sols, z + TWO_PI)
    else:
        p, w = eval_pressure_vorticity(sols, z)
        p2, w2 = eval_pressure_vorticity(sols, z + TWO_PI)
        a, b = p - 1j * w, p2 - 1j * w2
    scale = np.maximum(1.0, np.abs(a))
    res = float(np.max(np.abs(a - b) / scale))
    return ValidationReport(f"periodicity[{quantity}]", res, n_samples, tolerance)


def local_velocity(kind, mu, d):
    """Exact free-space singular velocity ``u - i v`` at offset ``d = z - z0``."""
    kind = Kind.parse(kind)
    mu = complex(mu)
    mub = mu.conjugate()
    db = np.conj(d)
    if kind is Kind.STOKESLET:
        return -mub * np.log(np.abs(d) ** 2) + mu * db / d
    if kind is Kind.STRESSLET:
        return -mub / db - mu * db / d ** 2
    if kind is Kind.FORCE_QUADRUPOLE:
        return -mub / db ** 2 - 2.0 * mu * db / d ** 3
    if kind is Kind.SOURCE_DIPOLE:
        return -mu / d ** 2
    return -2.0 * mu / d ** 3


def _local_velocity_mp(kind, mu, d):
    mu = mpmath.mpc(mu)
    mub = mpmath.conj(mu)
    db = mpmath.conj(d)
    if kind is Kind.STOKESLET:
        return -mub * mpmath.log(abs(d) ** 2) + mu * db / d
    if kind is Kind.STRESSLET:
        return -mub / db - mu * db / d ** 2
    if kind is Kind.FORCE_QUADRUPOLE:
        return -mub / db ** 2 - 2 * mu * db / d ** 3
    if kind is Kind.SOURCE_DIPOLE:
        return -mu / d ** 2
    return -2 * mu / d ** 3


def _horner(coeffs, t, weight=None):
    out = mpmath.mpc(0)
    for k in range(len(coeffs), 0, -1):
        c = mpmath.mpc(complex(coeffs[k - 1]))
        out = (out + (c * weight(k) if weight else c)) * t
    return out


def velocity_mp(parts, d):
    """``u - i v`` at ``z0 + d`` in mpmath arithmetic from the stored coefficients.

    Mirrors the grouping of :func:`stokes_lattice.goursat.evaluate` (including
    the folded pole coefficients) so it measures the same stored solution,
    free of the cancellation error of double precision near ``z0``.
    """
    j = mpmath.mpc(0, 1)
    z0 = mpmath.mpc(parts.z0)
    z = z0 + d
    y, y0 = z.imag, z0.imag
    zeta = mpmath.exp(j * z)
    zeta0 = mpmath.exp(j * z0)
    a = mpmath.mpc(parts.log_z)
    vel = -mpmath.conj(a) * (-2 * y)
    DF_reg = a
    F_rat = mpmath.mpc(parts.f_const)
    G_reg = mpmath.mpc(parts.g_const)
    u = 1 / mpmath.expm1(j * d)
    if parts.log_pole != 0:
        c = mpmath.mpc(parts.log_pole)
        vel -= mpmath.conj(c) * mpmath.log(abs(zeta - zeta0) ** 2)
        DF_reg += c
    F_rat += _horner(parts.f_poles, u)
    if parts.log_image != 0 or len(parts.f_image) or len(parts.g_image):
        zb0 = mpmath.conj(zeta0)
        s = 1 / (1 - zb0 * zeta)
        zs = zb0 * zeta * s
        if parts.log_image != 0:
            c = mpmath.mpc(parts.log_image)
            vel -= mpmath.conj(c) * mpmath.log(abs(1 - zb0 * zeta) ** 2)
            DF_reg -= c * zs
        F_rat += _horner(parts.f_image, s)
        DF_reg += zs * _horner(parts.f_image, s, weight=lambda k: k)
        G_reg += _horner(parts.g_image, s)
    if parts.n_terms:
        w = mpmath.mpf(parts.rho) / zeta
        F_rat += _horner(parts.F, zeta) + _horner(parts.H, w)
        DF_reg += _horner(parts.F, zeta, weight=lambda k: k) - _horner(parts.H, w, weight=lambda k: k)
        G_reg += _horner(parts.G, zeta) + _horner(parts.K, w)
    W_reg = j * DF_reg
    W = W_reg + _horner(parts.w_poles, u)
    G_fold = _horner(parts.folded_g_poles, u)
    vel += -2 * j * (y - y0) * W - 2 * j * y0 * W_reg + G_fold + G_reg - mpmath.conj(F_rat)
    return vel


def local_singularity_residual(solution, radii=(1e-3, 1e-4, 1e-5), n_rays=8,
                               tolerance=0.05, dps=40) -> ValidationReport:
    """Growth exponent of ``w - w_local`` as the singularity is approached.

    The remainder is the maximum over ``n_rays`` directions at each radius and
    the exponent is the least-squares slope of ``log R`` against ``log(1/r)``.
    A bounded remainder has exponent about zero; a negative slope is reported
    as zero.  The field is evaluated with ``dps`` significant digits because
    at ``r = 1e-5`` a source quadrupole velocity is about ``1e15 |mu|`` and its
    double-precision rounding can exceed the regular part being measured.
    """
    sol = as_solutions(solution)[0]
    kind = sol.spec.kind
    rem = []
    with mpmath.workdps(dps):
        for r in radii:
            worst = mpmath.mpf(0)
            for i in range(n_rays):
                theta = 2 * mpmath.pi * (i + mpmath.mpf(1) / 2) / n_rays
                d = mpmath.mpf(r) * mpmath.expj(theta)
                diff = velocity_mp(sol.parts, d) - _local_velocity_mp(kind, sol.spec.mu, d)
                worst = max(worst, abs(diff))
            rem.append(float(worst))
    rem = np.maximum(np.array(rem), ABS_FLOOR)
    slope = float(np.polyfit(np.log(1.0 / np.array(radii)), np.log(rem), 1)[0])
    return ValidationReport(f"local[{kind.value}]", max(slope, 0.0), len(radii) * n_rays,
                            tolerance, details={"remainders": rem.tolist(), "slope": slope})


def _grid(h, nx=10, ny=10, z0=None, min_distance=0.25):
    top = h if math.isfinite(h) else 2.0
    x = np.linspace(0.3, TWO_PI - 0.3, nx)
    y = np.linspace(0.1 * top, 0.9 * top, ny)
    X, Y = np.meshgrid(x, y)
    Z = (X + 1j * Y).ravel()
    if z0 is not None:
        d = Z - z0
        d = d - TWO_PI * np.round(d.real / TWO_PI)
        Z = Z[np.abs(d) > min_distance]
    return Z


def relative_deviation(a, b):
    scale = max(float(np.max(np.abs(b))), ABS_FLOOR)
    return float(np.max(np.abs(a - b))) / scale


def derivative_identity_check(base_kind, target_kind, mu=1.0, z0=None, geometry=2.0,
                              delta=None, tolerance=None) -> ValidationReport:
    """Compare a finite-difference parametric derivative with the closed form."""
    base_kind, target_kind = Kind.parse(base_kind), Kind.parse(target_kind)
    mode, _ = DERIVATIVE_PAIRS.get((base_kind, target_kind), (None, None))
    if mode is None:
        raise ConfigurationError(f"unsupported pair {base_kind.value}->{target_kind.value}")
    halfplane = geometry is None or getattr(geometry, "domain", None) == "halfplane"
    h = math.inf if halfplane else getattr(geometry, "canonical_h", geometry)
    if z0 is None:
        z0 = math.pi + 1j * (0.9 if halfplane else 0.45 * h)
    if tolerance is None:
        tolerance = 1e-6 if mode == "first" else 1e-5
    fld = parametric_derivative_build(base_kind, target_kind, mu, z0, geometry, delta)
    target = (build_halfplane_solution(target_kind, mu, z0) if halfplane
              else build_channel_solution(target_kind, mu, z0, geometry))
    Z = _grid(h)
    dev = relative_deviation(fld(Z), evaluate(target.parts, Z).velocity)
    return ValidationReport(f"derivative[{base_kind.value}->{target_kind.value}]", dev, len(Z), tolerance)


def cross_method_compare(channel_solution, oracle_system, grid=None, tolerance=1e-6) -> ValidationReport:
    """Max-abs velocity difference between the series and transform solutions."""
    from stokes_lattice.transform import oracle_eval

    h = channel_solution.h
    Z = _grid(h, 20, 10) if grid is None else np.asarray(grid, dtype=complex).ravel()
    w_series = evaluate(channel_solution.parts, Z).velocity
    u, v = oracle_eval(oracle_system, Z)
    diff = float(np.max(np.abs(w_series - (u - 1j * v)))) if len(Z) else 0.0
    return ValidationReport("cross_method", diff, len(Z), tolerance)


def _fd_fields(sols, z, step):
    """Fourth-order central-difference derivatives of u, v and p at points ``z``.

    Second-order stencils leave a truncation error of order ``step**2 / r**2``
    relative to the terms being balanced at distance ``r`` from a pole, which
    for the dipole kinds exceeds the momentum tolerance at ``r ~ 0.2``.
    """
    def vel(pts):
        w = complex_velocity(sols, pts, exclusion_radius=0.0)
        return np.stack([w.real, -w.imag])

    def pres(pts):
        return eval_pressure_vorticity(sols, pts, exclusion_radius=0.0)[0]

    def d1(f, e):
        return (8.0 * (f(z + e) - f(z - e)) - (f(z + 2 * e) - f(z - 2 * e))) / (12.0 * step)

    def d2(f, e, centre):
        return (16.0 * (f(z + e) + f(z - e)) - (f(z + 2 * e) + f(z - 2 * e)) - 30.0 * centre) \
            / (12.0 * step * step)

    ex, ey = step, 1j * step
    c = vel(z)
    (ux, vx), (uy, vy) = d1(vel, ex), d1(vel, ey)
    (uxx, vxx), (uyy, vyy) = d2(vel, ex, c), d2(vel, ey, c)
    return dict(ux=ux, uy=uy, vx=vx, vy=vy, uxx=uxx, uyy=uyy, vxx=vxx, vyy=vyy,
                px=d1(pres, ex), py=d1(pres, ey))


def _gradient_scale(d):
    return np.maximum(np.sqrt(d["ux"] ** 2 + d["uy"] ** 2 + d["vx"] ** 2 + d["vy"] ** 2), ABS_FLOOR)


def incompressibility_residual(solution, n_samples=100, seed=None, step=3e-4,
                               tolerance=1e-6) -> ValidationReport:
    """``|u_x + v_y|`` relative to the local velocity-gradient magnitude."""
    sols = as_solutions(solution)
    z = interior_points(sols, n_samples, seed)
    d = _fd_fields(sols, z, step)
    res = float(np.max(np.abs(d["ux"] + d["vy"]) / _gradient_scale(d)))
    return ValidationReport("incompressibility", res, n_samples, tolerance)


def momentum_residual(solution, n_samples=100, seed=None, step=2e-3,
                      tolerance=1e-4) -> ValidationReport:
    """Stokes momentum balance ``grad p = lap u`` (viscosity one).

    Each component is measured relative to the sum of the magnitudes of the
    terms it balances, ``|p_x| + |u_xx| + |u_yy|``.  Irrotational parts of the
    flow make ``lap u`` a cancellation of large second derivatives, so this
    is the scale at which the difference quotient can be judged.
    """
    sols = as_solutions(solution)
    z = interior_points(sols, n_samples, seed)
    d = _fd_fields(sols, z, step)
    rx = np.abs(d["px"] - d["uxx"] - d["uyy"]) / np.maximum(
        np.abs(d["px"]) + np.abs(d["uxx"]) + np.abs(d["uyy"]), ABS_FLOOR)
    ry = np.abs(d["py"] - d["vxx"] - d["vyy"]) / np.maximum(
        np.abs(d["py"]) + np.abs(d["vxx"]) + np.abs(d["vyy"]), ABS_FLOOR)
    return ValidationReport("momentum", float(np.max(np.maximum(rx, ry))), n_samples, tolerance)


def vorticity_residual(solution, n_samples=100, seed=None, step=3e-4,
                       tolerance=1e-6) -> ValidationReport:
    """``omega`` against the difference-quotient curl, relative to ``|grad u|``."""
    sols = as_solutions(solution)
    z = interior_points(sols, n_samples, seed)
    d = _fd_fields(sols, z, step)
    _, omega = eval_pressure_vorticity(sols, z)
    curl = d["vx"] - d["uy"]
    return ValidationReport("vorticity", float(np.max(np.abs(curl - omega) / _gradient_scale(d))),
                            n_samples, tolerance)


def validation_battery(solution, seed=None, include_local=True):
    """Run every single-solution check and return the reports."""
    sols = as_solutions(solution)
    reports = [noslip_residual(sols),
               periodicity_residual(sols, seed=seed),
               periodicity_residual(sols, seed=seed, quantity="pressure", tolerance=1e-13),
               incompressibility_residual(sols, seed=seed),
               momentum_residual(sols, seed=seed),
               vorticity_residual(sols, seed=seed)]
    if include_local:
        reports.extend(local_singularity_residual(s) for s in sols)
    return reports


def force_flux_check(solution, eta=1.0, radius=None, tolerance=1e-10) -> list:
    """Contour force and mass flux around one array member.

    The expected force is ``-8 pi eta mu`` for a Stokeslet and zero otherwise;
    the force residual is relative to ``max(1, |expected|)``.  The flux must
    vanish for every kind.
    """
    from stokes_lattice.flow import contour_diagnostics

    sol = as_solutions(solution)[0]
    z0 = sol.spec.z0
    h = sol.h
    if radius is None:
        room = z0.imag if not math.isfinite(h) else min(z0.imag, h - z0.imag)
        radius = 0.5 * min(room, math.pi)
    res = contour_diagnostics(sol, z0, radius, eta=eta)
    expected = -8.0 * math.pi * eta * sol.spec.mu if sol.spec.kind is Kind.STOKESLET else 0j
    f_err = abs(res.force - expected) / max(1.0, abs(expected))
    name = sol.spec.kind.value
    return [ValidationReport(f"force[{name}]", f_err, res.samples, tolerance,
                             details={"force": [res.force.real, res.force.imag],
                                      "expected": [expected.real, expected.imag]}),
            ValidationReport(f"mass_flux[{name}]", abs(res.mass_flux), res.samples, tolerance)]


def oracle_checks(system, n_k=20, seed=None, residual_factor=10.0) -> list:
    """Root residuals and global relations of a solved transform system.

    The global-relation residual is accepted at ``residual_factor`` times the
    larger of the system's least-squares residual and ``1e-14``.
    """
    from stokes_lattice.transform import global_relation_residual, papkovich_fadle_table

    reports = [ValidationReport("pf_root_residual", system.root_residual, len(system.roots), 1e-12)]
    if system.mu == 0:
        return reports
    s1 = papkovich_fadle_table(2).s
    radius = 0.5 * (abs(s1[0]) + abs(s1[1])) / system.h
    rng = _rng(seed)
    r = 0.7 * radius * np.sqrt(rng.uniform(0.0, 1.0, n_k))
    k = r * np.exp(1j * rng.uniform(0.0, TWO_PI, n_k))
    res, res_hat = global_relation_residual(system, k, radius)
    tol = residual_factor * max(system.residual, 1e-14)
    reports.append(ValidationReport("global_relations", float(max(res.max(), res_hat.max())), n_k, tol,
                                    details={"system_residual": system.residual}))
    return reports
