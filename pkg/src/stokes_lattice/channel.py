"""Periodic singularity arrays between two no-slip walls.

The correction functions ``F_hat`` and ``G_hat`` are two-sided Laurent series in
the annulus ``rho < |zeta| < 1``.  Matching powers of ``zeta`` in the two
no-slip conditions gives, for each ``n >= 1``, a 4x4 real-linear system whose
explicit solution is implemented in :func:`solve_coefficient_system`.  The
right-hand sides ``d_n`` (outer wall) and ``e_n`` (inner wall) are known in
closed form for every singularity kind.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from stokes_lattice.errors import AccuracyNotMetError, ConfigurationError
from stokes_lattice.goursat import GoursatParts, evaluate, goursat_values
from stokes_lattice.model import (
    TWO_PI,
    ChannelGeometry,
    Kind,
    Singularity,
    SingularitySpec,
)

logger = logging.getLogger(__name__)

N_MIN = 8
N_MAX = 4096
WALL_SAMPLES = 256


@dataclass(frozen=True)
class ForcingCoefficients:
    """Laurent coefficients of the wall data, ``n = 1..N``.

    ``d_plus[n-1]`` is ``d_n`` and ``d_minus[n-1]`` is ``d_{-n}``; likewise for
    ``e``.  ``d0`` and ``e0`` are the constant terms.
    """

    d_plus: np.ndarray
    d_minus: np.ndarray
    e_plus: np.ndarray
    e_minus: np.ndarray
    d0: complex
    e0: complex

    @property
    def N(self) -> int:
        return len(self.d_plus)


def _powers(N, log_base):
    n = np.arange(1, N + 1, dtype=float)
    return n, np.exp(n * log_base)


def forcing_coefficients(kind, mu, zeta0, rho, N) -> ForcingCoefficients:
    """Closed-form wall data for a singularity of ``kind`` at ``zeta0``.

    Powers are built from logarithms (``zeta0**n = exp(n log zeta0)``) so the
    inner-wall terms ``(rho/zeta0)**n`` never pass through ``rho**-n``.
    """
    kind = Kind.parse(kind)
    mu = complex(mu)
    zeta0 = complex(zeta0)
    if not 0.0 < rho < 1.0:
        raise ConfigurationError(f"rho must lie in (0, 1), got {rho}")
    if N < 1:
        raise ConfigurationError("N must be >= 1")
    h = -math.log(rho)
    y0 = -math.log(abs(zeta0))
    x0 = math.atan2(zeta0.imag, zeta0.real)
    mub = mu.conjugate()
    n, z0n = _powers(N, complex(-y0, x0))          # zeta0**n
    z0bn = np.conj(z0n)                             # conj(zeta0)**n
    _, rz = _powers(N, complex(-(h - y0), -x0))     # (rho/zeta0)**n
    rzb = np.conj(rz)                               # (rho/conj(zeta0))**n
    log_z0sq = -2.0 * y0
    log_rho_sq = -2.0 * h
    zeros = np.zeros(N, dtype=complex)

    if kind is Kind.STOKESLET:
        d_plus = -mub * z0bn / n
        d_minus = -z0n * (mub / n + mu * log_z0sq)
        e_plus = rz * (mu * (log_z0sq - log_rho_sq) - mub / n)
        e_minus = -mub * rzb / n
        d0, e0 = 0j, complex(2.0 * mu.real * log_z0sq)
    elif kind is Kind.STRESSLET:
        d_plus = -1j * mub * z0bn
        d_minus = 1j * mu * z0n * (1.0 - 2.0 * n * y0)
        e_plus = -1j * mu * rz * (1.0 + n * (2.0 * y0 + log_rho_sq))
        e_minus = 1j * mub * rzb
        d0, e0 = 0j, complex(2.0 * mu.imag)
    elif kind is Kind.FORCE_QUADRUPOLE:
        d_plus = -n * mub * z0bn
        d_minus = 2.0 * n * mu * z0n * (n * y0 - 1.0)
        e_plus = -n * mu * rz * (2.0 + n * (2.0 * y0 + log_rho_sq))
        e_minus = -n * mub * rzb
        d0, e0 = 0j, 0j
    elif kind is Kind.SOURCE_DIPOLE:
        d_plus = zeros
        d_minus = -n * mu * z0n
        e_plus = -n * mu * rz
        e_minus = zeros.copy()
        d0, e0 = 0j, 0j
    elif kind is Kind.SOURCE_QUADRUPOLE:
        d_plus = zeros
        d_minus = -1j * n * n * mu * z0n
        e_plus = 1j * n * n * mu * rz
        e_minus = zeros.copy()
        d0, e0 = 0j, 0j
    else:  # pragma: no cover - Kind.parse already rejects anything else
        raise ConfigurationError(f"unsupported kind {kind}")
    return ForcingCoefficients(np.asarray(d_plus, complex), np.asarray(d_minus, complex),
                               np.asarray(e_plus, complex), np.asarray(e_minus, complex),
                               complex(d0), complex(e0))


def singular_constants(kind, mu, z0, zeta0) -> dict:
    """Pole coefficients fixing the local form of each kind at ``zeta0``."""
    kind = Kind.parse(kind)
    mu = complex(mu)
    zeta0 = complex(zeta0)
    y0 = complex(z0).imag
    if kind is Kind.STOKESLET:
        return {"lambda": mu * zeta0 * (-2.0 * y0)}
    if kind is Kind.STRESSLET:
        return {"chi": 1j * mu * zeta0 * (2.0 * y0 - 1.0),
                "nu": 2j * mu * zeta0 ** 2 * y0}
    if kind is Kind.FORCE_QUADRUPOLE:
        return {"beta": -mu * zeta0, "gamma": -mu * zeta0 ** 2,
                "delta": 2.0 * mu * zeta0 * (1.0 - y0),
                "epsilon": 2.0 * mu * zeta0 ** 2 * (1.0 - 3.0 * y0),
                "kappa": -4.0 * mu * zeta0 ** 3 * y0}
    if kind is Kind.SOURCE_DIPOLE:
        return {"g_poles": (mu * zeta0, mu * zeta0 ** 2)}
    return {"g_poles": (1j * mu * zeta0, 3j * mu * zeta0 ** 2, 2j * mu * zeta0 ** 3)}


def pole_coefficients(kind, mu, y0):
    """Normalised pole coefficients ``(f, g)`` in powers of ``zeta0/(zeta - zeta0)``.

    These are the pole constants of the local forms divided by the matching
    power of ``zeta0``; they are shared by the channel and half-plane arrays.
    """
    kind = Kind.parse(kind)
    mu = complex(mu)
    if kind is Kind.STOKESLET:
        return (), (-2.0 * mu * y0,)
    if kind is Kind.STRESSLET:
        return (1j * mu,), (1j * mu * (2.0 * y0 - 1.0), 2j * mu * y0)
    if kind is Kind.FORCE_QUADRUPOLE:
        return (-mu, -mu), (2.0 * mu * (1.0 - y0), 2.0 * mu * (1.0 - 3.0 * y0), -4.0 * mu * y0)
    if kind is Kind.SOURCE_DIPOLE:
        return (), (mu, mu)
    return (), (1j * mu, 3j * mu, 2j * mu)


def singular_parts(kind, mu, z0, a=0.0) -> GoursatParts:
    """Goursat record holding only the log/pole terms (no series, no ``G0``)."""
    kind = Kind.parse(kind)
    mu = complex(mu)
    fp, gp = pole_coefficients(kind, mu, complex(z0).imag)
    log_pole = mu if kind is Kind.STOKESLET else 0j
    return GoursatParts(z0=z0, log_z=a, log_pole=log_pole, f_poles=fp, g_poles=gp)


def denominators(rho, N):
    """``(1 - rho^2n)^2 - n^2 rho^2n (log rho^2)^2`` without cancellation.

    Factored as ``(1 - rho^2n - 2nh rho^n)(1 - rho^2n + 2nh rho^n)`` with
    ``h = -log(rho)``; the first factor equals ``2 exp(-x)(sinh x - x)`` for
    ``x = n h`` and is summed as a series when ``x`` is small.
    """
    h = -math.log(rho)
    n = np.arange(1, N + 1, dtype=float)
    x = n * h
    rn = np.exp(-x)
    one_minus_r2n = -np.expm1(-2.0 * x)
    small = x < 1.0
    shx = np.empty_like(x)
    xs = x[small]
    # sinh(x) - x = sum_{j>=1} x^(2j+1)/(2j+1)!
    term = xs ** 3 / 6.0
    acc = np.zeros_like(xs)
    for j in range(1, 12):
        acc = acc + term
        term = term * xs * xs / ((2 * j + 2) * (2 * j + 3))
    shx[small] = acc
    first = np.empty_like(x)
    first[small] = 2.0 * rn[small] * shx[small]
    first[~small] = one_minus_r2n[~small] - 2.0 * x[~small] * rn[~small]
    second = one_minus_r2n + 2.0 * x * rn
    return first * second


@dataclass(frozen=True)
class CoefficientSet:
    a: float
    G0: complex
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    K: np.ndarray
    denominators: np.ndarray


def solve_coefficient_system(fc: ForcingCoefficients, rho, N=None) -> CoefficientSet:
    """Explicit solution of the per-mode 4x4 systems.

    ``H_n`` and ``K_n`` are formed from rearrangements that avoid dividing by
    ``rho**n``: ``H_n = conj(-n rho^n L F_n - e_n + rho^n d_n)/(1 - rho^2n)`` and
    ``K_n = e_{-n} + rho^n conj(F_n) - n L H_n`` with ``L = log(rho^2)``.
    """
    if not 0.0 < rho < 1.0:
        raise ConfigurationError(f"rho must lie in (0, 1), got {rho}")
    N = fc.N if N is None else N
    if N != fc.N:
        raise ConfigurationError("forcing coefficients were built for a different N")
    h = -math.log(rho)
    L = -2.0 * h
    n = np.arange(1, N + 1, dtype=float)
    rn = np.exp(-n * h)
    one_m = -np.expm1(-2.0 * n * h)
    den = denominators(rho, N)
    if not np.all(den > 0):
        raise ArithmeticError("non-positive coefficient denominator")
    dp, dm, ep, em = fc.d_plus, fc.d_minus, fc.e_plus, fc.e_minus

    a_complex = (fc.d0 - fc.e0) / (4.0 * math.log(rho))
    a = float(a_complex.real)
    G0 = complex(fc.d0)

    F = (n * rn * L * ep + rn * one_m * np.conj(em)
         - n * rn * rn * L * dp - one_m * np.conj(dm)) / den
    G = (-n * rn * rn * L * F - rn * ep + dp) / one_m
    H = np.conj(-n * rn * L * F - ep + rn * dp) / one_m
    K = em + rn * np.conj(F) - n * L * H
    return CoefficientSet(a, G0, F, G, H, K, den)


def system_residuals(fc: ForcingCoefficients, coeffs: CoefficientSet, rho):
    """Relative residual of each of the four mode equations, shape ``(4, N)``."""
    N = fc.N
    h = -math.log(rho)
    L = -2.0 * h
    n = np.arange(1, N + 1, dtype=float)
    rn = np.exp(-n * h)
    F, G, H, K = coeffs.F, coeffs.G, coeffs.H, coeffs.K
    rows = [
        (-rn * np.conj(H), G, -fc.d_plus),
        (-np.conj(F), rn * K, -fc.d_minus),
        (-np.conj(H), rn * G, -n * rn * L * F, -fc.e_plus),
        (-rn * np.conj(F), K, n * L * H, -fc.e_minus),
    ]
    out = np.empty((4, N))
    for i, terms in enumerate(rows):
        total = sum(terms)
        scale = np.maximum.reduce([np.abs(t) for t in terms])
        out[i] = np.abs(total) / np.where(scale > 0, scale, 1.0)
    return out


def choose_truncation(rho, zeta0_abs, tol, scale=1.0) -> int:
    """Smallest ``N`` with ``scale * N**2 * q**N <= tol``, clamped to ``[8, 4096]``.

    ``q = max(|zeta0|, rho/|zeta0|)`` is the slower of the two geometric decay
    rates of the wall data; ``N**2`` covers the polynomial prefactor of the
    highest-order kinds.
    """
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    if not 0.0 < rho < zeta0_abs < 1.0:
        raise ConfigurationError("need 0 < rho < |zeta0| < 1")
    q = max(zeta0_abs, rho / zeta0_abs)
    scale = max(float(scale), 1e-300)
    log_q = math.log(q)
    target = math.log(tol / scale)
    N = N_MIN
    while N < N_MAX and math.log(N) * 2.0 + N * log_q > target:
        N = min(N_MAX, int(N * 1.25) + 1)
    # refine downward to the smallest admissible N
    lo = max(N_MIN, int(N / 1.25) - 1)
    for cand in range(lo, N + 1):
        if math.log(cand) * 2.0 + cand * log_q <= target:
            return max(N_MIN, cand)
    return N


@dataclass(frozen=True)
class ChannelSolution:
    """Immutable channel solution for one singularity array."""

    geometry: ChannelGeometry
    spec: SingularitySpec
    a: float
    G0: complex
    singular_constants: dict
    forcing: ForcingCoefficients
    coefficients: CoefficientSet
    parts: GoursatParts
    N: int
    built_tolerance: float
    domain: str = field(default="channel", init=False)

    @property
    def F_coeffs(self):
        return self.parts.F

    @property
    def G_coeffs(self):
        return self.parts.G

    @property
    def H_coeffs(self):
        return self.parts.H

    @property
    def K_coeffs(self):
        return self.parts.K

    @property
    def h(self) -> float:
        return self.geometry.canonical_h


def _assemble(kind, mu, spec, geometry, N):
    rho = geometry.rho
    fc = forcing_coefficients(kind, mu, spec.zeta0, rho, N)
    co = solve_coefficient_system(fc, rho, N)
    base = singular_parts(kind, mu, spec.z0, a=co.a)
    parts = base.replace(rho=rho, g_const=co.G0, F=co.F, G=co.G, H=co.H, K=co.K)
    return fc, co, parts


def wall_points(h, samples, offset=0.0):
    x = offset + TWO_PI * np.arange(samples) / samples
    bottom = x + 0j
    top = x + 1j * h
    return bottom, top


def wall_residual(parts: GoursatParts, h, samples=WALL_SAMPLES) -> float:
    bottom, top = wall_points(h, samples)
    pts = np.concatenate([bottom, top]) if math.isfinite(h) else bottom
    return float(np.max(np.abs(evaluate(parts, pts).velocity)))


def wall_rounding_floor(parts: GoursatParts, h, samples=WALL_SAMPLES) -> float:
    """Double-precision floor of :func:`wall_residual`.

    On the walls ``-conj(f) + z conj(f') + conj(g')`` cancels to zero, so the
    residual cannot drop below rounding of its largest piece.  A singularity
    close to a wall makes those pieces large.
    """
    bottom, top = wall_points(h, samples)
    pts = np.concatenate([bottom, top])
    f, df, g1 = goursat_values(parts, pts)
    size = np.abs(f) + np.abs(pts) * np.abs(df) + np.abs(g1)
    return float(np.finfo(float).eps * np.max(size))


def build_channel_solution(kind, mu, z0, geometry, tol=1e-12, N=None) -> ChannelSolution:
    """Build the channel solution for a singularity array in canonical data.

    Parameters
    ----------
    kind : Kind or str
    mu : complex
        Canonical strength.
    z0 : complex
        Canonical position, ``0 < Im z0 < h``.
    geometry : ChannelGeometry or float
        Geometry, or the canonical height ``h`` directly.
    tol : float
        Target wall residual; the measured residual must not exceed ``10*tol``.
    N : int, optional
        Fixed truncation order.  When given, no residual-driven refinement is
        attempted and no accuracy error is raised.
    """
    if not isinstance(geometry, ChannelGeometry):
        geometry = ChannelGeometry.canonical(float(geometry))
    kind = Kind.parse(kind)
    spec = SingularitySpec(Singularity(kind, mu), z0)
    spec.check_inside(geometry)
    h = geometry.canonical_h
    mu = spec.mu

    if N is not None:
        fc, co, parts = _assemble(kind, mu, spec, geometry, int(N))
        res = wall_residual(parts, h)
        return ChannelSolution(geometry, spec, co.a, co.G0,
                               singular_constants(kind, mu, spec.z0, spec.zeta0),
                               fc, co, parts, int(N), res)

    if mu == 0:
        N = N_MIN
    else:
        probe = forcing_coefficients(kind, mu, spec.zeta0, geometry.rho, 1)
        scale = max(abs(probe.d_plus[0]), abs(probe.d_minus[0]),
                    abs(probe.e_plus[0]), abs(probe.e_minus[0]), abs(mu))
        N = choose_truncation(geometry.rho, abs(spec.zeta0), tol, scale)
    floor = None
    while True:
        fc, co, parts = _assemble(kind, mu, spec, geometry, N)
        res = wall_residual(parts, h)
        if res <= 10.0 * tol or N >= N_MAX:
            break
        floor = wall_rounding_floor(parts, h)
        if res <= 8.0 * floor:
            # more terms cannot help below rounding
            break
        logger.debug("wall residual %.3e at N=%d above target; doubling", res, N)
        N = min(N_MAX, 2 * N)
    if res > 10.0 * tol:
        at_floor = floor is not None and res <= 8.0 * floor
        why = f" (rounding floor {floor:.1e})" if at_floor else ""
        raise AccuracyNotMetError(
            f"wall residual {res:.3e} exceeds 10*tol={10 * tol:.1e} at N={N}{why}", res,
            floor if at_floor else None)
    return ChannelSolution(geometry, spec, co.a, co.G0,
                           singular_constants(kind, mu, spec.z0, spec.zeta0),
                           fc, co, parts, N, res)


DERIVATIVE_PAIRS = {
    (Kind.STOKESLET, Kind.SOURCE_DIPOLE): ("mixed", 1.0),
    (Kind.STRESSLET, Kind.FORCE_QUADRUPOLE): ("first", 1.0),
    (Kind.STRESSLET, Kind.SOURCE_QUADRUPOLE): ("mixed", -1.0),
}
DEFAULT_STEPS = {"first": 1e-4, "mixed": 1e-3}


def _builder(geometry, tol):
    """Return ``build(kind, mu, z0, N)`` for a channel or half-plane geometry."""
    if geometry is None or getattr(geometry, "domain", None) == "halfplane":
        from stokes_lattice.halfplane import build_halfplane_solution

        return lambda kind, mu, z0, N=None: build_halfplane_solution(kind, mu, z0)
    if not isinstance(geometry, ChannelGeometry):
        geometry = ChannelGeometry.canonical(float(geometry))
    return lambda kind, mu, z0, N=None: build_channel_solution(kind, mu, z0, geometry, tol, N)


def _d1(plus1, minus1, plus2, minus2, step):
    """Fourth-order central first difference."""
    return (8.0 * (plus1 - minus1) - (plus2 - minus2)) / (12.0 * step)


def _d2(plus1, minus1, plus2, minus2, centre, step):
    """Fourth-order central second difference."""
    return (16.0 * (plus1 + minus1) - (plus2 + minus2) - 30.0 * centre) / (12.0 * step * step)


def parametric_derivative_build(base_kind, target_kind, mu, z0, geometry, delta=None, tol=1e-12):
    """Field evaluator for a parametric derivative of a base solution.

    Derivatives with respect to the singularity position are formed by
    fourth-order central differences in ``(x0, y0)``, with
    ``d/dz0 = (d/dx0 - i d/dy0)/2`` and
    ``d2/dz0 dconj(z0) = (d2/dx0^2 + d2/dy0^2)/4``.  Every stencil member uses
    the truncation order of the centre build.

    The velocity is real-linear in the strength, ``w = A mu + B conj(mu)``.
    Differentiating ``f`` and ``g'`` in ``z0`` acts as ``d/dz0`` on ``A`` and,
    through the conjugate in ``-conj(f)``, as ``d/dconj(z0)`` on ``B``.  The
    first-derivative field is therefore ``mu dA/dz0 + conj(mu) dB/dconj(z0)``,
    which equals ``(d/dx0 w_mu + d/dy0 w_{-i mu})/2`` and is itself a no-slip
    flow.  The mixed derivative is real and acts on ``w`` directly.

    Returns
    -------
    callable
        ``field(z) -> u - i v`` at canonical points.
    """
    base_kind = Kind.parse(base_kind)
    target_kind = Kind.parse(target_kind)
    try:
        mode, sign = DERIVATIVE_PAIRS[(base_kind, target_kind)]
    except KeyError:
        raise ConfigurationError(
            f"no parametric derivative maps {base_kind.value} to {target_kind.value}") from None
    delta = DEFAULT_STEPS[mode] if delta is None else float(delta)
    z0 = complex(z0)
    mu = complex(mu)
    build = _builder(geometry, tol)
    centre = build(base_kind, mu if mu != 0 else 1.0, z0)
    h = centre.h
    if not delta > 0 or z0.imag - 2 * delta <= 0 or (math.isfinite(h) and z0.imag + 2 * delta >= h):
        raise ConfigurationError("finite-difference stencil leaves the fluid domain")
    N = centre.N or None
    steps = (delta, -delta, 2 * delta, -2 * delta)

    if mode == "first":
        # w_mu at x-offsets and w_{-i mu} at y-offsets
        xs = [build(base_kind, mu, z0 + s, N).parts for s in steps]
        ys = [build(base_kind, -1j * mu, z0 + 1j * s, N).parts for s in steps]

        def field(z):
            z = np.asarray(z, dtype=complex)
            wx = [evaluate(p, z).velocity for p in xs]
            wy = [evaluate(p, z).velocity for p in ys]
            return sign * 0.5 * (_d1(*wx, delta) + _d1(*wy, delta))

        return field

    c_parts = build(base_kind, mu, z0, N).parts
    xs = [build(base_kind, mu, z0 + s, N).parts for s in steps]
    ys = [build(base_kind, mu, z0 + 1j * s, N).parts for s in steps]

    def field(z):
        z = np.asarray(z, dtype=complex)
        wc = evaluate(c_parts, z).velocity
        wx = [evaluate(p, z).velocity for p in xs]
        wy = [evaluate(p, z).velocity for p in ys]
        return sign * 0.25 * (_d2(*wx, wc, delta) + _d2(*wy, wc, delta))

    return field


@dataclass(frozen=True)
class CoefficientTerms:
    """Magnitudes of the Laurent terms of ``F`` and ``G`` at a probe point."""

    n: np.ndarray
    fh: np.ndarray      # |F_n zeta**n + H_n (rho/zeta)**n|
    gk: np.ndarray      # |G_n zeta**n + K_n (rho/zeta)**n|

    def slope(self, which="fh", n_min=10):
        """Least-squares slope of ``log`` of a column against ``n`` for ``n >= n_min``."""
        col = getattr(self, which)
        sel = (self.n >= n_min) & (col > 0)
        if np.count_nonzero(sel) < 2:
            return float("nan")
        return float(np.polyfit(self.n[sel], np.log(col[sel]), 1)[0])


def coefficient_terms(solution: ChannelSolution, zeta, n_max=None) -> CoefficientTerms:
    """Per-order terms of the two Laurent series at ``zeta`` (``rho < |zeta| <= 1``).

    Orders beyond the stored truncation are zero; rebuild with a fixed ``N``
    to see them.
    """
    zeta = complex(zeta)
    rho = solution.geometry.rho
    if not rho <= abs(zeta) <= 1.0 or zeta == 0:
        raise ConfigurationError("probe zeta must lie in the closed annulus rho <= |zeta| <= 1")
    p = solution.parts
    N = p.n_terms if n_max is None else int(n_max)
    if N < 1:
        raise ConfigurationError("n_max must be >= 1")
    n = np.arange(1, N + 1)

    def padded(c):
        out = np.zeros(N, complex)
        m = min(N, len(c))
        out[:m] = np.asarray(c)[:m]
        return out

    zn = np.exp(n * np.log(zeta))
    wn = np.exp(n * np.log(rho / zeta))
    fh = np.abs(padded(p.F) * zn + padded(p.H) * wn)
    gk = np.abs(padded(p.G) * zn + padded(p.K) * wn)
    return CoefficientTerms(n, fh, gk)
