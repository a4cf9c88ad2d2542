"""Field evaluation, contour diagnostics, grid sampling and streamline tracing.

All functions take canonical coordinates (period ``2*pi``) and accept either one
solution or a sequence of solutions sharing a geometry; fields superpose.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from stokes_lattice.errors import ConfigurationError, DomainError, ProximityError
from stokes_lattice.goursat import evaluate, reduced_offset
from stokes_lattice.model import TWO_PI

logger = logging.getLogger(__name__)

EXCLUSION_RADIUS = 1e-8
CONTOUR_SAMPLES = 256
THREADS_ENV = "STOKES_LATTICE_THREADS"


def as_solutions(solutions):
    if hasattr(solutions, "parts"):
        return (solutions,)
    sols = tuple(solutions)
    if sols:
        h0 = sols[0].h
        for s in sols[1:]:
            if s.domain != sols[0].domain or not math.isclose(s.h, h0, rel_tol=1e-14, abs_tol=0.0) and math.isfinite(h0):
                raise ConfigurationError("superposed solutions must share one geometry")
    return sols


def domain_height(solutions) -> float:
    sols = as_solutions(solutions)
    return sols[0].h if sols else math.inf


def distance_to_images(solutions, z):
    """Distance from each point to the nearest singularity image."""
    z = np.asarray(z, dtype=complex)
    dist = np.full(z.shape, np.inf)
    for s in as_solutions(solutions):
        dist = np.minimum(dist, np.abs(reduced_offset(z, s.spec.z0)))
    return dist


def _check_points(solutions, z, exclusion_radius):
    z = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise DomainError("evaluation points must be finite")
    h = domain_height(solutions)
    slack = 1e-12 * max(1.0, h if math.isfinite(h) else 1.0)
    if np.any(z.imag < -slack) or (math.isfinite(h) and np.any(z.imag > h + slack)):
        raise DomainError("evaluation point outside the fluid domain")
    if exclusion_radius > 0 and np.any(distance_to_images(solutions, z) < exclusion_radius):
        raise ProximityError(
            f"evaluation point within {exclusion_radius:g} of a singularity image")
    return z


def _velocity(solutions, z):
    out = np.zeros(np.shape(z), dtype=complex)
    for s in as_solutions(solutions):
        out = out + evaluate(s.parts, z).velocity
    return out


def _four_f_prime(solutions, z):
    out = np.zeros(np.shape(z), dtype=complex)
    for s in as_solutions(solutions):
        out = out + 4.0 * evaluate(s.parts, z).W
    return out


def complex_velocity(solutions, z, exclusion_radius=EXCLUSION_RADIUS):
    """``u - i v`` at canonical points ``z`` (array or scalar)."""
    z = _check_points(solutions, z, exclusion_radius)
    return _velocity(solutions, z)


def eval_velocity(solutions, z, exclusion_radius=EXCLUSION_RADIUS):
    """Velocity components ``(u, v)`` at canonical points ``z``."""
    w = complex_velocity(solutions, z, exclusion_radius)
    return w.real, -w.imag


def eval_pressure_vorticity(solutions, z, exclusion_radius=EXCLUSION_RADIUS):
    """``(p/eta, omega)`` from ``4 f'(z) = p/eta - i omega``."""
    z = _check_points(solutions, z, exclusion_radius)
    q = _four_f_prime(solutions, z)
    return q.real, -q.imag


def eval_sample(solutions, z, exclusion_radius=EXCLUSION_RADIUS):
    """Full :class:`~stokes_lattice.model.FlowSample` data as arrays."""
    z = _check_points(solutions, z, exclusion_radius)
    w = np.zeros(np.shape(z), dtype=complex)
    q = np.zeros(np.shape(z), dtype=complex)
    for s in as_solutions(solutions):
        ev = evaluate(s.parts, z)
        w = w + ev.velocity
        q = q + 4.0 * ev.W
    return w.real, -w.imag, q.real, -q.imag


def _h_derivative(solutions, z, dz):
    """``dH`` along a path: ``f' dz + dz conj(f') + z conj(f'' dz) + conj(g'' dz)``."""
    total = np.zeros(np.shape(z), dtype=complex)
    for s in as_solutions(solutions):
        ev = evaluate(s.parts, z, need_second=True)
        zeta = np.exp(1j * z)
        fp = ev.W
        fpp = -ev.DDF
        # g' = logs(G) + G_rat - z f' ; d/dz = i D
        gpp = 1j * ev.Dlog_g + 1j * ev.DG_rat - fp - z * fpp
        del zeta
        total = total + fp * dz + dz * np.conj(fp) + z * np.conj(fpp * dz) + np.conj(gpp * dz)
    return total


@dataclass(frozen=True)
class ContourResult:
    force: complex
    mass_flux: float
    samples: int


def contour_diagnostics(solutions, center, radius, m_samples=CONTOUR_SAMPLES, eta=1.0):
    """Force on the fluid and net outflow through a circle.

    The force is the change of ``2 eta i H`` round the circle, with
    ``H = f + z conj(f') + conj(g')``; it is obtained by integrating the
    single-valued ``dH/dtheta`` with the trapezoidal rule.  The mass flux is
    ``Im`` of the contour integral of ``(u - i v) dz``.
    """
    if m_samples < 64:
        raise ConfigurationError("m_samples must be >= 64")
    if not radius > 0:
        raise ConfigurationError("radius must be positive")
    center = complex(center)
    h = domain_height(solutions)
    if center.imag - radius <= 0 or (math.isfinite(h) and center.imag + radius >= h):
        raise DomainError("contour touches a wall")
    theta = TWO_PI * np.arange(m_samples) / m_samples
    e = np.exp(1j * theta)
    z = center + radius * e
    dist = distance_to_images(solutions, z)
    if np.any(dist < 1e-3 * radius):
        raise DomainError("contour passes through a singularity")
    dz_dtheta = 1j * radius * e
    dH = _h_derivative(solutions, z, dz_dtheta)
    jump = np.sum(dH) * (TWO_PI / m_samples)
    force = 2.0 * eta * 1j * jump
    w = _velocity(solutions, z)
    flux = float(np.imag(np.sum(w * dz_dtheta) * (TWO_PI / m_samples)))
    return ContourResult(complex(force), flux, m_samples)


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, n)


@dataclass(frozen=True)
class GridSpec:
    x0: float
    x1: float
    nx: int
    y0: float
    y1: float
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigurationError("grid must have at least one node per axis")

    def nodes(self):
        x = np.linspace(self.x0, self.x1, self.nx)
        y = np.linspace(self.y0, self.y1, self.ny)
        X, Y = np.meshgrid(x, y)
        return X, Y


@dataclass(frozen=True)
class FieldTable:
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    p_over_eta: np.ndarray
    omega: np.ndarray
    masked: np.ndarray

    def rows(self):
        cols = (self.x, self.y, self.u, self.v, self.p_over_eta, self.omega)
        flat = [c.ravel() for c in cols]
        for i, m in enumerate(self.masked.ravel()):
            yield tuple(float(c[i]) for c in flat) + (bool(m),)


def sample_grid(solutions, grid: GridSpec, exclusion_radius=EXCLUSION_RADIUS, workers=None):
    """Sample all fields on a rectangular grid; masked nodes hold zeros."""
    sols = as_solutions(solutions)
    X, Y = grid.nodes()
    Z = X + 1j * Y
    h = domain_height(sols)
    slack = 1e-12 * max(1.0, h if math.isfinite(h) else 1.0)
    if np.any(Y < -slack) or (math.isfinite(h) and np.any(Y > h + slack)):
        raise DomainError("grid extends outside the fluid domain")
    Z = np.where(Y < 0, X + 0j, Z)
    if math.isfinite(h):
        Z = np.where(Y > h, X + 1j * h, Z)
    masked = distance_to_images(sols, Z) < exclusion_radius if sols else np.zeros(Z.shape, bool)
    out = np.zeros((4,) + Z.shape)
    flat_idx = np.flatnonzero(~masked)
    zf = Z.ravel()[flat_idx]

    def work(chunk):
        w = np.zeros(chunk.shape, complex)
        q = np.zeros(chunk.shape, complex)
        for s in sols:
            ev = evaluate(s.parts, zf[chunk])
            w += ev.velocity
            q += 4.0 * ev.W
        return chunk, w, q

    n_workers = workers or worker_count()
    chunks = np.array_split(np.arange(len(zf)), max(1, min(n_workers * 4, len(zf) // 256 + 1)))
    if n_workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]
    for chunk, w, q in results:
        idx = np.unravel_index(flat_idx[chunk], Z.shape)
        out[0][idx] = w.real
        out[1][idx] = -w.imag
        out[2][idx] = q.real
        out[3][idx] = -q.imag
    return FieldTable(X, Y, out[0], out[1], out[2], out[3], masked)


@dataclass(frozen=True)
class Streamline:
    points: np.ndarray      # complex, unwrapped x
    reason: str
    closure_gap: float


def trace_streamline(solutions, seed, step_h=1e-2, max_steps=20000,
                     exclusion_radius=EXCLUSION_RADIUS, direction=1.0,
                     wall_margin=1e-6, close_tol=None):
    """Trace a streamline through ``seed`` with classical RK4.

    The direction field ``(u, v)/|(u, v)|`` is integrated so that ``step_h`` is
    an arc-length step.  Tracing stops on approach to a wall, to a singularity
    image (within ``max(exclusion_radius, step_h)``), when the step budget is
    spent, at a stagnation point, or when the path closes on its seed modulo
    the period.  Returns an empty polyline when the seed itself has zero
    velocity.
    """
    sols = as_solutions(solutions)
    seed = complex(seed)
    h = domain_height(sols)
    if seed.imag < 0 or (math.isfinite(h) and seed.imag > h):
        raise DomainError("seed outside the fluid domain")
    close_tol = step_h if close_tol is None else close_tol
    near_sing = max(exclusion_radius, step_h)

    def field(z):
        if z.imag < 0 or (math.isfinite(h) and z.imag > h):
            return None
        w = complex(_velocity(sols, np.array([z]))[0])
        vel = w.conjugate()
        speed = abs(vel)
        if speed < 1e-14 or not math.isfinite(speed):
            return None
        return direction * vel / speed

    def wrapped_gap(z):
        d = z - seed
        d = d - TWO_PI * round(d.real / TWO_PI)
        return d

    if seed.imag < wall_margin or (math.isfinite(h) and seed.imag > h - wall_margin) \
            or field(seed) is None:
        return Streamline(np.zeros(0, complex), "stagnant", math.inf)

    pts = [seed]
    z = seed
    left_start = False
    reason = "max_steps"
    gap = math.inf
    for _ in range(max_steps):
        k1 = field(z)
        k2 = field(z + 0.5 * step_h * k1) if k1 is not None else None
        k3 = field(z + 0.5 * step_h * k2) if k2 is not None else None
        k4 = field(z + step_h * k3) if k3 is not None else None
        if k4 is None:
            reason = "stagnation_or_wall"
            break
        z_new = z + step_h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if z_new.imag < wall_margin or (math.isfinite(h) and z_new.imag > h - wall_margin):
            reason = "wall"
            break
        if float(distance_to_images(sols, np.array([z_new]))[0]) < near_sing:
            reason = "singularity"
            break
        if not left_start and abs(wrapped_gap(z_new)) > 4.0 * step_h:
            left_start = True
        if left_start:
            # distance from the seed to the segment z -> z_new, modulo the period
            a = wrapped_gap(z)
            b = wrapped_gap(z_new)
            seg = b - a
            t = 0.0 if seg == 0 else min(1.0, max(0.0, -(a.conjugate() * seg).real / abs(seg) ** 2))
            d = abs(a + t * seg)
            if d < close_tol:
                pts.append(z + t * (z_new - z))
                gap = d
                reason = "closed"
                break
        pts.append(z_new)
        z = z_new
    return Streamline(np.array(pts, dtype=complex), reason, gap)


def trace_streamlines(solutions, seeds, workers=None, **kwargs):
    """Trace several seeds, optionally in parallel threads."""
    seeds = list(seeds)
    n_workers = workers or worker_count()
    if n_workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            return list(pool.map(lambda s: trace_streamline(solutions, s, **kwargs), seeds))
    return [trace_streamline(solutions, s, **kwargs) for s in seeds]


def _sign_changes(a):
    return np.flatnonzero(np.signbit(a[1:]) != np.signbit(a[:-1]))


@dataclass(frozen=True)
class StagnationCensus:
    """Stagnation points of a channel flow within one period.

    Attributes
    ----------
    x_line : float
        Abscissa of the vertical line scanned for sign changes of ``v``.
    line_points : ndarray
        Stagnation points on that line (complex).  On a mirror-symmetry line
        ``u`` vanishes identically, so every zero of ``v`` is a stagnation point;
        ``line_u_max`` reports how well that premise holds.
    line_u_max : float
    midline_u_changes : int
        Sign changes of ``u`` along the horizontal midline ``y = h/2``.
    points : ndarray
        All interior stagnation points found in the period cell.
    centres, saddles : int
        Classification of ``points`` by the sign of the velocity-gradient
        determinant (positive: centre).
    """

    x_line: float
    line_points: np.ndarray
    line_u_max: float
    midline_u_changes: int
    points: np.ndarray
    centres: int
    saddles: int

    @property
    def line_count(self) -> int:
        return int(self.line_points.size)

    def as_dict(self) -> dict:
        return {
            "x_line": self.x_line,
            "line_count": self.line_count,
            "line_points": [[p.real, p.imag] for p in self.line_points],
            "line_u_max": self.line_u_max,
            "midline_u_changes": self.midline_u_changes,
            "centres": self.centres,
            "saddles": self.saddles,
            "points": [[p.real, p.imag] for p in self.points],
        }


def stagnation_census(solutions, x_line=None, n_line=4001, nx=300, ny=120, margin=0.01,
                      exclusion=1e-2):
    """Locate and classify stagnation points of a channel flow.

    Parameters
    ----------
    solutions
        One solution or a sequence sharing a channel geometry.
    x_line
        Vertical scan line; defaults to the midline between neighbouring
        images of the first singularity.
    n_line
        Samples along the vertical line and the horizontal midline.
    nx, ny
        Cells of the two-dimensional search grid.
    margin
        Fraction of the height kept clear of each wall.
    exclusion
        Candidates closer than this to a singularity image are discarded.
    """
    from scipy.optimize import brentq, fsolve

    sols = as_solutions(solutions)
    h = domain_height(sols)
    if not sols or not math.isfinite(h):
        raise ConfigurationError("stagnation census needs at least one channel solution")
    if x_line is None:
        x_line = float(np.mod(sols[0].spec.z0.real - math.pi, TWO_PI))

    def vel(z):
        w = _velocity(sols, np.atleast_1d(np.asarray(z, dtype=complex)))
        return w.real, -w.imag

    y = np.linspace(margin * h * 0.2, h * (1 - margin * 0.2), n_line)
    u_line, v_line = vel(x_line + 1j * y)
    line = []
    for i in _sign_changes(v_line):
        yr = brentq(lambda t: vel(x_line + 1j * t)[1][0], y[i], y[i + 1], xtol=1e-14)
        line.append(complex(x_line, yr))

    xm = np.linspace(0.0, TWO_PI, n_line)[1:-1]
    u_mid, _ = vel(xm + 0.5j * h)
    mid_changes = int(_sign_changes(u_mid).size)

    X, Y = np.meshgrid(np.linspace(0, TWO_PI, nx, endpoint=False), np.linspace(margin * h, (1 - margin) * h, ny))
    U, V = vel((X + 1j * Y).ravel())
    U, V = U.reshape(X.shape), V.reshape(X.shape)
    found = []

    def fun(p):
        a, b = vel(p[0] + 1j * p[1])
        return [a[0], b[0]]

    Ur, Vr = np.roll(U, -1, axis=1), np.roll(V, -1, axis=1)
    cu = np.stack([U[:-1], U[1:], Ur[:-1], Ur[1:]])
    cv = np.stack([V[:-1], V[1:], Vr[:-1], Vr[1:]])
    cand = (cu.min(0) <= 0) & (cu.max(0) >= 0) & (cv.min(0) <= 0) & (cv.max(0) >= 0)
    for i, j in zip(*np.nonzero(cand)):
        sol, _, ier, _ = fsolve(fun, [X[i, j], Y[i, j]], full_output=True, xtol=1e-13)
        if ier != 1 or not 0 < sol[1] < h:
            continue
        p = complex(sol[0] % TWO_PI, sol[1])
        if float(distance_to_images(sols, np.array([p]))[0]) < exclusion:
            continue
        if all(abs(complex((p - q).real - TWO_PI * round((p - q).real / TWO_PI), (p - q).imag)) > 1e-6
               for q in found):
            found.append(p)
    centres = saddles = 0
    e = 1e-6
    for p in found:
        cols = []
        for dz in (e, 1j * e):
            a1, b1 = vel(p + dz)
            a0, b0 = vel(p - dz)
            cols.append([(a1[0] - a0[0]) / (2 * e), (b1[0] - b0[0]) / (2 * e)])
        if np.linalg.det(np.array(cols).T) > 0:
            centres += 1
        else:
            saddles += 1
    return StagnationCensus(float(x_line), np.array(line, dtype=complex), float(np.max(np.abs(u_line))),
                            mid_changes, np.array(sorted(found, key=lambda c: (c.real, c.imag)), dtype=complex),
                            centres, saddles)
