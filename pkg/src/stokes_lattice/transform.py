"""Independent channel solver built on the unified transform method.

The Goursat pair is split as ``f = f_s + f_R`` and ``g' = g'_s + g'_R``.  The
singular part is the free-space local form with its logarithmic branch cut
running straight down from ``z0`` to the lower wall, so that it is smooth on
both vertical sides of the period rectangle ``[0, 2*pi] x [0, h]``.  The
corrections are analytic in the rectangle; they are represented by Chebyshev
series on the left side ``z = i y`` together with the period increment ``d`` of
``f``.  Boundary conditions on the walls, periodicity between the vertical
sides and the global relations of the spectral functions combine into a single
expression for the bottom-side transform ``rho_1(k)``.  Its denominator
``4 (sinh(kh)**2 - (kh)**2)`` vanishes on the Papkovich-Fadle set, and
requiring the numerator to vanish there (and to fourth order at ``k = 0``)
yields an overdetermined real-linear system for the unknowns.

Field values come from a periodic Cauchy formula in which the bottom and top
sides contribute through ``rho_1(n)`` and ``rho_3(-n)`` at integer ``n`` and
the vertical sides only through the known period jumps.  See
``docs/transform_derivation.md`` for the algebra.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy import linalg
from scipy.integrate import quad_vec

from stokes_lattice.errors import ConfigurationError, ConvergenceError, DomainError
from stokes_lattice.model import TWO_PI, ChannelGeometry, Kind

log = logging.getLogger(__name__)

L = TWO_PI
ORACLE_KINDS = (Kind.STOKESLET, Kind.STRESSLET)
QUAD_EPSABS = 1e-14
QUAD_EPSREL = 1e-12
QUAD_TOL = 1e-13          # panel-doubling agreement for Gauss-Legendre rules
CONDITION_WARN = 1e12

# Cauchy-circle parameters for k-derivatives of the bottom/top transforms.
_CIRCLE_RADIUS = 0.25
_CIRCLE_POINTS = 16
# Largest exponent n*h admitted in the reconstruction sums.
_MAX_NH = 600.0


# --------------------------------------------------------------------------
# Papkovich-Fadle roots
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RootTable:
    """First-quadrant roots ``s`` of ``sinh(s)**2 = s**2`` sorted by modulus.

    ``exact`` holds the refined roots as extended-precision numbers and
    ``residual`` is ``|sinh(s)**2 - s**2|`` at those values.  ``s`` is their
    double rounding, whose residual ``rounded_residual`` is reported relative
    to ``|s|**2`` (the absolute value grows like ``|s|**2`` times the rounding
    error).  ``sign`` is +1 for ``sinh s = s`` and -1 for ``sinh s = -s``.
    """

    s: np.ndarray
    residual: np.ndarray
    sign: np.ndarray
    exact: tuple = ()
    rounded_residual: np.ndarray = None


def _refine_root(guess, sign, dps):
    with mpmath.workdps(dps):
        fn = lambda s: mpmath.sinh(s) - sign * s
        try:
            root = mpmath.findroot(fn, mpmath.mpc(guess), tol=mpmath.mpf(10) ** (-dps + 5))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConvergenceError(f"Newton failed from guess {guess}: {exc}") from exc
        res = abs(mpmath.sinh(root) ** 2 - root ** 2)
        sd = mpmath.mpc(complex(root))
        rel = abs(mpmath.sinh(sd) ** 2 - sd ** 2) / abs(sd) ** 2
        return root, float(res), float(rel)


@functools.lru_cache(maxsize=32)
def papkovich_fadle_table(count, dps=40) -> RootTable:
    """Refine the first ``count`` first-quadrant roots of ``sinh(s)**2 = s**2``."""
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    found = []
    n = 1
    while len(found) < count + 2:
        # asymptotic guesses: sinh s = s near ln((4n+1)pi) + i(2n+1/2)pi,
        # sinh s = -s near ln((4n-1)pi) + i(2n-1/2)pi
        for sign, guess in ((1, complex(math.log((4 * n + 1) * math.pi), (2 * n + 0.5) * math.pi)),
                            (-1, complex(math.log((4 * n - 1) * math.pi), (2 * n - 0.5) * math.pi))):
            exact, res, rel = _refine_root(guess, sign, dps)
            root = complex(exact)
            if root.real <= 0 or root.imag <= 0 or abs(root - guess) > 1.5:
                raise ConvergenceError(f"root from guess {guess} converged to {root}")
            found.append((abs(root), root, res, sign, exact, rel))
        n += 1
    found.sort(key=lambda f: f[0])
    found = found[:count]
    return RootTable(np.array([f[1] for f in found]), np.array([f[2] for f in found]),
                     np.array([f[3] for f in found]), tuple(f[4] for f in found),
                     np.array([f[5] for f in found]))


def quadruple(s):
    """Expand first-quadrant values into ``[s, -s, conj(s), -conj(s)]`` groups."""
    s = np.asarray(s, dtype=complex)
    return np.stack([s, -s, s.conj(), -s.conj()], axis=1).ravel()


def pf_roots(h, count) -> np.ndarray:
    """Spectral points ``k = s/h`` with ``sinh(kh)**2 = (kh)**2``, ``k != 0``.

    Returns ``4*count`` values: for each of the first ``count`` first-quadrant
    roots ``s`` (ordered by modulus) the symmetric group ``s, -s, conj(s),
    -conj(s)``, divided by ``h``.
    """
    if h <= 0:
        raise ConfigurationError("h must be positive")
    return quadruple(papkovich_fadle_table(count).s) / h


# --------------------------------------------------------------------------
# Singular parts and known forcing transforms
# --------------------------------------------------------------------------

def _log_down(w):
    """Logarithm with its cut along the downward vertical ray."""
    lw = np.log(w)
    return np.where(lw.imag < -0.5 * np.pi, lw + 2j * np.pi, lw)


@dataclass(frozen=True)
class SingularGoursat:
    """Free-space local Goursat pair of a Stokeslet or stresslet at ``z0``."""

    kind: Kind
    mu: complex
    z0: complex

    def f(self, z):
        dz = np.asarray(z) - self.z0
        if self.kind is Kind.STOKESLET:
            return self.mu * _log_down(dz)
        return self.mu / dz

    def fp(self, z):
        dz = np.asarray(z) - self.z0
        if self.kind is Kind.STOKESLET:
            return self.mu / dz
        return -self.mu / dz ** 2

    def gp(self, z):
        dz = np.asarray(z) - self.z0
        zb0 = np.conj(self.z0)
        if self.kind is Kind.STOKESLET:
            return -np.conj(self.mu) * _log_down(dz) - self.mu * zb0 / dz
        return self.mu * zb0 / dz ** 2

    def velocity(self, z):
        """``u - i v`` of the local form (branch free)."""
        z = np.asarray(z, dtype=complex)
        dz = z - self.z0
        if self.kind is Kind.STOKESLET:
            return -np.conj(self.mu) * np.log(np.abs(dz) ** 2) + self.mu * np.conj(dz) / dz
        return -np.conj(self.mu) / np.conj(dz) - self.mu * np.conj(dz) / dz ** 2


def singular_goursat(kind, mu, z0) -> SingularGoursat:
    kind = Kind.parse(kind)
    if kind not in ORACLE_KINDS:
        raise ConfigurationError(f"transform oracle supports {[k.value for k in ORACLE_KINDS]}, got {kind.value}")
    return SingularGoursat(kind, complex(mu), complex(z0))


def _quad(fn, a, b, size):
    """Adaptive Gauss-Kronrod quadrature of a vector-valued integrand."""
    if size == 0:
        return np.zeros(0, dtype=complex)
    val, err = quad_vec(fn, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, norm="max", limit=4000)
    scale = max(1.0, float(np.max(np.abs(val))))
    if err > 1e-9 * scale:
        raise ConvergenceError(f"quadrature error estimate {err:.3e}")
    return val


_GL_ORDER = 32
_GL_BASE = np.polynomial.legendre.leggauss(_GL_ORDER)


def gl_panels(a, b, n_panels):
    """Composite Gauss-Legendre nodes and weights on ``[a, b]``."""
    x0, w0 = _GL_BASE
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    w = (half[:, None] * w0[None, :]).ravel()
    return x, w


def _adaptive(apply, a, b, n_panels=4, tol=None, max_doublings=9):
    """Apply a quadrature contraction on doubling composite rules until stable."""
    tol = QUAD_TOL if tol is None else tol
    prev = None
    p = int(n_panels)
    for _ in range(max_doublings):
        x, w = gl_panels(a, b, p)
        cur = apply(x, w)
        if prev is not None:
            scale = max(1.0, float(np.max(np.abs(cur)))) if cur.size else 1.0
            if cur.size == 0 or float(np.max(np.abs(cur - prev))) <= tol * scale:
                return cur
        prev = cur
        p *= 2
    raise ConvergenceError("composite Gauss-Legendre rule did not settle")


def adaptive_gl(kernel, values, a, b, n_panels=4, tol=None, max_doublings=9):
    """``sum_nodes kernel(x) * w @ values(x)`` with panel doubling until stable.

    ``kernel(x)`` returns an ``(nk, nx)`` array and ``values(x)`` an
    ``(nx, m)`` array; the result is ``(nk, m)``.  Doubling stops once two
    successive rules agree to ``tol`` relative to the largest entry.
    """
    return _adaptive(lambda x, w: (kernel(x) * w[None, :]) @ values(x), a, b, n_panels, tol, max_doublings)


def _fourier_groups(k):
    """Split ``k = m + delta`` with integer ``m`` when few distinct offsets occur.

    Returns ``(m_unique, m_idx, delta_unique, delta_idx)`` or ``None`` when the
    batch has no such structure or a large imaginary part.
    """
    if k.size < 64 or float(np.max(np.abs(k.imag))) > 4.0:
        return None
    m = np.round(k.real)
    delta = k - m
    key = np.round(delta.real * 1e9) + 1j * np.round(delta.imag * 1e9)
    d_u, d_idx = np.unique(key, return_inverse=True)
    if d_u.size * 4 > k.size:
        return None
    d_rep = np.zeros(d_u.size, complex)
    d_rep[d_idx] = delta
    m_u, m_idx = np.unique(m, return_inverse=True)
    return m_u, m_idx.ravel(), d_rep, d_idx.ravel()


def fourier_gl(k, lam, values, a, b, n_panels=4, tol=None):
    """``exp(lam) * integral exp(-i k x) values(x) dx`` for a batch of ``k``.

    Batches made of a few offsets around many integers (Cauchy rings) use
    the factorisation ``exp(-ikx) = exp(-imx) exp(-i delta x)`` so that the
    cost is a matrix product instead of one exponential per pair.
    """
    groups = _fourier_groups(k)
    if groups is None:
        return adaptive_gl(lambda x: np.exp(-1j * np.outer(k, x) + lam[:, None]), values, a, b, n_panels, tol)
    m_u, m_idx, d_u, d_idx = groups
    post = np.exp(lam)

    def apply(x, w):
        V = values(x)
        Em = np.exp(-1j * np.outer(m_u, x))
        out = np.empty((k.size, V.shape[1]), complex)
        for j in range(V.shape[1]):
            G = np.exp(-1j * np.outer(d_u, x)) * (w * V[:, j])[None, :]
            P = Em @ G.T
            out[:, j] = P[m_idx, d_idx] * post
        return out

    return _adaptive(apply, a, b, n_panels, tol)


def _panels_for(k, length):
    """Starting panel count resolving the oscillation of exp(i k x)."""
    kmax = float(np.max(np.abs(k.real if np.iscomplexobj(k) else k))) if k.size else 0.0
    kim = float(np.max(np.abs(np.imag(k)))) if k.size else 0.0
    waves = max(kmax, kim) * length / (2 * np.pi)
    return max(4, int(np.ceil(waves / 2.0)))


def _horizontal_ref(k):
    return -L * np.maximum(k.imag, 0.0)


def _vertical_ref(k, h):
    return -h * np.maximum(k.real, 0.0)


@dataclass(frozen=True)
class SingularForcing:
    """Known transforms generated by the singular part.

    All transforms take an optional complex log-scale ``lam``; the returned
    values are the transforms multiplied by ``exp(lam)`` and are computed with
    the scale inside the exponent so that no intermediate overflows.
    """

    part: SingularGoursat
    h: float

    # integrands on the walls and across the period
    def wall_bottom(self, x):
        p = self.part
        return np.conj(p.f(x)) - x * p.fp(x) - p.gp(x)

    def wall_top(self, x):
        p, z = self.part, x + 1j * self.h
        return np.conj(p.f(z)) - (z - 2j * self.h) * p.fp(z) - p.gp(z)

    def jump_f(self, y):
        """``f_s(iy + l) - f_s(iy)``."""
        z = 1j * np.asarray(y, dtype=float)
        return self.part.f(z + L) - self.part.f(z)

    def jump_g(self, y):
        """``l f_s'(iy) + g_s'(iy + l) - g_s'(iy)``."""
        z = 1j * np.asarray(y, dtype=float)
        return L * self.part.fp(z) + self.part.gp(z + L) - self.part.gp(z)

    def _start_panels(self, k, length, vertical=False):
        # resolve the local peak of the singular part as well as the oscillation
        z0 = self.part.z0
        gap = min(z0.real, L - z0.real) if vertical else min(z0.imag, self.h - z0.imag)
        return max(_panels_for(k, length), int(np.ceil(length / (8 * gap))))

    def _wall(self, k, lam, top):
        k = np.atleast_1d(np.asarray(k, dtype=complex))
        lam = np.broadcast_to(np.asarray(lam, dtype=complex), k.shape)
        start = self._start_panels(k, L)
        if top:
            return fourier_gl(k, lam + k * self.h, lambda x: -self.wall_top(x)[:, None], 0.0, L, start)[:, 0]
        return fourier_gl(k, lam, lambda x: self.wall_bottom(x)[:, None], 0.0, L, start)[:, 0]

    def horizontal(self, k, lam=0.0):
        """``(R1, R3)`` scaled by ``exp(lam)``."""
        return self._wall(k, lam, False), self._wall(k, lam, True)

    def vertical(self, k, lam=0.0):
        """``(R2, d[k R2]/dk, R4)`` scaled by ``exp(lam)``."""
        k = np.atleast_1d(np.asarray(k, dtype=complex))
        lam = np.broadcast_to(np.asarray(lam, dtype=complex), k.shape)
        h = self.h

        def kern(y):
            return -1j * np.exp(np.outer(k, y) + lam[:, None])

        def vals(y):
            jf = self.jump_f(y)
            return np.stack([jf, jf * y, self.jump_g(y)], axis=1)

        out = adaptive_gl(kern, vals, 0.0, h, self._start_panels(k, h, vertical=True))
        return out[:, 0], out[:, 0] + k * out[:, 1], out[:, 2]

    def R1(self, k, lam=0.0):
        return self._wall(k, lam, False)

    def R3(self, k, lam=0.0):
        return self._wall(k, lam, True)

    def R2(self, k, lam=0.0):
        return self.vertical(k, lam)[0]

    def dR2(self, k, lam=0.0):
        """``d/dk [k R2(k)]``."""
        return self.vertical(k, lam)[1]

    def R4(self, k, lam=0.0):
        return self.vertical(k, lam)[2]

    def q(self, k, lam=0.0):
        """``int_{ih}^{0} exp(-ikz) dz`` in closed form."""
        k = np.atleast_1d(np.asarray(k, dtype=complex))
        lam = np.broadcast_to(lam, k.shape)
        out = np.empty(k.shape, dtype=complex)
        small = np.abs(k) < 1e-12
        kk = np.where(small, 1.0, k)
        out[:] = -1j * np.exp(lam) * np.expm1(kk * self.h) / kk
        out[small] = -1j * self.h * np.exp(lam[small])
        return out


def singular_forcings(kind, mu, z0, h) -> SingularForcing:
    """Known right-hand sides R1..R4 and q for the oracle."""
    return SingularForcing(singular_goursat(kind, mu, z0), float(h))


# --------------------------------------------------------------------------
# Real-linear forms in the complex unknowns
# --------------------------------------------------------------------------

@dataclass
class LinForm:
    """``const + alpha @ u + beta @ conj(u)`` for a batch of rows."""

    const: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @classmethod
    def zeros(cls, nk, nu):
        return cls(np.zeros(nk, complex), np.zeros((nk, nu), complex), np.zeros((nk, nu), complex))

    def __add__(self, other):
        return LinForm(self.const + other.const, self.alpha + other.alpha, self.beta + other.beta)

    def __sub__(self, other):
        return LinForm(self.const - other.const, self.alpha - other.alpha, self.beta - other.beta)

    def scale(self, c):
        c = np.asarray(c)
        return LinForm(self.const * c, self.alpha * c[:, None], self.beta * c[:, None])

    def conj(self):
        return LinForm(self.const.conj(), self.beta.conj(), self.alpha.conj())

    def take(self, idx):
        return LinForm(self.const[idx], self.alpha[idx], self.beta[idx])

    def value(self, u):
        return self.const + self.alpha @ u + self.beta @ np.conj(u)


# --------------------------------------------------------------------------
# Spectral system
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralSystem:
    """Solved transform-method system for one singularity in a channel."""

    kind: Kind
    mu: complex
    z0: complex
    h: float
    M: int
    roots: np.ndarray
    a: np.ndarray
    b: np.ndarray
    d: complex
    residual: float
    condition: float
    n_equations: int
    n_unknowns: int
    root_residual: float
    forcing: SingularForcing = field(repr=False)

    @property
    def l(self) -> float:  # noqa: E743
        return L

    @property
    def unknowns(self) -> np.ndarray:
        return np.concatenate([self.a, self.b, [self.d]])


class _Assembler:
    """Builds the linear forms of the spectral quantities for a batch of k."""

    def __init__(self, forcing: SingularForcing, M: int):
        self.forcing = forcing
        self.h = forcing.h
        self.M = M
        self.nu = 2 * M + 1
        self.ia = slice(0, M)
        self.ib = slice(M, 2 * M)
        self.id = 2 * M
        self.parity = (-1.0) ** np.arange(M)

    def _nodes(self, k):
        h = self.h
        kmax = float(np.max(np.abs(k))) if k.size else 0.0
        n = int(64 + 0.8 * kmax * h)
        x, w = np.polynomial.legendre.leggauss(n)
        y = 0.5 * h * (x + 1.0)
        w = 0.5 * h * w
        t = 2.0 * y / h - 1.0
        T = cheb.chebvander(t, self.M - 1)
        dT = np.zeros_like(T)
        eye = np.eye(self.M)
        for m in range(1, self.M):
            dT[:, m] = cheb.chebval(t, cheb.chebder(eye[m])) * (2.0 / h)
        return y, w, T, dT

    def base(self, k):
        """Reference-scaled forms for A, d(kA)/dk combos and W minus its reflected term.

        Returns ``(lam0, A, Wrest)`` where the forms equal the true quantities
        multiplied by ``exp(lam0)``.
        """
        k = np.asarray(k, dtype=complex)
        h, M, nu = self.h, self.M, self.nu
        fc = self.forcing
        lam0 = _vertical_ref(k, h) + _horizontal_ref(k)
        shift = lam0 - 1j * k * L          # scale for terms carrying exp(-ikl)

        y, w, T, dT = self._nodes(k)
        E = np.exp(k[:, None] * y[None, :] + lam0[:, None]) * w
        Es = np.exp(k[:, None] * y[None, :] + shift[:, None]) * w
        ky1 = 1.0 + k[:, None] * y[None, :]
        L0 = -1j * E @ T
        L1 = -1j * (E * ky1) @ T
        L0s = -1j * Es @ T
        L1s = -1j * (Es * ky1) @ T
        L0Ps = -1j * Es @ (-1j * dT)       # moments of f_R' basis
        qs = fc.q(k, shift)
        L1one_s = -1j * h * np.exp(k * h + shift)

        R2s, dR2s, R4s = fc.vertical(k, shift)
        R1, R3 = fc.horizontal(k, lam0)
        jf0 = complex(fc.jump_f(0.0))
        jfh = complex(fc.jump_f(h))

        nk = k.size
        ikl = 1j * k * L
        A = LinForm.zeros(nk, nu)
        A.const = -R2s
        A.alpha[:, self.ia] = -L0 + L0s
        A.alpha[:, self.id] = qs

        dA = LinForm.zeros(nk, nu)
        dA.const = -(dR2s - ikl * R2s)
        dA.alpha[:, self.ia] = -L1 + L1s - ikl[:, None] * L0s
        dA.alpha[:, self.id] = L1one_s - ikl * qs

        Ah = LinForm.zeros(nk, nu)
        Ah.const = -R4s
        Ah.alpha[:, self.ib] = -L0 + L0s
        Ah.alpha[:, self.ia] = -L * L0Ps
        Ah.beta[:, self.id] = qs

        es = np.exp(shift)
        Fl = LinForm.zeros(nk, nu)          # l f_R(l) exp(-ikl)
        Fl.alpha[:, self.ia] = L * es[:, None] * self.parity[None, :]
        Fl.alpha[:, self.id] = L * es
        Fl.const = -L * jf0 * es

        e1 = np.exp(k * h + lam0)
        e2 = np.exp(k * h + shift)
        r = LinForm.zeros(nk, nu)
        r.alpha[:, self.ia] = (-1j * h * e1 - (L - 1j * h) * e2)[:, None]
        r.alpha[:, self.id] = -(L - 1j * h) * e2
        r.const = (L - 1j * h) * jfh * e2

        forcing = LinForm.zeros(nk, nu)
        forcing.const = R1 + R3
        Wrest = forcing + dA - A.scale(2 * k * h) - Ah - Fl - r
        return lam0, A, Wrest


def _match(k, target, tol=1e-9):
    """Indices ``j`` with ``k[j] == target[i]`` for every ``i``, else ``None``."""
    if k.size < 2:
        return None
    order = np.lexsort((k.imag, k.real))
    ks = k[order]
    pos = np.searchsorted(ks.real, target.real - tol)
    out = np.empty(target.size, dtype=int)
    for i, (p0, t) in enumerate(zip(pos, target)):
        found = -1
        for j in range(p0, ks.size):
            if ks[j].real > t.real + tol:
                break
            if abs(ks[j] - t) <= tol:
                found = j
                break
        if found < 0:
            return None
        out[i] = order[found]
    return out


class _Spectral:
    """Evaluates W, rho_1, rho_3 and the Papkovich-Fadle numerator on a k batch."""

    def __init__(self, assembler: _Assembler, k):
        k = np.asarray(k, dtype=complex)
        self.h = assembler.h
        self.k = k
        n = k.size
        self.idx = np.arange(n)
        partner = _match(k, -k.conj())
        if partner is not None:
            # batch closed under k -> -conj(k): no second evaluation needed
            allk, self.ref = k, partner
        else:
            allk, self.ref = np.concatenate([k, -k.conj()]), np.arange(n, 2 * n)
        self.lam0, self.A, self.Wrest = assembler.base(allk)

    def _W(self, pos, partner, lam, kvals, with_V3=False):
        """W (or V3) at ``kvals`` scaled by ``exp(lam)``."""
        h = self.h
        c_own = np.exp(lam - self.lam0[pos])
        if with_V3:
            own = (self.Wrest.take(pos) + self.A.take(pos).scale(2 * kvals * h)).scale(c_own)
            c_ref = np.exp(lam - self.lam0[partner])
        else:
            own = self.Wrest.take(pos).scale(c_own)
            c_ref = np.exp(lam + 2 * kvals * h - self.lam0[partner])
        return own + self.A.take(partner).conj().scale(c_ref)

    def numerator(self, lam, which="rho1"):
        """Scaled numerator of rho_1 (or rho_3) on the batch."""
        k, h = self.k, self.h
        v3 = which == "rho3"
        own = self._W(self.idx, self.ref, lam, k, v3)
        refl_pos = np.where(k.real >= 0)[0]
        refl_neg = np.where(k.real < 0)[0]
        kr = -k.conj()
        out = own.scale((-2 if v3 else 2) * k * h)
        second = LinForm.zeros(k.size, own.alpha.shape[1])
        for sel, sign in ((refl_pos, 1), (refl_neg, -1)):
            if sel.size == 0:
                continue
            ks = k[sel]
            if sign > 0:
                lam_r, fac = np.conj(lam[sel] + 2 * ks * h), -np.expm1(-2 * ks * h)
            else:
                lam_r, fac = np.conj(lam[sel]), np.expm1(2 * ks * h)
            part = self._W(self.ref[sel], self.idx[sel], lam_r, kr[sel], v3).conj().scale(fac)
            second.const[sel] = part.const
            second.alpha[sel] = part.alpha
            second.beta[sel] = part.beta
        return out + second if v3 else out - second

    def denominator(self, lam):
        k, h = self.k, self.h
        kh = k * h
        return (np.exp(lam + 2 * kh) - 2 * np.exp(lam) + np.exp(lam - 2 * kh)
                - 4 * kh * kh * np.exp(lam))


def _row_scale(k, h):
    return -L * np.maximum(k.imag, 0.0) - 2.0 * h * np.abs(k.real)


def _real_rows(form: LinForm):
    a, b, c = form.alpha, form.beta, form.const
    re_u = a + b
    im_u = 1j * (a - b)
    rows = np.concatenate([np.hstack([re_u.real, im_u.real]), np.hstack([re_u.imag, im_u.imag])])
    rhs = np.concatenate([-c.real, -c.imag])
    return rows, rhs


def _taylor_rows(assembler, n_points=32, orders=4):
    h = assembler.h
    r = 1.0 / h
    theta = 2 * np.pi * np.arange(n_points) / n_points
    k = r * np.exp(1j * theta)
    spec = _Spectral(assembler, k)
    num = spec.numerator(np.zeros(n_points, complex))
    forms = []
    for n in range(orders):
        wts = np.exp(-1j * n * theta) / (n_points * r ** n)
        forms.append(LinForm(np.array([wts @ num.const]), (wts @ num.alpha)[None, :],
                             (wts @ num.beta)[None, :]))
    out = forms[0]
    for f_ in forms[1:]:
        out = LinForm(np.concatenate([out.const, f_.const]), np.vstack([out.alpha, f_.alpha]),
                      np.vstack([out.beta, f_.beta]))
    return out


def _gauge_basis(M):
    """Null space of the gauge constraints f_R(0) = 0 and Re d = 0."""
    nu = 2 * M + 1
    C = np.zeros((3, 2 * nu))
    par = (-1.0) ** np.arange(M)
    C[0, :M] = par                 # Re f_R(0)
    C[1, nu:nu + M] = par          # Im f_R(0)
    C[2, 2 * M] = 1.0              # Re d
    return linalg.null_space(C)


def assemble_and_solve(kind, mu, z0, geometry=2.0, M=24, n_roots=None) -> SpectralSystem:
    """Solve the transform-method system for a Stokeslet or stresslet.

    Parameters
    ----------
    kind, mu, z0
        Singularity in canonical coordinates (period ``2*pi``).
    geometry
        Channel height ``h`` or a :class:`ChannelGeometry`.
    M
        Number of Chebyshev modes for each of ``f_R`` and ``g'_R`` on the left side.
    n_roots
        Number of first-quadrant Papkovich-Fadle roots; defaults to ``2*M``,
        which oversamples the real unknowns about twofold.
    """
    h = geometry.canonical_h if isinstance(geometry, ChannelGeometry) else float(geometry)
    z0 = complex(z0)
    if not 0.0 < z0.imag < h or not 0.0 < z0.real < L:
        raise ConfigurationError("z0 must lie strictly inside the period rectangle")
    if M < 8:
        raise ConfigurationError("M must be >= 8")
    n_roots = 2 * M if n_roots is None else int(n_roots)
    forcing = singular_forcings(kind, mu, z0, h)
    part = forcing.part
    asm = _Assembler(forcing, M)
    table = papkovich_fadle_table(n_roots)
    roots = quadruple(table.s) / h
    nu = asm.nu

    if mu == 0:
        zero = np.zeros(M, complex)
        return SpectralSystem(part.kind, 0j, z0, h, M, roots, zero, zero.copy(), 0j, 0.0, 1.0,
                              0, 2 * nu - 3, float(np.max(table.residual)), forcing)

    spec = _Spectral(asm, roots)
    lam = _row_scale(roots, h)
    root_form = spec.numerator(lam)
    rows_r, rhs_r = _real_rows(root_form)
    taylor = _taylor_rows(asm)
    rows_t, rhs_t = _real_rows(taylor)

    def equilibrate(rows, rhs, drop_below=0.0):
        norm = np.max(np.abs(rows), axis=1)
        keep = norm > drop_below
        return rows[keep] / norm[keep, None], rhs[keep] / norm[keep]

    rows_r, rhs_r = equilibrate(rows_r, rhs_r)
    tnorm = np.max(np.abs(rows_t), axis=1)
    rows_t, rhs_t = equilibrate(rows_t, rhs_t, 1e-9 * max(tnorm.max(), 1e-300))
    Amat = np.vstack([rows_r, rows_t])
    rhs = np.concatenate([rhs_r, rhs_t])

    Z = _gauge_basis(M)
    AZ = Amat @ Z
    x, _, rank, sv = linalg.lstsq(AZ, rhs, lapack_driver="gelsd")
    if rank < AZ.shape[1]:
        raise ConvergenceError(f"transform system is rank deficient ({rank} < {AZ.shape[1]})")
    cond = float(sv[0] / sv[-1])
    if cond > CONDITION_WARN:
        log.warning("transform system condition number %.3e exceeds %.0e", cond, CONDITION_WARN)
    full = Z @ x
    resid = float(np.linalg.norm(AZ @ x - rhs) / max(np.linalg.norm(rhs), 1e-300))
    u = full[:nu] + 1j * full[nu:]
    log.info("transform system: %d equations, %d unknowns, residual %.3e, cond %.3e",
             Amat.shape[0], AZ.shape[1], resid, cond)
    return SpectralSystem(part.kind, complex(mu), z0, h, M, roots, u[asm.ia].copy(), u[asm.ib].copy(),
                          complex(u[asm.id]), resid, cond, Amat.shape[0], AZ.shape[1],
                          float(np.max(table.residual)), forcing)


# --------------------------------------------------------------------------
# Spectral functions of the solved system
# --------------------------------------------------------------------------

def _assembler(system: SpectralSystem):
    return _Assembler(system.forcing, system.M)


def rho_values(system: SpectralSystem, k, lam=None):
    """``rho_1(k)`` and ``rho_3(k)`` from the closed-form expressions.

    With ``lam`` given the values are multiplied by ``exp(lam)``.
    """
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    lam_row = _row_scale(k, system.h)
    spec = _Spectral(_assembler(system), k)
    u = system.unknowns
    den = spec.denominator(lam_row if lam is None else lam_row - lam)
    r1 = spec.numerator(lam_row).value(u) / den
    r3 = spec.numerator(lam_row, "rho3").value(u) / den
    return r1, r3


def edge_transforms(system: SpectralSystem, k):
    """``rho_2, rho_4, rhohat_2, rhohat_4`` by adaptive quadrature of the side data."""
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    fc, h = system.forcing, system.h
    f_left, fp_left, g_left = _left_side(system)

    def integrand(y):
        z = 1j * y
        fr = f_left(y)
        gr = g_left(y)
        fr_r = fr + system.d - fc.jump_f(y)
        gr_r = gr - L * fp_left(y) + np.conj(system.d) - fc.jump_g(y)
        e4 = -1j * np.exp(-1j * k * z)
        e2 = 1j * np.exp(-1j * k * (z + L))
        return np.concatenate([e2 * fr_r, e4 * fr, e2 * gr_r, e4 * gr])

    vals = _quad(integrand, 0.0, h, 4 * k.size)
    return np.split(vals, 4)


def _left_side(system: SpectralSystem):
    h = system.h
    da = cheb.chebder(system.a) * (2.0 / h)

    def f_left(y):
        return cheb.chebval(2.0 * np.asarray(y) / h - 1.0, system.a)

    def fp_left(y):     # d/dz = -i d/dy on z = iy
        return -1j * cheb.chebval(2.0 * np.asarray(y) / h - 1.0, da)

    def g_left(y):
        return cheb.chebval(2.0 * np.asarray(y) / h - 1.0, system.b)

    return f_left, fp_left, g_left


def global_relation_residual(system: SpectralSystem, k, radius=None):
    """Residuals of ``sum_j rho_j(k) = 0`` and ``sum_j rhohat_j(k) = 0``.

    ``rho_2``, ``rho_4`` and their hatted partners are integrated directly from
    the solved side data.  Adding the closed forms of ``rho_1`` and ``rho_3``
    to them gives zero for any unknowns, so one of the two is replaced by its
    Cauchy integral over a circle of ``radius`` that encloses the first
    Papkovich-Fadle quadruple.  The Cauchy integral drops the residues at the
    enclosed roots, so the sum vanishes only when the solved unknowns make
    that transform entire.  Both pairings are tried and the larger residual
    is kept.

    Returns
    -------
    res, res_hat : ndarray
        Absolute residuals divided by the largest transform magnitude on the
        circle, which sets the rounding floor of the Cauchy integral.
    """
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    h = system.h
    if radius is None:
        s1 = papkovich_fadle_table(2).s
        radius = 0.5 * (abs(s1[0]) + abs(s1[1])) / h
    if np.any(np.abs(k) >= 0.8 * radius):
        raise ConfigurationError("test values must lie well inside the Cauchy circle")
    n_c = max(256, int(8 * radius * (L + 2 * h)))
    theta = 2 * np.pi * (np.arange(n_c) + 0.5) / n_c
    kc = radius * np.exp(1j * theta)
    r1c, r3c = rho_values(system, kc)
    hat1c, hat3c = _hat_values(system, kc, r1c, r3c)
    wts = (kc / n_c)[None, :] / (kc[None, :] - k[:, None])
    r1, r3 = rho_values(system, k)
    hat1, hat3 = _hat_values(system, k, r1, r3)
    rho2, rho4, hat2, hat4 = edge_transforms(system, k)
    side, side_h = rho2 + rho4, hat2 + hat4
    res = np.maximum(np.abs(wts @ r1c + r3 + side), np.abs(r1 + wts @ r3c + side))
    res_h = np.maximum(np.abs(wts @ hat1c + hat3 + side_h), np.abs(hat1 + wts @ hat3c + side_h))
    scale = max(float(np.max(np.abs(r1c))), float(np.max(np.abs(r3c))), 1e-300)
    scale_h = max(float(np.max(np.abs(hat1c))), float(np.max(np.abs(hat3c))), 1e-300)
    return res / scale, res_h / scale_h


def _dk(system, k, fn):
    """``fn`` and its k-derivative at ``k`` from a small Cauchy circle."""
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    J, r = _CIRCLE_POINTS, _CIRCLE_RADIUS
    theta = 2 * np.pi * np.arange(J) / J
    ring = (k[:, None] + r * np.exp(1j * theta)[None, :]).ravel()
    vals = fn(ring).reshape(k.size, J)
    c0 = vals.mean(axis=1)
    c1 = (vals * np.exp(-1j * theta)[None, :]).mean(axis=1) / r
    return c0, c1


def _hat_values(system, k, r1, r3):
    """``rhohat_1`` and ``rhohat_3`` from the wall relations (moderate k)."""
    fc, h = system.forcing, system.h
    d1 = _dk(system, k, lambda kk: kk * rho_values(system, kk)[0])[1]
    d3 = _dk(system, k, lambda kk: kk * rho_values(system, kk)[1])[1]
    r1m, r3m = rho_values(system, -np.conj(k))
    f_left = _left_side(system)[0]
    fR0 = complex(f_left(0.0))
    fRh = complex(f_left(h))
    fRl = fR0 + system.d - complex(fc.jump_f(0.0))
    fRlh = fRh + system.d - complex(fc.jump_f(h))
    rk = -1j * h * fRh * np.exp(k * h) - (L - 1j * h) * fRlh * np.exp(-1j * k * (L + 1j * h))
    R1k, R3k = fc.horizontal(k)
    hat1 = R1k + np.conj(r1m) + d1 - L * fRl * np.exp(-1j * k * L)
    hat3 = R3k + np.exp(2 * k * h) * np.conj(r3m) + d3 - 2 * k * h * r3 - rk
    return hat1, hat3


# --------------------------------------------------------------------------
# Field reconstruction
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _Reconstruction:
    n: np.ndarray
    rho1: np.ndarray      # rho_1(n), n >= 0
    rho3: np.ndarray      # rho_3(-n)
    hat1: np.ndarray
    hat3: np.ndarray


def _reconstruction(system: SpectralSystem, n_max: int) -> _Reconstruction:
    h, fc = system.h, system.forcing
    n = np.arange(n_max + 1, dtype=float)
    u = system.unknowns
    asm = _assembler(system)
    J, r = _CIRCLE_POINTS, _CIRCLE_RADIUS
    theta = 2 * np.pi * np.arange(J) / J
    ring = r * np.exp(1j * theta)

    # one batch of rings around +n and -n, closed under k -> -conj(k)
    centres = np.concatenate([n, -n]).astype(complex)
    pts = (centres[:, None] + ring[None, :]).ravel()
    spec = _Spectral(asm, pts)
    lam = _row_scale(pts, h)
    den = spec.denominator(lam)
    # exp(-2nh) rho_3(n) is carried by the +n rings through the row scale
    extra = np.repeat(np.concatenate([-2.0 * n * h, np.zeros(n.size)]), J)
    rho1 = (spec.numerator(lam).value(u) / den).reshape(2, n.size, J)
    rho3 = (spec.numerator(lam + extra, "rho3").value(u) / den).reshape(2, n.size, J)
    wd = np.exp(-1j * theta)[None, :] / r

    r1_n, dr1_n = rho1[0].mean(axis=1), (rho1[0] * wd).mean(axis=1)
    r1_mn = rho1[1].mean(axis=1)
    r3_n_scaled = rho3[0].mean(axis=1)
    r3_mn, dr3_mn = rho3[1].mean(axis=1), (rho3[1] * wd).mean(axis=1)

    f_left = _left_side(system)[0]
    fR0 = complex(f_left(0.0))
    fRh = complex(f_left(h))
    fRl = fR0 + system.d - complex(fc.jump_f(0.0))
    fRlh = fRh + system.d - complex(fc.jump_f(h))

    kn = n.astype(complex)
    # each wall only on its own rings: R3 at +n carries exp(nh) and would swamp the stopping test
    R1n = fc.R1(kn)
    hat1 = R1n + np.conj(r1_mn) + (r1_n + kn * dr1_n) - L * fRl * np.exp(-1j * kn * L)
    km = -kn
    R3m = fc.R3(km)
    r_m = -1j * h * fRh * np.exp(km * h) - (L - 1j * h) * fRlh * np.exp(-1j * km * L + km * h)
    hat3 = (R3m + np.conj(r3_n_scaled) + (r3_mn + km * dr3_mn) - 2 * km * h * r3_mn - r_m)
    return _Reconstruction(n, r1_n, r3_mn, hat1, hat3)


def _series_terms(rec: _Reconstruction, z, top, bottom):
    """Periodic Cauchy sum of the bottom/top contributions and its derivative."""
    n = rec.n[1:]
    ep = np.exp(1j * np.outer(z, n))
    em = np.exp(-1j * np.outer(z, n))
    val = (bottom[0] - top[0]) / (2 * L) + (ep @ bottom[1:] - em @ top[1:]) / L
    der = (ep @ (1j * n * bottom[1:]) + em @ (1j * n * top[1:])) / L
    return val, der


def _jump_integrals(system: SpectralSystem, z):
    """Vertical-side contributions from the period jumps of f_R and g'_R."""
    h, fc = system.h, system.forcing
    f_left, fp_left, _ = _left_side(system)
    d = system.d
    nz = z.size

    def integrand(y):
        s = 1j * y
        jf = d - fc.jump_f(y)
        jg = -L * fp_left(y) + np.conj(d) - fc.jump_g(y)
        half = 0.5 * (s - z)
        kern = 0.5 / np.tan(half)
        dkern = 0.25 / np.sin(half) ** 2
        # (1/(2 pi i)) * integral over sigma = iy, d sigma = i dy
        c = 1.0 / (2 * np.pi)
        return np.concatenate([c * jf * kern, c * jf * dkern, c * jg * kern])

    vals = _quad(integrand, 0.0, h, 3 * nz)
    return np.split(vals, 3)


def oracle_goursat(system: SpectralSystem, z, n_max=None):
    """Correction functions ``f_R``, ``f_R'`` and ``g'_R`` at interior points."""
    z = np.atleast_1d(np.asarray(z, dtype=complex)).ravel()
    h = system.h
    if z.size == 0:
        e = np.zeros(0, complex)
        return e, e, e
    if np.any((z.imag <= 0) | (z.imag >= h) | (z.real <= 0) | (z.real >= L)):
        raise ConfigurationError("oracle evaluation points must lie inside the period rectangle")
    if n_max is None:
        gap = float(min(np.min(z.imag), np.min(h - z.imag)))
        n_max = int(math.ceil(36.0 / gap)) + 4
    cap = int(_MAX_NH / h)
    if n_max > cap:
        log.warning("oracle series truncated at n=%d (requested %d)", cap, n_max)
        n_max = cap
    rec = _reconstruction(system, n_max)
    f_val, f_der = _series_terms(rec, z, rec.rho3, rec.rho1)
    g_val, _ = _series_terms(rec, z, rec.hat3, rec.hat1)
    jf, djf, jg = _jump_integrals(system, z)
    return f_val + jf, f_der + djf, g_val + jg


def side_velocity(system: SpectralSystem, y):
    """Velocity on the left side ``z = i y`` straight from the Chebyshev side data."""
    y = np.asarray(y, dtype=float)
    f_left, fp_left, g_left = _left_side(system)
    z = 1j * y
    w = system.forcing.part.velocity(z) - np.conj(f_left(y)) + np.conj(z) * fp_left(y) + g_left(y)
    return w


def _shifted(system: SpectralSystem, x):
    """The same problem solved in a frame whose left side sits at ``Re z = x``.

    A singularity close to the new right side puts its periodic image close
    to the left side, where the Chebyshev data then needs more modes; the
    basis is enlarged until the solve reaches the accuracy of ``system``.
    """
    z0 = complex(np.mod(system.z0.real - x, L), system.z0.imag)
    if min(z0.real, L - z0.real) < 1e-8:
        raise DomainError("oracle wall evaluation directly below or above the singularity")
    target = max(10.0 * system.residual, 1e-12)
    for M in (system.M, (3 * system.M) // 2, 2 * system.M):
        out = assemble_and_solve(system.kind, system.mu, z0, system.h, M)
        if out.residual <= target:
            break
    return out


def oracle_eval(system: SpectralSystem, z):
    """Velocity ``(u, v)`` of the transform-method solution.

    Interior points use the reconstruction sums.  Points on the left side
    (``Re z`` a multiple of ``2*pi``) are read off the side data; other wall
    points are evaluated on the left side of a translated frame, which costs
    one extra solve per distinct abscissa.
    """
    if not isinstance(system, SpectralSystem):
        raise ConfigurationError("oracle_eval needs a solved SpectralSystem")
    z_in = np.asarray(z, dtype=complex)
    shape = z_in.shape
    zf = z_in.ravel()
    h = system.h
    if np.any((zf.imag < -1e-12) | (zf.imag > h + 1e-12)):
        raise DomainError("oracle evaluation points must lie in the closed channel")
    if system.mu == 0:
        zero = np.zeros(shape)
        return zero, zero.copy()
    zr = np.mod(zf.real, L) + 1j * np.clip(zf.imag, 0.0, h)
    on_side = (np.abs(zr.real) < 1e-12) | (np.abs(zr.real - L) < 1e-12)
    on_wall = ((zr.imag < 1e-12) | (zr.imag > h - 1e-12)) & ~on_side
    inner = ~(on_side | on_wall)
    w = np.empty(zr.shape, complex)
    if np.any(on_side):
        w[on_side] = side_velocity(system, zr.imag[on_side])
    for x in np.unique(zr.real[on_wall]):
        sel = on_wall & (zr.real == x)
        w[sel] = side_velocity(_shifted(system, x), zr.imag[sel])
    if np.any(inner):
        zi = zr[inner]
        fR, fpR, gR = oracle_goursat(system, zi)
        w[inner] = system.forcing.part.velocity(zi) - np.conj(fR) + np.conj(zi) * fpR + gR
    return w.real.reshape(shape), (-w.imag).reshape(shape)
