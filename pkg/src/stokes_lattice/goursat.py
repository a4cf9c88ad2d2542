"""Branch-free evaluation of Goursat functions written in the zeta variable.

Every solution in this package has the shape

    F(zeta) = a log(zeta) + c_p log(zeta - zeta0) + c_i log(1 - conj(zeta0) zeta)
              + F_rat(zeta)
    G(zeta) = -conj(a) log(zeta) - conj(c_p) log(zeta - zeta0)
              - conj(c_i) log(1 - conj(zeta0) zeta) + i log(zeta) W(zeta) + G_rat(zeta)

with ``W = F'(zeta)/Z'(zeta) = i zeta F'(zeta)`` and rational parts made of
poles at ``zeta0``, poles at the wall image ``1/conj(zeta0)``, a constant and the
two-sided Laurent series ``sum F_n zeta^n + H_n (rho/zeta)^n``.

Poles at ``zeta0`` are stored as coefficients of powers of
``u = zeta0/(zeta - zeta0) = 1/expm1(i (z - z0))``, so a pole term
``q_k/(zeta - zeta0)**k`` is held as ``c_k = q_k/zeta0**k``.  In this variable
``D u = -u (1 + u)`` and no power of ``zeta0`` appears, which keeps the
leading singular coefficients exact.  Image poles are held in powers of
``s = 1/(1 - conj(zeta0) zeta)``.  The logarithms
only ever enter the velocity through ``log|.|^2`` so no branch cut is touched.

Derivatives are taken with ``D = zeta d/dzeta`` so that ``d/dz = i D``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stokes_lattice.model import TWO_PI

_EMPTY = np.zeros(0, dtype=complex)
_SCALAR_BATCH = 4


def _frozen(values):
    arr = np.array(values if values is not None else _EMPTY, dtype=complex).ravel()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GoursatParts:
    """Coefficient record for one periodic singularity array."""

    z0: complex
    rho: float = 0.0
    log_z: complex = 0j
    log_pole: complex = 0j
    log_image: complex = 0j
    f_poles: np.ndarray = field(default=_EMPTY)
    f_image: np.ndarray = field(default=_EMPTY)
    f_const: complex = 0j
    g_poles: np.ndarray = field(default=_EMPTY)
    g_image: np.ndarray = field(default=_EMPTY)
    g_const: complex = 0j
    F: np.ndarray = field(default=_EMPTY)
    H: np.ndarray = field(default=_EMPTY)
    G: np.ndarray = field(default=_EMPTY)
    K: np.ndarray = field(default=_EMPTY)

    def __post_init__(self):
        for name in ("f_poles", "f_image", "g_poles", "g_image", "F", "H", "G", "K"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        for name in ("z0", "log_z", "log_pole", "log_image", "f_const", "g_const"):
            object.__setattr__(self, name, complex(getattr(self, name)))

    @property
    def zeta0(self) -> complex:
        return complex(np.exp(1j * self.z0))

    @property
    def n_terms(self) -> int:
        return max(len(self.F), len(self.H), len(self.G), len(self.K))

    @property
    def w_poles(self) -> np.ndarray:
        """Coefficients of the pole part of ``W = i D F`` in powers of ``u``."""
        cached = self.__dict__.get("_w_poles")
        if cached is not None:
            return cached
        p = self.f_poles
        w = np.zeros(max(len(p) + 1, 1), dtype=complex)
        for k in range(1, len(p) + 1):
            # i D(c u^k) = -i k c (u^k + u^(k+1))
            w[k - 1] += -1j * k * p[k - 1]
            w[k] += -1j * k * p[k - 1]
        if self.log_pole != 0:
            w[0] += 1j * self.log_pole        # D log(zeta - zeta0) = 1 + u
        w.flags.writeable = False
        object.__setattr__(self, "_w_poles", w)
        return w

    @property
    def folded_g_poles(self) -> np.ndarray:
        """Coefficients of ``G_poles - 2 i Im(z0) W_poles`` in powers of ``u``.

        Near ``z0`` the two pieces are each of the size of ``f'`` and cancel
        down to the size of the local velocity.  Combining them once keeps the
        evaluation accurate there; coefficients that cancel up to rounding are
        set to zero.
        """
        cached = self.__dict__.get("_folded")
        if cached is not None:
            return cached
        w = self.w_poles
        K = max(len(w), len(self.g_poles))
        g = np.zeros(K, dtype=complex)
        g[: len(self.g_poles)] = self.g_poles
        shift = np.zeros(K, dtype=complex)
        shift[: len(w)] = -2j * self.z0.imag * w
        out = g + shift
        tiny = 64 * np.finfo(float).eps * np.maximum(np.abs(g), np.abs(shift))
        out[np.abs(out) <= tiny] = 0.0
        out.flags.writeable = False
        object.__setattr__(self, "_folded", out)
        return out

    def replace(self, **changes) -> "GoursatParts":
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return GoursatParts(**values)


def reduced_offset(z, z0):
    """``z - z0`` shifted by a multiple of ``2*pi`` into ``[-pi, pi)``."""
    dz = np.asarray(z, dtype=complex) - z0
    return dz - TWO_PI * np.round(dz.real / TWO_PI)


def _series(coeffs, w, weight_power=0):
    """Horner evaluation of ``sum_n n**p c_n w**n`` for ``n >= 1``."""
    n_max = len(coeffs)
    if w.size <= _SCALAR_BATCH:
        # per-call numpy overhead dominates for a handful of points (streamline tracing)
        c = (np.asarray(coeffs) * np.arange(1, n_max + 1, dtype=float) ** weight_power).tolist()[::-1]
        vals = []
        for wi in w.ravel().tolist():
            acc = 0j
            for cn in c:
                acc = (acc + cn) * wi
            vals.append(acc)
        return np.array(vals, dtype=complex).reshape(w.shape)
    out = np.zeros_like(w)
    for n in range(n_max, 0, -1):
        out = (out + coeffs[n - 1] * float(n) ** weight_power) * w
    return out


def _poly(coeffs, t, weights=None):
    """``sum_k weights(k) c_k t**k`` for ``k = 1..len(coeffs)``."""
    out = np.zeros_like(t)
    for k in range(len(coeffs), 0, -1):
        wk = 1.0 if weights is None else weights(k)
        out = (out + wk * coeffs[k - 1]) * t
    return out


@dataclass
class Evaluation:
    """Raw evaluation of the Goursat pieces at a batch of points."""

    velocity: np.ndarray   # u - i v
    W: np.ndarray          # f'(z) = i D F
    DDF: np.ndarray        # D^2 F, so f''(z) = -D^2 F
    F_rat: np.ndarray
    G_rat: np.ndarray
    DG_rat: np.ndarray
    Dlog_g: np.ndarray     # D of the logarithmic part of G (without the i log(zeta) W term)


def evaluate(parts: GoursatParts, z, need_second=False) -> Evaluation:
    """Evaluate velocity and the Goursat pieces at canonical points ``z``.

    ``Re z`` is first reduced into ``[0, 2 pi)``.  Near ``z0`` the term
    ``i log|zeta|^2 W = -2 i y W`` is split as
    ``-2 i (y - y0) W - 2 i y0 W`` and the pole part of the second piece is
    merged with the poles of ``G`` (see ``GoursatParts.folded_g_poles``).
    """
    z = np.asarray(z, dtype=complex)
    x = z.real
    x = x - TWO_PI * np.floor(x / TWO_PI)
    y = z.imag
    z = x + 1j * y
    zeta = np.exp(1j * z)
    zeta0 = parts.zeta0
    rho = parts.rho
    y0 = parts.z0.imag

    vel = -np.conj(parts.log_z) * (-2.0 * y)
    DF = np.full(z.shape, parts.log_z, dtype=complex)     # regular part of D F
    DDF = np.zeros(z.shape, dtype=complex)
    Dlog_g = np.full(z.shape, -np.conj(parts.log_z), dtype=complex)
    F_rat = np.full(z.shape, parts.f_const, dtype=complex)
    G_reg = np.full(z.shape, parts.g_const, dtype=complex)
    DG_rat = np.zeros(z.shape, dtype=complex)
    W_pole = G_pole = G_fold = dy = None

    need_pole = parts.log_pole != 0 or len(parts.f_poles) or len(parts.g_poles)
    if need_pole:
        dz = reduced_offset(z, parts.z0)
        dy = dz.imag
        u = 1.0 / np.expm1(1j * dz)            # zeta0/(zeta - zeta0)
        one_u = 1.0 + u
        if parts.log_pole != 0:
            c = parts.log_pole
            # log|zeta - zeta0|^2 = log|zeta0|^2 - log|u|^2
            vel = vel - np.conj(c) * (-2.0 * y0 - 2.0 * np.log(np.abs(u)))
            DF = DF + c
            Dlog_g = Dlog_g - np.conj(c) * one_u
            if need_second:
                DDF = DDF - c * u * one_u
        if len(parts.f_poles):
            p = parts.f_poles
            F_rat = F_rat + _poly(p, u)
            if need_second:
                k1 = _poly(p, u, weights=float)
                k2 = _poly(p, u, weights=lambda k: float(k * k))
                DDF = DDF + one_u * (one_u * k2 + u * k1)
        if len(parts.g_poles):
            q = parts.g_poles
            G_pole = _poly(q, u)
            DG_rat = DG_rat - one_u * _poly(q, u, weights=float)
        W_pole = _poly(parts.w_poles, u)
        G_fold = _poly(parts.folded_g_poles, u)

    need_image = parts.log_image != 0 or len(parts.f_image) or len(parts.g_image)
    if need_image:
        zb0 = np.conj(zeta0)
        one_minus = 1.0 - zb0 * zeta
        s = 1.0 / one_minus
        zs = zb0 * zeta * s
        if parts.log_image != 0:
            c = parts.log_image
            vel = vel - np.conj(c) * np.log(np.abs(one_minus) ** 2)
            DF = DF - c * zs
            Dlog_g = Dlog_g + np.conj(c) * zs
            if need_second:
                DDF = DDF - c * (zs + zs * zs)
        if len(parts.f_image):
            p = parts.f_image
            F_rat = F_rat + _poly(p, s)
            DF = DF + zs * _poly(p, s, weights=float)
            if need_second:
                DDF = DDF + zs * _poly(p, s, weights=float) \
                    + zs * zs * _poly(p, s, weights=lambda k: k * (k + 1.0))
        if len(parts.g_image):
            q = parts.g_image
            G_reg = G_reg + _poly(q, s)
            DG_rat = DG_rat + zs * _poly(q, s, weights=float)

    if parts.n_terms:
        w = rho / zeta
        F_rat = F_rat + _series(parts.F, zeta) + _series(parts.H, w)
        DF = DF + _series(parts.F, zeta, 1) - _series(parts.H, w, 1)
        if need_second:
            DDF = DDF + _series(parts.F, zeta, 2) + _series(parts.H, w, 2)
        G_reg = G_reg + _series(parts.G, zeta) + _series(parts.K, w)
        DG_rat = DG_rat + _series(parts.G, zeta, 1) - _series(parts.K, w, 1)

    W_reg = 1j * DF
    if W_pole is None:
        W = W_reg
        G_rat = G_reg
        vel = vel - 2j * y * W - np.conj(F_rat) + G_reg
    else:
        W = W_reg + W_pole
        G_rat = G_reg if G_pole is None else G_reg + G_pole
        vel = vel - 2j * dy * W - 2j * y0 * W_reg + G_fold + G_reg - np.conj(F_rat)
    return Evaluation(vel, W, DDF, F_rat, G_rat, DG_rat, Dlog_g)


def goursat_values(parts: GoursatParts, z):
    """Return ``(f, f', g')`` at ``z`` with principal logarithms.

    ``log(zeta)`` is taken as ``i z`` so the values are continuous in ``z``;
    ``log(zeta - zeta0)`` and ``log(1 - conj(zeta0) zeta)`` use the principal
    branch and are only safe away from their cuts.
    """
    z = np.asarray(z, dtype=complex)
    ev = evaluate(parts, z)
    zeta = np.exp(1j * z)
    log_zeta = 1j * z
    f = parts.log_z * log_zeta + ev.F_rat
    g1 = -np.conj(parts.log_z) * log_zeta + ev.G_rat - z * ev.W
    if parts.log_pole != 0:
        L = np.log(zeta - parts.zeta0)
        f = f + parts.log_pole * L
        g1 = g1 - np.conj(parts.log_pole) * L
    if parts.log_image != 0:
        L = np.log(1.0 - np.conj(parts.zeta0) * zeta)
        f = f + parts.log_image * L
        g1 = g1 - np.conj(parts.log_image) * L
    return f, ev.W, g1
