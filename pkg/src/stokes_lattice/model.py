"""Domain types, the map ``z = -i log(zeta)`` and rescaling to the 2*pi frame.

All solvers work in the canonical frame where the period is ``2*pi``; a channel
of height ``h`` then maps to the annulus ``rho < |zeta| < 1`` with
``rho = exp(-h)``.  Physical problems with another period are brought to that
frame by :func:`canonicalize`.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from stokes_lattice.errors import ConfigurationError, DomainError

TWO_PI = 2.0 * math.pi

# Relative wall clearance demanded of every singularity (in |zeta0|).
WALL_CLEARANCE = 1e-8


class Kind(str, Enum):
    STOKESLET = "stokeslet"
    STRESSLET = "stresslet"
    FORCE_QUADRUPOLE = "force_quadrupole"
    SOURCE_DIPOLE = "source_dipole"
    SOURCE_QUADRUPOLE = "source_quadrupole"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"dipole": "source_dipole", "quadrupole": "source_quadrupole",
                   "forcequadrupole": "force_quadrupole",
                   "sourcedipole": "source_dipole",
                   "sourcequadrupole": "source_quadrupole"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"unknown singularity kind {value!r}") from None

    @property
    def strength_order(self) -> int:
        """Power of the length scale carried by the strength ``mu``.

        Equal to the pole order of the velocity's local form, so that the
        velocity field is unchanged when lengths are rescaled.
        """
        return _STRENGTH_ORDER[self]


_STRENGTH_ORDER = {
    Kind.STOKESLET: 0,
    Kind.STRESSLET: 1,
    Kind.FORCE_QUADRUPOLE: 2,
    Kind.SOURCE_DIPOLE: 2,
    Kind.SOURCE_QUADRUPOLE: 3,
}

KINDS = tuple(Kind)


def _finite_complex(value, name):
    value = complex(value)
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise ConfigurationError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Singularity:
    """A point singularity of a given kind with complex strength ``mu``."""

    kind: Kind
    mu: complex

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        object.__setattr__(self, "mu", _finite_complex(self.mu, "mu"))


@dataclass(frozen=True)
class ChannelGeometry:
    """Channel of physical period ``period_l`` and height ``height_h``."""

    period_l: float
    height_h: float
    canonical_h: float = field(init=False)
    rho: float = field(init=False)
    scale_c: float = field(init=False)

    def __post_init__(self):
        if not (self.period_l > 0 and math.isfinite(self.period_l)):
            raise ConfigurationError("period_l must be positive and finite")
        if not (self.height_h > 0 and math.isfinite(self.height_h)):
            raise ConfigurationError("height_h must be positive and finite")
        c = TWO_PI / self.period_l
        h = c * self.height_h
        object.__setattr__(self, "scale_c", c)
        object.__setattr__(self, "canonical_h", h)
        object.__setattr__(self, "rho", math.exp(-h))

    @classmethod
    def canonical(cls, h: float) -> "ChannelGeometry":
        return cls(TWO_PI, h)

    @property
    def domain(self) -> str:
        return "channel"


@dataclass(frozen=True)
class HalfPlaneGeometry:
    """Upper half-plane above a wall, with physical period ``period_l``."""

    period_l: float = TWO_PI
    scale_c: float = field(init=False)

    def __post_init__(self):
        if not (self.period_l > 0 and math.isfinite(self.period_l)):
            raise ConfigurationError("period_l must be positive and finite")
        object.__setattr__(self, "scale_c", TWO_PI / self.period_l)

    @property
    def rho(self) -> float:
        return 0.0

    @property
    def canonical_h(self) -> float:
        return math.inf

    @property
    def domain(self) -> str:
        return "halfplane"


@dataclass(frozen=True)
class SingularitySpec:
    """A singularity placed at canonical position ``z0``."""

    singularity: Singularity
    z0: complex
    zeta0: complex = field(init=False)

    def __post_init__(self):
        z0 = _finite_complex(self.z0, "z0")
        object.__setattr__(self, "z0", z0)
        object.__setattr__(self, "zeta0", cmath.exp(1j * z0))

    @property
    def kind(self) -> Kind:
        return self.singularity.kind

    @property
    def mu(self) -> complex:
        return self.singularity.mu

    def check_inside(self, geometry) -> None:
        """Raise :class:`ConfigurationError` unless strictly inside the fluid."""
        y0 = self.z0.imag
        r = abs(self.zeta0)
        if r > 1.0 - WALL_CLEARANCE or y0 <= 0:
            raise ConfigurationError(
                f"{self.kind.value} at z0={self.z0} is on or below the lower wall")
        if geometry.domain == "channel":
            if r < geometry.rho * (1.0 + WALL_CLEARANCE) or y0 >= geometry.canonical_h:
                raise ConfigurationError(
                    f"{self.kind.value} at z0={self.z0} is on or above the upper "
                    f"wall (h={geometry.canonical_h})")


@dataclass(frozen=True)
class FlowSample:
    """Velocity, pressure over viscosity and vorticity at one point."""

    u: float
    v: float
    p_over_eta: float
    omega: float


def zeta_of_z(z):
    """Image of ``z`` under ``zeta = exp(i z)``; works on scalars and arrays."""
    return np.exp(1j * np.asarray(z, dtype=complex)) if np.ndim(z) else cmath.exp(1j * complex(z))


def z_of_zeta(zeta):
    """Inverse map ``z = -i log(zeta)`` with ``Re z`` in ``[0, 2*pi)``."""
    zeta_arr = np.asarray(zeta, dtype=complex)
    if np.any(zeta_arr == 0):
        raise DomainError("z_of_zeta is undefined at zeta = 0")
    x = np.mod(np.angle(zeta_arr), TWO_PI)
    # angle() is exact for negative reals (pi); guard the 2*pi roundoff case
    x = np.where(x >= TWO_PI, 0.0, x)
    z = x - 1j * np.log(np.abs(zeta_arr))
    return z if np.ndim(zeta) else complex(z)


@dataclass(frozen=True)
class CanonicalProblem:
    geometry: object
    specs: tuple
    strength_factors: tuple

    @property
    def report(self):
        return [
            {"kind": s.kind.value, "factor": f, "mu": [s.mu.real, s.mu.imag],
             "z0": [s.z0.real, s.z0.imag]}
            for s, f in zip(self.specs, self.strength_factors)
        ]


def canonicalize(geometry, singularities):
    """Rescale a physical problem to the ``2*pi``-periodic frame.

    Parameters
    ----------
    geometry : ChannelGeometry or HalfPlaneGeometry
        Physical geometry.
    singularities : iterable of (Singularity, complex)
        Strengths and physical positions.

    Returns
    -------
    CanonicalProblem
        Geometry, canonical :class:`SingularitySpec` tuple and the strength
        factor ``c**m`` applied to each entry (``c = 2*pi/period_l``).
    """
    c = geometry.scale_c
    specs, factors = [], []
    for i, (sing, pos) in enumerate(singularities):
        sing = sing if isinstance(sing, Singularity) else Singularity(*sing)
        factor = c ** sing.kind.strength_order
        spec = SingularitySpec(Singularity(sing.kind, sing.mu * factor),
                               _finite_complex(pos, "z0") * c)
        try:
            spec.check_inside(geometry)
        except ConfigurationError as exc:
            raise ConfigurationError(f"singularity #{i}: {exc}") from None
        specs.append(spec)
        factors.append(factor)
    return CanonicalProblem(geometry, tuple(specs), tuple(factors))
