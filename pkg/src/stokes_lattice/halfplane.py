"""Periodic singularity arrays above a single no-slip wall.

With ``rho -> 0`` the annulus becomes the unit disc and the Laurent series of
the channel problem sum to finitely many poles at the image point
``1/conj(zeta0)``; no truncation is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stokes_lattice.errors import ConfigurationError
from stokes_lattice.channel import pole_coefficients
from stokes_lattice.goursat import GoursatParts
from stokes_lattice.model import HalfPlaneGeometry, Kind, Singularity, SingularitySpec


@dataclass(frozen=True)
class HalfPlaneSolution:
    geometry: HalfPlaneGeometry
    spec: SingularitySpec
    constants: dict
    parts: GoursatParts
    domain: str = field(default="halfplane", init=False)
    built_tolerance: float = field(default=0.0, init=False)

    @property
    def h(self) -> float:
        return float("inf")

    @property
    def N(self) -> int:
        return 0


def halfplane_constants(kind, mu, z0) -> dict:
    kind = Kind.parse(kind)
    mu = complex(mu)
    mub = mu.conjugate()
    z0 = complex(z0)
    y0 = z0.imag
    zeta0 = complex(np.exp(1j * z0))
    if kind is Kind.STOKESLET:
        kappa = mub * (-2.0 * y0)
        return {"epsilon": -mu, "kappa": kappa, "lambda": -kappa}
    if kind is Kind.STRESSLET:
        return {"beta": 1j * mub * (2.0 * y0 + 1.0), "gamma": -2j * mub * y0,
                "chi": 1j * mu * zeta0 * (2.0 * y0 - 1.0),
                "nu": 2j * mu * zeta0 ** 2 * y0}
    if kind is Kind.FORCE_QUADRUPOLE:
        return {"beta": -2.0 * mub * (1.0 + y0), "gamma": 2.0 * mub * (1.0 + 3.0 * y0),
                "delta": -4.0 * mub * y0,
                "epsilon": 2.0 * mu * zeta0 * (1.0 - y0),
                "kappa": 2.0 * mu * zeta0 ** 2 * (1.0 - 3.0 * y0),
                "lambda": -4.0 * mu * zeta0 ** 3 * y0}
    if kind is Kind.SOURCE_DIPOLE:
        return {"f_image": (-mub, mub), "g_poles": (mu * zeta0, mu * zeta0 ** 2)}
    return {"f_image": (-1j * mub, 3j * mub, -2j * mub),
            "g_poles": (1j * mu * zeta0, 3j * mu * zeta0 ** 2, 2j * mu * zeta0 ** 3)}


def halfplane_parts(kind, mu, z0) -> GoursatParts:
    kind = Kind.parse(kind)
    mu = complex(mu)
    mub = mu.conjugate()
    c = halfplane_constants(kind, mu, z0)
    fp, gp = pole_coefficients(kind, mu, complex(z0).imag)
    if kind is Kind.STOKESLET:
        return GoursatParts(z0=z0, log_pole=mu, log_image=c["epsilon"],
                            f_image=[c["kappa"]], f_const=c["lambda"], g_poles=gp)
    if kind is Kind.STRESSLET:
        return GoursatParts(z0=z0, f_poles=fp, f_image=[c["beta"], c["gamma"]],
                            f_const=-1j * mub, g_poles=gp, g_image=[-1j * mub],
                            g_const=1j * mub)
    if kind is Kind.FORCE_QUADRUPOLE:
        return GoursatParts(z0=z0, f_poles=fp,
                            f_image=[c["beta"], c["gamma"], c["delta"]],
                            g_poles=gp, g_image=[mub, -mub])
    return GoursatParts(z0=z0, f_image=c["f_image"], g_poles=gp)


def build_halfplane_solution(kind, mu, z0, geometry=None) -> HalfPlaneSolution:
    """Closed-form half-plane solution for canonical ``(mu, z0)``, ``Im z0 > 0``."""
    geometry = geometry or HalfPlaneGeometry()
    kind = Kind.parse(kind)
    spec = SingularitySpec(Singularity(kind, mu), z0)
    if not spec.z0.imag > 0:
        raise ConfigurationError(f"half-plane singularity needs Im z0 > 0, got {spec.z0}")
    spec.check_inside(geometry)
    return HalfPlaneSolution(geometry, spec, halfplane_constants(kind, spec.mu, spec.z0),
                             halfplane_parts(kind, spec.mu, spec.z0))
