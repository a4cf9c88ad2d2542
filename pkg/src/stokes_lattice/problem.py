"""Physical problem descriptions and their conversion to built solutions.

A :class:`ProblemConfig` holds a geometry, viscosity, target tolerance and a
list of singularities in physical coordinates.  It is what the CLI reads from
JSON and what the estimators assemble from their parameters.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from stokes_lattice.channel import build_channel_solution
from stokes_lattice.errors import ConfigurationError
from stokes_lattice.halfplane import build_halfplane_solution
from stokes_lattice.model import (TWO_PI, ChannelGeometry, HalfPlaneGeometry, Kind, Singularity,
                                  canonicalize)

log = logging.getLogger(__name__)

DOMAINS = ("channel", "halfplane")


def _pair(value, name):
    """``[re, im]``, a bare number or a complex, as a complex number."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigurationError(f"{name} must be a [re, im] pair")
        try:
            out = complex(float(value[0]), float(value[1]))
        except (TypeError, ValueError):
            raise ConfigurationError(f"{name} must hold two numbers") from None
    else:
        try:
            out = complex(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"{name} must be a number or a [re, im] pair") from None
    if not (math.isfinite(out.real) and math.isfinite(out.imag)):
        raise ConfigurationError(f"{name} must be finite")
    return out


@dataclass(frozen=True)
class SingularityEntry:
    kind: Kind
    mu: complex
    z0: complex

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "mu": [self.mu.real, self.mu.imag],
                "z0": [self.z0.real, self.z0.imag]}


@dataclass(frozen=True)
class ProblemConfig:
    """Problem in physical units.

    Attributes
    ----------
    domain : {"channel", "halfplane"}
    period_l : float
        Spacing of the array along the wall.
    height_h : float or None
        Channel height (channel only).
    singularities : tuple of SingularityEntry
        Physical strengths and positions.
    eta : float
        Viscosity, used only for force reporting.
    tolerance : float
        Target wall residual of each channel build.
    """

    domain: str = "channel"
    period_l: float = TWO_PI
    height_h: float | None = 2.0
    singularities: tuple = field(default_factory=tuple)
    eta: float = 1.0
    tolerance: float = 1e-12

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ConfigurationError(f"geometry.domain must be one of {DOMAINS}, got {self.domain!r}")
        if self.domain == "halfplane":
            object.__setattr__(self, "height_h", None)
        elif self.height_h is None:
            raise ConfigurationError("channel geometry needs height_h")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ConfigurationError("eta must be positive")
        if not (0 < self.tolerance < 1):
            raise ConfigurationError("tolerance must lie in (0, 1)")
        # re-validates period, height and every placement
        self.canonical()

    # ------------------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "ProblemConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        geo = data.get("geometry", {})
        if not isinstance(geo, dict):
            raise ConfigurationError("geometry must be an object")
        domain = str(geo.get("domain", "channel"))
        try:
            period = float(geo.get("period_l", TWO_PI))
            height = geo.get("height_h", 2.0 if domain == "channel" else None)
            height = None if height is None else float(height)
            eta = float(data.get("eta", 1.0))
            tol = float(data.get("tolerance", 1e-12))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid number in config: {exc}") from None
        raw = data.get("singularities", [])
        if not isinstance(raw, list):
            raise ConfigurationError("singularities must be a list")
        entries = []
        for i, item in enumerate(raw):
            if not isinstance(item, dict) or "kind" not in item or "z0" not in item:
                raise ConfigurationError(f"singularity #{i}: needs 'kind', 'mu' and 'z0'")
            try:
                entries.append(SingularityEntry(Kind.parse(item["kind"]),
                                                _pair(item.get("mu", 1.0), f"singularity #{i} mu"),
                                                _pair(item["z0"], f"singularity #{i} z0")))
            except ConfigurationError as exc:
                msg = str(exc)
                raise ConfigurationError(msg if msg.startswith("singularity #") else f"singularity #{i}: {msg}") \
                    from None
        return cls(domain, period, height, tuple(entries), eta, tol)

    @classmethod
    def load(cls, path) -> "ProblemConfig":
        """Read a JSON config; I/O errors propagate as ``OSError``."""
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        geo = {"domain": self.domain, "period_l": self.period_l}
        if self.domain == "channel":
            geo["height_h"] = self.height_h
        return {"geometry": geo, "singularities": [s.to_dict() for s in self.singularities],
                "eta": self.eta, "tolerance": self.tolerance}

    # ------------------------------------------------------------------
    def geometry(self):
        if self.domain == "channel":
            return ChannelGeometry(self.period_l, self.height_h)
        return HalfPlaneGeometry(self.period_l)

    @property
    def scale_c(self) -> float:
        return TWO_PI / self.period_l

    def canonical(self):
        return canonicalize(self.geometry(), [(Singularity(s.kind, s.mu), s.z0) for s in self.singularities])

    def build(self, tol=None):
        """Build one solution per singularity (canonical frame)."""
        problem = self.canonical()
        tol = self.tolerance if tol is None else tol
        out = []
        for spec in problem.specs:
            if self.domain == "channel":
                out.append(build_channel_solution(spec.kind, spec.mu, spec.z0, problem.geometry, tol))
            else:
                out.append(build_halfplane_solution(spec.kind, spec.mu, spec.z0, problem.geometry))
        log.info("built %d solution(s) for the %s problem", len(out), self.domain)
        return out

    def to_canonical_points(self, x, y):
        c = self.scale_c
        return c * np.asarray(x, dtype=float) + 1j * c * np.asarray(y, dtype=float)

    @property
    def canonical_height(self) -> float:
        return math.inf if self.domain == "halfplane" else self.scale_c * self.height_h
