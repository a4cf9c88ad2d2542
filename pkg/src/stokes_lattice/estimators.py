"""Scikit-learn style front end for periodic singularity arrays.

The estimators carry a physical problem in their constructor parameters.
``fit`` builds the solution; ``predict`` and ``transform`` sample it at an
``(n, 2)`` array of physical ``(x, y)`` points.  There is nothing to learn, so
``fit`` ignores its data apart from recording the feature count.

Examples
--------
>>> flow = ChannelArrayFlow(kind="stokeslet", mu=1j, z0=complex(3.14, 0.36), height_h=2.0).fit()
>>> flow.predict([[1.0, 0.5]]).shape
(1, 2)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from stokes_lattice.flow import EXCLUSION_RADIUS, eval_sample
from stokes_lattice.model import TWO_PI, Kind
from stokes_lattice.problem import ProblemConfig, SingularityEntry

__all__ = ["ChannelArrayFlow", "HalfPlaneArrayFlow"]


class _ArrayFlow(TransformerMixin, BaseEstimator):
    _domain = "channel"

    def _config(self) -> ProblemConfig:
        entry = SingularityEntry(Kind.parse(self.kind), complex(self.mu), complex(self.z0))
        height = getattr(self, "height_h", None)
        return ProblemConfig(self._domain, float(self.period_l), height, (entry,), 1.0, float(self.tol))

    def fit(self, X=None, y=None):
        """Build the solution.  ``X`` and ``y`` are accepted for pipeline use only."""
        if X is not None:
            X = check_array(X)
            self.n_features_in_ = X.shape[1]
        config = self._config()
        self.config_ = config
        self.solutions_ = config.build()
        self.scale_c_ = config.scale_c
        return self

    def _fields(self, X):
        check_is_fitted(self, "solutions_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError(f"X must have two columns (x, y), got {X.shape[1]}")
        z = self.config_.to_canonical_points(X[:, 0], X[:, 1])
        return eval_sample(self.solutions_, z, self.exclusion_radius)

    def predict(self, X):
        """Velocity ``(u, v)`` at the rows of ``X``; shape ``(n, 2)``."""
        u, v, _, _ = self._fields(X)
        return np.column_stack([u, v])

    def transform(self, X):
        """``(u, v, p/eta, omega)`` at the rows of ``X``; shape ``(n, 4)``."""
        u, v, p, w = self._fields(X)
        c = self.scale_c_
        return np.column_stack([u, v, c * p, c * w])

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = True
        return tags


class ChannelArrayFlow(_ArrayFlow):
    """Periodic array of one singularity kind in a no-slip channel.

    Parameters
    ----------
    kind : str
        ``stokeslet``, ``stresslet``, ``force_quadrupole``, ``source_dipole``
        or ``source_quadrupole``.
    mu : complex
        Physical strength.
    z0 : complex
        Physical position of one array member, ``0 < Im z0 < height_h``.
    period_l, height_h : float
        Array spacing and channel height.
    tol : float
        Target wall residual of the series build.
    exclusion_radius : float
        Canonical distance from a singularity image below which evaluation
        raises instead of returning a diverging value.
    """

    _domain = "channel"

    def __init__(self, kind="stokeslet", mu=1.0, z0=complex(np.pi, 1.0), period_l=TWO_PI,
                 height_h=2.0, tol=1e-12, exclusion_radius=EXCLUSION_RADIUS):
        self.kind = kind
        self.mu = mu
        self.z0 = z0
        self.period_l = period_l
        self.height_h = height_h
        self.tol = tol
        self.exclusion_radius = exclusion_radius


class HalfPlaneArrayFlow(_ArrayFlow):
    """Periodic array of one singularity kind above a single no-slip wall.

    Parameters are those of :class:`ChannelArrayFlow` without ``height_h``;
    ``tol`` is kept for a uniform interface (the half-plane forms are closed).
    """

    _domain = "halfplane"

    def __init__(self, kind="stokeslet", mu=1.0, z0=complex(np.pi, 1.0), period_l=TWO_PI,
                 tol=1e-12, exclusion_radius=EXCLUSION_RADIUS):
        self.kind = kind
        self.mu = mu
        self.z0 = z0
        self.period_l = period_l
        self.tol = tol
        self.exclusion_radius = exclusion_radius
