"""Thin scikit-learn style wrappers around the solvers.

Nothing here is learned from data: ``fit`` validates hyperparameters and
precomputes what can be reused, ``transform``/``predict`` map rows of flat
inputs to rows of flat outputs. Rows are laid out body by body.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .asymptotics import limit_shape
from .busemann import BusemannField
from .core import MassSystem
from .flow import PhaseState
from .scattering import solve_asymptotic_velocity

__all__ = ["LimitShapeTransformer", "AsymptoticVelocitySolver", "BusemannFunction"]


class _SystemMixin:
    def _system(self) -> MassSystem:
        return MassSystem(np.asarray(self.masses, dtype=float), int(self.dim))

    def _check_rows(self, X, blocks: int) -> np.ndarray:
        X = check_array(X, dtype=float, ensure_all_finite=True)
        width = blocks * self.system_.size
        if X.shape[1] != width:
            raise ValueError(f"expected {width} columns, got {X.shape[1]}")
        return X


class LimitShapeTransformer(_SystemMixin, TransformerMixin, BaseEstimator):
    """Map phase states ``[x, v]`` (``2 N d`` columns) to limit shapes (``N d`` columns).

    Parameters
    ----------
    masses : sequence of float
    dim : int
    tol : float
        Limit-shape tolerance per row.
    """

    def __init__(self, masses: Sequence[float] = (1.0, 1.0), dim: int = 2, tol: float = 1e-10):
        self.masses = masses
        self.dim = dim
        self.tol = tol

    def fit(self, X=None, y=None):
        self.system_ = self._system()
        if X is not None:
            self._check_rows(X, 2)
        self.n_features_in_ = 2 * self.system_.size
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "system_")
        X = self._check_rows(X, 2)
        n = self.system_.size
        out = [limit_shape(self.system_, PhaseState(r[:n], r[n:]), tol=self.tol).a_hat.reshape(-1) for r in X]
        return np.array(out)


class AsymptoticVelocitySolver(_SystemMixin, BaseEstimator):
    """Predict initial velocities from rows ``[x0, a]`` by shooting."""

    def __init__(self, masses: Sequence[float] = (1.0, 1.0), dim: int = 2, tol: float = 1e-10, max_iter: int = 30):
        self.masses = masses
        self.dim = dim
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X=None, y=None):
        self.system_ = self._system()
        if X is not None:
            self._check_rows(X, 2)
        self.n_features_in_ = 2 * self.system_.size
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "system_")
        X = self._check_rows(X, 2)
        n = self.system_.size
        out = [
            solve_asymptotic_velocity(self.system_, r[:n], r[n:], tol=self.tol, max_iter=self.max_iter).v_star.reshape(-1)
            for r in X
        ]
        return np.array(out)


class BusemannFunction(_SystemMixin, BaseEstimator):
    """Busemann function directed by ``limit_shape``; rows of ``X`` are configurations.

    ``fit`` builds the cached evaluator (and, when ``X`` is given, warms the
    anchor terms with the schedule of the farthest row); ``predict`` returns
    estimated values and ``gradient`` the shooting gradients.
    """

    def __init__(
        self,
        masses: Sequence[float] = (1.0, 1.0),
        dim: int = 2,
        limit_shape=None,
        h: Optional[float] = None,
        schedule: Optional[Sequence[float]] = None,
        tol: float = 1e-10,
    ):
        self.masses = masses
        self.dim = dim
        self.limit_shape = limit_shape
        self.h = h
        self.schedule = schedule
        self.tol = tol

    def fit(self, X=None, y=None):
        self.system_ = self._system()
        if self.limit_shape is None:
            raise ValueError("limit_shape must be given")
        self.field_ = BusemannField(self.system_, self.limit_shape, self.h, self.schedule, tol=self.tol)
        self.n_features_in_ = self.system_.size
        if X is not None:
            X = self._check_rows(X, 1)
            far = X[np.argmax(np.linalg.norm(X, axis=1))]
            lam = self.field_.schedule_for(far)
            for l in lam:
                self.field_.phi(self.field_.origin, l * self.field_.a_h)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "field_")
        X = self._check_rows(X, 1)
        return np.array([self.field_.value(r) for r in X])

    def gradient(self, X) -> np.ndarray:
        check_is_fitted(self, "field_")
        X = self._check_rows(X, 1)
        return np.array([self.field_.gradient(r, tol=self.tol).reshape(-1) for r in X])
