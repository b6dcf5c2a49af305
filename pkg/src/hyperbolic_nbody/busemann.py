"""Busemann functions directed by a limit shape.

``b_a(x)`` is approximated by the horofunction sequence

    u_n(x) = phi_h(x, p_n) - phi_h(0, p_n),    p_n = lambda_n a_h,

with ``a_h`` the rescaling of ``a`` to speed ``sqrt(2h)``. Its gradient on
the cone is given exactly by shooting: ``grad b_a(x) = -v`` where ``v`` is
the initial velocity at ``x`` of the motion with limit shape ``a_h``.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .action import action_free_time
from .asymptotics import limit_shape
from .core import ConeSpec, MassSystem, alpha0, mass_inner, mass_norm, potential
from .flow import PhaseState, Trajectory
from .scattering import solve_asymptotic_velocity

__all__ = [
    "BusemannEstimate",
    "BusemannField",
    "default_schedule",
    "busemann_estimate",
    "busemann_from_ray",
    "busemann_gradient",
    "busemann_constancy_check",
    "one_sided_derivatives",
    "action_tolerance",
]


def action_tolerance(ms: MassSystem, x, y, h: float, rtol: float) -> float:
    """Absolute tolerance for ``phi_h(x, y)``: ``rtol`` times its lower bound."""
    return float(rtol * np.sqrt(2.0 * h) * max(mass_norm(ms, ms.config(y) - ms.config(x)), 1.0))


def _renormalize(ms: MassSystem, a, h: Optional[float]):
    a = ms.config(a)
    na = mass_norm(ms, a)
    if na == 0:
        raise ValueError("limit shape must be nonzero")
    if h is None:
        h = 0.5 * na**2
    if not h > 0:
        raise ValueError("h must be positive")
    return a * np.sqrt(2.0 * h) / na, float(h)


def default_schedule(ms: MassSystem, x, r0: float = 0.0, n_terms: int = 7) -> np.ndarray:
    """``lambda_n = lambda_0 2^n`` with ``lambda_0 = 8 max(|x|, r0)``."""
    lam0 = 8.0 * max(mass_norm(ms, x), r0, 1e-12)
    return lam0 * 2.0 ** np.arange(n_terms)


@dataclass
class BusemannEstimate:
    value: float
    partials: np.ndarray
    schedule: np.ndarray
    gap: float
    anchor: str
    x: np.ndarray
    a_h: np.ndarray
    h: float
    target_values: np.ndarray = field(default=None)
    anchor_values: np.ndarray = field(default=None)

    @property
    def gaps(self) -> np.ndarray:
        """Successive differences ``|u_{n+1} - u_n|``."""
        return np.abs(np.diff(self.partials))

    def to_record(self) -> dict:
        return {
            "x": self.x.tolist(),
            "value": self.value,
            "gap": self.gap,
            "partials": self.partials.tolist(),
            "schedule": self.schedule.tolist(),
            "anchor": self.anchor,
            "h": self.h,
            "note": "the truncation error of the schedule is estimated by the Cauchy gap only",
        }


class BusemannField:
    """Cached evaluator of ``b_a`` for one limit shape and schedule.

    The anchor values ``phi_h(0, p_n)`` are computed once. Evaluations are
    deterministic, so ``value(0)`` is exactly zero.
    """

    def __init__(
        self,
        ms: MassSystem,
        a,
        h: Optional[float] = None,
        schedule: Optional[Sequence[float]] = None,
        r0: float = 0.0,
        reference=None,
        tol: float = 1e-10,
        grid_m: int = 128,
        threads: int = 1,
    ):
        self.ms = ms
        self.a_h, self.h = _renormalize(ms, a, h)
        self.r0 = r0
        self.tol = tol
        self.grid_m = grid_m
        self.threads = threads
        self._schedule = None if schedule is None else np.asarray(schedule, dtype=float)
        if self._schedule is not None and np.any(np.diff(self._schedule) <= 0):
            raise ValueError("schedule must be increasing")
        self._phi_cache: dict = {}
        self.origin = np.zeros_like(self.a_h)

    def schedule_for(self, x) -> np.ndarray:
        if self._schedule is not None:
            return self._schedule
        return default_schedule(self.ms, x, self.r0)

    def phi(self, x, p) -> float:
        key = (np.asarray(x, dtype=float).tobytes(), np.asarray(p, dtype=float).tobytes())
        if key not in self._phi_cache:
            res = action_free_time(self.ms, x, p, self.h, tol=self.tol, grid_m=self.grid_m)
            self._phi_cache[key] = res.value
        return self._phi_cache[key]

    def estimate(self, x, schedule=None) -> BusemannEstimate:
        x = self.ms.config(x)
        lam = np.asarray(schedule, dtype=float) if schedule is not None else self.schedule_for(x)
        targets = [l * self.a_h for l in lam]
        tv = np.array([self.phi(x, p) for p in targets])
        av = np.array([self.phi(self.origin, p) for p in targets])
        u = tv - av
        gap = float(abs(u[-1] - u[-2])) if u.size > 1 else np.inf
        return BusemannEstimate(
            value=float(u[-1]), partials=u, schedule=lam, gap=gap, anchor="origin",
            x=x, a_h=self.a_h, h=self.h, target_values=tv, anchor_values=av,
        )

    def value(self, x, schedule=None) -> float:
        return self.estimate(x, schedule).value

    def estimate_many(self, points, schedule=None) -> list:
        """Estimates at several points, in parallel when ``threads > 1``."""
        points = [self.ms.config(p) for p in points]
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(lambda p: self.estimate(p, schedule), points))
        return [self.estimate(p, schedule) for p in points]

    def gradient(self, x, alpha: Optional[float] = None, tol: float = 1e-10) -> np.ndarray:
        return busemann_gradient(self.ms, x, self.a_h, self.h, tol=tol, alpha=alpha)

    def to_csv(self, path, points, schedule=None, alpha: Optional[float] = None) -> list:
        """Grid export: coordinates, value, gap, gradient, eikonal residual."""
        ests = self.estimate_many(points, schedule)
        n, d = self.a_h.shape
        header = [f"x{i}_{c}" for i in range(n) for c in range(d)] + ["value", "gap"]
        header += [f"grad{i}_{c}" for i in range(n) for c in range(d)] + ["eikonal_residual"]
        rows = []
        for est in ests:
            g = self.gradient(est.x, alpha=alpha)
            eik = 0.5 * mass_inner(self.ms, g, g) - potential(self.ms, est.x) - self.h
            rows.append([*est.x.reshape(-1), est.value, est.gap, *g.reshape(-1), eik])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([format(float(v), ".17g") for v in r])
        return ests


def busemann_estimate(
    ms: MassSystem,
    x,
    a,
    h: Optional[float] = None,
    schedule: Optional[Sequence[float]] = None,
    r0: float = 0.0,
    tol: float = 1e-10,
) -> BusemannEstimate:
    """``u_n(x) = phi_h(x, lambda_n a_h) - phi_h(0, lambda_n a_h)`` along ``schedule``."""
    return BusemannField(ms, a, h, schedule, r0=r0, tol=tol).estimate(x)


def busemann_from_ray(ms: MassSystem, ray: Trajectory, x, t_list, h: Optional[float] = None, tol: float = 1e-10) -> list:
    """``u_{gamma,t}(x) = phi_h(x, gamma(t)) - phi_h(gamma(0), gamma(t))`` for ``t`` in ``t_list``."""
    t_list = np.asarray(t_list, dtype=float)
    if np.any(np.diff(t_list) <= 0):
        raise ValueError("t_list must be increasing")
    if t_list[0] <= ray.t_start or t_list[-1] > ray.t_end:
        raise ValueError("t_list must lie inside the span of the ray")
    x = ms.config(x)
    g0 = ray.state_at(ray.t_start)
    if h is None:
        h = float(ray.energy[0])
    out = []
    for t in t_list:
        p = ray.state_at(t).x
        u = action_free_time(ms, x, p, h, tol=tol).value - action_free_time(ms, g0.x, p, h, tol=tol).value
        out.append((float(t), float(u)))
    return out


def busemann_gradient(
    ms: MassSystem,
    x,
    a,
    h: Optional[float] = None,
    tol: float = 1e-10,
    alpha: Optional[float] = None,
) -> np.ndarray:
    """Gradient of ``b_a`` at ``x``: minus the shooting velocity for ``a_h``.

    ``alpha`` (default halfway between ``alpha0(a)`` and 1) defines the cone
    used for the differentiability warning.
    """
    a_h, h = _renormalize(ms, a, h)
    x = ms.config(x)
    if alpha is None:
        alpha = 0.5 * (1.0 + alpha0(ms, a_h))
    if not ConeSpec(a_h, alpha).contains(ms, x):
        warnings.warn("x lies outside the cone around a; b_a need not be differentiable there", RuntimeWarning)
    sr = solve_asymptotic_velocity(ms, x, a_h, tol=tol)
    return -sr.v_star


def busemann_constancy_check(
    ms: MassSystem,
    ray1: Trajectory,
    ray2: Trajectory,
    sample_points,
    T: Optional[float] = None,
    tol: float = 1e-10,
    shape_tol: float = 1e-7,
) -> float:
    """Spread of ``u_{gamma1,T} - u_{gamma2,T}`` over ``sample_points``.

    Both rays must have the same limit shape (mass-norm gap at most
    ``shape_tol``). ``T`` defaults to the largest common time.
    """
    shapes = []
    for r in (ray1, ray2):
        st = r.state_at(r.t_start)
        shapes.append(limit_shape(ms, PhaseState(st.x, st.v), tol=min(shape_tol / 10, 1e-9)).a_hat)
    if mass_norm(ms, shapes[0] - shapes[1]) > shape_tol:
        raise ValueError("the rays have different limit shapes")
    if T is None:
        T = min(ray1.t_end - ray1.t_start, ray2.t_end - ray2.t_start)
    h = float(ray1.energy[0])
    same = ray1 is ray2
    diffs = []
    for x in sample_points:
        u1 = busemann_from_ray(ms, ray1, x, [ray1.t_start + T], h, tol)[0][1]
        u2 = u1 if same else busemann_from_ray(ms, ray2, x, [ray2.t_start + T], h, tol)[0][1]
        diffs.append(u1 - u2)
    return float(max(diffs) - min(diffs))


def one_sided_derivatives(evaluate, x, direction, eps: float) -> tuple:
    """Forward and backward difference quotients of ``evaluate`` at ``x``."""
    x = np.asarray(x, dtype=float)
    e = np.asarray(direction, dtype=float)
    f0 = evaluate(x)
    fp = evaluate(x + eps * e)
    fm = evaluate(x - eps * e)
    return (fp - f0) / eps, (f0 - fm) / eps
