"""Lagrangian action of curves and the minimal-action potentials.

Curves are piecewise cubic in a parameter ``sigma`` in ``[0, 1]`` with time
``t = tau * g(sigma)``. Away from collisions ``g`` is the identity. When an
endpoint is a collision, ``g`` vanishes to third order there; the minimizers
behave like ``t**(2/3)`` near such an endpoint, which becomes a smooth
function of ``sigma`` under this grading.

The fixed-time potential ``phi(x, y, tau)`` and the free-time potential
``phi_h(x, y)`` are computed in two stages:

1. direct transcription: the interior knots are optimized with L-BFGS-B
   from a straight seed (and bent seeds when the segment grazes a collision);
2. polish: the discrete minimizer seeds a Newton solve of the two-point
   boundary value problem of the equations of motion (with energy ``h`` in
   free time). The action of the resulting motion is accepted when it is
   lower, since the action of any curve bounds the potential from above.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize, minimize_scalar

from .core import (
    MassSystem,
    energy,
    mass_norm,
    maximize_on_cone_sphere,
    min_pair_distance,
    potential,
    potential_gradient,
)
from .flow import IntegrationError, PhaseState, integrate

__all__ = [
    "ActionError",
    "DiscreteCurve",
    "TimeMap",
    "ActionResult",
    "action_of_curve",
    "action_fixed_time",
    "action_free_time",
    "linear_path_bound",
    "excess_D",
    "excess_D_lower_bound",
    "euclid_excess_E",
    "nu_constant",
    "batch_potential",
]

_PENALTY = 1e30


class ActionError(RuntimeError):
    """Action minimization failed or produced an inconsistent value."""


# --------------------------------------------------------------------------
# gradings of the time parameter


_KAPPA_MAX = 200.0


@dataclass(frozen=True)
class TimeMap:
    """Map ``sigma -> t / tau`` used to place knots.

    ``start``, ``end`` and ``both`` vanish to third order at collision
    endpoints. The ``exp-*`` kinds are exponential gradings with rate
    ``kappa`` toward regular endpoints that sit close to the bodies compared
    with the length of the curve.
    """

    kind: str = "none"
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "start", "end", "both", "exp-start", "exp-end", "exp-both"):
            raise ValueError(f"unknown grading {self.kind!r}")

    @property
    def singular(self) -> bool:
        return self.kind in ("start", "end", "both")

    @property
    def clamp_left(self) -> bool:
        return self.kind in ("start", "both")

    @property
    def clamp_right(self) -> bool:
        return self.kind in ("end", "both")

    def __call__(self, sigma):
        s = np.asarray(sigma, dtype=float)
        k = self.kappa
        if self.kind == "none" or (self.kind.startswith("exp") and k == 0.0):
            return s, np.ones_like(s)
        if self.kind == "start":
            return s**3, 3.0 * s**2
        if self.kind == "end":
            return 1.0 - (1.0 - s) ** 3, 3.0 * (1.0 - s) ** 2
        if self.kind == "both":
            return s**3 * (10.0 - 15.0 * s + 6.0 * s**2), 30.0 * s**2 * (1.0 - s) ** 2
        if self.kind == "exp-start":
            return np.expm1(k * s) / np.expm1(k), k * np.exp(k * s) / np.expm1(k)
        if self.kind == "exp-end":
            g, gp = TimeMap("exp-start", k)(1.0 - s)
            return 1.0 - g, gp
        c = 2.0 * np.sinh(0.5 * k)
        return 0.5 + np.sinh(k * (s - 0.5)) / c, k * np.cosh(k * (s - 0.5)) / c

    def bc(self, width: int):
        left = (1, np.zeros(width)) if self.clamp_left else "not-a-knot"
        right = (1, np.zeros(width)) if self.clamp_right else "not-a-knot"
        return left, right


def _first_fraction(kind, kappa, m):
    return float(TimeMap(kind, kappa)(1.0 / m)[0])


def _time_map_for(ms: MassSystem, x, y, m: int, floor: float = 0.0) -> TimeMap:
    """Collision gradings at singular ends, else exponential grading if needed.

    A regular end is graded when the uniform knot spacing exceeds a quarter
    of its smallest mutual distance, the scale on which ``U`` varies there.
    """
    sx = min_pair_distance(ms, x) <= floor
    sy = min_pair_distance(ms, y) <= floor
    if sx or sy:
        return TimeMap({(True, False): "start", (False, True): "end", (True, True): "both"}[(sx, sy)])
    length = float(np.max(np.linalg.norm(y - x, axis=1)))
    if length == 0.0:
        return TimeMap()
    fx = 0.25 * min_pair_distance(ms, x) / length
    fy = 0.25 * min_pair_distance(ms, y) / length
    gx, gy = fx < 1.0 / m, fy < 1.0 / m
    if not (gx or gy):
        return TimeMap()
    kind = "exp-both" if gx and gy else ("exp-start" if gx else "exp-end")
    target = min(fx if gx else np.inf, fy if gy else np.inf)
    if _first_fraction(kind, _KAPPA_MAX, m) >= target:
        return TimeMap(kind, _KAPPA_MAX)
    kappa = brentq(lambda k: np.log(_first_fraction(kind, k, m)) - np.log(target), 1e-6, _KAPPA_MAX, xtol=1e-6)
    return TimeMap(kind, float(kappa))


@dataclass(frozen=True)
class DiscreteCurve:
    """Knots ``(m+1, N, d)`` at increasing ``times``.

    With ``grading`` other than ``"none"`` the knots sit at uniform values of
    the curve parameter and ``times = t0 + tau * g(sigma)``.
    """

    knots: np.ndarray
    times: np.ndarray
    grading: str = "none"
    kappa: float = 0.0

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        t = np.asarray(self.times, dtype=float)
        if k.ndim != 3 or k.shape[0] < 2:
            raise ValueError("a curve needs at least 2 knots of shape (N, d)")
        if t.shape != (k.shape[0],):
            raise ValueError("times must have one entry per knot")
        if not np.all(np.isfinite(k)) or not np.all(np.isfinite(t)):
            raise ValueError("curve entries must be finite")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.grading != "none":
            m = k.shape[0] - 1
            g, _ = self.time_map(np.linspace(0.0, 1.0, m + 1))
            expect = t[0] + (t[-1] - t[0]) * g
            if not np.allclose(t, expect, rtol=1e-10, atol=1e-12 * (t[-1] - t[0])):
                raise ValueError("times do not follow the declared grading")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "times", t)

    @classmethod
    def on_grid(cls, knots, tau: float, grading="none", t0: float = 0.0) -> "DiscreteCurve":
        tm = grading if isinstance(grading, TimeMap) else TimeMap(grading)
        knots = np.asarray(knots, dtype=float)
        g, _ = tm(np.linspace(0.0, 1.0, knots.shape[0]))
        return cls(knots, t0 + tau * g, tm.kind, tm.kappa)

    @property
    def time_map(self) -> TimeMap:
        return TimeMap(self.grading, self.kappa)

    @property
    def tau(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def m(self) -> int:
        return self.knots.shape[0] - 1

    @property
    def start(self) -> np.ndarray:
        return self.knots[0]

    @property
    def end(self) -> np.ndarray:
        return self.knots[-1]

    def to_csv(self, path) -> None:
        """Columns ``t`` then the ``N*d`` knot coordinates."""
        n, d = self.knots.shape[1:]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i}_{c}" for i in range(n) for c in range(d)])
            for t, q in zip(self.times, self.knots):
                w.writerow([format(float(v), ".17g") for v in (t, *q.reshape(-1))])


# --------------------------------------------------------------------------
# quadrature on the spline representation


def batch_potential(ms: MassSystem, Q: np.ndarray, grad: bool = True):
    """``U`` and its Euclidean gradient at a stack of configurations ``(K, N, d)``."""
    iu, ju = ms._pairs
    diff = Q[:, iu] - Q[:, ju]
    r = np.sqrt(np.einsum("kpd,kpd->kp", diff, diff))
    mm = ms.masses[iu] * ms.masses[ju]
    with np.errstate(divide="ignore", invalid="ignore"):
        U = (mm / r).sum(axis=1)
        if not grad:
            return U, None
        c = (mm / r**3)[..., None] * diff
    G = np.zeros_like(Q)
    np.add.at(G, (slice(None), iu), -c)
    np.add.at(G, (slice(None), ju), c)
    return U, G


class _Transcription:
    """Spline basis and quadrature for ``m`` intervals in ``sigma``."""

    def __init__(self, m: int, grading: TimeMap, n_gauss: int = 4, subdiv: int = 1):
        self.m, self.grading = m, grading
        sig = np.linspace(0.0, 1.0, m + 1)
        gx, gw = np.polynomial.legendre.leggauss(n_gauss)
        edges = np.linspace(0.0, 1.0, m * subdiv + 1)
        h = np.diff(edges)
        nodes = (edges[:-1, None] + 0.5 * h[:, None] * (gx[None] + 1.0)).ravel()
        weights = (0.5 * h[:, None] * gw[None]).ravel()
        left, right = grading.bc(m + 1)
        if m < 3 and left == "not-a-knot" and right == "not-a-knot":
            left = right = "natural"
        spl = CubicSpline(sig, np.eye(m + 1), bc_type=(left, right))
        self.B = spl(nodes)
        self.D = spl(nodes, 1)
        _, gp = grading(nodes)
        self.wk = weights / gp
        self.wp = weights * gp
        self.sigma = sig

    def parts(self, ms: MassSystem, X: np.ndarray, grad: bool = True):
        """Kinetic integral ``K`` (per unit ``1/tau``) and ``P = int U g'``."""
        Xf = X.reshape(self.m + 1, -1)
        DX = self.D @ Xf
        W = ms.weights
        K = 0.5 * float(self.wk @ (DX * DX @ W))
        Q = (self.B @ Xf).reshape(-1, ms.n_bodies, ms.dim)
        U, G = batch_potential(ms, Q, grad)
        if not np.all(np.isfinite(U)):
            return K, np.inf, None, None
        P = float(self.wp @ U)
        if not grad:
            return K, P, None, None
        gK = self.D.T @ (self.wk[:, None] * DX * W[None])
        gP = self.B.T @ (self.wp[:, None] * G.reshape(G.shape[0], -1))
        return K, P, gK, gP


def action_of_curve(ms: MassSystem, curve: DiscreteCurve, h: float = 0.0, n_gauss: int = 6, subdiv: int = 2) -> float:
    """Action of ``L + h`` along the cubic interpolant of ``curve``.

    Composite Gauss-Legendre quadrature with ``n_gauss`` nodes on each of
    ``subdiv`` pieces of every interval. Returns ``inf`` when the
    interpolant hits a collision at a quadrature node.
    """
    if curve.grading != "none":
        tr = _Transcription(curve.m, curve.time_map, n_gauss, subdiv)
        K, P, _, _ = tr.parts(ms, curve.knots, grad=False)
        tau = curve.tau
        return K / tau + tau * P + h * tau
    t = curve.times
    X = curve.knots.reshape(curve.m + 1, -1)
    bc = "not-a-knot" if curve.m >= 3 else "natural"
    spl = CubicSpline(t, X, bc_type=bc)
    gx, gw = np.polynomial.legendre.leggauss(n_gauss)
    edges = np.interp(np.linspace(0, curve.m, curve.m * subdiv + 1), np.arange(curve.m + 1), t)
    hh = np.diff(edges)
    nodes = (edges[:-1, None] + 0.5 * hh[:, None] * (gx[None] + 1.0)).ravel()
    w = (0.5 * hh[:, None] * gw[None]).ravel()
    V = spl(nodes, 1)
    kin = 0.5 * float(w @ (V * V @ ms.weights))
    U, _ = batch_potential(ms, spl(nodes).reshape(-1, ms.n_bodies, ms.dim), grad=False)
    if not np.all(np.isfinite(U)):
        return np.inf
    return kin + float(w @ U) + h * curve.tau


# --------------------------------------------------------------------------
# results


@dataclass
class ActionResult:
    value: float
    tau: float
    curve: DiscreteCurve
    grid_m: int
    lower: float
    upper: float
    discrete_value: float
    polished: bool = False
    v0: Optional[np.ndarray] = None
    polish_residual: float = np.nan
    iterations: int = 0
    nfev: int = 0
    h: Optional[float] = None
    tol: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def bracket_ok(self) -> bool:
        slack = 1e-9 * max(1.0, abs(self.value))
        return self.lower - slack <= self.value <= self.upper + slack

    def to_record(self) -> dict:
        return {
            "value": self.value,
            "tau": self.tau,
            "bounds": {"lower": self.lower, "upper": self.upper},
            "grid": self.grid_m,
            "iterations": self.iterations,
            "function_evaluations": self.nfev,
            "discrete_value": self.discrete_value,
            "polished": self.polished,
            "polish_residual": self.polish_residual,
            "h": self.h,
            "tol": self.tol,
        }


# --------------------------------------------------------------------------
# seeds


def _straight(x, y, m, grading: TimeMap):
    sig = np.linspace(0.0, 1.0, m + 1)
    # follow the expected profile near collision ends so the seed has the right rate
    if grading.kind == "start":
        prof = sig**2
    elif grading.kind == "end":
        prof = 1.0 - (1.0 - sig) ** 2
    elif grading.kind == "both":
        prof = sig**2 * (3.0 - 2.0 * sig)
    else:
        prof = grading(sig)[0]
    return x[None] + prof[:, None, None] * (y - x)[None]


def _bent_seeds(ms: MassSystem, x, y, X0, threshold: float):
    """Seeds pushed away from the collision the straight seed passes closest to."""
    iu, ju = ms._pairs
    rel = X0[:, iu] - X0[:, ju]
    r = np.linalg.norm(rel, axis=2)
    scale = max(np.linalg.norm((y - x)[iu] - (y - x)[ju], axis=1).max(), 1e-300)
    k, p = np.unravel_index(np.argmin(r[1:-1]), r[1:-1].shape)
    k += 1
    if r[k, p] >= threshold * scale:
        return []
    i, j = iu[p], ju[p]
    along = (y - x)[i] - (y - x)[j]
    away = rel[k, p] - (rel[k, p] @ along) / max(along @ along, 1e-300) * along
    if np.linalg.norm(away) < 1e-9 * scale:
        d = ms.dim
        basis = np.eye(d)
        cand = basis - np.outer(basis @ along, along) / max(along @ along, 1e-300)
        away = cand[np.argmax(np.linalg.norm(cand, axis=1))]
    away /= np.linalg.norm(away)
    mi, mj = ms.masses[i], ms.masses[j]
    m = X0.shape[0] - 1
    bump = np.sin(np.pi * np.linspace(0.0, 1.0, m + 1))
    out = []
    for sgn in (1.0, -1.0):
        for amp in (0.25, 0.6):
            D = np.zeros_like(X0[0])
            D[i] = mj / (mi + mj) * away
            D[j] = -mi / (mi + mj) * away
            out.append(X0 + sgn * amp * scale * bump[:, None, None] * D[None])
    return out


# --------------------------------------------------------------------------
# discrete minimization


def _optimize(ms, tr: _Transcription, X0, objective, gtol, maxiter=20000):
    m = tr.m
    shape = X0.shape
    xa = X0[0].reshape(-1)
    yb = X0[-1].reshape(-1)
    # precondition with the kinetic Hessian of the interior knots: in the
    # variables w = R z sqrt(W) the kinetic part is the identity
    Di = tr.D[:, 1:-1]
    R = np.linalg.cholesky(Di.T @ (tr.wk[:, None] * Di)).T
    sw = np.sqrt(ms.weights)[None]

    def full(w):
        Z = np.empty((m + 1, xa.size))
        Z[0], Z[-1] = xa, yb
        Z[1:-1] = np.linalg.solve(R, w.reshape(m - 1, -1)) / sw
        return Z

    def fun(w):
        K, P, gK, gP = tr.parts(ms, full(w))
        if not np.isfinite(P):
            return _PENALTY, np.zeros_like(w)
        f, dK, dP = objective(K, P)
        g = (dK * gK + dP * gP)[1:-1]
        return f, (np.linalg.solve(R.T, g) / sw).reshape(-1)

    w0 = (R @ (X0[1:-1].reshape(m - 1, -1) * sw)).reshape(-1)
    res = minimize(
        fun, w0, jac=True, method="L-BFGS-B",
        options=dict(maxiter=maxiter, maxfun=4 * maxiter, maxcor=30, ftol=1e-15, gtol=gtol),
    )
    Z = full(res.x).reshape(shape)
    return Z, float(res.fun), res


def _free_objective(h):
    def obj(K, P):
        Ph = P + h
        f = 2.0 * np.sqrt(K * Ph)
        return f, np.sqrt(Ph / K), np.sqrt(K / Ph)

    return obj


def _fixed_objective(tau):
    def obj(K, P):
        return K / tau + tau * P, 1.0 / tau, tau

    return obj


def _refine(tr_old: _Transcription, X, m_new, grading: TimeMap):
    Xf = X.reshape(tr_old.m + 1, -1)
    spl = CubicSpline(tr_old.sigma, Xf, bc_type=grading.bc(Xf.shape[1]))
    return spl(np.linspace(0.0, 1.0, m_new + 1)).reshape((m_new + 1,) + X.shape[1:])


def _discrete(ms, x, y, objective, grid_m, gtol, seeds_threshold=0.1, refine=True, seed_curve=None):
    m1 = grid_m // 2 if refine else grid_m
    grading = _time_map_for(ms, x, y, m1)
    tr = _Transcription(m1, grading)
    if seed_curve is not None:
        seeds = [seed_curve]
    else:
        X0 = _straight(x, y, m1, grading)
        seeds = [X0] + _bent_seeds(ms, x, y, X0, seeds_threshold)
    best = None
    nit = nfev = 0
    for S in seeds:
        if S.shape[0] != m1 + 1:
            S = _refine(_Transcription(S.shape[0] - 1, grading), S, m1, grading)
        Z, f, res = _optimize(ms, tr, S, objective, gtol)
        nit += res.nit
        nfev += res.nfev
        if best is None or f < best[1]:
            best = (Z, f)
    Z, f = best
    if refine:
        tr2 = _Transcription(grid_m, grading)
        Z2, f2, res = _optimize(ms, tr2, _refine(tr, Z, grid_m, grading), objective, gtol)
        nit += res.nit
        nfev += res.nfev
        if f2 <= f:
            Z, f, tr = Z2, f2, tr2
        else:
            Z, tr = _refine(tr, Z, grid_m, grading), tr2
            f = _eval(ms, tr, Z, objective)
    if f >= _PENALTY:
        raise ActionError("no collision-free curve found between the endpoints")
    return Z, f, tr, grading, nit, nfev


def _eval(ms, tr, Z, objective):
    K, P, _, _ = tr.parts(ms, Z, grad=False)
    return objective(K, P)[0] if np.isfinite(P) else _PENALTY


# --------------------------------------------------------------------------
# polish by shooting


def _polish(ms, x, y, v0, tau, h=None, tol=1e-12, max_iter=12):
    """Newton on ``x(tau) = y`` (and energy ``h`` with free ``tau``)."""
    n = ms.size
    W = ms.weights
    free = h is not None
    v = np.asarray(v0, dtype=float).reshape(-1).copy()
    scale = max(mass_norm(ms, y - x), 1e-300)
    Z = (np.zeros((n, n)), np.eye(n))
    best = None
    for _ in range(max_iter):
        try:
            tr = integrate(ms, PhaseState(x, v.reshape(x.shape)), tau, tol=tol, with_action=True, jacobi=Z)
        except (IntegrationError, ValueError):
            return best
        xT = tr.x[-1].reshape(-1)
        vT = tr.v[-1].reshape(-1)
        F = xT - y.reshape(-1)
        res = np.sqrt(F @ (W * F)) / scale
        if free:
            eg = energy(ms, x, v.reshape(x.shape)) - h
            res = max(res, abs(eg) / h)
        val = float(tr.action[-1] - tr.action[0]) + (h if free else 0.0) * tau
        best = (val, v.reshape(x.shape).copy(), tau, res) if best is None or res < best[3] else best
        if res < 1e-12:
            break
        J = tr.J[-1].reshape(n, n)
        if free:
            A = np.zeros((n + 1, n + 1))
            A[:n, :n] = J
            A[:n, n] = vT
            A[n, :n] = W * v
            rhs = -np.concatenate([F, [eg]])
            try:
                step = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                return best
            v = v + step[:n]
            tau = tau + step[n]
            if tau <= 0:
                return best
        else:
            try:
                v = v - np.linalg.solve(J, F)
            except np.linalg.LinAlgError:
                return best
    if best is None or best[3] > 1e-9:
        return None
    return best


def _initial_velocity(tr: _Transcription, Z, tau):
    Zf = Z.reshape(tr.m + 1, -1)
    spl = CubicSpline(tr.sigma, Zf, bc_type=tr.grading.bc(Zf.shape[1]))
    _, gp = tr.grading(np.array([0.0]))
    return spl(0.0, 1).reshape(Z.shape[1:]) / (tau * gp[0])


# --------------------------------------------------------------------------
# public solvers


def linear_path_bound(ms: MassSystem, x, y, h: float) -> float:
    """Action of the segment from ``x`` to ``y`` at constant speed ``sqrt(2h)``."""
    x, y = ms.config(x), ms.config(y)
    L = mass_norm(ms, y - x)
    if L == 0.0:
        return 0.0
    speed = np.sqrt(2.0 * h)
    tau = L / speed

    def f(s):
        return potential(ms, x + s * (y - x))

    # closest approach of every pair along the segment; 1/r is not integrable
    # along a line through a collision, so such segments have infinite action
    iu, ju = ms._pairs
    r0 = x[iu] - x[ju]
    dr = (y - x)[iu] - (y - x)[ju]
    dd = np.einsum("pd,pd->p", dr, dr)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_star = np.where(dd > 0, np.clip(-np.einsum("pd,pd->p", r0, dr) / dd, 0.0, 1.0), 0.0)
    dmin = np.linalg.norm(r0 + s_star[:, None] * dr, axis=1)
    if np.any(dmin <= 1e-14 * max(np.sqrt(dd.max()), 1.0)):
        return np.inf
    pts = sorted({float(v) for v in s_star if 0.0 < v < 1.0}) or None
    val, _ = quad(f, 0.0, 1.0, points=pts, limit=400, epsabs=0.0, epsrel=1e-12)
    return float(L * speed + tau * val)


def _lower_bound(ms, x, y, h):
    return float(np.sqrt(2.0 * h) * mass_norm(ms, y - x))


def action_fixed_time(
    ms: MassSystem,
    x,
    y,
    tau: float,
    grid_m: int = 128,
    tol: float = 1e-10,
    polish: bool = True,
) -> ActionResult:
    """Minimal action ``phi(x, y, tau)`` of ``L`` over curves of duration ``tau``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    x, y = ms.config(x), ms.config(y)
    obj = _fixed_objective(tau)
    Z, f, tr, grading, nit, nfev = _discrete(ms, x, y, obj, grid_m, gtol=1e-12)
    value = f
    res = dict(polished=False, v0=None, polish_residual=np.nan)
    if polish and not grading.singular:
        pol = _polish(ms, x, y, _initial_velocity(tr, Z, tau), tau, None, tol=min(1e-12, tol))
        if pol is not None and pol[0] <= f:
            value = pol[0]
            res = dict(polished=True, v0=pol[1], polish_residual=pol[3])
    curve = DiscreteCurve.on_grid(Z, tau, grading)
    # the kinetic lower bound for fixed time
    lower = mass_norm(ms, y - x) ** 2 / (2.0 * tau)
    return ActionResult(
        value=float(value), tau=float(tau), curve=curve, grid_m=tr.m, lower=lower, upper=np.inf,
        discrete_value=float(f), iterations=nit, nfev=nfev, tol=tol, **res,
    )


def _golden_tau(ms, x, y, h, grid_m, tau0, tau_range=(1e-6, 1e6), tol=1e-6):
    """Outer golden-section search over ``log tau`` of ``phi(x, y, tau) + h tau``."""
    cache = {}

    def f(lt):
        if lt not in cache:
            t = float(np.exp(lt))
            Z, val, *_ = _discrete(ms, x, y, _fixed_objective(t), grid_m, gtol=1e-10, refine=False)
            cache[lt] = val + h * t
        return cache[lt]

    lo, hi = np.log(tau_range[0] * tau0), np.log(tau_range[1] * tau0)
    a, b = np.log(tau0) - 0.5, np.log(tau0) + 0.5
    for _ in range(60):
        fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
        if fm < fa and fm < fb:
            break
        if fa <= fb:
            a = a - (b - a)
        else:
            b = b + (b - a)
        if a < lo or b > hi:
            raise ActionError("no bracket for the optimal duration in the configured range")
    else:
        raise ActionError("no bracket for the optimal duration")
    r = minimize_scalar(f, bracket=(a, 0.5 * (a + b), b), method="golden", tol=tol)
    return float(np.exp(r.x)), float(r.fun)


def action_free_time(
    ms: MassSystem,
    x,
    y,
    h: float,
    tol: float = 1e-10,
    grid_m: int = 128,
    polish: bool = True,
    method: str = "reduced",
    split: float = 0.1,
    seed: Optional[tuple] = None,
    check_bounds: bool = True,
) -> ActionResult:
    """Free-time potential ``phi_h(x, y) = min_tau phi(x, y, tau) + h tau``.

    ``method="reduced"`` minimizes over curve shapes with the duration
    eliminated in closed form (for a fixed shape ``K / tau + tau (P + h)`` is
    minimal at ``tau = sqrt(K / (P + h))``). ``method="golden"`` runs an
    outer golden-section search over ``tau`` around fixed-time solves on the
    coarse grid; it is slower and serves as an independent check.

    When an endpoint is a collision the motion cannot be shot from it; the
    curve is split at the knot at fraction ``split`` of the distance from
    the singular end, the short piece is kept discrete on a finer graded grid
    and the long piece is polished. ``seed = (v0, tau)`` skips the discrete
    stage and polishes directly (used for continuation along a sequence of
    nearby targets); the result is still checked against the brackets.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    x, y = ms.config(x), ms.config(y)
    lower = _lower_bound(ms, x, y, h)
    upper = linear_path_bound(ms, x, y, h)
    if mass_norm(ms, y - x) == 0.0:
        curve = DiscreteCurve.on_grid(np.stack([x, x]), 1e-300)
        return ActionResult(0.0, 0.0, curve, 1, 0.0, 0.0, 0.0, h=h, tol=tol)
    if seed is not None and min(min_pair_distance(ms, x), min_pair_distance(ms, y)) > 0:
        pol = _polish(ms, x, y, seed[0], seed[1], h, tol=min(1e-12, tol))
        if pol is not None:
            val, v0, tau, r = pol
            traj = integrate(ms, PhaseState(x, v0), tau, tol=1e-12)
            ts = np.linspace(0.0, tau, 33)
            knots = np.stack([traj.state_at(t).x for t in ts])
            out = ActionResult(
                value=val, tau=tau, curve=DiscreteCurve(knots, ts), grid_m=32, lower=lower, upper=upper,
                discrete_value=np.nan, polished=True, v0=v0, polish_residual=r, h=h, tol=tol,
            )
            if out.bracket_ok:
                return out
    if method == "golden":
        tau_g, val_g = _golden_tau(ms, x, y, h, max(grid_m // 2, 8), tau0=mass_norm(ms, y - x) / np.sqrt(2 * h))
    obj = _free_objective(h)
    Z, f, tr, grading, nit, nfev = _discrete(ms, x, y, obj, grid_m, gtol=1e-12)
    K, P, _, _ = tr.parts(ms, Z, grad=False)
    tau = float(np.sqrt(K / (P + h)))
    value, res = f, dict(polished=False, v0=None, polish_residual=np.nan)
    diag = {"grading": grading.kind, "kappa": grading.kappa}
    if polish and not grading.singular:
        pol = _polish(ms, x, y, _initial_velocity(tr, Z, tau), tau, h, tol=min(1e-12, tol))
        if pol is not None and pol[0] <= f:
            value, tau = pol[0], pol[2]
            res = dict(polished=True, v0=pol[1], polish_residual=pol[3])
        elif pol is None:
            diag["polish_failed"] = True
    elif polish and grading.kind in ("start", "end"):
        value, tau, res, diag = _split_polish(ms, x, y, h, Z, tr, f, grid_m, split, tol, value, tau, res)
    if method == "golden":
        diag.update(golden_tau=tau_g, golden_value=val_g)
        value, tau = val_g, tau_g
    curve = DiscreteCurve.on_grid(Z, tau, grading)
    out = ActionResult(
        value=float(value), tau=float(tau), curve=curve, grid_m=tr.m, lower=lower, upper=upper,
        discrete_value=float(f), iterations=nit, nfev=nfev, h=h, tol=tol, diagnostics=diag, **res,
    )
    if check_bounds and not out.bracket_ok:
        raise ActionError(f"value {out.value:.12g} escapes the bracket [{lower:.12g}, {upper:.12g}]")
    return out


def _split_polish(ms, x, y, h, Z, tr, f, grid_m, split, tol, value, tau, res):
    rev = tr.grading.kind == "end"
    K, P, _, _ = tr.parts(ms, Z, grad=False)
    tau_full = float(np.sqrt(K / (P + h)))
    if rev:
        x, y, Z = y, x, Z[::-1]
    # knot at the requested fraction of the distance from the singular end
    dist = np.array([mass_norm(ms, q - x) for q in Z])
    k = int(np.searchsorted(dist, split * dist[-1]))
    k = min(max(k, 2), Z.shape[0] - 3)
    ystar = Z[k]
    short = action_free_time(ms, x, ystar, h, grid_m=grid_m, polish=False, check_bounds=False)
    # the discrete curve (oriented from the singular end) gives the guess
    tm = TimeMap("start")
    Zf = Z.reshape(tr.m + 1, -1)
    spl = CubicSpline(tr.sigma, Zf, bc_type=tm.bc(Zf.shape[1]))
    g, gp = tm(tr.sigma[k])
    v_guess = spl(tr.sigma[k], 1).reshape(x.shape) / (tau_full * gp)
    tau_guess = tau_full * (1.0 - g)
    long = _polish(ms, ystar, y, v_guess, tau_guess, h, tol=min(1e-12, tol))
    diag = {"split_index": k, "short_value": short.value}
    if long is None:
        return value, tau, res, diag
    total = short.value + long[0]
    diag.update(long_value=long[0], split_total=total)
    if total <= f:
        return total, short.tau + long[2], dict(polished=True, v0=None, polish_residual=long[3]), diag
    return value, tau, res, diag


# --------------------------------------------------------------------------
# excess functions


def excess_D(ms: MassSystem, x, y, z, h: float, tol: float = 1e-10, **kw) -> float:
    """Triangle excess ``phi_h(x, y) + phi_h(y, z) - phi_h(x, z)``."""
    fxy = action_free_time(ms, x, y, h, tol=tol, **kw).value
    fyz = action_free_time(ms, y, z, h, tol=tol, **kw).value
    fxz = action_free_time(ms, x, z, h, tol=tol, **kw).value
    return fxy + fyz - fxz


def excess_D_lower_bound(ms: MassSystem, a, beta: float, h: float, rho: float, lam_ratio: float, n_starts: int = 64, seed: int = 0) -> dict:
    """Lower bound ``k (l - lam_ratio) rho - m`` on the triangle excess.

    Valid for ``x, z`` on the sphere of radius ``rho`` inside the cone
    ``C_a(beta)`` and ``|y| = lam_ratio * rho``; ``mu_beta`` is the largest
    value of ``U`` on the unit sphere of the cone.
    """
    mu_beta, _ = maximize_on_cone_sphere(
        ms, a, beta, lambda q: potential(ms, q),
        lambda q: potential_gradient(ms, q),
        n_starts=n_starts, seed=seed,
    )
    k = 2.0 * np.sqrt(2.0 * h)
    l = 1.0 - np.sqrt(1.0 - beta**2)
    m = 2.0 * mu_beta / np.sqrt(2.0 * h) * np.sqrt(1.0 / beta**2 - 1.0)
    return {"k": k, "l": l, "m": m, "mu_beta": mu_beta, "bound": k * (l - lam_ratio) * rho - m}


def euclid_excess_E(p, s, q, ms: Optional[MassSystem] = None) -> float:
    """``|s - p| + |q - s| - |q - p|``, in the mass norm when ``ms`` is given."""
    p, s, q = (np.asarray(v, dtype=float) for v in (p, s, q))
    if ms is None:
        def nrm(v):
            return float(np.linalg.norm(v))
    else:
        def nrm(v):
            return mass_norm(ms, v)
    return nrm(s - p) + nrm(q - s) - nrm(q - p)


def _cone_project(ms, v, a_hat, alpha, radius=None):
    """Projection onto ``{<x, a> >= alpha |x| |a|}``, optionally cut by a ball."""
    w = ms.masses[:, None]
    t = float(np.sum(w * v * a_hat))
    perp = v - t * a_hat
    pn = mass_norm(ms, perp)
    tan = np.sqrt(1.0 - alpha**2) / alpha
    if pn <= t * tan:
        out = v
    elif pn * tan <= -t:
        out = np.zeros_like(v)
    else:
        c = (t + pn * tan) / (1.0 + tan**2)
        out = c * (a_hat + tan * perp / pn)
    if radius is not None:
        n = mass_norm(ms, out)
        if n > radius:
            out = out * radius / n
    return out


def _cone_boundary_point(ms, v, a_hat, beta):
    """Unit vector on the boundary of ``C_a(beta)`` in the direction of ``v``'s normal part."""
    w = ms.masses[:, None]
    perp = v - float(np.sum(w * v * a_hat)) * a_hat
    pn = mass_norm(ms, perp)
    if pn == 0.0:
        return None
    return beta * a_hat + np.sqrt(1.0 - beta**2) * perp / pn


def nu_constant(ms: MassSystem, a, alpha: float, beta: float, e: float, n_starts: int = 32, seed: int = 0) -> tuple:
    """Minimum of the Euclidean excess over the compact set of triples.

    ``p, q`` range over ``C_a(alpha)`` intersected with the ball of radius
    ``e`` and ``s`` over the unit vectors on the boundary of ``C_a(beta)``
    (``beta < alpha``). Multistart Powell search on a projected
    parametrization; returns ``(nu, (p, s, q))``.
    """
    if not beta < alpha:
        raise ValueError("need beta < alpha")
    a = ms.config(a)
    a_hat = a / mass_norm(ms, a)
    shape = a.shape
    n = a.size
    rng = np.random.default_rng(seed)

    def unpack(z):
        p = _cone_project(ms, z[:n].reshape(shape), a_hat, alpha, e)
        s = _cone_boundary_point(ms, z[n : 2 * n].reshape(shape), a_hat, beta)
        q = _cone_project(ms, z[2 * n :].reshape(shape), a_hat, alpha, e)
        return p, s, q

    def fun(z):
        p, s, q = unpack(z)
        if s is None:
            return 1e3
        return euclid_excess_E(p, s, q, ms)

    best = (np.inf, None)
    for _ in range(n_starts):
        z0 = rng.standard_normal(3 * n) * e / 2.0
        z0[:n] += (e / 2.0) * a_hat.reshape(-1)
        z0[2 * n :] += (e / 2.0) * a_hat.reshape(-1)
        r = minimize(fun, z0, method="Powell", options=dict(xtol=1e-10, ftol=1e-13, maxfev=40000))
        if r.fun < best[0]:
            best = (float(r.fun), unpack(r.x))
    return best
