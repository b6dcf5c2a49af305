"""Adaptive integration of Newton's equations and their variational equations.

The state vector is laid out flat as ``[x, v, J, W, A]`` where ``J``/``W``
hold ``k`` Jacobi fields and their time derivatives column-wise and ``A``
is the accumulated Lagrangian action ``int |v|^2/2 + U dt``. Integration
uses scipy's DOP853 (explicit embedded 8(5,3) pair with dense output).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .core import (
    ConeSpec,
    MassSystem,
    SingularConfigurationError,
    mass_inner,
    mass_norm,
    min_pair_distance,
)

__all__ = [
    "IntegrationError",
    "CollisionApproachError",
    "PhaseState",
    "Trajectory",
    "NBodyRHS",
    "integrate",
    "integrate_with_jacobi",
    "detect_cone_exit",
]


class IntegrationError(RuntimeError):
    """The integrator could not reach the requested time."""


class CollisionApproachError(IntegrationError):
    """A mutual distance fell below the collision floor."""


@dataclass(frozen=True)
class PhaseState:
    x: np.ndarray
    v: np.ndarray
    t: float = 0.0


class NBodyRHS:
    """Vectorised right-hand side for the flow, Jacobi fields and action.

    Pair interactions are scattered back to bodies through a fixed
    ``(P, N)`` matrix whose rows carry ``+m_j`` at ``i`` and ``-m_i`` at ``j``.
    """

    def __init__(self, ms: MassSystem, n_jacobi: int = 0, with_action: bool = False):
        self.ms = ms
        self.n = ms.size
        self.k = int(n_jacobi)
        self.with_action = with_action
        N, d = ms.n_bodies, ms.dim
        i, j = ms._pairs
        P = i.size
        self.diff = np.zeros((P, N))
        self.diff[np.arange(P), j] = 1.0
        self.diff[np.arange(P), i] = -1.0
        self.scatter = np.zeros((P, N))
        self.scatter[np.arange(P), i] = ms.masses[j]
        self.scatter[np.arange(P), j] = -ms.masses[i]
        self.scatter_t = self.scatter.T.copy()
        self.mm = ms.masses[i] * ms.masses[j]
        self.w = ms.weights
        self.N, self.d = N, d
        self.dim = 2 * self.n * (1 + self.k) + (1 if with_action else 0)
        self.nfev = 0

    def pairs(self, x):
        d = self.diff @ x.reshape(self.N, self.d)
        r2 = np.einsum("pk,pk->p", d, d)
        return d, r2

    def __call__(self, t, y):
        self.nfev += 1
        n, k, N, d = self.n, self.k, self.N, self.d
        x = y[:n]
        v = y[n : 2 * n]
        sep, r2 = self.pairs(x)
        r = np.sqrt(r2)
        inv3 = 1.0 / (r2 * r)
        out = np.empty_like(y)
        out[:n] = v
        out[n : 2 * n] = (self.scatter_t @ (sep * inv3[:, None])).reshape(-1)
        if k:
            base = 2 * n
            J = y[base : base + n * k].reshape(N, d, k)
            W = y[base + n * k : base + 2 * n * k]
            dJ = np.einsum("pn,ndk->pdk", self.diff, J)
            proj = np.einsum("pd,pdk->pk", sep, dJ)
            t_ = dJ * inv3[:, None, None] - 3.0 * sep[:, :, None] * (proj * (inv3 / r2)[:, None])[:, None, :]
            out[base : base + n * k] = W
            out[base + n * k : base + 2 * n * k] = np.einsum("np,pdk->ndk", self.scatter_t, t_).reshape(-1)
        if self.with_action:
            out[-1] = 0.5 * np.dot(self.w, v * v) + np.sum(self.mm / r)
        return out

    def gradient_samples(self, xs: np.ndarray) -> np.ndarray:
        """Mass-metric ``grad U`` at every column of ``xs`` (shape ``(N*d, K)``)."""
        K = xs.shape[1]
        sep = np.einsum("pn,ndK->pdK", self.diff, xs.reshape(self.N, self.d, K))
        r2 = np.einsum("pdK,pdK->pK", sep, sep)
        inv3 = r2**-1.5
        return np.einsum("np,pdK->ndK", self.scatter_t, sep * inv3[:, None, :]).reshape(self.n, K)

    def hessian_samples(self, xs: np.ndarray, Js: np.ndarray) -> np.ndarray:
        """``HU(x_K) J_K`` for columns ``x_K`` and flat Jacobi blocks ``Js`` (``(N*d*k, K)``).

        Returns shape ``(N*d, k, K)``.
        """
        K = xs.shape[1]
        N, d = self.N, self.d
        k = Js.shape[0] // self.n
        sep = np.einsum("pn,ndK->pdK", self.diff, xs.reshape(N, d, K))
        r2 = np.einsum("pdK,pdK->pK", sep, sep)
        inv3 = r2**-1.5
        dJ = np.einsum("pn,ndcK->pdcK", self.diff, Js.reshape(N, d, k, K))
        proj = np.einsum("pdK,pdcK->pcK", sep, dJ)
        t_ = dJ * inv3[:, None, None, :] - 3.0 * sep[:, :, None, :] * (proj * (inv3 / r2)[:, None, :])[:, None]
        return np.einsum("np,pdcK->ndcK", self.scatter_t, t_).reshape(self.n, k, K)

    def min_distance(self, x):
        return float(np.sqrt(self.pairs(x)[1].min()))


@dataclass(frozen=True)
class Trajectory:
    """Time-sampled motion, immutable once built.

    ``x``/``v`` have shape ``(K, N, d)``; ``J``/``W`` have shape ``(K, N*d, k)``
    when Jacobi fields were co-integrated; ``action`` holds the accumulated
    Lagrangian action from the first sample.
    """

    ms: MassSystem
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    energy: np.ndarray
    tol: float
    J: Optional[np.ndarray] = None
    W: Optional[np.ndarray] = None
    action: Optional[np.ndarray] = None
    segments: tuple = field(default=(), repr=False)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("t", "x", "v", "energy", "J", "W", "action"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def max_energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])))

    @property
    def n_jacobi(self) -> int:
        return 0 if self.J is None else self.J.shape[2]

    def _raw(self, t) -> np.ndarray:
        t = float(t)
        lo, hi = min(self.t_start, self.t_end), max(self.t_start, self.t_end)
        if not lo - 1e-12 * max(1.0, abs(hi)) <= t <= hi + 1e-12 * max(1.0, abs(hi)):
            raise ValueError(f"t={t} outside trajectory span [{lo}, {hi}]")
        for t0, t1, sol in self.segments:
            a, b = min(t0, t1), max(t0, t1)
            if a <= t <= b:
                return sol(t)
        return self.segments[-1][2](t)

    def state_at(self, t) -> PhaseState:
        """Dense-output state at time ``t``."""
        y = self._raw(t)
        n = self.ms.size
        shape = (self.ms.n_bodies, self.ms.dim)
        return PhaseState(y[:n].reshape(shape), y[n : 2 * n].reshape(shape), float(t))

    def jacobi_at(self, t):
        if self.J is None:
            raise ValueError("trajectory carries no Jacobi fields")
        y = self._raw(t)
        n, k = self.ms.size, self.n_jacobi
        return y[2 * n : 2 * n + n * k].reshape(n, k), y[2 * n + n * k : 2 * n + 2 * n * k].reshape(n, k)

    def action_between(self, t0: float, t1: float, h: float = 0.0) -> float:
        """Action of ``L + h`` along the trajectory restricted to ``[t0, t1]``."""
        if self.action is None:
            raise ValueError("trajectory was integrated without the action accumulator")
        a0 = self._raw(t0)[-1]
        a1 = self._raw(t1)[-1]
        return float(a1 - a0 + h * (t1 - t0))

    def to_csv(self, path) -> None:
        """Columns ``t``, ``N*d`` positions, ``N*d`` velocities, ``energy``."""
        n, d = self.ms.n_bodies, self.ms.dim
        header = ["t"]
        header += [f"x{i}_{c}" for i in range(n) for c in range(d)]
        header += [f"v{i}_{c}" for i in range(n) for c in range(d)]
        header += ["energy"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.t.size):
                row = [self.t[k], *self.x[k].reshape(-1), *self.v[k].reshape(-1), self.energy[k]]
                w.writerow([format(float(val), ".17g") for val in row])


def _atol(ms: MassSystem, y0: np.ndarray, rhs: NBodyRHS, tol: float) -> np.ndarray:
    n, k = ms.size, rhs.k
    atol = np.empty_like(y0)
    atol[:n] = tol * max(1.0, np.max(np.abs(y0[:n])))
    atol[n : 2 * n] = tol * max(1e-3, np.max(np.abs(y0[n : 2 * n])))
    if k:
        jw = y0[2 * n : 2 * n + 2 * n * k]
        atol[2 * n : 2 * n + 2 * n * k] = tol * max(1e-3, np.max(np.abs(jw)))
    if rhs.with_action:
        atol[-1] = tol
    return atol


def _run(
    ms: MassSystem,
    y0: np.ndarray,
    t0: float,
    t_end: float,
    tol: float,
    rhs: NBodyRHS,
    floor: float,
    first_step=None,
    atol=None,
):
    n = ms.size

    def collide(t, y):
        return rhs.min_distance(y[:n]) - floor

    collide.terminal = True
    collide.direction = -1
    rtol = max(tol, 2.5e-14)
    sol = solve_ivp(
        rhs,
        (t0, t_end),
        y0,
        method="DOP853",
        rtol=rtol,
        atol=_atol(ms, y0, rhs, rtol) if atol is None else atol,
        dense_output=True,
        events=collide if floor > 0 else None,
        first_step=first_step,
    )
    if sol.status == -1:
        raise IntegrationError(f"integration failed at t={sol.t[-1]:.6g}: {sol.message}")
    if sol.status == 1:
        raise CollisionApproachError(
            f"mutual distance fell below the floor {floor:.3g} at t={sol.t_events[0][0]:.6g}"
        )
    return sol


def _build(ms, rhs, sols, tol, meta=None) -> Trajectory:
    n, k = ms.size, rhs.k
    ts, ys, segs = [], [], []
    for idx, sol in enumerate(sols):
        start = 0 if idx == 0 else 1
        ts.append(sol.t[start:])
        ys.append(sol.y[:, start:])
        segs.append((float(sol.t[0]), float(sol.t[-1]), sol.sol))
    t = np.concatenate(ts)
    Y = np.concatenate(ys, axis=1).T
    shape = (t.size, ms.n_bodies, ms.dim)
    x = Y[:, :n].reshape(shape)
    v = Y[:, n : 2 * n].reshape(shape)
    # energy per sample, vectorised over samples
    sep = np.einsum("pn,knd->kpd", rhs.diff, x)
    r = np.sqrt(np.einsum("kpd,kpd->kp", sep, sep))
    kin = 0.5 * np.einsum("n,knd,knd->k", ms.masses, v, v)
    en = kin - np.sum(rhs.mm / r, axis=1)
    J = W = A = None
    if k:
        J = Y[:, 2 * n : 2 * n + n * k].reshape(t.size, n, k)
        W = Y[:, 2 * n + n * k : 2 * n + 2 * n * k].reshape(t.size, n, k)
    if rhs.with_action:
        A = Y[:, -1].copy()
    return Trajectory(
        ms=ms, t=t, x=x, v=v, energy=en, tol=tol, J=J, W=W, action=A,
        segments=tuple(segs), meta=dict(meta or {}),
    )


def _initial_vector(ms, state: PhaseState, jacobi=None, with_action=False):
    x = ms.flat(state.x)
    v = ms.flat(state.v)
    parts = [x, v]
    k = 0
    if jacobi is not None:
        X, V = jacobi
        X = np.asarray(X, dtype=float).reshape(ms.size, -1)
        V = np.asarray(V, dtype=float).reshape(ms.size, -1)
        if X.shape != V.shape:
            raise ValueError("Jacobi data X and V must have matching shapes")
        k = X.shape[1]
        parts += [X.reshape(-1), V.reshape(-1)]
    if with_action:
        parts.append(np.zeros(1))
    return np.concatenate(parts), k


def default_floor(ms: MassSystem, x) -> float:
    return 1e-6 * mass_norm(ms, x)


def integrate(
    ms: MassSystem,
    state: PhaseState,
    t_end: float,
    tol: float = 1e-10,
    floor: Optional[float] = None,
    with_action: bool = False,
    jacobi=None,
) -> Trajectory:
    """Integrate ``x' = v, v' = grad U(x)`` from ``state`` to ``t_end``.

    ``tol`` is used as both relative and (scaled) absolute tolerance.
    Integration aborts with :class:`CollisionApproachError` if a mutual
    distance drops below ``floor`` (default ``1e-6 |x0|``).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x0 = ms.config(state.x)
    if min_pair_distance(ms, x0) == 0.0:
        raise SingularConfigurationError("initial configuration has a collision")
    y0, k = _initial_vector(ms, state, jacobi, with_action)
    rhs = NBodyRHS(ms, k, with_action)
    floor = default_floor(ms, x0) if floor is None else floor
    sol = _run(ms, y0, float(state.t), float(t_end), tol, rhs, floor)
    return _build(ms, rhs, [sol], tol)


def integrate_with_jacobi(
    ms: MassSystem,
    state: PhaseState,
    Z,
    t_end: float,
    tol: float = 1e-10,
    floor: Optional[float] = None,
    with_action: bool = False,
) -> Trajectory:
    """Co-integrate Jacobi fields ``J'' = HU(x(t)) J`` along the flow.

    ``Z = (X, V)`` gives ``J(0)`` and ``J'(0)``; each may be a single
    tangent vector or a ``(N*d, k)`` matrix of ``k`` columns.
    """
    return integrate(ms, state, t_end, tol=tol, floor=floor, with_action=with_action, jacobi=Z)


def detect_cone_exit(traj: Trajectory, cone: ConeSpec, substeps: int = 8) -> Optional[float]:
    """First time the trajectory leaves ``cone``; ``None`` if it never does.

    Each step of the dense output is scanned at ``substeps`` interior
    points and the crossing is refined by Brent's method.
    """
    ms = traj.ms
    a = ms.config(cone.axis)
    na = mass_norm(ms, a)

    def g(t):
        st = traj.state_at(t)
        x = st.x
        nx = mass_norm(ms, x)
        ang = mass_inner(ms, x, a) - cone.alpha * nx * na
        rad = nx - cone.r
        # both must be >= 0; scale the radial part like the angular one
        return min(ang, rad * na)

    t = traj.t
    if g(t[0]) < 0:
        return float(t[0])
    prev_t = float(t[0])
    for k in range(1, t.size):
        grid = np.linspace(t[k - 1], t[k], substeps + 1)[1:]
        for tt in grid:
            if g(tt) < 0:
                return float(brentq(g, prev_t, float(tt), xtol=1e-13, rtol=4 * np.finfo(float).eps))
            prev_t = float(tt)
    return None
