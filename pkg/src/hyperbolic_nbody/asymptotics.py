"""Limit shapes of hyperbolic motions and their derivatives.

The limit shape of a hyperbolic motion is ``a = lim x(t)/t = lim v(t)``.
Since ``v(T) = v0 + int_0^T grad U(x(t)) dt`` the integrator already
carries the truncated integral; the tail ``int_T^inf`` is approximated by
its first asymptotic term ``grad U(a)/T`` and bounded using the in-cone
decay ``|grad U(x)| <= mu / |x|^2`` together with linear growth of
``|x(t)|``. ``T`` is doubled until bound and increment are both small.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .core import (
    MassSystem,
    SingularConfigurationError,
    energy,
    hessian_apply,
    hessian_opnorm,
    mass_norm,
    min_pair_distance,
    potential_gradient,
)
from .flow import NBodyRHS, PhaseState, Trajectory, _build, _run, default_floor

__all__ = [
    "NotHyperbolicError",
    "LimitShapeResult",
    "limit_shape",
    "dlimit_shape_v",
    "limit_shape_jacobian",
    "jacobian_deviation",
    "chazy_residual",
    "write_chazy_csv",
    "MajorantResult",
    "jacobi_majorant",
    "hessian_decay_bound",
]


class NotHyperbolicError(RuntimeError):
    """The forward motion could not be certified as hyperbolic."""


@dataclass(frozen=True)
class LimitShapeResult:
    """Limit-shape estimate with its error budget.

    ``error`` adds the tail bound, the last-octave increment and the energy
    drift of the run (converted to a velocity error). ``jacobian`` holds
    derivative columns ``d a / d v (V_k)`` when requested, flat layout.
    """

    a_hat: np.ndarray
    T: float
    tail_bound: float
    increment: float
    error: float
    tail: np.ndarray
    jacobian: Optional[np.ndarray] = None
    jacobian_error: float = 0.0
    diagnostics: dict = field(default_factory=dict)
    trajectory: Optional[Trajectory] = None


def _integrator_tol(tol: float) -> float:
    return float(np.clip(tol * 1e-3, 2.5e-14, 1e-8))


def _asymptotic_run(
    ms: MassSystem,
    x0,
    v0,
    tol: float,
    V=None,
    jac_tol: Optional[float] = None,
    t_max: float = 1e17,
    keep_trajectory: bool = False,
    int_tol: Optional[float] = None,
) -> LimitShapeResult:
    x0 = ms.flat(x0)
    v0 = ms.flat(v0)
    n = ms.size
    shape = (ms.n_bodies, ms.dim)
    if min_pair_distance(ms, x0) == 0.0:
        raise SingularConfigurationError("initial configuration has a collision")
    h = energy(ms, x0, v0)
    if not h > 0:
        raise NotHyperbolicError(f"energy {h:.6g} <= 0: no hyperbolic motion has this state")
    # the limit shape relative to the centre of mass carries the internal energy
    vcm = ms.center_of_mass(v0.reshape(ms.n_bodies, ms.dim))
    h_int = h - 0.5 * ms.total_mass * float(vcm @ vcm)
    if not h_int > 0:
        raise NotHyperbolicError(f"internal energy {h_int:.6g} <= 0: no hyperbolic motion has this state")
    k = 0
    parts = [x0, v0]
    if V is not None:
        V = np.asarray(V, dtype=float).reshape(n, -1)
        k = V.shape[1]
        parts += [np.zeros(n * k), V.reshape(-1)]
        jac_tol = tol if jac_tol is None else jac_tol
    y = np.concatenate(parts)
    rhs = NBodyRHS(ms, k)
    itol = _integrator_tol(tol) if int_tol is None else int_tol
    floor = default_floor(ms, x0)
    speed = np.sqrt(2.0 * h)
    T = max(4.0 * mass_norm(ms, x0) / speed, 4.0)
    t = 0.0
    sols = []
    prev_est = prev_jac = None
    prev_minr = min_pair_distance(ms, x0)
    prev_octave_min = 0.0
    stalls = 0
    iu, ju = ms._pairs
    first_step = None
    w = ms.weights
    while True:
        sol = _run(ms, y, t, T, itol, rhs, floor, first_step=first_step)
        sols.append(sol)
        first_step = min(float(sol.t[-1] - sol.t[-2]), T) if sol.t.size > 1 else None
        Y = sol.y
        xs, vs = Y[:n], Y[n : 2 * n]
        xn = np.sqrt(np.einsum("i,ik,ik->k", w, xs, xs))
        rate = np.einsum("i,ik,ik->k", w, xs, vs) / xn
        lam_loc = float(rate.min())
        G = rhs.gradient_samples(xs)
        mu_loc = 1.05 * float(np.max(np.sqrt(np.einsum("i,ik,ik->k", w, G, G)) * xn**2))
        xT, vT = Y[:n, -1], Y[n : 2 * n, -1]
        minr = min_pair_distance(ms, xT)
        a_est = vT.reshape(shape)
        tail = potential_gradient(ms, a_est) / T
        est = vT + tail.reshape(-1)
        bound = mu_loc / (lam_loc * xn[-1]) if lam_loc > 0 else np.inf
        inc = np.inf if prev_est is None else mass_norm(ms, est - prev_est)
        ok = lam_loc > 0 and minr > prev_minr and bound < tol / 2 and inc < tol / 2
        jac = jtail_bound = jinc = None
        if k:
            base = 2 * n
            Jc = Y[base : base + n * k]
            Wc = Y[base + n * k : base + 2 * n * k]
            WT = Wc[:, -1].reshape(n, k)
            jtail = np.stack(
                [hessian_apply(ms, a_est, WT[:, c]).reshape(-1) / T for c in range(k)], axis=1
            )
            jac = WT + jtail
            HJ = rhs.hessian_samples(xs, Jc)
            hn = np.sqrt(np.einsum("i,ick,ick->ck", w, HJ, HJ))
            worst = float(np.max(hn * (sol.t[None, :] + 1.0) ** 2))
            jtail_bound = 1.05 * worst / (T + 1.0)
            jinc = np.inf if prev_jac is None else float(
                np.max(np.sqrt(np.einsum("i,ik,ik->k", w, jac - prev_jac, jac - prev_jac)))
            )
            ok = ok and jtail_bound < jac_tol / 2 and jinc < jac_tol / 2
            prev_jac = jac
        if ok:
            break
        # a bound subsystem keeps the smallest distance of each octave flat
        X3 = xs.reshape(ms.n_bodies, ms.dim, -1)
        octave_min = float(np.sqrt(((X3[iu] - X3[ju]) ** 2).sum(axis=1)).min())
        stalls = stalls + 1 if octave_min < 1.2 * prev_octave_min else 0
        prev_octave_min = octave_min
        if stalls >= 4 and T > 1e2 * max(1.0, mass_norm(ms, x0) / speed):
            raise NotHyperbolicError(
                f"mutual distances stopped growing by t={T:.3g}: motion is not hyperbolic"
            )
        if T * 2 > t_max:
            raise NotHyperbolicError(
                f"limit shape not converged by t={T:.3g} (tail bound {bound:.3g}, increment {inc:.3g})"
            )
        prev_est, prev_minr = est, minr
        t, y = T, Y[:, -1].copy()
        T *= 2.0
    traj = _build(ms, rhs, sols, itol) if keep_trajectory else None
    drift = 0.0
    if traj is not None:
        drift = traj.max_energy_drift
    else:
        drift = abs(energy(ms, xT, vT) - h)
    a_hat = est.reshape(shape)
    err = bound + inc + drift / speed
    diag = dict(
        energy=h,
        speed_law_gap=abs(mass_norm(ms, a_hat) - speed),
        lam_loc=lam_loc,
        mu_loc=mu_loc,
        octaves=len(sols),
        nfev=rhs.nfev,
        energy_drift=drift,
        min_distance_T=minr,
    )
    return LimitShapeResult(
        a_hat=a_hat,
        T=float(T),
        tail_bound=float(bound),
        increment=float(inc),
        error=float(err),
        tail=tail,
        jacobian=jac,
        jacobian_error=float((jtail_bound or 0.0) + (jinc or 0.0)),
        diagnostics=diag,
        trajectory=traj,
    )


def limit_shape(ms: MassSystem, z: PhaseState, tol: float = 1e-10, keep_trajectory: bool = False, **kw) -> LimitShapeResult:
    """Limit shape ``lim v(t)`` of the motion starting at ``z``.

    Raises :class:`NotHyperbolicError` when the forward run does not expand
    (non-positive energy, stalled mutual distances, or no convergence).
    """
    return _asymptotic_run(ms, z.x, z.v, tol, keep_trajectory=keep_trajectory, **kw)


def dlimit_shape_v(ms: MassSystem, z: PhaseState, V, tol: float = 1e-8, **kw) -> np.ndarray:
    """Derivative of the limit shape along ``(0, V)`` as an ``(N, d)`` array.

    ``V + int_0^inf HU(x(t)) J(t) dt`` with ``J(0) = 0``, ``J'(0) = V``.
    """
    V = ms.flat(V)
    res = _asymptotic_run(ms, z.x, z.v, tol, V=V[:, None], jac_tol=tol * max(1.0, mass_norm(ms, V)), **kw)
    return res.jacobian[:, 0].reshape(ms.n_bodies, ms.dim)


def limit_shape_jacobian(ms: MassSystem, z: PhaseState, tol: float = 1e-10, jac_tol: float = 1e-8, **kw) -> LimitShapeResult:
    """Limit shape together with the flat matrix ``d a / d v``.

    Columns are computed along a mass-orthonormal basis and converted back,
    so ``result.jacobian @ dv`` is the first-order change for a flat ``dv``.
    """
    B = ms.orthonormal_basis()
    res = _asymptotic_run(ms, z.x, z.v, tol, V=B, jac_tol=jac_tol, **kw)
    D = res.jacobian @ np.linalg.inv(B)
    return LimitShapeResult(
        a_hat=res.a_hat, T=res.T, tail_bound=res.tail_bound, increment=res.increment,
        error=res.error, tail=res.tail, jacobian=D, jacobian_error=res.jacobian_error,
        diagnostics=res.diagnostics, trajectory=res.trajectory,
    )


def jacobian_deviation(ms: MassSystem, D: np.ndarray) -> float:
    """Mass-metric operator norm of ``D - Id`` for a flat matrix ``D``."""
    s = np.sqrt(ms.weights)
    Dm = (s[:, None] * (D - np.eye(D.shape[0]))) / s[None, :]
    return float(np.linalg.norm(Dm, 2))


def chazy_residual(traj: Trajectory, a) -> np.ndarray:
    """Rows ``(t, |x - t a + log(t) grad U(a)|, |x - t a|)`` for samples with ``t >= 1``."""
    ms = traj.ms
    a = ms.config(a)
    gU = potential_gradient(ms, a)
    rows = []
    for k in np.nonzero(traj.t >= 1.0)[0]:
        t = traj.t[k]
        drift = traj.x[k] - t * a
        rows.append((t, mass_norm(ms, drift + np.log(t) * gU), mass_norm(ms, drift)))
    return np.array(rows).reshape(-1, 3)


def write_chazy_csv(rows: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "residual", "drift_without_log"])
        for row in rows:
            w.writerow([format(float(v), ".17g") for v in row])


@dataclass(frozen=True)
class MajorantResult:
    t: np.ndarray
    y: np.ndarray
    ydot: np.ndarray
    c: float
    sol: object = field(repr=False, default=None)

    def __call__(self, t):
        return self.sol(t)[0]


def jacobi_majorant(
    k: float,
    alpha_exp: float,
    y0: float,
    ydot0: float,
    t_end: float,
    t0: float = 0.0,
    shift: float = 1.0,
    rtol: float = 1e-12,
) -> MajorantResult:
    """Solve ``y'' = k (t + shift)^-(2 + alpha_exp) y`` from ``t0``.

    ``c`` is the empirical linear-growth constant ``max y(t) / (t + shift)``.
    """
    if k < 0 or alpha_exp <= 0 or y0 < 0 or ydot0 < 0:
        raise ValueError("need k >= 0, alpha_exp > 0 and non-negative initial data")
    p = 2.0 + alpha_exp

    def rhs(t, u):
        return [u[1], k * (t + shift) ** (-p) * u[0]]

    sol = solve_ivp(rhs, (t0, t_end), [y0, ydot0], method="DOP853", rtol=rtol, atol=1e-300, dense_output=True)
    if sol.status != 0:
        raise RuntimeError(sol.message)
    ratio = sol.y[0] / (sol.t + shift)
    return MajorantResult(t=sol.t, y=sol.y[0], ydot=sol.y[1], c=float(ratio.max()), sol=sol.sol)


def hessian_decay_bound(traj: Trajectory, substeps: int = 4, safety: float = 1.05) -> float:
    """Smallest ``k`` with ``|HU(x(t))| <= k (t + 1)^-3`` on a dense sampling.

    Operator norms come from 20 power iterations; ``safety`` inflates the
    sampled maximum to cover the gaps between samples.
    """
    ms = traj.ms
    worst = 0.0
    t = traj.t
    for i in range(t.size - 1):
        for tt in np.linspace(t[i], t[i + 1], substeps + 1)[:-1]:
            x = traj.state_at(tt).x
            worst = max(worst, hessian_opnorm(ms, x) * (tt - t[0] + 1.0) ** 3)
    x = traj.x[-1]
    worst = max(worst, hessian_opnorm(ms, x) * (t[-1] - t[0] + 1.0) ** 3)
    return safety * worst
