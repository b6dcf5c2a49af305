"""Newton shooting for a prescribed limit shape.

Given a start ``x0`` and a collision-free target ``a`` we solve
``a_hat(x0, v) = a`` for the initial velocity ``v``, starting from
``v = a``. Far inside a cone around ``a`` the Jacobian ``d a_hat / d v`` is
close to the identity and the iteration converges quadratically.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.stats import norm, qmc

from .asymptotics import NotHyperbolicError, limit_shape_jacobian
from .core import (
    ConeSpec,
    MassSystem,
    SingularConfigurationError,
    alpha0,
    energy,
    mass_inner,
    mass_norm,
    pair_distances,
    potential,
)
from .flow import IntegrationError, PhaseState, Trajectory, detect_cone_exit, integrate

__all__ = [
    "ShootingError",
    "ShootingResult",
    "ProbeResult",
    "check_collision_free",
    "solve_asymptotic_velocity",
    "hyperbolic_ray",
    "uniqueness_probe",
    "min_cosine_along",
]


class ShootingError(RuntimeError):
    """Newton shooting failed (singular Jacobian, stagnation, ...)."""


def check_collision_free(ms: MassSystem, x, what: str = "configuration") -> None:
    r = pair_distances(ms, x)
    if np.any(r == 0.0):
        i, j = ms._pairs
        k = int(np.argmin(r))
        raise SingularConfigurationError(f"{what} has a collision between bodies {int(i[k])} and {int(j[k])}")


@dataclass
class ShootingResult:
    v_star: np.ndarray
    residual: float
    iterations: int
    history: List[float]
    converged: bool
    energy_gap: float
    x0: np.ndarray
    a: np.ndarray
    left_ball: bool = False
    delta: Optional[float] = None
    cone_exit: Optional[float] = None
    in_cone: Optional[bool] = None
    limit_error: float = 0.0
    message: str = ""

    def to_record(self) -> dict:
        """JSON-ready record (plain lists and floats)."""
        return {
            "inputs": {"x0": self.x0.tolist(), "a": self.a.tolist()},
            "v_star": self.v_star.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "history": list(self.history),
            "converged": self.converged,
            "energy_check": {"gap": self.energy_gap},
            "confinement": {
                "x0_in_cone": self.in_cone,
                "cone_exit_time": self.cone_exit,
                "left_uniqueness_ball": self.left_ball,
                "delta": self.delta,
            },
            "limit_shape_error": self.limit_error,
            "message": self.message,
        }


def _cone_delta(ms: MassSystem, a, alpha: float) -> float:
    na = mass_norm(ms, a)
    return float(min(alpha * na / 4.0, 0.5 * na * np.sqrt(1.0 - alpha**2)))


def solve_asymptotic_velocity(
    ms: MassSystem,
    x0,
    a,
    tol: float = 1e-10,
    v_init=None,
    alpha: Optional[float] = None,
    max_iter: int = 30,
    max_halvings: int = 8,
    confine_to_ball: bool = False,
) -> ShootingResult:
    """Initial velocity at ``x0`` of the motion with limit shape ``a``.

    Damped Newton on ``v -> a_hat(x0, v) - a`` (step halved up to
    ``max_halvings`` times when the residual does not decrease). The limit
    shape is evaluated loosely while the residual is large and at
    ``tol / 10`` near convergence. With ``alpha`` the start is checked for
    membership in ``C_a(alpha)`` and iterates are tracked against the ball
    ``B(a, delta)``; ``confine_to_ball`` turns leaving it into an error.
    The default guess is ``a`` rescaled (relative to the centre of mass)
    onto the energy shell of the solution, then ``a`` itself.
    """
    a = ms.config(a)
    x0 = ms.config(x0)
    check_collision_free(ms, a, "limit shape a")
    check_collision_free(ms, x0, "initial configuration x0")
    delta = None
    in_cone = None
    if alpha is not None:
        a0 = alpha0(ms, a)
        if not a0 < alpha < 1:
            raise ValueError(f"alpha must lie in (alpha0(a)={a0:.6g}, 1)")
        delta = _cone_delta(ms, a, alpha)
        in_cone = ConeSpec(a, alpha).contains(ms, x0)
        if not in_cone:
            warnings.warn("x0 lies outside the cone C_a(alpha); uniqueness is not guaranteed", RuntimeWarning)
    final_tol = tol / 10.0

    def evaluate(v, ltol):
        try:
            res = limit_shape_jacobian(ms, PhaseState(x0, v), tol=ltol, jac_tol=max(ltol, 1e-9))
        except (NotHyperbolicError, IntegrationError, SingularConfigurationError):
            return None
        return res

    history = []
    left = False
    ltol = max(final_tol, 1e-6)
    if v_init is None:
        # every solution lies on the energy shell |v|^2/2 - U(x0) = |a|^2/2,
        # so start from a rescaled there (relative to the centre of mass)
        vcm = np.broadcast_to(ms.center_of_mass(a), a.shape)
        rel = a - vcm
        v = vcm + rel * np.sqrt(1.0 + 2.0 * potential(ms, x0) / mass_norm(ms, rel) ** 2)
        cur = evaluate(v, ltol)
        if cur is None:
            v = a.copy()
            cur = evaluate(v, ltol)
    else:
        v = ms.config(v_init).copy()
        cur = evaluate(v, ltol)
    if cur is None:
        raise ShootingError("initial guess does not generate a hyperbolic motion")
    it = 0
    message = ""
    while True:
        F = (cur.a_hat - a).reshape(-1)
        r = mass_norm(ms, F)
        if ltol > final_tol and r < 1e3 * ltol:
            ltol = max(final_tol, min(ltol, 1e-3 * r))
            cur = evaluate(v, ltol)
            if cur is None:
                raise ShootingError("limit shape evaluation failed during refinement")
            continue
        history.append(r)
        if delta is not None and mass_norm(ms, v - a) > delta:
            left = True
            if confine_to_ball:
                raise ShootingError(f"iterate left the uniqueness ball B(a, {delta:.4g})")
        if r <= tol and ltol <= final_tol:
            break
        if it >= max_iter:
            raise ShootingError(f"no convergence after {max_iter} iterations (residual {r:.3g})")
        D = cur.jacobian
        if np.linalg.cond(D) > 1e12:
            raise ShootingError("limit-shape Jacobian is near-singular")
        step = np.linalg.solve(D, -F).reshape(v.shape)
        accepted = False
        for j in range(max_halvings + 1):
            trial = v + step / 2.0**j
            nxt = evaluate(trial, ltol)
            if nxt is not None and mass_norm(ms, nxt.a_hat - a) < r:
                v, cur, accepted = trial, nxt, True
                break
        if not accepted:
            raise ShootingError(f"residual stagnated at {r:.3g} after {it} iterations")
        it += 1
        ltol = max(final_tol, min(ltol, 1e-3 * mass_norm(ms, cur.a_hat - a)))
    gap = abs(energy(ms, x0, v) - 0.5 * mass_inner(ms, a, a))
    return ShootingResult(
        v_star=v, residual=float(history[-1]), iterations=it, history=history, converged=True,
        energy_gap=float(gap), x0=x0, a=a, left_ball=left, delta=delta, in_cone=in_cone,
        limit_error=float(cur.error), message=message,
    )


def min_cosine_along(ms: MassSystem, traj: Trajectory, a) -> float:
    """Smallest cosine between ``x(t)`` and ``a`` over the samples of ``traj``."""
    a = ms.config(a)
    na = mass_norm(ms, a)
    w = ms.masses
    xs = traj.x
    dots = np.einsum("i,kij,ij->k", w, xs, a)
    norms = np.sqrt(np.einsum("i,kij,kij->k", w, xs, xs))
    return float(np.min(dots / (norms * na)))


def hyperbolic_ray(
    ms: MassSystem,
    x0,
    a,
    tol: float = 1e-10,
    t_end: float = 100.0,
    cone: Optional[ConeSpec] = None,
    lam: Optional[float] = None,
    eps: Optional[float] = None,
    shooting: Optional[ShootingResult] = None,
) -> Trajectory:
    """Shoot for ``a`` from ``x0`` and integrate the resulting motion.

    The returned trajectory carries the action accumulator and a report in
    ``meta``: cone exit time (``None`` if confined), strict monotonicity of
    ``|x(t)|``, the worst slack of ``|x(t)| >= |x0| + lam t`` and
    ``sup_t |x'(t) - a|`` compared against ``eps``.
    """
    a = ms.config(a)
    sr = shooting if shooting is not None else solve_asymptotic_velocity(ms, x0, a, tol=tol)
    traj = integrate(ms, PhaseState(sr.x0, sr.v_star), t_end, tol=min(1e-12, tol), with_action=True)
    w = ms.masses
    norms = np.sqrt(np.einsum("i,kij,kij->k", w, traj.x, traj.x))
    dv = traj.v - a[None]
    vdev = np.sqrt(np.einsum("i,kij,kij->k", w, dv, dv))
    report = {
        "v_star": sr.v_star,
        "residual": sr.residual,
        "monotone_size": bool(np.all(np.diff(norms) > 0)),
        "sup_velocity_deviation": float(vdev.max()),
        "min_cosine": min_cosine_along(ms, traj, a),
    }
    if cone is not None:
        report["cone_exit"] = detect_cone_exit(traj, cone)
    if lam is not None:
        report["growth_slack"] = float(np.min(norms - (norms[0] + lam * (traj.t - traj.t[0]))))
    if eps is not None:
        report["velocity_band_ok"] = bool(vdev.max() <= eps)
    meta = dict(traj.meta)
    meta.update(report)
    object.__setattr__(traj, "meta", meta)
    return traj


@dataclass
class ProbeResult:
    results: list
    clusters: List[np.ndarray]
    confined: List[bool]
    min_cosines: List[float]
    failures: int = 0
    starts: list = field(default_factory=list)

    @property
    def n_distinct(self) -> int:
        return len(self.clusters)

    @property
    def n_confined(self) -> int:
        return int(sum(self.confined))


def _shell_directions(ms: MassSystem, n: int, rng) -> List[np.ndarray]:
    """``n`` well-spread mass-unit directions with zero total momentum.

    On a circle the angles are equispaced with a random offset; otherwise a
    scrambled Sobol sequence is mapped to the sphere through normal quantiles.
    """
    w = np.sqrt(ms.weights)
    # projector removing the centre of mass, x -> x - cm(x)
    cm = np.kron(np.ones((ms.n_bodies, 1)), np.kron(ms.masses[None, :], np.eye(ms.dim))) / ms.total_mass
    P = np.eye(ms.size) - cm
    U, sv, _ = np.linalg.svd(w[:, None] * P / w[None, :])
    basis = U[:, sv > 0.5] / w[:, None]
    k = basis.shape[1]
    if k == 2:
        ang = rng.uniform(0.0, 2.0 * np.pi) + 2.0 * np.pi * np.arange(n) / n
        coords = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        q = qmc.Sobol(k, scramble=True, seed=rng).random_base2(max(int(np.ceil(np.log2(n))), 0))[:n]
        coords = norm.ppf(np.clip(q, 1e-12, 1.0 - 1e-12))
        coords /= np.linalg.norm(coords, axis=1, keepdims=True)
    return [(basis @ c).reshape(ms.n_bodies, ms.dim) for c in coords]


def uniqueness_probe(
    ms: MassSystem,
    x0,
    a,
    tol: float = 1e-10,
    n_starts: int = 20,
    seed: int = 0,
    magnitudes=(0.1, 0.5, 1.0, 2.0, 4.0),
    horizon: Optional[float] = None,
    threads: int = 1,
    global_fraction: float = 0.5,
) -> ProbeResult:
    """Run the shooting solver from spread-out guesses and cluster the answers.

    Every solution lies on the energy shell ``|v|^2 / 2 - U(x0) = |a|^2 / 2``
    and has the total momentum of ``a``, so all guesses are placed there.
    A fraction ``global_fraction`` of them covers the shell evenly; the
    others are local guesses ``a + rho * u`` (``u`` a random zero-momentum
    unit vector, ``rho / |a|`` cycling through ``magnitudes``) rescaled onto
    the shell. Solutions within ``100 tol`` (mass norm) form one cluster. A
    cluster is ``confined`` when its motion stays inside a cone around ``a``
    that avoids collisions.
    """
    a = ms.config(a)
    x0 = ms.config(x0)
    rng = np.random.default_rng(seed)
    na = mass_norm(ms, a)
    vcm = np.broadcast_to(ms.center_of_mass(a), a.shape)
    rel2 = na**2 + 2.0 * potential(ms, x0) - mass_norm(ms, vcm) ** 2
    n_global = int(round(global_fraction * n_starts))
    starts = []
    for k in range(n_starts - n_global):
        u = rng.standard_normal(a.shape)
        u -= ms.center_of_mass(u)
        u /= mass_norm(ms, u)
        rho = magnitudes[k % len(magnitudes)] * na
        rel = a - vcm + rho * u
        starts.append(vcm + rel * np.sqrt(rel2) / mass_norm(ms, rel))
    if n_global:
        starts += [vcm + np.sqrt(rel2) * u for u in _shell_directions(ms, n_global, rng)]

    def run(v0):
        try:
            return solve_asymptotic_velocity(ms, x0, a, tol=tol, v_init=v0)
        except (ShootingError, SingularConfigurationError) as exc:
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(v) for v in starts]
    clusters: List[np.ndarray] = []
    for res in results:
        if isinstance(res, Exception):
            continue
        if not any(mass_norm(ms, res.v_star - c) <= 100 * tol for c in clusters):
            clusters.append(res.v_star)
    a0 = alpha0(ms, a)
    horizon = horizon or 200.0 * (mass_norm(ms, x0) / na + 1.0)
    confined, cosines = [], []
    for c in clusters:
        traj = integrate(ms, PhaseState(x0, c), horizon, tol=1e-11)
        mc = min_cosine_along(ms, traj, a)
        cosines.append(mc)
        confined.append(bool(mc > a0 + 1e-9))
    return ProbeResult(
        results=results, clusters=clusters, confined=confined, min_cosines=cosines,
        failures=sum(isinstance(r, Exception) for r in results), starts=starts,
    )
