"""Closed-form hyperbolic two-body motion.

Relative motion ``r = r_2 - r_1`` obeys ``r'' = -M r / |r|^3`` with
``M = m_1 + m_2``; the centre of mass drifts linearly. All conic geometry
is done in the plane of the relative motion, described by an orthonormal
pair ``(e1, e2)`` of ambient vectors, and embedded back at the end.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .core import MassSystem, alpha0, energy, mass_inner, mass_norm
from .flow import PhaseState

__all__ = [
    "KeplerError",
    "KeplerElements",
    "KeplerBranch",
    "reduce_state",
    "expand_state",
    "kepler_elements",
    "kepler_propagate",
    "kepler_branches",
    "solve_hyperbolic_kepler",
]


class KeplerError(ValueError):
    """Input outside the hyperbolic two-body regime."""


def _check_two_body(ms: MassSystem):
    if ms.n_bodies != 2:
        raise KeplerError("the Kepler oracle needs exactly two bodies")


def reduce_state(ms: MassSystem, x, v):
    """Full two-body state -> (cm, vcm, r, rdot)."""
    _check_two_body(ms)
    x = ms.config(x)
    v = ms.config(v)
    M = ms.total_mass
    cm = ms.masses @ x / M
    vcm = ms.masses @ v / M
    return cm, vcm, x[1] - x[0], v[1] - v[0]


def expand_state(ms: MassSystem, cm, vcm, r, rdot):
    """Inverse of :func:`reduce_state`."""
    m1, m2 = ms.masses
    M = m1 + m2
    x = np.stack([cm - (m2 / M) * r, cm + (m1 / M) * r])
    v = np.stack([vcm - (m2 / M) * rdot, vcm + (m1 / M) * rdot])
    return x, v


def _rot(w):
    # (w_y, -w_x): the plane part of w x (l e_z) divided by l
    return np.array([w[1], -w[0]])


def _plane_basis(d, first, second):
    """Orthonormal ``(e1, e2)``; the canonical axes when ``d == 2``."""
    if d == 2:
        return np.array([1.0, 0.0]), np.array([0.0, 1.0])
    e1 = first / np.linalg.norm(first)
    w = second - np.dot(second, e1) * e1
    if np.linalg.norm(w) < 1e-12 * max(1.0, np.linalg.norm(second)):
        k = int(np.argmin(np.abs(e1)))
        w = np.zeros(d)
        w[k] = 1.0
        w -= np.dot(w, e1) * e1
    return e1, w / np.linalg.norm(w)


def solve_hyperbolic_kepler(mean_anomaly: float, ecc: float, tol: float = 1e-13, maxiter: int = 200) -> float:
    """Solve ``e sinh H - H = M`` by Newton safeguarded with bisection."""
    Mn = float(mean_anomaly)
    if Mn == 0.0:
        return 0.0
    s = np.sign(Mn)
    Ma = abs(Mn)
    # root lies in [0, asinh-like upper bound]; f is increasing for H > 0
    f = lambda H: ecc * np.sinh(H) - H - Ma
    lo, hi = 0.0, max(1.0, np.log(2.0 * Ma / ecc + 2.0) + 1.0)
    while f(hi) < 0:
        hi *= 2.0
    H = np.log(2.0 * Ma / ecc + 1.8) if Ma > 1.0 else min(np.arcsinh(Ma / ecc), hi)
    if ecc - 1.0 < 1e-3 and Ma < 1.0:
        H = min(np.cbrt(6.0 * Ma), hi)
    for _ in range(maxiter):
        fh = f(H)
        if fh > 0:
            hi = min(hi, H)
        else:
            lo = max(lo, H)
        d = ecc * np.cosh(H) - 1.0
        step = fh / d if d > 0 else np.inf
        Hn = H - step
        if not lo < Hn < hi:
            Hn = 0.5 * (lo + hi)
        if abs(Hn - H) <= tol * max(1.0, abs(Hn)):
            return float(s * Hn)
        H = Hn
    raise KeplerError(f"hyperbolic Kepler equation did not converge (M={Mn}, e={ecc})")


@dataclass(frozen=True)
class KeplerElements:
    """Hyperbolic relative orbit plus the centre-of-mass drift.

    ``ell`` is the signed specific angular momentum in the ``(e1, e2)``
    plane; ``semi_axis`` is ``|a| = M / (2 eps)``; ``periapsis``,
    ``outgoing`` and ``incoming`` are ambient unit vectors.
    """

    ms: MassSystem
    gm: float
    h: float
    eps: float
    ell: float
    ecc: float
    semi_axis: float
    mean_motion: float
    e1: np.ndarray
    e2: np.ndarray
    periapsis: np.ndarray
    outgoing: np.ndarray
    incoming: np.ndarray
    anomaly0: float
    cm0: np.ndarray
    vcm: np.ndarray
    x0: np.ndarray
    v0: np.ndarray
    rectilinear: bool

    @property
    def asymptotic_speed(self) -> float:
        """Relative speed at infinity, ``sqrt(2 eps)``."""
        return float(np.sqrt(2.0 * self.eps))

    @property
    def limit_shape(self) -> np.ndarray:
        """Limit shape of the full configuration (bodies' final velocities)."""
        m1, m2 = self.ms.masses
        M = m1 + m2
        w = self.asymptotic_speed * self.outgoing
        return np.stack([self.vcm - (m2 / M) * w, self.vcm + (m1 / M) * w])

    @property
    def sign(self) -> float:
        return 1.0 if self.ell >= 0 else -1.0


def kepler_elements(ms: MassSystem, x, v) -> KeplerElements:
    """Conic elements of a hyperbolic two-body state.

    ``x``/``v`` may be full ``(2, d)`` configurations or relative vectors of
    length ``d`` (centre of mass then at rest at the origin).
    """
    _check_two_body(ms)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.size == ms.dim:
        cm, vcm = np.zeros(ms.dim), np.zeros(ms.dim)
        xf, vf = expand_state(ms, cm, vcm, x.reshape(-1), v.reshape(-1))
    else:
        xf, vf = ms.config(x), ms.config(v)
    cm, vcm, r, rd = reduce_state(ms, xf, vf)
    gm = ms.total_mass
    rn = np.linalg.norm(r)
    if rn == 0.0:
        raise KeplerError("relative position is zero (collision)")
    eps = 0.5 * np.dot(rd, rd) - gm / rn
    if not eps > 0:
        raise KeplerError(f"relative energy {eps:.6g} is not positive: orbit is not hyperbolic")
    e1, e2 = _plane_basis(ms.dim, r, rd)
    rp = np.array([np.dot(r, e1), np.dot(r, e2)])
    vp = np.array([np.dot(rd, e1), np.dot(rd, e2)])
    ell = rp[0] * vp[1] - rp[1] * vp[0]
    A = ell * _rot(vp) - gm * rp / rn
    ecc = float(np.sqrt(1.0 + 2.0 * eps * ell**2 / gm**2))
    semi = gm / (2.0 * eps)
    rect = ell == 0.0
    if rect:
        ecc = 1.0
        phat = -rp / rn
    else:
        phat = A / np.linalg.norm(A)
    s = 1.0 if ell >= 0 else -1.0
    qhat = np.array([-phat[1], phat[0]])
    ce, se = -1.0 / ecc, np.sqrt(max(1.0 - 1.0 / ecc**2, 0.0))
    out_p = ce * phat + s * se * qhat
    in_p = -ce * phat + s * se * qhat
    emb = lambda p: p[0] * e1 + p[1] * e2
    H0 = np.arcsinh(np.dot(rp, vp) / (ecc * np.sqrt(gm * semi)))
    return KeplerElements(
        ms=ms, gm=gm, h=float(energy(ms, xf, vf)), eps=float(eps), ell=float(ell), ecc=ecc,
        semi_axis=float(semi), mean_motion=float(np.sqrt(gm / semi**3)), e1=e1, e2=e2,
        periapsis=emb(phat), outgoing=emb(out_p), incoming=emb(in_p), anomaly0=float(H0),
        cm0=cm, vcm=vcm, x0=xf.copy(), v0=vf.copy(), rectilinear=bool(rect),
    )


def kepler_propagate(elems: KeplerElements, t: float) -> PhaseState:
    """Exact state at time ``t`` (the epoch of ``elems`` is ``t = 0``)."""
    if t == 0:
        return PhaseState(elems.x0.copy(), elems.v0.copy(), 0.0)
    e, A, s = elems.ecc, elems.semi_axis, elems.sign
    M0 = e * np.sinh(elems.anomaly0) - elems.anomaly0
    H = solve_hyperbolic_kepler(M0 + elems.mean_motion * t, e)
    Hdot = elems.mean_motion / (e * np.cosh(H) - 1.0)
    b = A * np.sqrt(max(e**2 - 1.0, 0.0))
    X, Y = A * (e - np.cosh(H)), s * b * np.sinh(H)
    Xd, Yd = -A * np.sinh(H) * Hdot, s * b * np.cosh(H) * Hdot
    phat = elems.periapsis
    # q = rot90(p) within the orbit plane
    pc = np.array([np.dot(phat, elems.e1), np.dot(phat, elems.e2)])
    qc = np.array([-pc[1], pc[0]])
    qhat = qc[0] * elems.e1 + qc[1] * elems.e2
    r = X * phat + Y * qhat
    rd = Xd * phat + Yd * qhat
    cm = elems.cm0 + elems.vcm * t
    x, v = expand_state(elems.ms, cm, elems.vcm, r, rd)
    return PhaseState(x, v, float(t))


@dataclass(frozen=True)
class KeplerBranch:
    v: np.ndarray
    ell: float
    confined: bool
    min_cosine: float
    rectilinear: bool = False


def _min_cosine(ms: MassSystem, elems: KeplerElements, a) -> float:
    """Smallest cosine between ``x(t)`` and ``a`` over ``t >= 0`` (sampled).

    Samples are uniform in true anomaly, so a fast periapsis swing is
    resolved, plus a tail uniform in hyperbolic anomaly (times up to about
    ``e^40`` orbital units) for the centre-of-mass drift.
    """
    na = mass_norm(ms, a)
    e = elems.ecc
    if elems.rectilinear or not e > 1.0:
        scale = np.linalg.norm(elems.x0[1] - elems.x0[0]) / elems.asymptotic_speed
        ts = np.concatenate([np.linspace(0.0, 20.0 * scale, 400), scale * np.logspace(1.4, 8, 200)])
        worst = 1.0
        for t in ts:
            x = kepler_propagate(elems, t).x
            worst = min(worst, mass_inner(ms, x, a) / (mass_norm(ms, x) * na))
        return float(worst)
    k = np.sqrt((e - 1.0) / (e + 1.0))
    H0 = elems.anomaly0
    f0 = 2.0 * np.arctan(np.tanh(H0 / 2.0) / k)
    f = np.linspace(f0, np.arccos(-1.0 / e), 4001)[:-1]
    H = 2.0 * np.arctanh(np.clip(k * np.tan(f / 2.0), -1.0 + 1e-16, 1.0 - 1e-16))
    H = np.concatenate([[H0], H[H > H0], np.linspace(max(H0, 0.0), max(H0, 0.0) + 40.0, 400)])
    M0 = e * np.sinh(H0) - H0
    t = (e * np.sinh(H) - H - M0) / elems.mean_motion
    A, s = elems.semi_axis, elems.sign
    b = A * np.sqrt(e**2 - 1.0)
    pc = np.array([np.dot(elems.periapsis, elems.e1), np.dot(elems.periapsis, elems.e2)])
    qhat = -pc[1] * elems.e1 + pc[0] * elems.e2
    r = (A * (e - np.cosh(H)))[:, None] * elems.periapsis + (s * b * np.sinh(H))[:, None] * qhat
    cm = elems.cm0 + t[:, None] * elems.vcm
    m1, m2 = ms.masses
    M = m1 + m2
    x = np.stack([cm - (m2 / M) * r, cm + (m1 / M) * r], axis=1)
    w = ms.masses
    dots = np.einsum("i,kij,ij->k", w, x, ms.config(a))
    norms = np.sqrt(np.einsum("i,kij,kij->k", w, x, x))
    return float(min(1.0, np.min(dots / (norms * na))))


def kepler_branches(ms: MassSystem, x0, a) -> List[KeplerBranch]:
    """All initial velocities at ``x0`` whose motion has limit shape ``a``.

    Solves the planar inverse problem in closed form: on the orbit with
    outgoing asymptotic velocity ``w`` the Laplace-Runge-Lenz vector is
    ``ell rot(w) - M w/|w|``, and the orbit equation at ``r0`` gives the
    quadratic ``ell^2 - (r0 . rot(w)) ell - M (|r0| - r0 . w/|w|) = 0``.
    Off the axis it has two roots of opposite signs; when ``r0`` points
    along ``w`` the only motion is rectilinear. A branch is flagged
    ``confined`` when its future stays in some cone around ``a`` that
    avoids collisions (``min cosine > alpha0(a)``).
    """
    _check_two_body(ms)
    x0 = ms.config(x0)
    a = ms.config(a)
    m1, m2 = ms.masses
    gm = m1 + m2
    vcm = (m1 * a[0] + m2 * a[1]) / gm
    w = a[1] - a[0]
    r0 = x0[1] - x0[0]
    wn, rn = np.linalg.norm(w), np.linalg.norm(r0)
    if wn == 0.0:
        raise KeplerError("limit shape has a collision (zero relative velocity)")
    if rn == 0.0:
        raise KeplerError("initial configuration has a collision")
    e1, e2 = _plane_basis(ms.dim, w, r0)
    wp = np.array([np.dot(w, e1), np.dot(w, e2)])
    rp = np.array([np.dot(r0, e1), np.dot(r0, e2)])
    what = wp / wn
    b = float(np.dot(rp, _rot(wp)))
    c = float(gm * (rn - np.dot(rp, what)))
    emb = lambda p: p[0] * e1 + p[1] * e2
    cm = ms.masses @ x0 / gm
    a0 = alpha0(ms, a)
    out = []
    if c <= 1e-14 * gm * rn:
        rd = np.sqrt(wn**2 + 2.0 * gm / rn) * rp / rn
        ells = [(0.0, rd)]
    else:
        disc = np.sqrt(b * b + 4.0 * c)
        ells = []
        for ell in ((b + disc) / 2.0, (b - disc) / 2.0):
            A = ell * _rot(wp) - gm * what
            q = (A + gm * rp / rn) / ell
            ells.append((ell, np.array([-q[1], q[0]])))
    for ell, rdp in ells:
        _, v = expand_state(ms, cm, vcm, r0, emb(rdp))
        el = kepler_elements(ms, x0, v)
        mc = _min_cosine(ms, el, a)
        out.append(KeplerBranch(v=v, ell=float(ell), confined=bool(mc > a0 + 1e-9), min_cosine=mc, rectilinear=(ell == 0.0)))
    return out
