"""Masses, configurations and the Newtonian potential.

Configurations are stored as ``(N, d)`` float arrays; every public function
also accepts the flat ``N*d`` layout. Velocities, covectors and limit shapes
share the same layout. All inner products and gradients are taken with
respect to the mass metric ``<x, y> = sum_i m_i <x_i, y_i>``, under which
Newton's equations read ``x'' = grad U(x)``. The gravitational constant is 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

__all__ = [
    "SingularConfigurationError",
    "MassSystem",
    "ConeSpec",
    "ConeConstants",
    "mass_inner",
    "mass_norm",
    "pair_distances",
    "min_pair_distance",
    "has_collision",
    "potential",
    "potential_gradient",
    "potential_euclidean_gradient",
    "hessian_apply",
    "hessian_matrix",
    "hessian_opnorm",
    "energy",
    "alpha0",
    "cone_constants",
    "maximize_on_cone_sphere",
]


class SingularConfigurationError(ValueError):
    """Raised when a derivative of U is requested at a collision."""


@dataclass(frozen=True)
class MassSystem:
    """Point masses in ``R^dim``.

    Parameters
    ----------
    masses : sequence of float
        Positive masses, at least two of them.
    dim : int
        Spatial dimension, at least 2.
    """

    masses: np.ndarray
    dim: int = 2
    _pairs: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float).reshape(-1)
        if m.size < 2:
            raise ValueError("need at least two bodies")
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise ValueError("masses must be finite and positive")
        if int(self.dim) < 2:
            raise ValueError("spatial dimension must be >= 2")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "dim", int(self.dim))
        i, j = np.triu_indices(m.size, k=1)
        object.__setattr__(self, "_pairs", (i, j))

    def __hash__(self):
        return hash((tuple(self.masses), self.dim))

    def __eq__(self, other):
        if not isinstance(other, MassSystem):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.masses, other.masses)

    @property
    def n_bodies(self) -> int:
        return self.masses.size

    @property
    def size(self) -> int:
        """Dimension ``N*d`` of the configuration space."""
        return self.masses.size * self.dim

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def weights(self) -> np.ndarray:
        """Mass of each flat coordinate (length ``N*d``)."""
        return np.repeat(self.masses, self.dim)

    def config(self, x) -> np.ndarray:
        """Return ``x`` as a finite ``(N, d)`` array, raising on bad shape."""
        arr = np.asarray(x, dtype=float)
        if arr.size != self.size:
            raise ValueError(
                f"expected {self.n_bodies} bodies in R^{self.dim} "
                f"({self.size} numbers), got shape {arr.shape}"
            )
        arr = arr.reshape(self.n_bodies, self.dim)
        if not np.all(np.isfinite(arr)):
            raise ValueError("configuration has non-finite entries")
        return arr

    def flat(self, x) -> np.ndarray:
        return self.config(x).reshape(-1)

    def center_of_mass(self, x) -> np.ndarray:
        x = self.config(x)
        return self.masses @ x / self.total_mass

    def orthonormal_basis(self) -> np.ndarray:
        """Columns form a mass-orthonormal basis of the flat space."""
        return np.diag(1.0 / np.sqrt(self.weights))


def mass_inner(ms: MassSystem, x, y) -> float:
    """Mass inner product ``sum_i m_i <x_i, y_i>``."""
    x = ms.config(x)
    y = ms.config(y)
    return float(np.einsum("i,ij,ij->", ms.masses, x, y))


def mass_norm(ms: MassSystem, x) -> float:
    return float(np.sqrt(max(mass_inner(ms, x, x), 0.0)))


def _separations(ms: MassSystem, x):
    i, j = ms._pairs
    d = x[j] - x[i]
    return i, j, d, np.sqrt(np.einsum("pk,pk->p", d, d))


def pair_distances(ms: MassSystem, x) -> np.ndarray:
    """Mutual distances ``r_ij`` for ``i < j`` in ``triu_indices`` order."""
    return _separations(ms, ms.config(x))[3]


def min_pair_distance(ms: MassSystem, x) -> float:
    return float(pair_distances(ms, x).min())


def has_collision(ms: MassSystem, x) -> bool:
    return bool(np.any(pair_distances(ms, x) == 0.0))


def potential(ms: MassSystem, x) -> float:
    """``U(x) = sum_{i<j} m_i m_j / r_ij``; ``inf`` on the collision set."""
    i, j, _, r = _separations(ms, ms.config(x))
    if np.any(r == 0.0):
        return float("inf")
    return float(np.sum(ms.masses[i] * ms.masses[j] / r))


def _check_regular(r, i, j):
    if np.any(r == 0.0):
        k = int(np.argmin(r))
        raise SingularConfigurationError(
            f"collision between bodies {int(i[k])} and {int(j[k])}"
        )


def potential_euclidean_gradient(ms: MassSystem, x) -> np.ndarray:
    """Plain partial derivatives ``dU/dr_i`` as an ``(N, d)`` array."""
    x = ms.config(x)
    i, j, d, r = _separations(ms, x)
    _check_regular(r, i, j)
    f = (ms.masses[i] * ms.masses[j] / r**3)[:, None] * d
    out = np.zeros_like(x)
    np.add.at(out, i, f)
    np.add.at(out, j, -f)
    return out


def potential_gradient(ms: MassSystem, x) -> np.ndarray:
    """Mass-metric gradient: body ``i`` gets ``sum_j m_j (r_j - r_i) / r_ij^3``."""
    return potential_euclidean_gradient(ms, x) / ms.masses[:, None]


def hessian_apply(ms: MassSystem, x, xi) -> np.ndarray:
    """Apply the mass-metric Hessian operator ``HU(x)`` to ``xi``."""
    x = ms.config(x)
    xi = ms.config(xi)
    i, j, d, r = _separations(ms, x)
    _check_regular(r, i, j)
    dxi = xi[j] - xi[i]
    proj = np.einsum("pk,pk->p", d, dxi)
    # B_ij (xi_j - xi_i) with B = I / r^3 - 3 d d^T / r^5
    t = dxi / r[:, None] ** 3 - 3.0 * (proj / r**5)[:, None] * d
    out = np.zeros_like(x)
    np.add.at(out, i, ms.masses[j][:, None] * t)
    np.add.at(out, j, -ms.masses[i][:, None] * t)
    return out


def hessian_matrix(ms: MassSystem, x) -> np.ndarray:
    """Flat ``(N*d, N*d)`` matrix of ``HU(x)`` acting on flat vectors."""
    x = ms.config(x)
    i, j, d, r = _separations(ms, x)
    _check_regular(r, i, j)
    dim, n = ms.dim, ms.n_bodies
    eye = np.eye(dim)
    blocks = eye[None] / r[:, None, None] ** 3 - 3.0 * np.einsum(
        "pk,pl->pkl", d, d
    ) / r[:, None, None] ** 5
    H = np.zeros((n, dim, n, dim))
    for p, (a, b) in enumerate(zip(i, j)):
        H[a, :, b, :] += ms.masses[b] * blocks[p]
        H[a, :, a, :] -= ms.masses[b] * blocks[p]
        H[b, :, a, :] += ms.masses[a] * blocks[p]
        H[b, :, b, :] -= ms.masses[a] * blocks[p]
    return H.reshape(n * dim, n * dim)


def hessian_opnorm(ms: MassSystem, x, iterations: int = 20, seed: int = 0) -> float:
    """Mass-metric operator norm of ``HU(x)`` by power iteration."""
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((ms.n_bodies, ms.dim))
    xi /= mass_norm(ms, xi)
    lam = 0.0
    for _ in range(iterations):
        y = hessian_apply(ms, x, xi)
        lam = mass_norm(ms, y)
        if lam == 0.0:
            return 0.0
        xi = y / lam
    return lam


def energy(ms: MassSystem, x, v) -> float:
    """``H = |v|^2 / 2 - U(x)`` in the mass metric."""
    u = potential(ms, x)
    if not np.isfinite(u):
        raise SingularConfigurationError("energy undefined at a collision")
    return 0.5 * mass_inner(ms, v, v) - u


def _pair_projection(ms: MassSystem, a: np.ndarray, i: int, j: int) -> np.ndarray:
    m = ms.masses
    out = a.copy()
    out[i] = out[j] = (m[i] * a[i] + m[j] * a[j]) / (m[i] + m[j])
    return out


def alpha0(ms: MassSystem, a) -> float:
    """Cosine of the smallest angle between ``a`` and the collision set.

    The collision set is a union of the linear subspaces ``{r_i = r_j}``;
    the mass-orthogonal projection onto one of them replaces ``r_i`` and
    ``r_j`` by their barycentre, so the answer is
    ``max_ij |P_ij a| / |a|``.
    """
    a = ms.config(a)
    if has_collision(ms, a):
        raise SingularConfigurationError("cone axis has a collision")
    na = mass_norm(ms, a)
    best = 0.0
    for i, j in combinations(range(ms.n_bodies), 2):
        best = max(best, mass_norm(ms, _pair_projection(ms, a, i, j)) / na)
    return float(min(best, 1.0))


@dataclass(frozen=True)
class ConeSpec:
    """Cutted cone ``{x : <x,a> >= alpha |x||a|, |x| >= r}``."""

    axis: np.ndarray
    alpha: float
    r: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.r < 0:
            raise ValueError("truncation radius must be non-negative")
        axis = np.array(self.axis, dtype=float)
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)

    def margin(self, ms: MassSystem, x) -> float:
        """Signed angular margin ``<x,a> - alpha |x||a|`` (>= 0 inside)."""
        a = ms.config(self.axis)
        return mass_inner(ms, x, a) - self.alpha * mass_norm(ms, x) * mass_norm(ms, a)

    def contains(self, ms: MassSystem, x, slack: float = 0.0) -> bool:
        na = mass_norm(ms, self.axis)
        nx = mass_norm(ms, x)
        return bool(self.margin(ms, x) >= -slack * nx * na and nx >= self.r * (1 - slack))


@dataclass(frozen=True)
class ConeConstants:
    """Constants attached to a cone around ``a`` (names follow their roles).

    ``delta`` radius of the velocity ball around ``a``; ``lam`` guaranteed
    linear growth rate of ``|x(t)|``; ``mu`` sup of ``|grad U|`` on the unit
    sphere of the cone; ``r0`` truncation radius above which motions stay
    confined.
    """

    delta: float
    lam: float
    mu: float
    r0: float
    alpha: float
    eps: float


def _project_cone_sphere(x: np.ndarray, ahat: np.ndarray, alpha: float, inner) -> np.ndarray:
    c = inner(x, ahat)
    w = x - c * ahat
    nw = np.sqrt(max(inner(w, w), 0.0))
    nx = np.sqrt(max(inner(x, x), 0.0))
    if nx == 0.0:
        return ahat.copy()
    if c >= alpha * nx:
        return x / nx
    if nw == 0.0:
        return ahat.copy()
    return alpha * ahat + np.sqrt(1.0 - alpha**2) * w / nw


def maximize_on_cone_sphere(
    ms: MassSystem,
    a,
    alpha: float,
    objective,
    gradient,
    n_starts: int = 64,
    iterations: int = 200,
    seed: int = 0,
):
    """Multistart projected gradient ascent on ``{x in C_a(alpha), |x| = 1}``.

    ``gradient`` must return the mass-metric gradient of ``objective``.
    Half of the seeds are placed on the cone boundary, where maxima of
    functions blowing up at collisions live. Returns ``(value, argmax)``.
    """
    a = ms.config(a)
    inner = lambda u, v: float(np.einsum("i,ij,ij->", ms.masses, u, v))
    ahat = a / np.sqrt(inner(a, a))
    rng = np.random.default_rng(seed)
    seeds = []
    for k in range(n_starts):
        w = rng.standard_normal(a.shape) / np.sqrt(ms.masses)[:, None]
        w -= inner(w, ahat) * ahat
        w /= np.sqrt(inner(w, w))
        c = alpha if k % 2 == 0 else rng.uniform(alpha, 1.0)
        seeds.append(c * ahat + np.sqrt(1 - c**2) * w)
    best_val, best_x = -np.inf, ahat
    for x in seeds:
        f = objective(x)
        step = 0.1
        for _ in range(iterations):
            g = gradient(x)
            # Riemannian step on the sphere, then back into the cone
            g = g - inner(g, x) * x
            gn = np.sqrt(inner(g, g))
            if gn < 1e-14:
                break
            while step > 1e-12:
                trial = _project_cone_sphere(x + step * g / gn, ahat, alpha, inner)
                ft = objective(trial)
                if ft > f:
                    x, f = trial, ft
                    step *= 1.5
                    break
                step *= 0.5
            else:
                break
        if f > best_val:
            best_val, best_x = f, x
    return float(best_val), best_x


def cone_constants(ms: MassSystem, a, alpha: float, eps: float, n_starts: int = 64, seed: int = 0) -> ConeConstants:
    """Velocity ball, growth rate, gradient bound and radius for ``C_a(alpha)``.

    ``delta`` is the largest value not exceeding ``alpha |a| / 4`` with the
    closed ball ``B(a, 2 delta)`` inside the cone (the distance from ``a`` to
    the boundary is ``|a| sqrt(1 - alpha^2)``). Then ``lam = alpha|a| - 2
    delta`` and ``r0 = 2 mu / (lam min(eps, delta))``.
    """
    a = ms.config(a)
    if eps <= 0:
        raise ValueError("eps must be positive")
    a0 = alpha0(ms, a)
    if not a0 < alpha < 1.0:
        raise ValueError(
            f"alpha={alpha} must lie in (alpha0(a), 1) = ({a0:.6g}, 1); "
            "the cone meets the collision set"
        )
    na = mass_norm(ms, a)
    delta = min(alpha * na / 4.0, 0.5 * na * np.sqrt(1.0 - alpha**2))
    lam = alpha * na - 2.0 * delta

    def obj(x):
        g = potential_gradient(ms, x)
        return 0.5 * mass_inner(ms, g, g)

    def grad(x):
        return hessian_apply(ms, x, potential_gradient(ms, x))

    val, _ = maximize_on_cone_sphere(ms, a, alpha, obj, grad, n_starts=n_starts, seed=seed)
    mu = float(np.sqrt(2.0 * val))
    r0 = 2.0 * mu / (lam * min(eps, delta))
    return ConeConstants(delta=float(delta), lam=float(lam), mu=mu, r0=float(r0), alpha=float(alpha), eps=float(eps))
