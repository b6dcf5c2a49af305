import numpy as np
import pytest

from hyperbolic_nbody.core import ConeSpec, MassSystem, energy, mass_norm, potential
from hyperbolic_nbody.flow import (
    CollisionApproachError,
    NBodyRHS,
    PhaseState,
    Trajectory,
    detect_cone_exit,
    integrate,
    integrate_with_jacobi,
)
from hyperbolic_nbody.kepler import expand_state, kepler_elements, kepler_propagate

MS3 = MassSystem([1.0, 1.5, 0.7], 2)


def three_body_state(rng):
    x = np.array([[0.0, 0.0], [2.0, 0.3], [-0.5, 1.8]])
    v = np.array([[0.1, -0.4], [0.6, 0.2], [-0.5, 0.7]])
    return PhaseState(x, v)


def kepler_state(ms):
    return expand_state(ms, np.array([0.3, -0.2]), np.array([0.1, 0.05]), np.array([2.0, 0.5]), np.array([-0.4, 2.2]))


class TestIntegrate:
    def test_energy_drift(self, rng):
        z = three_body_state(rng)
        tol = 1e-10
        tr = integrate(MS3, z, 20.0, tol=tol)
        H0 = energy(MS3, z.x, z.v)
        assert tr.max_energy_drift <= 100 * tol * (1 + abs(H0))

    def test_matches_kepler(self, kepler):
        x0, v0 = kepler_state(kepler)
        tr = integrate(kepler, PhaseState(x0, v0), 10.0, tol=1e-12)
        ref = kepler_propagate(kepler_elements(kepler, x0, v0), 10.0)
        st = tr.state_at(10.0)
        assert np.abs(st.x - ref.x).max() <= 1e-8
        assert np.abs(st.v - ref.v).max() <= 1e-8

    def test_backward_matches_kepler(self, kepler):
        x0, v0 = kepler_state(kepler)
        tr = integrate(kepler, PhaseState(x0, v0), -10.0, tol=1e-12)
        ref = kepler_propagate(kepler_elements(kepler, x0, v0), -10.0)
        assert np.abs(tr.state_at(-10.0).x - ref.x).max() <= 1e-8

    def test_reversibility(self, rng):
        z = three_body_state(rng)
        T = 5.0
        a = integrate(MS3, z, T, tol=1e-12).state_at(T)
        b = integrate(MS3, PhaseState(a.x, -a.v), T, tol=1e-12).state_at(T)
        assert np.abs(b.x - z.x).max() <= 1e-6
        assert np.abs(-b.v - z.v).max() <= 1e-6

    def test_collision_approach(self):
        ms = MassSystem([1.0, 1.0], 2)
        x = np.array([[-1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(CollisionApproachError):
            integrate(ms, PhaseState(x, np.zeros((2, 2))), 10.0)

    def test_rejects_bad_tol(self, rng):
        with pytest.raises(ValueError):
            integrate(MS3, three_body_state(rng), 1.0, tol=0.0)

    def test_action_accumulator(self, kepler):
        x0, v0 = kepler_state(kepler)
        tr = integrate(kepler, PhaseState(x0, v0), 3.0, tol=1e-12, with_action=True)
        from scipy.integrate import quad

        def lag(t):
            st = tr.state_at(t)
            return 0.5 * mass_norm(kepler, st.v) ** 2 + potential(kepler, st.x)

        ref = quad(lag, 1.0, 3.0, epsabs=0, epsrel=1e-12)[0]
        assert tr.action_between(1.0, 3.0) == pytest.approx(ref, rel=1e-9)
        assert tr.action_between(1.0, 3.0, h=0.5) == pytest.approx(ref + 1.0, rel=1e-9)

    def test_csv(self, tmp_path, rng):
        tr = integrate(MS3, three_body_state(rng), 1.0)
        p = tmp_path / "traj.csv"
        tr.to_csv(p)
        rows = p.read_text().splitlines()
        assert rows[0].split(",")[0] == "t"
        assert len(rows[0].split(",")) == 1 + 2 * MS3.size + 1
        assert len(rows) == tr.t.size + 1

    def test_trajectory_immutable(self, rng):
        tr = integrate(MS3, three_body_state(rng), 1.0)
        with pytest.raises(ValueError):
            tr.x[0, 0, 0] = 1.0


class TestJacobi:
    def test_zero_field(self, rng):
        z = three_body_state(rng)
        zero = np.zeros(MS3.size)
        tr = integrate_with_jacobi(MS3, z, (zero, zero), 5.0)
        assert np.all(tr.J == 0.0)

    def test_finite_difference(self, rng):
        z = three_body_state(rng)
        X = rng.standard_normal(MS3.size)
        V = rng.standard_normal(MS3.size)
        tr = integrate_with_jacobi(MS3, z, (X, V), 5.0, tol=1e-12)
        J, _ = tr.jacobi_at(5.0)
        s = 1e-6
        p = integrate(MS3, PhaseState(z.x + s * X.reshape(3, 2), z.v + s * V.reshape(3, 2)), 5.0, tol=1e-13).state_at(5.0)
        m = integrate(MS3, PhaseState(z.x - s * X.reshape(3, 2), z.v - s * V.reshape(3, 2)), 5.0, tol=1e-13).state_at(5.0)
        fd = ((p.x - m.x) / (2 * s)).reshape(-1)
        assert np.linalg.norm(J[:, 0] - fd) <= 1e-4 * np.linalg.norm(fd)

    def test_time_translation_field(self, rng):
        from hyperbolic_nbody.core import potential_gradient

        z = three_body_state(rng)
        Z = (z.v.reshape(-1), potential_gradient(MS3, z.x).reshape(-1))
        tr = integrate_with_jacobi(MS3, z, Z, 5.0, tol=1e-12)
        for t in (1.0, 3.0, 5.0):
            J, _ = tr.jacobi_at(t)
            assert np.abs(J[:, 0] - tr.state_at(t).v.reshape(-1)).max() <= 1e-8


class TestConeExit:
    def _line(self, ms, x0, v, T):
        return integrate(MassSystem(ms.masses * 1e-12, ms.dim), PhaseState(x0, v), T, tol=1e-12)

    def test_inside(self):
        ms = MassSystem([1.0, 1.0], 2)
        a = np.array([[-1.0, 0.0], [1.0, 0.0]])
        tr = self._line(ms, 3 * a, a, 10.0)
        assert detect_cone_exit(tr, ConeSpec(a, 0.9)) is None

    def test_starts_outside(self):
        ms = MassSystem([1.0, 1.0], 2)
        a = np.array([[-1.0, 0.0], [1.0, 0.0]])
        x0 = np.array([[0.0, -1.0], [0.0, 1.0]])
        tr = self._line(ms, x0, a, 1.0)
        assert detect_cone_exit(tr, ConeSpec(a, 0.5)) == 0.0

    def test_crossing_time(self):
        # straight line x(t) = x0 + t w with negligible masses; the cosine to a
        # drops through alpha at a root of a quadratic
        ms = MassSystem([1.0, 1.0], 2)
        a = np.array([[-1.0, 0.0], [1.0, 0.0]])
        x0 = 2 * a
        w = np.array([[0.0, -1.0], [0.0, 1.0]])
        alpha = 0.8
        tr = self._line(ms, x0, w, 5.0)
        # <x,a> = 4, |x|^2 = 8 + 2 t^2, |a|^2 = 2: 4 = alpha sqrt(2 (8 + 2 t^2))
        t_star = np.sqrt((16 / alpha**2 / 2 - 8) / 2)
        t_hit = detect_cone_exit(tr, ConeSpec(a, alpha))
        assert t_hit == pytest.approx(t_star, abs=1e-9)


def test_rhs_counts(rng):
    rhs = NBodyRHS(MS3)
    y = np.concatenate([three_body_state(rng).x.reshape(-1), np.zeros(6)])
    rhs(0.0, y)
    assert rhs.nfev == 1
