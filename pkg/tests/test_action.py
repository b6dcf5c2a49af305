import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from hyperbolic_nbody.acceptance import relative_config
from hyperbolic_nbody.action import (
    DiscreteCurve,
    action_fixed_time,
    action_free_time,
    action_of_curve,
    euclid_excess_E,
    excess_D,
    excess_D_lower_bound,
    linear_path_bound,
    nu_constant,
)
from hyperbolic_nbody.core import MassSystem, alpha0, min_pair_distance, potential
from hyperbolic_nbody.kepler import expand_state, kepler_elements, kepler_propagate

H = 0.8


def radial_oracle(ms, r1, r2, h):
    """Free-time action along a radial separation with the centre of mass fixed."""
    m1, m2 = ms.masses
    mu = m1 * m2 / ms.total_mass
    val, _ = quad(lambda r: np.sqrt(2.0 * (h + m1 * m2 / r) * mu), r1, r2, epsabs=0.0, epsrel=1e-13)
    return val


class TestFreeTime:
    @pytest.mark.parametrize("r1,r2", [(1.0, 3.0), (0.5, 4.0)])
    def test_straight_separation_oracle(self, kepler, r1, r2):
        x = relative_config(kepler, [r1, 0.0])
        y = relative_config(kepler, [r2, 0.0])
        res = action_free_time(kepler, x, y, H)
        assert res.value == pytest.approx(radial_oracle(kepler, r1, r2, H), rel=1e-8)

    def test_kinetic_lower_bound_and_bracket(self, three_body):
        ms, a = three_body
        x, y = 2.0 * a, 3.0 * a + 0.3
        res = action_free_time(ms, x, y, H)
        assert res.lower <= res.value <= res.upper
        assert res.bracket_ok

    def test_grid_refinement(self, three_body):
        ms, a = three_body
        x, y = 2.0 * a, 3.0 * a + 0.3
        coarse = action_free_time(ms, x, y, H, grid_m=32, polish=False).value
        fine = action_free_time(ms, x, y, H, grid_m=128, polish=False).value
        best = action_free_time(ms, x, y, H).value
        assert best <= fine + 1e-12 <= coarse + 2e-12
        assert fine - best <= 1e-3 * best

    def test_symmetry(self, three_body):
        ms, a = three_body
        x, y = 2.0 * a, 3.0 * a + 0.3
        assert action_free_time(ms, x, y, H).value == pytest.approx(action_free_time(ms, y, x, H).value, rel=1e-9)

    def test_interior_is_collision_free(self, kepler):
        x = relative_config(kepler, [-1.0, 0.2])
        y = relative_config(kepler, [1.5, 0.1])
        res = action_free_time(kepler, x, y, H)
        assert min(min_pair_distance(kepler, q) for q in res.curve.knots[1:-1]) > 0

    def test_golden_cross_check(self, kepler):
        x = relative_config(kepler, [1.0, 0.5])
        y = relative_config(kepler, [2.5, -1.0])
        red = action_free_time(kepler, x, y, H)
        gold = action_free_time(kepler, x, y, H, method="golden")
        assert gold.value == pytest.approx(red.value, rel=1e-4)

    def test_zero_distance(self, kepler):
        x = relative_config(kepler, [1.0, 0.5])
        assert action_free_time(kepler, x, x, H).value == 0.0

    def test_rejects_nonpositive_energy(self, kepler):
        with pytest.raises(ValueError):
            action_free_time(kepler, relative_config(kepler, [1, 0]), relative_config(kepler, [2, 0]), 0.0)


class TestFixedTime:
    def test_kepler_arc(self):
        ms = MassSystem([1.0, 2.0], 2)
        x0, v0 = expand_state(ms, np.zeros(2), np.zeros(2), np.array([2.0, 0.5]), np.array([-0.4, 2.2]))
        el = kepler_elements(ms, x0, v0)
        tau = 1.0

        def lagr(t):
            z = kepler_propagate(el, t)
            return 0.5 * float(ms.masses @ np.sum(z.v**2, axis=1)) + potential(ms, z.x)

        exact, _ = quad(lagr, 0.0, tau, epsabs=0.0, epsrel=1e-13)
        res = action_fixed_time(ms, x0, kepler_propagate(el, tau).x, tau)
        assert res.value == pytest.approx(exact, rel=1e-5)
        assert res.value >= res.lower

    def test_action_of_straight_curve(self, kepler):
        x = relative_config(kepler, [1.0, 0.5])
        y = relative_config(kepler, [2.5, -1.0])
        tau = 2.0
        curve = DiscreteCurve.on_grid(x + np.linspace(0.0, 1.0, 17)[:, None, None] * (y - x), tau)
        kin = 0.5 * float(kepler.masses @ np.sum((y - x) ** 2, axis=1)) / tau
        pot, _ = quad(lambda s: potential(kepler, x + s * (y - x)), 0.0, 1.0, epsabs=0.0, epsrel=1e-13)
        assert action_of_curve(kepler, curve) == pytest.approx(kin + tau * pot, rel=1e-9)

    def test_rejects_nonpositive_time(self, kepler):
        with pytest.raises(ValueError):
            action_fixed_time(kepler, relative_config(kepler, [1, 0]), relative_config(kepler, [2, 0]), 0.0)


class TestExcess:
    def test_zero_on_minimizer(self, three_body):
        ms, a = three_body
        x, z = 2.0 * a, 4.0 * a + 0.3
        res = action_free_time(ms, x, z, H)
        y = res.curve.knots[res.curve.m // 2]
        assert abs(excess_D(ms, x, y, z, H)) <= 1e-6 * res.value

    def test_positive_off_minimizer(self, three_body):
        ms, a = three_body
        D = excess_D(ms, 2.0 * a, 3.0 * a + np.array([[0.0, 1.0], [0.0, 0.0], [0.0, 0.0]]), 4.0 * a, H)
        assert D > 0

    def test_lower_bound_holds(self, three_body):
        ms, a = three_body
        beta = 0.5 * (1.0 + alpha0(ms, a))
        rho = 30.0
        lb = excess_D_lower_bound(ms, a, beta, H, rho, 0.1, n_starts=16)
        assert lb["mu_beta"] > 0 and lb["l"] > 0
        ahat = a / np.sqrt(float(ms.masses @ np.sum(a**2, axis=1)))
        y = 0.1 * rho * ahat
        # x, z on the boundary of the cone, on opposite sides of the axis
        perp = np.array([[0.0, 1.0], [0.0, -0.5], [0.0, 0.0]])
        perp -= ms.center_of_mass(perp)
        perp -= float(ms.masses @ np.sum(perp * ahat, axis=1)) * ahat
        perp /= np.sqrt(float(ms.masses @ np.sum(perp**2, axis=1)))
        s = np.sqrt(1.0 - beta**2)
        x = rho * (beta * ahat + s * perp)
        z = rho * (beta * ahat - s * perp)
        assert excess_D(ms, x, y, z, H) >= lb["bound"]


class TestEuclidExcess:
    vecs = st.lists(st.floats(-10, 10), min_size=3, max_size=3)

    @given(vecs, vecs, vecs)
    def test_nonnegative(self, p, s, q):
        assert euclid_excess_E(p, s, q) >= -1e-12

    @given(vecs, vecs, st.floats(0.0, 1.0))
    def test_zero_when_collinear(self, p, q, t):
        s = (1 - t) * np.asarray(p) + t * np.asarray(q)
        assert abs(euclid_excess_E(p, s, q)) <= 1e-12 * (1 + np.linalg.norm(np.subtract(p, q)))

    def test_nu_positive(self, three_body):
        ms, a = three_body
        al = 0.5 * (1.0 + alpha0(ms, a))
        nu, (p, s, q) = nu_constant(ms, a, al, 0.5 * (al + alpha0(ms, a)), 1.0, n_starts=8)
        assert nu > 0
        assert nu == pytest.approx(euclid_excess_E(p, s, q, ms), rel=1e-12)


class TestCurve:
    def test_validation(self):
        k = np.zeros((3, 2, 1))
        with pytest.raises(ValueError):
            DiscreteCurve(k, np.array([0.0, 1.0]))
        with pytest.raises(ValueError):
            DiscreteCurve(k, np.array([0.0, 1.0, 1.0]))
        with pytest.raises(ValueError):
            DiscreteCurve(np.zeros((1, 2, 1)), np.array([0.0]))
        with pytest.raises(ValueError):
            DiscreteCurve(k, np.array([0.0, 0.5, 1.0]), grading="start", kappa=0.5)

    def test_csv(self, tmp_path):
        c = DiscreteCurve.on_grid(np.arange(6.0).reshape(3, 2, 1), 2.0)
        c.to_csv(tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "t,x0_0,x1_0" and len(lines) == 4

    def test_linear_path_through_collision(self, kepler):
        x = relative_config(kepler, [-1.0, 0.0])
        y = relative_config(kepler, [2.0, 0.0])
        assert linear_path_bound(kepler, x, y, H) == np.inf
        y2 = relative_config(kepler, [2.0, 0.3])
        assert np.isfinite(linear_path_bound(kepler, x, y2, H))
