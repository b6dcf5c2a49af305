import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hyperbolic_nbody.acceptance import relative_config
from hyperbolic_nbody.core import MassSystem, energy, mass_norm
from hyperbolic_nbody.flow import PhaseState, integrate
from hyperbolic_nbody.kepler import (
    KeplerError,
    expand_state,
    kepler_branches,
    kepler_elements,
    kepler_propagate,
    reduce_state,
    solve_hyperbolic_kepler,
)

CM, VCM = np.array([0.3, -0.2]), np.array([0.1, 0.05])


def state(ms, r=(2.0, 0.5), rd=(-0.4, 2.2)):
    return expand_state(ms, CM, VCM, np.array(r), np.array(rd))


class TestElements:
    def test_reduce_expand_roundtrip(self, kepler):
        x, v = state(kepler)
        cm, vcm, r, rd = reduce_state(kepler, x, v)
        x2, v2 = expand_state(kepler, cm, vcm, r, rd)
        np.testing.assert_allclose(x2, x, atol=1e-15)
        np.testing.assert_allclose(v2, v, atol=1e-15)

    def test_escape_speed_threshold_rejected(self, kepler):
        r = np.array([2.0, 0.0])
        v_esc = np.sqrt(2.0 * kepler.total_mass / 2.0)
        x, v = expand_state(kepler, CM, VCM, r, np.array([0.0, v_esc]))
        with pytest.raises(KeplerError):
            kepler_elements(kepler, x, v)
        x, v = expand_state(kepler, CM, VCM, r, np.array([0.0, 0.9 * v_esc]))
        with pytest.raises(KeplerError):
            kepler_elements(kepler, x, v)

    def test_asymptotic_speed(self, kepler):
        x, v = state(kepler)
        el = kepler_elements(kepler, x, v)
        rd = v[1] - v[0]
        eps = 0.5 * rd @ rd - kepler.total_mass / np.linalg.norm(x[1] - x[0])
        assert el.asymptotic_speed == pytest.approx(np.sqrt(2 * eps), rel=1e-14)
        a = el.limit_shape
        np.testing.assert_allclose(kepler.masses @ a / kepler.total_mass, VCM, atol=1e-15)
        assert 0.5 * mass_norm(kepler, a) ** 2 == pytest.approx(energy(kepler, x, v), rel=1e-12)

    def test_constructed_hyperbola(self):
        # e = 2, semi-latus rectum p = 1, gm = 1: state at true anomaly f
        ms = MassSystem([0.5, 0.5], 2)
        e, p, f = 2.0, 1.0, 0.7
        rn = p / (1 + e * np.cos(f))
        r = rn * np.array([np.cos(f), np.sin(f)])
        rd = np.sqrt(1.0 / p) * np.array([-np.sin(f), e + np.cos(f)])
        x, v = expand_state(ms, np.zeros(2), np.zeros(2), r, rd)
        el = kepler_elements(ms, x, v)
        assert el.ecc == pytest.approx(e, rel=1e-13)
        assert el.ell == pytest.approx(np.sqrt(p), rel=1e-13)
        assert el.semi_axis == pytest.approx(p / (e * e - 1), rel=1e-13)
        np.testing.assert_allclose(el.periapsis, [1.0, 0.0], atol=1e-13)
        f_inf = np.arccos(-1 / e)
        np.testing.assert_allclose(el.outgoing, [np.cos(f_inf), np.sin(f_inf)], atol=1e-13)


class TestPropagate:
    def test_epoch_is_exact(self, kepler):
        x, v = state(kepler)
        z = kepler_propagate(kepler_elements(kepler, x, v), 0.0)
        assert np.array_equal(z.x, x) and np.array_equal(z.v, v)

    @pytest.mark.parametrize("t", [-7.0, 0.5, 3.0, 40.0])
    def test_integrals_of_motion(self, kepler, t):
        x, v = state(kepler)
        el = kepler_elements(kepler, x, v)
        z = kepler_propagate(el, t)
        assert energy(kepler, z.x, z.v) == pytest.approx(energy(kepler, x, v), rel=1e-11)
        _, vcm, r, rd = reduce_state(kepler, z.x, z.v)
        assert r[0] * rd[1] - r[1] * rd[0] == pytest.approx(el.ell, rel=1e-11)
        np.testing.assert_allclose(vcm, VCM, atol=1e-14)

    @pytest.mark.parametrize("T", [10.0, -10.0])
    def test_matches_integrator(self, kepler, T):
        x, v = state(kepler)
        ref = integrate(kepler, PhaseState(x, v), T, tol=1e-12).state_at(T)
        z = kepler_propagate(kepler_elements(kepler, x, v), T)
        assert np.abs(z.x - ref.x).max() <= 1e-8
        assert np.abs(z.v - ref.v).max() <= 1e-8

    def test_three_dimensions(self):
        ms = MassSystem([1.0, 2.0], 3)
        x, v = expand_state(ms, np.zeros(3), np.array([0.0, 0.1, 0.0]), np.array([1.0, 2.0, 0.5]), np.array([0.3, -0.2, 1.8]))
        T = 6.0
        ref = integrate(ms, PhaseState(x, v), T, tol=1e-12).state_at(T)
        z = kepler_propagate(kepler_elements(ms, x, v), T)
        assert np.abs(z.x - ref.x).max() <= 1e-8

    @given(st.floats(-1e4, 1e4), st.floats(1.0001, 50.0))
    def test_kepler_equation_residual(self, M, e):
        H = solve_hyperbolic_kepler(M, e)
        assert abs(e * np.sinh(H) - H - M) <= 1e-12 * max(1.0, abs(M))


class TestBranches:
    def test_off_axis_has_two_branches(self, kepler):
        a = relative_config(kepler, [1.5, 0.0])
        x0 = relative_config(kepler, [2.0, 1.5])
        br = kepler_branches(kepler, x0, a)
        assert len(br) == 2
        assert br[0].ell * br[1].ell < 0
        assert sum(b.confined for b in br) == 1
        h = 0.5 * mass_norm(kepler, a) ** 2
        for b in br:
            assert abs(energy(kepler, x0, b.v) - h) <= 1e-12
            np.testing.assert_allclose(kepler_elements(kepler, x0, b.v).limit_shape, a, atol=1e-12)

    def test_aligned_is_rectilinear(self, kepler):
        a = relative_config(kepler, [1.5, 0.0])
        x0 = relative_config(kepler, [3.0, 0.0])
        (b,) = kepler_branches(kepler, x0, a)
        assert b.rectilinear and b.confined
        rd = b.v[1] - b.v[0]
        assert rd[1] == 0.0 and rd[0] > 0

    def test_anti_aligned_cross_check(self, kepler):
        a = relative_config(kepler, [1.5, 0.0])
        x0 = relative_config(kepler, [-3.0, 0.0])
        br = kepler_branches(kepler, x0, a)
        assert len(br) == 2
        assert br[0].ell == pytest.approx(-br[1].ell, rel=1e-12)
        # mirror images in the axis; each one swings through the collision side
        v0, v1 = br[0].v, br[1].v
        np.testing.assert_allclose(v0[:, 0], v1[:, 0], atol=1e-12)
        np.testing.assert_allclose(v0[:, 1], -v1[:, 1], atol=1e-12)
        assert not any(b.confined for b in br)
        for b in br:
            z = integrate(kepler, PhaseState(x0, b.v), 400.0, tol=1e-12).state_at(400.0)
            np.testing.assert_allclose(z.v, a, atol=5e-3)

    def test_needs_two_bodies(self, three_body):
        ms, a = three_body
        with pytest.raises(KeplerError):
            kepler_branches(ms, 2.0 * a, a)
