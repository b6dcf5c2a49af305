import numpy as np
import pytest

from hyperbolic_nbody.acceptance import relative_config
from hyperbolic_nbody.core import ConeSpec, SingularConfigurationError, alpha0, energy, mass_norm
from hyperbolic_nbody.flow import PhaseState
from hyperbolic_nbody.asymptotics import limit_shape
from hyperbolic_nbody.kepler import kepler_branches
from hyperbolic_nbody.scattering import (
    _shell_directions,
    hyperbolic_ray,
    solve_asymptotic_velocity,
    uniqueness_probe,
)


@pytest.fixture
def kepler_problem(kepler):
    return kepler, relative_config(kepler, [2.0, 1.5]), relative_config(kepler, [1.5, 0.0])


class TestShooting:
    def test_reaches_confined_kepler_branch(self, kepler_problem):
        ms, x0, a = kepler_problem
        sr = solve_asymptotic_velocity(ms, x0, a, tol=1e-10)
        (ref,) = [b for b in kepler_branches(ms, x0, a) if b.confined]
        assert sr.converged
        assert mass_norm(ms, sr.v_star - ref.v) <= 1e-8
        assert sr.residual <= 1e-10

    def test_energy_of_solution(self, kepler_problem):
        ms, x0, a = kepler_problem
        sr = solve_asymptotic_velocity(ms, x0, a, tol=1e-10)
        assert abs(energy(ms, x0, sr.v_star) - 0.5 * mass_norm(ms, a) ** 2) <= 1e-9
        assert sr.energy_gap <= 1e-9

    def test_three_body_roundtrip(self, three_body):
        ms, a = three_body
        x0 = 3.0 * a + np.array([[0.1, 0.0], [0.0, -0.1], [-0.05, 0.05]])
        sr = solve_asymptotic_velocity(ms, x0, a, tol=1e-10)
        back = limit_shape(ms, PhaseState(x0, sr.v_star), tol=1e-11).a_hat
        assert mass_norm(ms, back - a) <= 1e-9

    def test_cone_membership_and_ball(self, three_body):
        ms, a = three_body
        alpha = 0.5 * (1.0 + alpha0(ms, a))
        sr = solve_asymptotic_velocity(ms, 3.0 * a, a, alpha=alpha)
        assert sr.in_cone and not sr.left_ball
        assert sr.delta > 0
        with pytest.raises(ValueError):
            solve_asymptotic_velocity(ms, 3.0 * a, a, alpha=0.5 * alpha0(ms, a))

    @pytest.mark.parametrize("which", ["x0", "a"])
    def test_collision_cites_pair(self, kepler_problem, which):
        ms, x0, a = kepler_problem
        bad = np.zeros((2, 2))
        args = (bad, a) if which == "x0" else (x0, bad)
        with pytest.raises(SingularConfigurationError, match="bodies 0 and 1"):
            solve_asymptotic_velocity(ms, *args)

    def test_record_is_plain(self, kepler_problem):
        import json

        ms, x0, a = kepler_problem
        rec = solve_asymptotic_velocity(ms, x0, a).to_record()
        json.dumps(rec)
        assert rec["converged"] and len(rec["v_star"]) == 2


class TestRay:
    def test_meta_report(self, three_body):
        ms, a = three_body
        alpha = 0.5 * (1.0 + alpha0(ms, a))
        x0 = 3.0 * a
        tr = hyperbolic_ray(ms, x0, a, t_end=50.0, cone=ConeSpec(a, alpha), lam=0.1, eps=10.0)
        m = tr.meta
        assert m["monotone_size"]
        assert m["cone_exit"] is None
        assert m["growth_slack"] >= 0
        assert m["velocity_band_ok"]
        assert 0 < m["min_cosine"] <= 1
        assert np.isclose(tr.t[-1], 50.0)


class TestProbe:
    def test_shell_directions(self, three_body):
        ms, _ = three_body
        for u in _shell_directions(ms, 5, np.random.default_rng(0)):
            assert mass_norm(ms, u) == pytest.approx(1.0)
            np.testing.assert_allclose(ms.center_of_mass(u), 0.0, atol=1e-14)

    def test_kepler_off_axis_finds_both_branches(self, kepler_problem):
        ms, x0, a = kepler_problem
        pr = uniqueness_probe(ms, x0, a, n_starts=12, seed=4)
        assert pr.n_distinct == 2 and pr.n_confined == 1
        for v, conf in zip(pr.clusters, pr.confined):
            (ref,) = [b for b in kepler_branches(ms, x0, a) if b.confined == conf]
            assert mass_norm(ms, v - ref.v) <= 1e-7

    def test_kepler_anti_aligned(self, kepler):
        a = relative_config(kepler, [1.5, 0.0])
        x0 = relative_config(kepler, [-3.0, 0.0])
        pr = uniqueness_probe(kepler, x0, a, n_starts=12, seed=0)
        assert pr.n_distinct == 2 and pr.n_confined == 0

    def test_three_body_local_uniqueness(self, three_body):
        ms, a = three_body
        pr = uniqueness_probe(ms, 3.0 * a, a, n_starts=6, magnitudes=(0.02, 0.05), global_fraction=0.0)
        assert pr.failures == 0
        assert pr.n_distinct == 1 and pr.n_confined == 1
