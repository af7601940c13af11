import numpy as np
import pytest
from hypothesis import given, strategies as st

from nesc import analysis as A
from nesc.controllers import EscParams, GrState, make_controller
from nesc.games import anti_monotone, bilinear, fixed_demand, quadratic, quartic
from nesc.sim import SolverConfig, Trajectory, integrate

unit2 = EscParams.uniform(2, 1.0, 1.0, 0.1, [0.3, 0.7])


class TestLyapunov:
    def test_zero_at_equilibrium(self):
        g = bilinear()
        assert A.lyapunov_value((g.known_ne, g.known_ne), g.known_ne, unit2) == 0.0
        assert A.lyapunov_rate((g.known_ne, g.known_ne), g) == 0.0

    def test_unit_weights(self):
        star = np.array([2.0, -3.0])
        assert A.lyapunov_value((star + [1, 0], star + [0, 1]), star, unit2) == pytest.approx(1.0)

    def test_half_gains_double_value(self):
        p = EscParams((1.0, 0.5), (0.5, 1.0), (0.1, 0.1), (0.3, 0.7))
        star = np.array([2.0, -3.0])
        assert A.lyapunov_value((star + [1, 0], star + [0, 1]), star, p) == pytest.approx(2.0)

    def test_rate_example(self):
        assert A.lyapunov_rate((np.zeros(2), np.array([1.0, 0.0])), bilinear()) == pytest.approx(-1.0)

    def test_needs_known_equilibrium(self):
        with pytest.raises(ValueError):
            A.lyapunov_value((np.zeros(2), np.zeros(2)), None, unit2)

    @pytest.mark.parametrize("which", ["bilinear", "fixed-demand"])
    def test_rate_matches_time_difference(self, which):
        g = bilinear() if which == "bilinear" else fixed_demand()
        p = EscParams(tuple(np.linspace(0.5, 1.0, g.n_agents)), tuple(np.linspace(1.0, 0.3, g.n_agents)),
                      (0.1,) * g.n_agents, tuple(0.1 + 0.1 * np.arange(g.m)))
        ctrl = make_controller("gr-flow", g, p)
        x0 = np.concatenate([np.zeros(g.m), g.known_ne + 5.0])
        h = 1e-3
        traj = integrate(ctrl.rhs, x0, SolverConfig(step=h, horizon=2.0))
        m = g.m
        v = A.lyapunov_value((traj.states[:, :m], traj.states[:, m:]), g.known_ne, p)
        numeric = (v[2:] - v[:-2]) / (2 * h)
        closed = A.lyapunov_rate((traj.states[1:-1, :m], traj.states[1:-1, m:]), g, p)
        assert np.abs(numeric - closed).max() <= 1e-5 * max(1.0, np.abs(closed).max())

    def test_derivative_matches_rate_on_gr_flow(self, rng):
        g = bilinear()
        ctrl = make_controller("gr-flow", g, unit2)
        x = rng.normal(size=(20, 4))
        d = ctrl.rhs(x)
        np.testing.assert_allclose(A.lyapunov_derivative((x[:, :2], x[:, 2:]), (d[:, :2], d[:, 2:]), g.known_ne, unit2),
                                   A.lyapunov_rate((x[:, :2], x[:, 2:]), g), atol=1e-9)


class TestGradientOracle:
    def test_bilinear(self):
        np.testing.assert_allclose(A.finite_diff_pseudogradient(bilinear(), [3.0, -2.0]), [1.0, -1.0], atol=1e-8)

    def test_quadratic(self):
        assert A.finite_diff_pseudogradient(quadratic(), [1.0])[0] == pytest.approx(2.0, abs=1e-9)

    def test_at_equilibrium(self):
        g = bilinear()
        np.testing.assert_allclose(A.finite_diff_pseudogradient(g, g.known_ne), 0.0, atol=1e-8)

    @pytest.mark.parametrize("game", [bilinear(), fixed_demand()], ids=["bilinear", "fixed-demand"])
    def test_matches_analytic(self, game, rng):
        u = rng.uniform(-10, 10, (100, game.m))
        fd = A.finite_diff_pseudogradient(game, u)
        exact = game.gradient(u)
        assert (np.abs(fd - exact) / np.maximum(np.abs(exact), 1.0)).max() <= 1e-6

    def test_bad_step(self):
        with pytest.raises(ValueError):
            A.finite_diff_pseudogradient(bilinear(), [0.0, 0.0], step=0.0)


class TestMonotonicity:
    def test_bilinear_is_merely_monotone(self):
        rep = A.monotonicity_probe(bilinear())
        assert not rep.violated and abs(rep.min_inner_product) <= 1e-9

    def test_market_is_monotone(self):
        assert A.monotonicity_probe(fixed_demand()).min_inner_product >= -1e-9

    def test_negative_control(self):
        rep = A.monotonicity_probe(anti_monotone(2))
        assert rep.violated and rep.min_inner_product < 0
        u, v = rep.violating_pair
        assert "VIOLATED" in str(rep) and not np.allclose(u, v)


class TestAveraging:
    def test_quadratic_exact(self):
        p = EscParams.uniform(1, 1.0, 1.0, 0.1, [1.0])
        assert A.dither_average_error(quadratic(), [1.0], p) <= 1e-8
        np.testing.assert_allclose(A.dither_average(quadratic(), [1.0], p), [2.0], atol=1e-12)

    @pytest.mark.parametrize("a", [0.2, 0.1, 0.05, 1e-3])
    def test_quartic_closed_form(self, a):
        # period average of (2/a)(u + a cos)^4 cos is 4u^3 + 3 u a^2
        p = EscParams.uniform(1, 1.0, 1.0, a, [1.0])
        assert A.dither_average_error(quartic(), [1.0], p) == pytest.approx(3 * a * a, rel=1e-9)

    def test_quartic_halving_ratio(self):
        p = EscParams.uniform(1, 1.0, 1.0, 0.1, [1.0])
        ratio = A.dither_average_error(quartic(), [1.0], p) / A.dither_average_error(
            quartic(), [1.0], p.replace(amplitudes=(0.05,)))
        assert 3.5 <= ratio <= 4.5

    def test_two_player_quadratic_average(self):
        g = quadratic((1.0, 3.0), (0.5, -1.0))
        p = EscParams.uniform(2, 1.0, 1.0, 0.3, [0.25, 0.5])
        assert A.dither_average_error(g, [2.0, 1.0], p) <= 1e-8

    def test_common_period(self):
        assert A.common_period([0.5, 0.25]) == (4.0, True)
        assert A.common_period([0.1778, 0.1238, 0.1824]) == pytest.approx((5000.0, True))
        period, exact = A.common_period([np.sqrt(2) / 10, 0.5])
        assert not exact and period == pytest.approx(1000 / (np.sqrt(2) / 10))

    def test_sign_flip_breaks_average(self):
        from nesc.controllers import dither_estimate

        p = EscParams.uniform(1, 1.0, 1.0, 0.1, [1.0])
        flip = lambda g, u, mu, q: -dither_estimate(g, u, mu, q)
        assert A.dither_average_error(quadratic(), [1.0], p, estimator=flip) == pytest.approx(4.0)


class TestNoise:
    def test_zero_sigma_is_clean(self, rng):
        g = fixed_demand()
        ch = A.noisy_cost_channel(g, A.NoiseConfig(0.0, 7))
        u = rng.normal(size=(3, 4)) * 100
        assert ch(u).tobytes() == g.costs(u).tobytes()

    def test_moments(self):
        g = quadratic()
        ch = A.NoisyChannel(g, 1.0, 11, block=1000)
        draws = np.array([ch(np.array([1.0]))[0] for _ in range(100_000)])
        assert abs(draws.mean() - 1.0) <= 0.02
        assert 0.98 <= draws.std() <= 1.02

    def test_agent_mask(self):
        g = fixed_demand()
        ch = A.NoisyChannel(g, 5.0, 3, agents=[0, 1, 2])
        u = np.array([1.0, 2.0, 3.0, 4.0])
        out = ch(u)
        assert out[3] == g.costs(u)[3] and np.all(out[:3] != g.costs(u)[:3])

    def test_batched_rows_are_independent_streams(self):
        g = quadratic((1.0, 1.0))
        seeds = A.run_seeds(5, 3)
        assert seeds == [[5, 0], [5, 1], [5, 2]]
        batch = A.NoisyChannel(g, [0.5, 1.0, 2.0], seeds, block=8)
        u = np.zeros((3, 2))
        rows = np.array([batch(u)[1] for _ in range(20)])
        single = A.NoisyChannel(g, 1.0, [seeds[1]], block=64)
        ref = np.array([single(np.zeros((1, 2)))[0] for _ in range(20)])
        np.testing.assert_array_equal(rows, ref)

    def test_per_row_sigma_shape(self):
        with pytest.raises(ValueError):
            A.NoisyChannel(quadratic(), [1.0, 2.0], [[0, 0]])
        with pytest.raises(ValueError):
            A.NoiseConfig(-1.0, 0)


def flat(value, seconds=1000.0, dt=1.0):
    t = np.arange(0.0, seconds + dt / 2, dt)
    return Trajectory(t, np.zeros((len(t), 1)), {"price": np.full(len(t), value)})


class TestHistogram:
    def test_binning(self):
        h = A.histogram([0.0, 0.04, 0.06], 0.05)
        assert h.counts.tolist() == [2, 1]
        np.testing.assert_allclose(h.bin_edges, [0.0, 0.05, 0.10])

    def test_constant_tail(self):
        h = A.price_histogram([flat(43.30)], "price", 250.0, 1.0, 0.05)
        assert h.counts.tolist() == [251]
        assert h.bin_edges[0] <= 43.30 < h.bin_edges[1]

    def test_pooled_total(self):
        h = A.price_histogram([flat(43.3 + 0.001 * k) for k in range(200)])
        assert h.total == 200 * 251

    def test_finer_recording_is_subsampled(self):
        assert A.tail_samples(flat(1.0, 300.0, 0.1), "price", 250.0, 1.0).size == 251

    def test_off_grid_rejected(self):
        with pytest.raises(ValueError):
            A.tail_samples(flat(1.0, 300.0, 2.0), "price", 250.0, 1.0)
        with pytest.raises(ValueError):
            A.tail_samples(flat(1.0, 100.0), "price", 250.0, 1.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            A.histogram([], 0.05)
        with pytest.raises(ValueError):
            A.price_histogram([])

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=200), st.sampled_from([0.05, 0.1, 0.5, 2.0]))
    def test_properties(self, values, width):
        h = A.histogram(values, width)
        assert h.total == len(values)
        np.testing.assert_allclose(np.diff(h.bin_edges), width, rtol=1e-6, atol=1e-9)
        k0 = h.bin_edges[0] / width
        assert abs(k0 - round(k0)) < 1e-6
        v = np.asarray(values)
        assert h.bin_edges[0] <= v.min() + 1e-9 and v.max() < h.bin_edges[-1] + 1e-9

    def test_csv(self, tmp_path):
        A.histogram([0.0, 0.04, 0.06], 0.05).to_csv(tmp_path / "h.csv")
        lines = (tmp_path / "h.csv").read_text().splitlines()
        assert lines[0] == "bin_left,bin_right,count" and lines[1].endswith(",2") and len(lines) == 3
