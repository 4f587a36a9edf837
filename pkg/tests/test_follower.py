"""Sampled follower problem: objective, solver, sensitivity, sample sizing."""
import math

import numpy as np
import pytest

import riskdesign as rd

from conftest import random_distribution, random_type_space

BOX01 = rd.Box(np.array([0.0]), np.array([1.0]))


def flat_types(locations):
    return rd.TypeSpace(locations, [rd.RiskSpectrum.flat()] * len(locations))


def small_instance(seed=0, n=60):
    ts = rd.TypeSpace(
        [0.0, 0.6, 1.0],
        [rd.RiskSpectrum.flat(),
         rd.RiskSpectrum.tail_average(0.5),
         rd.RiskSpectrum.mean_semideviation(0.8, 0.5)],
    )
    scen = rd.ScenarioSet.generate("uniform", n, seed, low=0.1, high=1.9)
    model = rd.LossModel(kind="newsvendor", box=rd.Box([0.0], [2.0]),
                         over_cost=1.0, under_cost=3.0)
    return ts, scen, model


class TestBox:
    def test_properties(self):
        b = rd.Box([0.0, -1.0], [2.0, 1.0])
        assert b.dim == 2
        assert np.array_equal(b.center, [1.0, 0.0])
        assert b.diameter == pytest.approx(math.sqrt(8.0))
        assert b.contains([1.0, 0.5])
        assert not b.contains([3.0, 0.0])
        assert np.array_equal(b.clip([5.0, -9.0]), [2.0, -1.0])

    def test_validation(self):
        with pytest.raises(ValueError):
            rd.Box([0.0], [0.0])
        with pytest.raises(ValueError):
            rd.Box([0.0, 1.0], [1.0])


class TestScenarioSet:
    def test_generate_reproducible(self):
        a = rd.ScenarioSet.generate("normal", 50, 7, dim=2, mean=1.0, std=0.5)
        b = a.regenerate()
        assert np.array_equal(a.samples, b.samples)

    def test_kinds_and_shapes(self):
        u = rd.ScenarioSet.generate("uniform", 10, 0, dim=3, low=-1.0, high=2.0)
        assert u.samples.shape == (10, 3)
        assert u.samples.min() >= -1.0 and u.samples.max() <= 2.0
        g = rd.ScenarioSet.generate("labeled-gaussians", 20, 1, dim=2)
        assert g.samples.shape == (20, 3)
        assert set(np.unique(g.samples[:, -1])) <= {-1.0, 1.0}

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            rd.ScenarioSet.generate("cauchy", 5, 0)

    def test_validation(self):
        with pytest.raises(ValueError):
            rd.ScenarioSet(np.empty((0, 2)))
        with pytest.raises(ValueError):
            rd.ScenarioSet([[1.0], [np.inf]])

    def test_table_round_trip_exact(self, tmp_path):
        a = rd.ScenarioSet.generate("normal", 40, 3, dim=2)
        path = tmp_path / "scen.csv"
        a.save_table(path)
        b = rd.ScenarioSet.load_table(path)
        assert np.array_equal(a.samples, b.samples)

    def test_regenerate_needs_seed(self):
        with pytest.raises(ValueError):
            rd.ScenarioSet([[1.0]]).regenerate()


class TestLossModel:
    def test_validation(self):
        with pytest.raises(ValueError):
            rd.LossModel(kind="cubic", box=BOX01)
        with pytest.raises(ValueError):
            rd.LossModel(kind="linear", box=BOX01, scale=0.0)
        with pytest.raises(ValueError):
            rd.LossModel(kind="newsvendor", box=BOX01, over_cost=-1.0)

    def test_scenario_dim_check(self):
        model = rd.LossModel(kind="quadratic", box=rd.Box([0.0, 0.0], [1.0, 1.0]))
        with pytest.raises(ValueError):
            model.evaluate([0.5, 0.5], np.ones((4, 3)))

    def test_grid_matches_single_evaluate(self):
        rng = np.random.default_rng(30)
        kinds = ["linear", "quadratic", "newsvendor",
                 "hinge-classification", "logistic-classification"]
        for kind in kinds:
            dim = 2
            box = rd.Box([-1.0, -1.0], [1.0, 1.0])
            model = rd.LossModel(kind=kind, box=box, scale=1.3)
            cols = dim + 1 if kind.endswith("classification") else dim
            samples = rng.normal(0, 1, (12, cols))
            if kind.endswith("classification"):
                samples[:, -1] = np.sign(samples[:, -1]) + (samples[:, -1] == 0)
            xs = rng.uniform(-1, 1, (5, dim))
            grid = model.evaluate_grid(xs, samples)
            for i, x in enumerate(xs):
                assert np.allclose(grid[i], model.evaluate(x, samples), atol=1e-12)

    def test_subgradient_finite_difference(self):
        # central differences at randomly drawn smooth points
        rng = np.random.default_rng(31)
        box = rd.Box([-2.0, -2.0], [2.0, 2.0])
        for kind in ["linear", "quadratic", "newsvendor",
                     "logistic-classification"]:
            model = rd.LossModel(kind=kind, box=box)
            cols = 3 if kind.endswith("classification") else 2
            samples = rng.normal(0, 1, (8, cols))
            if kind.endswith("classification"):
                samples[:, -1] = np.where(samples[:, -1] >= 0, 1.0, -1.0)
            x = rng.uniform(-1.5, 1.5, 2)
            g = model.subgradient(x, samples)
            h = 1e-6
            for j in range(2):
                d = np.zeros(2)
                d[j] = h
                fd = (model.evaluate(x + d, samples)
                      - model.evaluate(x - d, samples)) / (2 * h)
                assert np.allclose(g[:, j], fd, atol=1e-4)


class TestFollowerObjective:
    def test_flat_population_is_sample_mean(self):
        rng = np.random.default_rng(32)
        ts = flat_types([0.0, 1.0, 2.0])
        scen = rd.ScenarioSet.generate("normal", 40, 5, dim=1, mean=0.7)
        model = rd.LossModel(kind="quadratic", box=rd.Box([-1.0], [2.0]))
        for _ in range(10):
            mu = random_distribution(rng, 3)
            x = float(rng.uniform(-1, 2))
            losses = model.evaluate([x], scen.samples)
            assert rd.follower_objective([x], mu, ts, scen, model) \
                == pytest.approx(losses.mean(), abs=1e-9)

    def test_point_mass_is_single_type_risk(self):
        ts, scen, model = small_instance()
        for m in range(ts.m):
            mu = rd.TypeDistribution.point_mass(ts.m, m)
            got = rd.follower_objective([0.8], mu, ts, scen, model)
            want = rd.spectral_risk(model.evaluate([0.8], scen.samples),
                                    ts.spectra[m])
            assert got == pytest.approx(want, abs=1e-9)

    def test_matches_auxiliary_variable_program(self):
        # the quantile/overshoot shortcut agrees with explicitly minimizing
        # the per-level bracket (1-tau) t + mean (z-t)_+ over atom values of t
        rng = np.random.default_rng(33)
        ts, scen, model = small_instance()
        for _ in range(15):
            mu = random_distribution(rng, ts.m)
            x = float(rng.uniform(0.0, 2.0))
            z = model.evaluate([x], scen.samples)
            sp = rd.equivalent_spectrum(ts, mu)
            oracle = 0.0
            for tau, a in zip(sp.breakpoints, sp.jumps):
                best = min((1.0 - tau) * t + np.maximum(z - t, 0.0).mean()
                           for t in z)
                oracle += a * best
            got = rd.follower_objective([x], mu, ts, scen, model)
            assert got == pytest.approx(oracle, abs=1e-9)

    def test_domain_error(self):
        ts, scen, model = small_instance()
        with pytest.raises(ValueError):
            rd.follower_objective([5.0], rd.TypeDistribution.uniform(3),
                                  ts, scen, model)

    def test_convex_along_segments(self):
        rng = np.random.default_rng(34)
        ts, scen, model = small_instance()
        mu = rd.TypeDistribution.uniform(3)
        for _ in range(40):
            x1 = float(rng.uniform(0, 2))
            x2 = float(rng.uniform(0, 2))
            lam = float(rng.uniform(0, 1))
            xm = lam * x1 + (1 - lam) * x2
            vm = rd.follower_objective([xm], mu, ts, scen, model)
            v1 = rd.follower_objective([x1], mu, ts, scen, model)
            v2 = rd.follower_objective([x2], mu, ts, scen, model)
            assert vm <= lam * v1 + (1 - lam) * v2 + 1e-9

    def test_affine_in_weights(self):
        rng = np.random.default_rng(35)
        ts, scen, model = small_instance()
        for _ in range(20):
            mu = random_distribution(rng, ts.m).weights
            nu = random_distribution(rng, ts.m).weights
            lam = float(rng.uniform(0, 1))
            x = [float(rng.uniform(0, 2))]
            mixed = rd.follower_objective(x, lam * mu + (1 - lam) * nu,
                                          ts, scen, model)
            parts = (lam * rd.follower_objective(x, mu, ts, scen, model)
                     + (1 - lam) * rd.follower_objective(x, nu, ts, scen, model))
            assert mixed == pytest.approx(parts, abs=1e-12)

    def test_subgradient_matches_finite_difference(self):
        ts, scen, model = small_instance()
        mu = rd.TypeDistribution([0.2, 0.5, 0.3])
        rng = np.random.default_rng(36)
        checked = 0
        while checked < 10:
            x = float(rng.uniform(0.05, 1.95))
            h = 1e-7
            g = rd.follower_subgradient([x], mu, ts, scen, model)
            fd = (rd.follower_objective([x + h], mu, ts, scen, model)
                  - rd.follower_objective([x - h], mu, ts, scen, model)) / (2 * h)
            # skip kink points of the piecewise-linear objective
            if abs(rd.follower_objective([x + h], mu, ts, scen, model)
                   + rd.follower_objective([x - h], mu, ts, scen, model)
                   - 2 * rd.follower_objective([x], mu, ts, scen, model)) > 1e-12:
                continue
            assert g[0] == pytest.approx(fd, abs=1e-6)
            checked += 1


class TestSolveFollower:
    def test_linear_positive_scenarios(self):
        ts = flat_types([0.0, 1.0])
        scen = rd.ScenarioSet.generate("uniform", 80, 2, low=0.2, high=1.8)
        model = rd.LossModel(kind="linear", box=BOX01)
        sol = rd.solve_follower([0.5, 0.5], ts, scen, model)
        assert abs(sol.x_star[0]) <= 1e-6
        assert abs(sol.value) <= 1e-6

    def test_quadratic_flat_population_hits_mean(self):
        ts = flat_types([0.0, 1.0])
        scen = rd.ScenarioSet.generate("normal", 200, 8, dim=2, mean=0.4, std=0.6)
        model = rd.LossModel(kind="quadratic",
                             box=rd.Box([-2.0, -2.0], [2.0, 2.0]))
        sol = rd.solve_follower([0.3, 0.7], ts, scen, model)
        mean = scen.samples.mean(axis=0)
        assert np.allclose(sol.x_star, mean, atol=1e-6)
        assert sol.converged

    def test_newsvendor_matches_dense_grid(self):
        ts, scen, model = small_instance(seed=4, n=90)
        mu = rd.TypeDistribution([0.3, 0.4, 0.3])
        sol = rd.solve_follower(mu, ts, scen, model)
        grid = np.linspace(0.0, 2.0, 10_001)
        fg = rd.FollowerGrid(ts, scen, model, grid)
        assert sol.value <= fg.values(mu).min() + 1e-3

    def test_deterministic_bitwise(self):
        ts, scen, model = small_instance(seed=9)
        mu = rd.TypeDistribution([0.5, 0.2, 0.3])
        s1 = rd.solve_follower(mu, ts, scen.regenerate(), model)
        s2 = rd.solve_follower(mu, ts, scen.regenerate(), model)
        assert np.array_equal(s1.x_star, s2.x_star)
        assert s1.value == s2.value
        assert s1.iterations == s2.iterations

    def test_quantile_reformulation_identity(self):
        # stored (levels, t_star) reproduce the optimal value through the
        # bracket form of the objective
        ts, scen, model = small_instance(seed=12)
        mu = rd.TypeDistribution([0.25, 0.5, 0.25])
        sol = rd.solve_follower(mu, ts, scen, model)
        z = model.evaluate(sol.x_star, scen.samples)
        jumps = rd.equivalent_spectrum(ts, mu).value(sol.levels)
        jumps = np.diff(np.concatenate(([0.0], jumps)))
        total = 0.0
        for tau, a, t in zip(sol.levels, jumps, sol.t_star):
            total += a * ((1.0 - tau) * t + np.maximum(z - t, 0.0).mean())
        assert total == pytest.approx(sol.value, abs=1e-9)

    def test_value_concave_in_weights(self):
        ts, scen, model = small_instance(seed=5)
        grid = np.linspace(0.0, 2.0, 2001)
        fg = rd.FollowerGrid(ts, scen, model, grid)
        rng = np.random.default_rng(37)
        for _ in range(40):
            mu = random_distribution(rng, 3).weights
            nu = random_distribution(rng, 3).weights
            lam = float(rng.uniform(0, 1))
            mid = fg.u_star(lam * mu + (1 - lam) * nu)
            assert mid >= lam * fg.u_star(mu) + (1 - lam) * fg.u_star(nu) - 1e-9

    def test_spectrum_approximation_controls_value_gap(self):
        # replacing a spectrum by its step approximation moves the optimal
        # value by at most the measured mixture gap on the solution probes
        taus = np.array([0.0, 0.35, 0.8])
        raw = np.array([0.3, 0.8, 2.0])
        ref = rd.RiskSpectrum(taus, raw / np.dot(raw, 1.0 - taus))
        scen = rd.ScenarioSet.generate("uniform", 120, 21, low=0.1, high=1.9)
        model = rd.LossModel(kind="newsvendor", box=rd.Box([0.0], [2.0]),
                             over_cost=1.0, under_cost=2.0)
        for n in (4, 8, 16):
            approx = rd.approximate_spectrum(ref.value, n)
            ts_ref = rd.TypeSpace([0.0], [ref])
            ts_apx = rd.TypeSpace([0.0], [approx])
            s_ref = rd.solve_follower([1.0], ts_ref, scen, model)
            s_apx = rd.solve_follower([1.0], ts_apx, scen, model)
            probes = [
                rd.EmpiricalLoss(model.evaluate(s_ref.x_star, scen.samples)),
                rd.EmpiricalLoss(model.evaluate(s_apx.x_star, scen.samples)),
            ]
            gap = rd.pseudo_metric_estimate(
                rd.spectrum_to_kusuoka(ref), rd.spectrum_to_kusuoka(approx),
                probes)
            assert abs(s_ref.value - s_apx.value) <= gap + 1e-6

    def test_record_is_json_safe(self):
        import json
        ts, scen, model = small_instance()
        sol = rd.solve_follower(rd.TypeDistribution.uniform(3), ts, scen, model)
        json.dumps(sol.record())


class TestEpsilonOptimalSet:
    def test_zero_epsilon_contains_near_optimum(self):
        ts, scen, model = small_instance(seed=6)
        mu = rd.TypeDistribution.uniform(3)
        grid = np.linspace(0.0, 2.0, 401)
        sol = rd.solve_follower(mu, ts, scen, model)
        pts = rd.epsilon_optimal_set(mu, ts, scen, model, 1e-4, grid)
        nearest = grid[np.argmin(np.abs(grid - sol.x_star[0]))]
        assert pts.size > 0
        assert np.min(np.abs(pts[:, 0] - nearest)) <= 1e-9

    def test_huge_epsilon_is_whole_grid(self):
        ts, scen, model = small_instance(seed=6)
        mu = rd.TypeDistribution.uniform(3)
        grid = np.linspace(0.0, 2.0, 51)
        pts = rd.epsilon_optimal_set(mu, ts, scen, model, 1e9, grid)
        assert pts.shape == (51, 1)

    def test_nested_in_epsilon(self):
        ts, scen, model = small_instance(seed=6)
        mu = rd.TypeDistribution.uniform(3)
        grid = np.linspace(0.0, 2.0, 101)
        sol = rd.solve_follower(mu, ts, scen, model)
        sets = [rd.epsilon_optimal_set(mu, ts, scen, model, e, grid,
                                       u_star=sol.value)
                for e in (0.01, 0.05, 0.2)]
        for small, large in zip(sets, sets[1:]):
            small_set = {float(v) for v in small[:, 0]}
            large_set = {float(v) for v in large[:, 0]}
            assert small_set <= large_set

    def test_negative_epsilon_rejected(self):
        ts, scen, model = small_instance()
        with pytest.raises(ValueError):
            rd.epsilon_optimal_set(rd.TypeDistribution.uniform(3), ts, scen,
                                   model, -0.1, np.linspace(0, 2, 11))


class TestValueSensitivity:
    def test_identical_spectra_equal_components(self):
        ts = flat_types([0.0, 0.5, 1.0])
        scen = rd.ScenarioSet.generate("uniform", 50, 13, low=0.2, high=1.6)
        model = rd.LossModel(kind="newsvendor", box=rd.Box([0.0], [2.0]))
        mu = rd.TypeDistribution([0.2, 0.3, 0.5])
        sol = rd.solve_follower(mu, ts, scen, model)
        g = rd.value_sensitivity(sol, mu, ts, scen, model)
        assert np.allclose(g, g[0], atol=1e-12)

    def test_matches_type_risk_profile(self):
        ts, scen, model = small_instance(seed=14)
        mu = rd.TypeDistribution([0.4, 0.4, 0.2])
        sol = rd.solve_follower(mu, ts, scen, model)
        g = rd.value_sensitivity(sol, mu, ts, scen, model)
        profile = rd.type_risk_profile(model.evaluate(sol.x_star, scen.samples), ts)
        assert np.allclose(g, profile, atol=1e-12)

    def test_weights_dot_gradient_is_value(self):
        ts, scen, model = small_instance(seed=15)
        mu = rd.TypeDistribution([0.3, 0.3, 0.4])
        sol = rd.solve_follower(mu, ts, scen, model)
        g = rd.value_sensitivity(sol, mu, ts, scen, model)
        assert float(np.dot(mu.weights, g)) == pytest.approx(sol.value, abs=1e-12)

    def test_finite_difference_on_resolved_values(self):
        ts, scen, model = small_instance(seed=16, n=80)
        mu = np.array([0.35, 0.35, 0.30])
        sol = rd.solve_follower(mu, ts, scen, model)
        g = rd.value_sensitivity(sol, mu, ts, scen, model)
        h = 0.01
        for i, j in [(0, 1), (0, 2), (1, 2)]:
            d = np.zeros(3)
            d[i], d[j] = 1.0, -1.0
            up = rd.solve_follower(mu + h * d, ts, scen, model).value
            dn = rd.solve_follower(mu - h * d, ts, scen, model).value
            fd = (up - dn) / (2 * h)
            want = float(np.dot(g, d))
            assert fd == pytest.approx(want, rel=1e-3, abs=1e-5)

    def test_first_order_expansion_over_estimates(self):
        # concavity of the optimal value in the weights
        ts, scen, model = small_instance(seed=17)
        rng = np.random.default_rng(38)
        mu = rd.TypeDistribution([0.4, 0.3, 0.3])
        sol = rd.solve_follower(mu, ts, scen, model)
        g = rd.value_sensitivity(sol, mu, ts, scen, model)
        for _ in range(20):
            nu = random_distribution(rng, 3).weights
            resolved = rd.solve_follower(nu, ts, scen, model).value
            linear = sol.value + float(np.dot(g, nu - mu.weights))
            assert resolved <= linear + 1e-6


class TestFollowerGrid:
    def test_matches_objective(self):
        ts, scen, model = small_instance(seed=18)
        grid = np.linspace(0.0, 2.0, 57)
        fg = rd.FollowerGrid(ts, scen, model, grid)
        mu = rd.TypeDistribution([0.1, 0.6, 0.3])
        vals = fg.values(mu)
        for i, x in enumerate(grid):
            assert vals[i] == pytest.approx(
                rd.follower_objective([x], mu, ts, scen, model), abs=1e-12)

    def test_values_many_stacks(self):
        ts, scen, model = small_instance(seed=18)
        fg = rd.FollowerGrid(ts, scen, model, np.linspace(0.0, 2.0, 31))
        rng = np.random.default_rng(39)
        ws = np.vstack([random_distribution(rng, 3).weights for _ in range(6)])
        many = fg.values_many(ws)
        assert many.shape == (31, 6)
        for p in range(6):
            assert np.allclose(many[:, p], fg.values(ws[p]), atol=1e-12)

    def test_grid_outside_box_rejected(self):
        ts, scen, model = small_instance()
        with pytest.raises(ValueError):
            rd.FollowerGrid(ts, scen, model, np.linspace(-1.0, 2.0, 11))


class TestSampleSizeBound:
    BASE = dict(lipschitz_modulus=1.0, diameter=1.0, mean_kappa=1.0,
                n_steps=1, beta=math.exp(-1.0), eps_outer=1.0, eps_inner=0.0)

    def test_unit_case(self):
        assert rd.sample_size_bound(rd.SampleSizeParams(**self.BASE)) == 1

    def test_lipschitz_doubling_quadruples(self):
        # the log factor does not involve the Lipschitz modulus, so the
        # quadrupling is exact
        p2 = rd.SampleSizeParams(**{**self.BASE, "lipschitz_modulus": 2.0})
        p4 = rd.SampleSizeParams(**{**self.BASE, "lipschitz_modulus": 4.0})
        assert rd.sample_size_bound(p2) == 4
        assert rd.sample_size_bound(p4) == 16

    def test_gap_halving(self):
        # leading factor grows 4x and the log gains ln 2:
        # ceil(4 (ln 2 + 1)) = 7
        p = rd.SampleSizeParams(**{**self.BASE, "eps_outer": 0.5})
        assert rd.sample_size_bound(p) == 7

    def test_monotone_in_failure_probability(self):
        bounds = [rd.sample_size_bound(rd.SampleSizeParams(
            **{**self.BASE, "beta": b})) for b in (0.3, 0.1, 0.01, 1e-6)]
        for a, b in zip(bounds, bounds[1:]):
            assert b >= a

    def test_validation(self):
        with pytest.raises(ValueError):
            rd.SampleSizeParams(**{**self.BASE, "eps_inner": 1.5})
        with pytest.raises(ValueError):
            rd.SampleSizeParams(**{**self.BASE, "beta": 1.0})
        with pytest.raises(ValueError):
            rd.SampleSizeParams(**{**self.BASE, "diameter": -2.0})
        with pytest.raises(ValueError):
            rd.SampleSizeParams(**{**self.BASE, "n_steps": 0})
