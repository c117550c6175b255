"""Scenario generators, scoring rules, and benchmark plumbing."""

import math

import numpy as np
import pytest
import scipy.integrate
import scipy.stats
from numpy.testing import assert_allclose

from sparsegp.errors import ConfigError
from sparsegp.synthetic import (
    SCENARIOS,
    ScoreRow,
    ScoreTable,
    crps_gaussian,
    generate_scenario_draw,
    piecewise_ground_truth,
    rmse,
    run_benchmark,
)


class TestPiecewiseTruth:
    def test_paper_values(self):
        assert piecewise_ground_truth(0.1) == -1.0
        assert piecewise_ground_truth(0.3) == 1.0
        assert piecewise_ground_truth(0.6) == -1.0
        assert piecewise_ground_truth(0.8) == 1.0

    def test_boundaries(self):
        assert piecewise_ground_truth(0.25) == -1.0
        assert piecewise_ground_truth(0.5) == 1.0
        assert piecewise_ground_truth(0.75) == -1.0

    def test_vectorized(self):
        x = np.array([0.1, 0.3, 0.6, 0.9])
        assert np.array_equal(piecewise_ground_truth(x), [-1.0, 1.0, -1.0, 1.0])


class TestScenarioDraws:
    def test_deterministic(self):
        for tag in ("S1", "S3", "D1"):
            a = generate_scenario_draw(SCENARIOS[tag], seed=5)
            b = generate_scenario_draw(SCENARIOS[tag], seed=5)
            assert np.array_equal(a.train_x, b.train_x)
            assert np.array_equal(a.train_z, b.train_z)
            assert np.array_equal(a.test_truth, b.test_truth)

    def test_shapes_and_domains(self):
        for tag, scenario in SCENARIOS.items():
            draw = generate_scenario_draw(scenario, seed=0)
            assert draw.train_x.shape == (50, 1)
            assert draw.test_x.shape == (300, 1)
            lo, hi = scenario.domain
            assert np.all((draw.train_x >= lo) & (draw.train_x <= hi))
            assert np.all((draw.test_x >= lo) & (draw.test_x <= hi))

    def test_s1_pooled_variance_near_one(self):
        # sigma^2 = 1 in the S1 kernel: pooled truth values across many
        # replicates should have unit variance
        values = []
        for seed in range(200):
            draw = generate_scenario_draw(SCENARIOS["S1"], seed=seed)
            values.append(draw.test_truth)
        pooled = np.concatenate(values)
        assert abs(pooled.var() - 1.0) <= 0.05

    def test_s3_minimum_variance_at_center(self):
        # sigma^2(x) = 0.05 (x-5)^4 + 0.001 has its minimum at x = 5
        values = []
        for seed in range(400):
            draw = generate_scenario_draw(SCENARIOS["S3"], seed=seed)
            values.append(draw.test_truth)
        arr = np.asarray(values)
        var_profile = arr.var(axis=0)
        x = generate_scenario_draw(SCENARIOS["S3"], 0).test_x[:, 0]
        center = np.argmin(np.abs(x - 5.0))
        assert var_profile[center] <= var_profile[5] * 0.05
        assert var_profile[center] == pytest.approx(0.001, rel=0.5)

    def test_joint_draw_correlation(self):
        # train and test share one realization: a training point close to a
        # test point must carry (nearly) the same value in S1
        for seed in range(20):
            draw = generate_scenario_draw(SCENARIOS["S1"], seed=seed)
            i = np.argmin(np.abs(draw.train_x[:, 0] - 5.0))
            j = np.argmin(np.abs(draw.test_x[:, 0] - draw.train_x[i, 0]))
            gap = abs(draw.train_x[i, 0] - draw.test_x[j, 0])
            if gap < 0.02:
                # the noisy observation sits near the shared-path truth:
                # difference is observation noise plus a small smoothness term
                assert abs(draw.train_z[i] - draw.test_truth[j]) < 4 * math.sqrt(0.1) + 0.5

    def test_d1_draw(self):
        draw = generate_scenario_draw(SCENARIOS["D1"], seed=3)
        assert np.all((draw.train_x > 0) & (draw.train_x < 1))
        assert set(np.unique(draw.test_truth)) == {-1.0, 1.0}
        assert np.all(np.abs(draw.train_z) < 1.0 + 5 * math.sqrt(0.1))

    def test_scenario_covariances_are_spd(self):
        from sparsegp.synthetic import _SCENARIO_COVS

        rng = np.random.default_rng(0)
        joint = np.sort(np.concatenate([rng.uniform(0, 10, 50), np.linspace(0, 10, 300)]))
        for tag, fn in _SCENARIO_COVS.items():
            cov = fn(joint)
            eig = np.linalg.eigvalsh(cov)
            assert eig[0] >= -1e-8 * eig[-1], tag


class TestScores:
    def test_rmse_trivials(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert_allclose(rmse([0.0, 0.0], [3.0, 4.0]), math.sqrt(12.5), rtol=1e-15)
        assert_allclose(rmse([1.0, 1.0, 1.0], [2.0, 2.0, 2.0]), 1.0, rtol=1e-15)

    def test_rmse_length_mismatch(self):
        with pytest.raises(ConfigError):
            rmse([1.0], [1.0, 2.0])

    def test_crps_perfect_point_forecast(self):
        assert crps_gaussian(1.0, 0.0, 1.0) == 0.0

    def test_crps_standard_normal_at_center(self):
        expected = 2.0 / math.sqrt(2 * math.pi) - 1.0 / math.sqrt(math.pi)
        assert_allclose(crps_gaussian(0.0, 1.0, 0.0), expected, rtol=1e-12)
        assert_allclose(crps_gaussian(0.0, 1.0, 0.0), 0.233695, atol=5e-7)

    def test_crps_matches_quadrature(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            mu, sigma, y = rng.normal(), rng.uniform(0.2, 2.0), rng.normal()

            def integrand(t):
                f = scipy.stats.norm.cdf(t, loc=mu, scale=sigma)
                return (f - (t >= y)) ** 2

            ref, _ = scipy.integrate.quad(integrand, mu - 12 * sigma, mu + 12 * sigma, limit=200)
            assert_allclose(crps_gaussian(mu, sigma, y), ref, atol=1e-6)

    def test_crps_degenerate_absolute_error(self):
        assert crps_gaussian(1.0, 0.0, 3.5) == 2.5

    def test_crps_propriety_in_sigma(self):
        # with a perfectly centered mean, smaller sigma is always better
        sigmas = np.linspace(0.01, 3.0, 40)
        vals = [crps_gaussian(0.0, s, 0.0) for s in sigmas]
        assert np.all(np.diff(vals) > 0)

    def test_noise_never_improves_rmse_in_expectation(self):
        rng = np.random.default_rng(11)
        truth = rng.normal(0, 1, 200)
        base = truth + 0.1 * rng.standard_normal(200)
        base_rmse = rmse(base, truth)
        noisier = [rmse(base + 0.3 * rng.standard_normal(200), truth) for _ in range(100)]
        assert np.mean(noisier) > base_rmse


class TestScoreTable:
    def test_reference_relative_is_one(self):
        table = ScoreTable()
        table.rows = [
            ScoreRow("S1", "M1", 0, rmse=0.5, crps=0.2),
            ScoreRow("S1", "M3", 0, rmse=0.4, crps=0.1),
        ]
        table.compute_relatives()
        assert table.rows[0].rel_rmse == 1.0 and table.rows[0].rel_crps == 1.0
        assert_allclose(table.rows[1].rel_rmse, 0.8)
        assert_allclose(table.rows[1].rel_crps, 0.5)

    def test_missing_reference_gives_nan(self):
        table = ScoreTable()
        table.rows = [ScoreRow("S1", "M3", 0, rmse=0.4, crps=0.1)]
        table.compute_relatives()
        assert math.isnan(table.rows[0].rel_rmse)

    def test_summary_quantiles(self):
        table = ScoreTable()
        for rep in range(10):
            table.rows.append(ScoreRow("S1", "M1", rep, rmse=1.0, crps=1.0))
            table.rows.append(ScoreRow("S1", "M3", rep, rmse=0.5 + 0.05 * rep, crps=0.9))
        table.compute_relatives()
        summary = table.summary()
        m3 = next(r for r in summary if r["model"] == "M3")
        assert m3["n"] == 10
        assert 0.5 <= m3["mean_rel_rmse"] <= 1.0


class TestBenchmarkRunner:
    def test_structural_smoke_zero_iterations(self):
        table = run_benchmark(["S1"], ["M1", "M3"], replicates=1, mcmc_iterations=0,
                              seed=1, workers=1, prediction_draws=3)
        assert len(table.rows) == 2
        m1 = next(r for r in table.rows if r.model == "M1")
        assert m1.rel_rmse == 1.0 and m1.rel_crps == 1.0
        assert all(math.isfinite(r.rmse) for r in table.rows)

    def test_rejects_unknown_model(self):
        with pytest.raises(ConfigError):
            run_benchmark(["S1"], ["M2"], 1, 0, 0)

    def test_rejects_unknown_scenario(self):
        with pytest.raises(ConfigError):
            run_benchmark(["S9"], ["M1"], 1, 0, 0)

    def test_worker_count_does_not_change_results(self):
        t1 = run_benchmark(["S1"], ["M1"], replicates=2, mcmc_iterations=20,
                           seed=3, workers=1, prediction_draws=2)
        t2 = run_benchmark(["S1"], ["M1"], replicates=2, mcmc_iterations=20,
                           seed=3, workers=2, prediction_draws=2)
        for r1, r2 in zip(t1.rows, t2.rows):
            assert (r1.scenario, r1.model, r1.replicate) == (r2.scenario, r2.model, r2.replicate)
            assert r1.rmse == r2.rmse and r1.crps == r2.crps
