"""Kernel evaluation tests against independent brute-force oracles."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import sparsegp as sgp
from sparsegp.basis import polynomial_basis
from sparsegp.errors import ConfigError
from sparsegp.kernels import sparse_components, wendland_matrix, y_kernel_diag


# ---------------------------------------------------------------------------
# independent oracles (plain-math transliterations)
# ---------------------------------------------------------------------------


def oracle_bump(a, b, r, h, x):
    d2 = sum((xi - hi) ** 2 for xi, hi in zip(np.atleast_1d(x), np.atleast_1d(h)))
    if math.sqrt(d2) >= r:
        return 0.0
    return a * math.exp(b * (1.0 - 1.0 / (1.0 - d2 / r**2)))


def oracle_wendland(r0, x, x2):
    t = abs(float(x) - float(x2)) / r0
    if t >= 1.0:
        return 0.0
    return (1 - t) ** 8 * (35 * t**3 + 25 * t**2 + 8 * t + 1)


def oracle_sparse(sp, x, x2):
    total = sp.scale * oracle_wendland(sp.wendland_radius, x, x2)
    for i in range(sp.n1):
        fi_x = sum(
            oracle_bump(sp.amplitudes[i, j], sp.shapes[i, j], sp.radii[i, j], sp.centroids[i, j], x)
            for j in range(sp.n2)
        )
        fi_x2 = sum(
            oracle_bump(sp.amplitudes[i, j], sp.shapes[i, j], sp.radii[i, j], sp.centroids[i, j], x2)
            for j in range(sp.n2)
        )
        total += fi_x * fi_x2
    return total


def oracle_matern(nu, t):
    if nu == 0.5:
        return math.exp(-t)
    if nu == 1.5:
        return (1 + math.sqrt(3) * t) * math.exp(-math.sqrt(3) * t)
    return (1 + math.sqrt(5) * t + 5 * t**2 / 3) * math.exp(-math.sqrt(5) * t)


# ---------------------------------------------------------------------------
# bump functions
# ---------------------------------------------------------------------------


class TestBumpFunction:
    def test_at_centroid_attains_amplitude(self):
        b = sgp.BumpFunction([0.0], amplitude=1.0, shape=1.0, radius=1.0)
        assert sgp.bump_eval(b, [0.0]) == 1.0

    def test_outside_support_exact_zero(self):
        b = sgp.BumpFunction([0.0], amplitude=1.0, shape=1.0, radius=1.0)
        assert sgp.bump_eval(b, [1.5]) == 0.0
        assert sgp.bump_eval(b, [1.0]) == 0.0  # boundary included in the zero set

    def test_half_radius_value(self):
        b = sgp.BumpFunction([0.0], amplitude=1.0, shape=1.0, radius=1.0)
        assert_allclose(sgp.bump_eval(b, [0.5]), math.exp(-1.0 / 3.0), rtol=1e-12)

    def test_matches_oracle_on_grid(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            a = rng.uniform(0, 3)
            shape = rng.uniform(0.1, 4)
            r = rng.uniform(0.1, 2)
            h = rng.uniform(-1, 1, 2)
            b = sgp.BumpFunction(h, a, shape, r)
            x = rng.uniform(-1.5, 1.5, 2)
            assert_allclose(sgp.bump_eval(b, x), oracle_bump(a, shape, r, h, x), rtol=1e-13)

    def test_bounds_property(self):
        rng = np.random.default_rng(7)
        b = sgp.BumpFunction([0.3], amplitude=2.5, shape=0.7, radius=0.6)
        vals = [sgp.bump_eval(b, [x]) for x in rng.uniform(-1, 2, 500)]
        assert all(0.0 <= v <= 2.5 for v in vals)
        assert sgp.bump_eval(b, [0.3]) == 2.5

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ConfigError):
            sgp.BumpFunction([0.0], amplitude=1.0, shape=1.0, radius=-1.0)
        with pytest.raises(ConfigError):
            sgp.BumpFunction([0.0], amplitude=-0.5, shape=1.0, radius=1.0)


class TestSparseComponents:
    def test_all_amplitudes_zero(self, baseline_sparse):
        sp = baseline_sparse.with_amplitudes(np.zeros((2, 3)))
        assert sgp.sparse_component_eval(sp, 0, [0.2]) == 0.0
        assert sgp.sparse_component_eval(sp, 1, [0.2]) == 0.0

    def test_single_active_bump_at_centroid(self, baseline_sparse):
        amp = np.zeros((2, 3))
        amp[0, 1] = 0.75
        sp = baseline_sparse.with_amplitudes(amp)
        assert sgp.sparse_component_eval(sp, 0, [0.45]) == 0.75

    def test_component_curves_match_summation_oracle(self, baseline_sparse, unit_grid):
        values = sparse_components(baseline_sparse, unit_grid)
        for i in range(2):
            for k, x in enumerate(unit_grid[:, 0]):
                expected = sum(
                    oracle_bump(1.0, 1.0, 0.08, baseline_sparse.centroids[i, j], x)
                    for j in range(3)
                )
                assert_allclose(values[i, k], expected, rtol=1e-13, atol=0)

    def test_index_out_of_range(self, baseline_sparse):
        with pytest.raises(IndexError):
            sgp.sparse_component_eval(baseline_sparse, 2, [0.1])


# ---------------------------------------------------------------------------
# Wendland kernel
# ---------------------------------------------------------------------------


class TestWendland:
    def test_unit_at_zero_distance(self):
        assert sgp.wendland_eval(0.7, [0.3], [0.3]) == 1.0

    def test_zero_at_support_boundary(self):
        assert sgp.wendland_eval(0.5, [0.0], [0.5]) == 0.0

    def test_half_radius(self):
        assert_allclose(sgp.wendland_eval(1.0, [0.0], [0.5]), 15.625 / 256, rtol=1e-15)

    def test_matches_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            r0 = rng.uniform(0.2, 2.0)
            x, x2 = rng.uniform(-1, 1, 2)
            assert_allclose(
                sgp.wendland_eval(r0, [x], [x2]), oracle_wendland(r0, x, x2), rtol=1e-13, atol=0
            )

    def test_anisotropic_variant(self):
        r0 = np.array([1.0, 2.0])
        # scaled distance sqrt((dx/1)^2 + (dy/2)^2)
        val = sgp.wendland_eval(r0, [0.0, 0.0], [0.5, 1.0])
        t = math.sqrt(0.25 + 0.25)
        assert_allclose(val, (1 - t) ** 8 * (35 * t**3 + 25 * t**2 + 8 * t + 1), rtol=1e-13)
        assert sgp.wendland_eval(r0, [0.0, 0.0], [1.0, 0.0]) == 0.0


# ---------------------------------------------------------------------------
# sparse kernel
# ---------------------------------------------------------------------------


class TestSparseKernel:
    def test_diagonal_with_no_bumps(self, baseline_sparse):
        sp = baseline_sparse.with_amplitudes(np.zeros((2, 3)))
        assert sgp.sparse_kernel_eval(sp, [0.4], [0.4]) == 1.0

    def test_zero_beyond_support(self, baseline_sparse):
        sp = baseline_sparse.with_amplitudes(np.zeros((2, 3)))
        assert sgp.sparse_kernel_eval(sp, [0.1], [0.6]) == 0.0

    def test_distance_unrelated_pattern(self, baseline_sparse):
        assert sgp.sparse_kernel_eval(baseline_sparse, [0.17], [0.70]) > 0.0
        assert sgp.sparse_kernel_eval(baseline_sparse, [0.17], [0.90]) > 0.0
        assert sgp.sparse_kernel_eval(baseline_sparse, [0.70], [0.90]) == 0.0

    def test_full_matrix_matches_double_loop_oracle(self, baseline_sparse, unit_grid):
        mat = sgp.kernels.sparse_kernel_matrix(baseline_sparse, unit_grid)
        n = unit_grid.shape[0]
        for i in range(n):
            for j in range(n):
                expected = oracle_sparse(baseline_sparse, unit_grid[i, 0], unit_grid[j, 0])
                assert abs(mat[i, j] - expected) <= 1e-12 * max(1.0, abs(expected))

    def test_hyperparameter_count(self, baseline_sparse):
        # 2 + n1*n2*(d+3) with free shapes
        assert baseline_sparse.n_hyperparameters == 2 + 2 * 3 * (1 + 3)


# ---------------------------------------------------------------------------
# Matern and core kernels
# ---------------------------------------------------------------------------


class TestMatern:
    def test_unit_at_zero(self):
        for nu in (0.5, 1.5, 2.5):
            assert sgp.matern_correlation(nu, 0.0) == 1.0

    def test_exponential_case(self):
        assert_allclose(sgp.matern_correlation(0.5, 1.0), math.exp(-1), rtol=1e-14)

    def test_monotone_decay(self):
        t = np.linspace(0, 30, 400)
        for nu in (0.5, 1.5, 2.5):
            vals = sgp.matern_correlation(nu, t)
            assert np.all(np.diff(vals) < 0)
            assert vals[-1] < 1e-8

    def test_unsupported_smoothness(self):
        with pytest.raises(ConfigError):
            sgp.matern_correlation(1.0, 0.5)


def _oracle_pscov(x, x2, log_s0, log_S0, phis, phiS, nu, basis):
    def log_sigma(p):
        return log_s0 + sum(basis(np.array([[p]]))[0, m] * phis[m] for m in range(len(phis)))

    def log_Sigma(p):
        return log_S0 + sum(basis(np.array([[p]]))[0, m] * phiS[m] for m in range(len(phiS)))

    sig_x, sig_y = math.exp(log_sigma(x)), math.exp(log_sigma(x2))
    S_x, S_y = math.exp(log_Sigma(x)), math.exp(log_Sigma(x2))
    mean_S = (S_x + S_y) / 2
    pref = sig_x * sig_y * (S_x * S_y) ** 0.25 / mean_S**0.5
    q = (x - x2) ** 2 / mean_S
    return pref * oracle_matern(nu, math.sqrt(q))


class TestCoreKernels:
    def test_matern_core(self):
        core = sgp.StationaryMatern(variance=2.0, length_scale=0.5, smoothness=1.5)
        assert_allclose(
            sgp.core_eval(core, [0.1], [0.4]), 2.0 * oracle_matern(1.5, 0.3 / 0.5), rtol=1e-13
        )

    def test_nonstationary_reduces_to_stationary(self):
        basis = polynomial_basis(2, 0.0, 1.0)
        Sigma0 = 0.16
        core_ns = sgp.ParametricNonstationary(
            log_sigma0=0.5 * math.log(1.7),
            log_Sigma0=math.log(Sigma0),
            sigma_coeffs=np.zeros(2),
            Sigma_coeffs=np.zeros(2),
            sigma_basis=basis,
            Sigma_basis=basis,
            smoothness=2.5,
        )
        core_st = sgp.StationaryMatern(variance=1.7, length_scale=math.sqrt(Sigma0), smoothness=2.5)
        rng = np.random.default_rng(5)
        for _ in range(25):
            x, x2 = rng.uniform(0, 1, 2)
            assert_allclose(
                sgp.core_eval(core_ns, [x], [x2]), sgp.core_eval(core_st, [x], [x2]), rtol=1e-12
            )

    def test_diagonal_is_pointwise_variance(self):
        basis = polynomial_basis(2, 0.0, 1.0)
        rng = np.random.default_rng(11)
        core = sgp.ParametricNonstationary(
            log_sigma0=0.1,
            log_Sigma0=math.log(0.2),
            sigma_coeffs=rng.normal(0, 0.3, 2),
            Sigma_coeffs=rng.normal(0, 0.3, 2),
            sigma_basis=basis,
            Sigma_basis=basis,
        )
        for x in rng.uniform(0, 1, 10):
            sig = sgp.kernels.signal_std(core, np.array([[x]]))[0]
            assert_allclose(sgp.core_eval(core, [x], [x]), sig**2, rtol=1e-12)

    def test_nonstationary_matches_formula_transcription(self):
        basis = polynomial_basis(3, 0.0, 1.0)
        rng = np.random.default_rng(23)
        phis = rng.normal(0, 0.2, 3)
        phiS = rng.normal(0, 0.2, 3)
        core = sgp.ParametricNonstationary(
            log_sigma0=0.2,
            log_Sigma0=math.log(0.3),
            sigma_coeffs=phis,
            Sigma_coeffs=phiS,
            sigma_basis=basis,
            Sigma_basis=basis,
            smoothness=2.5,
        )
        for _ in range(25):
            x, x2 = rng.uniform(0, 1, 2)
            expected = _oracle_pscov(x, x2, 0.2, math.log(0.3), phis, phiS, 2.5, basis)
            assert_allclose(sgp.core_eval(core, [x], [x2]), expected, rtol=1e-11)


# ---------------------------------------------------------------------------
# product and observed-process kernels
# ---------------------------------------------------------------------------


class TestProductKernel:
    def test_constant_core_gives_sparse_kernel(self, baseline_sparse):
        theta = sgp.KernelHyperparameters(core=sgp.ConstantCore(), sparse=baseline_sparse)
        rng = np.random.default_rng(2)
        for _ in range(20):
            x, x2 = rng.uniform(0, 1, 2)
            assert sgp.y_kernel_eval(theta, [x], [x2]) == sgp.sparse_kernel_eval(
                baseline_sparse, [x], [x2]
            )

    def test_zero_sparse_factor_wins(self, matern_theta):
        # 0.7 and 0.9 are beyond every shared support
        assert sgp.y_kernel_eval(matern_theta, [0.70], [0.90]) == 0.0

    def test_product_of_factors(self, matern_theta):
        rng = np.random.default_rng(31)
        for _ in range(30):
            x, x2 = rng.uniform(0, 1, 2)
            expected = sgp.core_eval(matern_theta.core, [x], [x2]) * sgp.sparse_kernel_eval(
                matern_theta.sparse, [x], [x2]
            )
            assert sgp.y_kernel_eval(matern_theta, [x], [x2]) == expected

    def test_nugget_on_diagonal_only(self, matern_theta, unit_grid):
        X = unit_grid[:50]
        assert_allclose(
            sgp.z_kernel_eval(matern_theta, 3, 3, X),
            sgp.y_kernel_eval(matern_theta, X[3], X[3]) + 0.05,
            rtol=1e-15,
        )
        assert sgp.z_kernel_eval(matern_theta, 3, 4, X) == sgp.y_kernel_eval(
            matern_theta, X[3], X[4]
        )

    def test_z_matrix_matches_dense_oracle(self, matern_theta, unit_grid):
        X = unit_grid[:50]
        mat = sgp.z_kernel_matrix(matern_theta, X)
        oracle = np.array(
            [[sgp.z_kernel_eval(matern_theta, i, j, X) for j in range(50)] for i in range(50)]
        )
        assert np.array_equal(mat, oracle)

    def test_diag_helper_matches_matrix_diagonal(self, matern_theta, unit_grid):
        X = unit_grid[:40]
        assert np.array_equal(
            y_kernel_diag(matern_theta, X), np.diag(sgp.y_kernel_matrix(matern_theta, X))
        )


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------


class TestKernelInvariants:
    def test_bitwise_symmetry(self, matern_theta):
        rng = np.random.default_rng(17)
        for _ in range(200):
            x, x2 = rng.uniform(0, 1, 2)
            assert sgp.y_kernel_eval(matern_theta, [x], [x2]) == sgp.y_kernel_eval(
                matern_theta, [x2], [x]
            )
            assert sgp.sparse_kernel_eval(matern_theta.sparse, [x], [x2]) == sgp.sparse_kernel_eval(
                matern_theta.sparse, [x2], [x]
            )

    def test_support_exactness(self, baseline_sparse):
        # pairs beyond r0 with no shared active bump support must be exact zeros
        rng = np.random.default_rng(29)
        sp = baseline_sparse
        mat = sgp.kernels.sparse_kernel_matrix(sp, rng.uniform(0, 1, (80, 1)))
        assert np.any(mat == 0.0)
        # recheck a specific far pair
        assert sgp.sparse_kernel_eval(sp, [0.31], [0.66]) == 0.0

    def test_positive_semidefinite_random_draws(self):
        from sparsegp.model import ModelSpec, PriorSpec, sample_theta_from_priors

        priors = PriorSpec.for_domain([[0.0, 1.0]], tau2_upper=1.0)
        model = ModelSpec(core="matern", smoothness=1.5, sparse=True, n1=2, n2=2)
        rng = np.random.default_rng(101)
        X = rng.uniform(0, 1, (100, 1))
        for _ in range(20):
            theta = sample_theta_from_priors(model, priors, rng)
            cy = sgp.y_kernel_matrix(theta, X)
            eig = np.linalg.eigvalsh(cy)
            assert eig[0] >= -1e-8 * max(eig[-1], 1e-300)

    def test_smoothness_of_slice_at_zero(self):
        # matern nu=2.5 core times the Wendland-based sparse factor: the
        # 1-d slice t -> C_y(x0, x0 + t) has two continuous derivatives, so
        # central difference estimates of f' and f'' converge as h shrinks
        sp = sgp.SparseKernelParams.from_bumps(
            scale=1.0,
            wendland_radius=0.4,
            bumps=[[sgp.BumpFunction([0.45], 1.0, 1.0, 0.3)]],
        )
        theta = sgp.KernelHyperparameters(
            core=sgp.StationaryMatern(variance=1.0, length_scale=0.5, smoothness=2.5), sparse=sp
        )
        x0 = 0.52

        def f(t):
            return sgp.y_kernel_eval(theta, [x0], [x0 + t])

        hs = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
        d1 = [(f(h) - f(-h)) / (2 * h) for h in hs]
        d2 = [(f(h) - 2 * f(0.0) + f(-h)) / h**2 for h in hs]
        assert f(1e-9) == pytest.approx(f(0.0), rel=1e-6)  # continuity
        for seq in (d1, d2):
            gaps = [abs(seq[k + 1] - seq[k]) for k in range(len(seq) - 1)]
            assert gaps[-1] <= 0.5 * gaps[0] + 1e-9

    def test_special_case_constant_core_zero_amplitudes(self, baseline_sparse):
        sp = baseline_sparse.with_amplitudes(np.zeros((2, 3)))
        theta = sgp.KernelHyperparameters(core=sgp.ConstantCore(), sparse=sp)
        rng = np.random.default_rng(4)
        for _ in range(30):
            x, x2 = rng.uniform(0, 1, 2)
            assert sgp.y_kernel_eval(theta, [x], [x2]) == 1.0 * sgp.wendland_eval(
                0.15, [x], [x2]
            )

    def test_special_case_growing_radius_fills_matrix(self, baseline_sparse, unit_grid):
        import dataclasses

        from sparsegp import AssemblyPlan, assemble_covariance, sparsity_fraction

        fractions = []
        for r0 in (0.05, 0.3, 1.0, 2.0):
            sp = dataclasses.replace(
                baseline_sparse, wendland_radius=r0, amplitudes=np.zeros((2, 3))
            )
            theta = sgp.KernelHyperparameters(core=sgp.ConstantCore(), sparse=sp)
            a = assemble_covariance(unit_grid, theta, AssemblyPlan(32), include_noise=False)
            fractions.append(sparsity_fraction(a))
        assert all(f2 >= f1 for f1, f2 in zip(fractions, fractions[1:]))
        assert fractions[-1] == 1.0  # radius beyond the domain diameter: fully dense

    def test_identity_sparse_factor(self):
        sp = sgp.SparseKernelParams.identity(dim=1)
        theta = sgp.KernelHyperparameters(
            core=sgp.StationaryMatern(variance=2.0, length_scale=1.0), sparse=sp
        )
        rng = np.random.default_rng(9)
        for _ in range(10):
            x, x2 = rng.uniform(0, 5, 2)
            assert sgp.y_kernel_eval(theta, [x], [x2]) == sgp.core_eval(theta.core, [x], [x2])


def test_wendland_matrix_cross_shape(baseline_sparse):
    a = np.linspace(0, 1, 7)[:, None]
    b = np.linspace(0, 1, 5)[:, None]
    assert wendland_matrix(0.3, a, b).shape == (7, 5)
