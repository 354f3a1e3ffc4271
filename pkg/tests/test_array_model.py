import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from doa_lab.array_model import (
    ArrayScenario,
    complex_normal,
    electrical_angle,
    generator_label,
    make_rng,
    mix_seed,
    population_covariance,
    sample_covariance,
    steering,
    steering_derivative,
    steering_matrix,
    synthesize,
)

angles = st.floats(-np.pi, np.pi, allow_nan=False)
sizes = st.integers(1, 200)


class TestSteering:
    def test_zero_angle(self):
        np.testing.assert_allclose(steering(0.0, 4), 0.5 * np.ones(4))

    @given(angles, sizes)
    def test_unit_norm(self, theta, M):
        assert abs(np.linalg.norm(steering(theta, M)) - 1.0) < 1e-12

    @given(st.integers(2, 300))
    def test_beamwidth_neighbour_is_orthogonal(self, M):
        inner = steering(0.0, M).conj() @ steering(2 * np.pi / M, M)
        assert abs(inner) < 1e-12

    def test_components(self):
        a = steering(0.3, 5)
        np.testing.assert_allclose(a, np.exp(0.3j * np.arange(5)) / np.sqrt(5))

    def test_vectorized_columns(self):
        th = np.array([0.1, -0.4, 2.0])
        A = steering(th, 7)
        assert A.shape == (7, 3)
        for j, t in enumerate(th):
            np.testing.assert_allclose(A[:, j], steering(t, 7))
        np.testing.assert_allclose(steering_matrix(th, 7), A)

    def test_bad_size(self):
        with pytest.raises(ValueError):
            steering(0.0, 0)

    def test_first_derivative_small_case(self):
        np.testing.assert_allclose(steering_derivative(0.0, 2, 1), np.array([0, 1j]) / np.sqrt(2))

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_derivatives_match_finite_differences(self, order):
        M, th, h = 12, 0.37, 1e-4
        lower = lambda t: steering_derivative(t, M, order - 1)  # noqa: E731
        fd = (lower(th + h) - lower(th - h)) / (2 * h)
        np.testing.assert_allclose(steering_derivative(th, M, order), fd, atol=1e-6 * M ** order)

    def test_unsupported_order(self):
        with pytest.raises(ValueError):
            steering_derivative(0.0, 4, 4)

    def test_derivative_norm_limit(self):
        M, N = 400, 800
        d1 = steering_derivative(0.3, M, 1) / N
        assert np.linalg.norm(d1) ** 2 == pytest.approx(0.5 ** 2 / 3, rel=0.01)

    def test_derivative_inner_product_limit(self):
        # |a'^* a / N| -> c/2; its square is the c^2/4 that pairs with c^2/3
        # to give the c^2/12 curvature
        M, N = 400, 800
        val = abs(steering_derivative(0.3, M, 1).conj() @ steering(0.3, M)) / N
        assert val ** 2 == pytest.approx(0.0625, rel=0.01)

    def test_distinct_doas_become_orthogonal(self):
        A = steering_matrix([0.0, 0.5], 4000)
        G = A.conj().T @ A
        assert abs(G[0, 1]) < 0.02

    def test_physical_angle_helper(self):
        assert electrical_angle(0.0) == 0.0
        assert electrical_angle(np.pi / 2) == pytest.approx(np.pi)


class TestScenario:
    def test_closely_spaced_second_doa_follows_N(self):
        sc = ArrayScenario(M=40, N=80, spacing=(0.1, np.pi))
        assert sc.thetas[1] == pytest.approx(0.1 + np.pi / 80)
        assert sc.replace(N=160).thetas[1] == pytest.approx(0.1 + np.pi / 160)
        assert sc.closely_spaced and sc.K == 2

    @pytest.mark.parametrize("kwargs", [
        dict(M=4, N=8),
        dict(M=4, N=8, doas=(0.0,), spacing=(0.0, 1.0)),
        dict(M=2, N=8, doas=(0.0, 1.0)),
        dict(M=4, N=8, doas=(0.5, 0.5)),
        dict(M=4, N=8, doas=(0.0, 1.0), source_cov=[[1, 2], [0, 1]]),
        dict(M=4, N=8, doas=(0.0, 1.0), source_cov=[[1, 0], [0, -1]]),
        dict(M=4, N=8, doas=(0.0,), noise_power=-1.0),
        dict(M=4, N=8, spacing=(0.0, -1.0)),
        dict(M=4, N=8, doas=(0.0,), sources="bogus"),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ArrayScenario(**kwargs)

    def test_snr_convention(self):
        sc = ArrayScenario(M=4, N=8, doas=(0.0,)).at_snr(10.0)
        assert sc.noise_power == pytest.approx(0.1)
        assert sc.snr_db == pytest.approx(10.0)


class TestSynthesis:
    def test_same_seed_bit_identical(self):
        sc = ArrayScenario(M=8, N=16, doas=(0.0, 1.0), seed=42)
        assert np.array_equal(synthesize(sc).Y, synthesize(sc).Y)

    def test_seed_changes_draw(self):
        sc = ArrayScenario(M=8, N=16, doas=(0.0, 1.0), seed=42)
        assert not np.array_equal(synthesize(sc).Y, synthesize(sc.replace(seed=43)).Y)

    def test_noiseless_single_source_rank_one(self):
        Y = synthesize(ArrayScenario(M=6, N=20, doas=(0.4,), noise_power=0.0, seed=1)).Y
        s = np.linalg.svd(Y, compute_uv=False)
        assert s[1] < 1e-12 * s[0]

    def test_spike_exact_sources_hit_population_eigenvalues(self):
        sc = ArrayScenario(M=1000, N=2000, doas=(0.0, 5 * 2 * np.pi / 1000), source_cov=np.diag([10.0, 5.0]),
                           noise_power=0.0, sources="spike_exact", seed=3)
        snap = synthesize(sc)
        B = snap.Y / np.sqrt(sc.N)
        ev = np.sort(np.linalg.eigvalsh(B.conj().T @ B))[::-1][:2]
        np.testing.assert_allclose(ev, [10.0, 5.0], rtol=1e-10)

    def test_noise_variance(self):
        x = complex_normal(make_rng(0), 100_000, variance=2.5)
        e = np.abs(x) ** 2
        assert abs(e.mean() - 2.5) < 3 * e.std() / np.sqrt(e.size)
        assert abs(np.var(x.real) - 1.25) < 0.03

    def test_gaussian_sources_have_requested_covariance(self):
        R = np.array([[1.0, 0.4], [0.4, 1.0]])
        sc = ArrayScenario(M=4, N=200_000, doas=(0.0, 2.0), source_cov=R, seed=5)
        S = synthesize(sc).S
        np.testing.assert_allclose(S @ S.conj().T / sc.N, R, atol=0.01)


class TestSampleCovariance:
    def test_zero(self):
        assert np.array_equal(sample_covariance(np.zeros((3, 5))), np.zeros((3, 3)))

    def test_single_column(self):
        y = np.array([1 + 1j, 2, -1j])
        np.testing.assert_allclose(sample_covariance(y[:, None]), np.outer(y, y.conj()))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 30), st.integers(0, 2 ** 32 - 1))
    def test_hermitian_psd_and_trace(self, M, N, seed):
        Y = complex_normal(make_rng(seed), (M, N))
        S = sample_covariance(Y)
        assert np.array_equal(S, S.conj().T)
        assert np.linalg.eigvalsh(S).min() > -1e-12
        assert np.trace(S).real == pytest.approx(np.sum(np.abs(Y) ** 2) / N, rel=1e-12)

    def test_population_covariance(self):
        sc = ArrayScenario(M=5, N=10, doas=(0.0, 1.0), source_cov=np.diag([2.0, 3.0]))
        A = sc.steering_matrix()
        np.testing.assert_allclose(population_covariance(sc), A @ np.diag([2, 3]) @ A.conj().T)


class TestSeeding:
    def test_mix_seed_deterministic_and_distinct(self):
        assert mix_seed(1, 2, 3) == mix_seed(1, 2, 3)
        assert len({mix_seed(0, i, t) for i in range(5) for t in range(50)}) == 250

    def test_generator_label_names_algorithm_and_version(self):
        label = generator_label()
        assert "PCG64" in label and np.__version__ in label
