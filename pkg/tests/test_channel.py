import math

import numpy as np
import pytest

from conftest import assert_unitary
from fa_precode.channel import (correlation_matrices, kronecker_factors, kronecker_statistics,
                                new_statistics, random_statistics, random_unitary,
                                ray_statistics, sample_realizations, statistics_from_dict,
                                statistics_to_dict, steering_vector, virtual_grid)


@pytest.mark.parametrize("K", [0.0, 1.0, 10.0])
def test_normalization(K):
    s = random_statistics(4, 3, K, seed=3)
    assert np.isclose(s.G.sum(), 12 / (K + 1))
    assert np.isclose(np.sum(np.abs(s.H_bar) ** 2), 12 * K / (K + 1))
    assert_unitary(s.U_R)
    assert_unitary(s.U_T)


def test_deterministic_limit():
    s = random_statistics(2, 2, math.inf, seed=0)
    assert s.deterministic
    assert not s.G.any()
    assert np.isclose(np.sum(np.abs(s.H_bar) ** 2), 4)
    with pytest.raises(ValueError):
        sample_realizations(s, 2, 0)


def test_sample_power_matches_normalization():
    s = random_statistics(4, 4, 1.0, seed=1)
    H = sample_realizations(s, 20000, seed=2)
    p = np.mean(np.sum(np.abs(H - s.H_bar) ** 2, axis=(1, 2))) / 16
    assert abs(p - 0.5) < 0.01


def test_sampling_is_seeded():
    s = random_statistics(3, 3, 1.0, seed=1)
    assert np.array_equal(sample_realizations(s, 3, 9), sample_realizations(s, 3, 9))
    assert not np.array_equal(sample_realizations(s, 3, 9), sample_realizations(s, 3, 10))


def test_transmit_correlation_matches_samples():
    s = random_statistics(3, 3, 0.0, seed=4)
    H = sample_realizations(s, 40000, seed=5)
    emp = np.mean(np.conj(np.transpose(H, (0, 2, 1))) @ H, axis=0)
    assert np.allclose(emp, correlation_matrices(s).R_t, atol=0.06)


def test_rejects_bad_input():
    U = np.eye(2)
    G = np.ones((2, 2))
    with pytest.raises(ValueError, match="unitary"):
        new_statistics(2 * U, U, G, G, 1.0)
    with pytest.raises(ValueError, match="nonnegative"):
        new_statistics(U, U, -G, G, 1.0)
    with pytest.raises(ValueError):
        new_statistics(U, U, G, np.zeros((2, 2)), 1.0)
    with pytest.raises(ValueError):
        new_statistics(U, U, G, G, -1.0)
    with pytest.raises(ValueError, match="shape"):
        new_statistics(U, U, np.ones((2, 3)), G, 1.0)


def test_kronecker_roundtrip():
    lr, lt = np.array([3.0, 1.0]), np.array([2.0, 1.0, 0.5])
    s = kronecker_statistics(lr, lt, random_unitary(2, 0), random_unitary(3, 1))
    ar, at = kronecker_factors(s)
    assert np.allclose(np.outer(ar, at), s.G)
    assert np.allclose(ar / ar[0], lr / lr[0])
    with pytest.raises(ValueError, match="rank one"):
        kronecker_factors(random_statistics(3, 3, 0.0, seed=0))


def test_random_unitary_seeded():
    assert_unitary(random_unitary(5, 7))
    assert np.array_equal(random_unitary(4, 1), random_unitary(4, 1))


def test_ray_model_bins_paths():
    n = 8
    f = virtual_grid(n)
    # a path exactly on grid bin 6 lands in that beam
    phi = np.arcsin(2 * f[6])
    paths = [{"c": 1.0, "d": 12.3, "phi": phi, "theta": phi},
             {"c": 0.5, "d": 20.0, "phi": 0.0, "theta": np.arcsin(2 * f[1])}]
    s = ray_statistics(paths, 1.0, n, n, los=True)
    H_hat = s.U_R.conj().T @ s.H_bar @ s.U_T
    assert np.argmax(np.abs(H_hat).ravel()) == 6 * n + 6
    assert np.argmax(s.G.ravel()) == 1 * n + 4
    assert np.isclose(s.K, 4.0)
    # the grid basis column is the steering vector at that angle
    assert np.allclose(np.abs(s.U_T[:, 6].conj() @ steering_vector(phi, n)), 1.0)


def test_ray_model_limits():
    p = [{"c": 1.0, "d": 1.0, "phi": 0.2, "theta": -0.3}]
    assert ray_statistics(p, 1.0, 4, 4, los=True).deterministic
    assert ray_statistics(p, 1.0, 4, 4, los=False).K == 0
    with pytest.raises(ValueError):
        ray_statistics([], 1.0, 4, 4)


@pytest.mark.parametrize("K", [0.0, 2.0, math.inf])
def test_dict_roundtrip(K):
    s = random_statistics(3, 2, K, seed=8)
    t = statistics_from_dict(statistics_to_dict(s))
    for a in ("U_R", "U_T", "G_tilde", "H_bar"):
        assert np.allclose(getattr(s, a), getattr(t, a))
    assert t.K == s.K
