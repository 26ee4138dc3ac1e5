import math

import numpy as np
import pytest

from limuon.linalg import gaussian_matrix, make_rng, matrix_with_spectrum
from limuon.rsvd import (
    FactoredMomentum,
    RsvdParams,
    reconstruct,
    rsvd,
    rsvd_error_bound,
    tail_energy,
)


def test_params_validation():
    with pytest.raises(ValueError):
        RsvdParams(0, 3)
    with pytest.raises(ValueError):
        RsvdParams(2, 1)
    with pytest.raises(ValueError):
        RsvdParams(4, 3).check_fits(10, 6)


def test_rank_one_recovery():
    rng = make_rng(0)
    a = gaussian_matrix(16, 1, rng) @ gaussian_matrix(1, 12, rng)
    f = rsvd(a, RsvdParams(1, 2), make_rng(1))
    assert np.linalg.norm(reconstruct(f) - a) <= 1e-8 * np.linalg.norm(a)


def test_exact_rank_three_recovery():
    a = matrix_with_spectrum(12, 10, [2.0, 1.0, 0.5], make_rng(2))
    f = rsvd(a, RsvdParams(3, 2), make_rng(3))
    assert np.linalg.norm(reconstruct(f) - a) <= 1e-7
    np.testing.assert_allclose(f.s_hat, [2.0, 1.0, 0.5], atol=1e-10)


def test_factors_are_orthonormal_and_sized():
    a = gaussian_matrix(20, 14, make_rng(4))
    f = rsvd(a, RsvdParams(5, 4), make_rng(5))
    assert f.u_hat.shape == (20, 5) and f.v_hat.shape == (14, 5) and f.s_hat.shape == (5,)
    assert np.linalg.norm(f.u_hat.T @ f.u_hat - np.eye(5)) <= 1e-8
    assert np.linalg.norm(f.v_hat.T @ f.v_hat - np.eye(5)) <= 1e-8
    assert np.all(np.diff(f.s_hat) <= 0) and np.all(f.s_hat >= 0)
    assert f.element_count == (20 + 14 + 1) * 5


def test_determinism():
    a = gaussian_matrix(10, 9, make_rng(6))
    f1 = rsvd(a, RsvdParams(3, 3), make_rng(7))
    f2 = rsvd(a, RsvdParams(3, 3), make_rng(7))
    for x, y in [(f1.u_hat, f2.u_hat), (f1.s_hat, f2.s_hat), (f1.v_hat, f2.v_hat)]:
        assert np.array_equal(x, y)


def test_exactness_property_over_seeds():
    rng = make_rng(8)
    for _ in range(100):
        m, n = rng.integers(6, 17, size=2)
        r_hat = int(rng.integers(1, 4))
        rank = int(rng.integers(0, r_hat + 1))
        if rank:
            a = gaussian_matrix(int(m), rank, rng) @ gaussian_matrix(rank, int(n), rng)
        else:
            a = np.zeros((int(m), int(n)))
        f = rsvd(a, RsvdParams(r_hat, 2), rng)
        assert np.linalg.norm(reconstruct(f) - a) <= 1e-8 * max(1.0, np.linalg.norm(a))


def test_expected_error_below_bound():
    nu = 2.0 ** -np.arange(1, 25)
    a = matrix_with_spectrum(32, 24, nu, make_rng(9))
    errs = [
        np.linalg.norm(a - reconstruct(rsvd(a, RsvdParams(4, 3), make_rng(seed))))
        for seed in range(200)
    ]
    mean, se = np.mean(errs), np.std(errs, ddof=1) / np.sqrt(len(errs))
    assert mean <= rsvd_error_bound(nu, 4, 3) + 3 * se


def test_rejects_oversized_sketch():
    with pytest.raises(ValueError):
        rsvd(np.ones((5, 4)), RsvdParams(2, 3), make_rng(0))


def test_reconstruct_example():
    f = FactoredMomentum(np.array([[1.0], [0.0]]), np.array([2.0]), np.array([[1.0]]))
    assert np.array_equal(reconstruct(f), [[2.0], [0.0]])
    assert f.element_count == (2 + 1 + 1) * 1


def test_error_bound_examples():
    assert rsvd_error_bound([2.0, 1.0, 0.5], 1, 2) == pytest.approx(1.5811388300841898, rel=1e-14)
    assert rsvd_error_bound([3.0, 2.0, 0.0, 0.0], 2, 4) == 0.0
    assert rsvd_error_bound([1.0, 1.0, 1.0, 1.0], 2, 3) == pytest.approx(2.0, rel=1e-14)
    with pytest.raises(ValueError):
        rsvd_error_bound([1.0, 1.0], 1, 1)


def test_tail_energy_examples():
    assert tail_energy([3.0, 2.0, 1.0], 2) == 1.0
    assert tail_energy([3.0, 2.0, 1.0], 5) == 0.0
    assert tail_energy([2.0, 1.0, 0.5], 1) == pytest.approx(math.sqrt(1.25), rel=1e-14)


def test_storage_beats_dense_below_threshold():
    m, n = 64, 32
    for r_hat in range(1, 30):
        smaller = (m + n + 1) * r_hat < m * n
        assert smaller == (r_hat < m * n / (m + n + 1))
