"""Orthogonal parameterization and covariance statistics tests."""

import numpy as np
import pytest

from repsim import (
    CovarianceStats,
    OrthogonalParam,
    SeededRng,
    cayley,
    cayley_grad,
    cov_stats,
    procrustes_oracle,
    skew_upper,
    stats_backprop,
)
from repsim.errors import DimensionError, SymmetryError


def make_spd(rng, d, spread=3.0):
    m = rng.normal((d, d))
    return m @ m.T + spread * np.eye(d)


def upper_len(d):
    return d * (d - 1) // 2


def skew_from_upper(d, u):
    a = np.zeros((d, d))
    iu = np.triu_indices(d, k=1)
    a[iu] = u
    return a - a.T


def test_cayley_identity_at_zero():
    p = OrthogonalParam(dim=4)
    assert np.array_equal(cayley(p), np.eye(4))


def test_cayley_two_by_two_hand_value():
    # generator with upper entry t maps to the rotation by 2*atan(t)
    t = 0.5
    p = OrthogonalParam(dim=2, upper=np.array([t]))
    q = cayley(p)
    c = (1 - t * t) / (1 + t * t)
    s = 2 * t / (1 + t * t)
    assert np.allclose(q, np.array([[c, s], [-s, c]]), atol=1e-12)


def test_cayley_image_is_special_orthogonal():
    for trial in range(25):
        rng = SeededRng(trial)
        d = 2 + trial % 6
        p = OrthogonalParam(dim=d, upper=rng.normal((upper_len(d),)))
        q = cayley(p)
        assert np.allclose(q.T @ q, np.eye(d), atol=1e-10), f"trial {trial}"
        assert np.linalg.det(q) == pytest.approx(1.0, abs=1e-9)


def test_from_skew_round_trip_and_check():
    rng = SeededRng(6)
    a = skew_from_upper(5, rng.normal((upper_len(5),)))
    p = OrthogonalParam.from_skew(a)
    assert np.allclose(p.skew(), a)
    with pytest.raises(SymmetryError):
        OrthogonalParam.from_skew(np.eye(3))


def test_skew_upper_extracts_strict_triangle():
    rng = SeededRng(13)
    a = skew_from_upper(4, rng.normal((upper_len(4),)))
    iu = np.triu_indices(4, k=1)
    assert np.array_equal(skew_upper(a), a[iu])


def test_cayley_grad_matches_finite_differences():
    eps = 1e-6
    for trial in range(20):
        rng = SeededRng(500 + trial)
        d = 2 + trial % 3
        u = 0.5 * rng.normal((upper_len(d),))
        g = rng.normal((d, d))

        def scalar(uvec):
            return float(np.sum(g * cayley(OrthogonalParam(dim=d, upper=uvec))))

        p = OrthogonalParam(dim=d, upper=u)
        grad = skew_upper(cayley_grad(p, g))
        fd = np.zeros_like(u)
        for i in range(u.size):
            up = u.copy()
            up[i] += eps
            dn = u.copy()
            dn[i] -= eps
            fd[i] = (scalar(up) - scalar(dn)) / (2 * eps)
        denom = max(np.abs(fd).max(), 1e-8)
        assert np.abs(grad - fd).max() / denom < 1e-4, f"trial {trial}"


def test_cov_stats_population_formula():
    rng = SeededRng(3)
    f = rng.normal((40, 5))
    stats = cov_stats(f)
    mu = f.mean(axis=0)
    fc = f - mu
    ref = (fc.T @ fc) / f.shape[0]
    assert np.allclose(stats.mu, mu, atol=1e-12)
    assert np.allclose(stats.sigma, ref, atol=1e-12)
    assert stats.n == 40
    stats.validate()


def test_cov_stats_needs_two_samples():
    with pytest.raises(Exception):
        cov_stats(np.zeros((1, 3)))


def test_covariance_stats_validate_rejects_asymmetric():
    bad = CovarianceStats(mu=np.zeros(2), sigma=np.array([[1.0, 0.5], [0.0, 1.0]]), n=4)
    with pytest.raises(SymmetryError):
        bad.validate()


def test_stats_backprop_matches_finite_differences():
    eps = 1e-6
    for trial in range(8):
        rng = SeededRng(700 + trial)
        f = rng.normal((9, 3))
        gs = rng.normal((3, 3))
        gm = rng.normal((3,))

        def scalar(feat):
            st = cov_stats(feat)
            return float(np.sum(gs * st.sigma) + np.sum(gm * st.mu))

        grad = stats_backprop(f, gs, gm)
        fd = np.zeros_like(f)
        for i in range(f.shape[0]):
            for j in range(f.shape[1]):
                up = f.copy()
                up[i, j] += eps
                dn = f.copy()
                dn[i, j] -= eps
                fd[i, j] = (scalar(up) - scalar(dn)) / (2 * eps)
        assert np.abs(grad - fd).max() < 1e-6, f"trial {trial}"


def test_procrustes_oracle_diagonal_hand_value():
    q, loss = procrustes_oracle(np.diag([3.0, 1.0]), np.diag([2.0, 2.0]))
    assert loss == pytest.approx(2.0, abs=1e-9)
    assert np.allclose(q.T @ q, np.eye(2), atol=1e-10)


def test_procrustes_oracle_zero_for_conjugated_pair():
    for trial in range(10):
        rng = SeededRng(900 + trial)
        d = 2 + trial % 4
        s0 = make_spd(rng, d)
        from repsim import random_orthogonal

        q = random_orthogonal(d, rng.spawn(1))
        s1 = q.T @ s0 @ q
        _, loss = procrustes_oracle(s0, s1)
        assert loss < 1e-16, f"trial {trial}: {loss}"


def test_procrustes_oracle_matches_eigh_formula():
    # independent oracle: sum of squared differences of sorted eigenvalues
    for trial in range(15):
        rng = SeededRng(1100 + trial)
        d = 2 + trial % 4
        s0 = make_spd(rng, d)
        s1 = make_spd(rng.spawn(1), d)
        _, loss = procrustes_oracle(s0, s1)
        e0 = np.sort(np.linalg.eigvalsh(s0))
        e1 = np.sort(np.linalg.eigvalsh(s1))
        assert loss == pytest.approx(float(np.sum((e1 - e0) ** 2)), rel=1e-9), f"trial {trial}"


def test_procrustes_oracle_accepts_stats_objects():
    rng = SeededRng(21)
    f0 = rng.normal((30, 4))
    f1 = rng.normal((30, 4))
    q, loss = procrustes_oracle(cov_stats(f0), cov_stats(f1))
    q2, loss2 = procrustes_oracle(cov_stats(f0).sigma, cov_stats(f1).sigma)
    assert loss == pytest.approx(loss2, abs=1e-12)
    assert np.allclose(q, q2)


def test_orthogonal_param_copy_is_deep():
    p = OrthogonalParam(dim=3, upper=np.array([1.0, 2.0, 3.0]))
    c = p.copy()
    c.upper[0] = -5.0
    assert p.upper[0] == 1.0


def test_dimension_mismatch_rejected():
    with pytest.raises(DimensionError):
        OrthogonalParam(dim=3, upper=np.zeros(2))
