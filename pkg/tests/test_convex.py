import logging

import numpy as np
import pytest

from jointclust.convex import (
    SvtConfig,
    clusters_from_matrix,
    conjecture_experiment,
    default_lambda,
    incoherence_mu,
    polar_inf_norm,
    singular_value_shrink,
    solve_dual_svt,
)
from jointclust.metrics import exact_match, sign_accuracy
from jointclust.model import ModelConfig, canonical_partition, expand_rating_matrix, generate_instance


def test_shrink_examples():
    X = np.random.default_rng(0).normal(size=(6, 6))
    assert np.allclose(singular_value_shrink(X, 0.0), X, atol=1e-12)
    s1 = np.linalg.svd(X, full_matrices=False)[1][0]
    assert not singular_value_shrink(X, s1).any()
    assert not singular_value_shrink(X, 2 * s1).any()
    assert np.allclose(singular_value_shrink(np.diag([3.0, 1.0]), 2.0), np.diag([1.0, 0.0]))
    with pytest.raises(ValueError):
        singular_value_shrink(X, -1.0)


def test_shrink_is_proximal_map():
    # optimality: X - D(X) lies in gamma times the nuclear-norm subdifferential at D(X)
    rng = np.random.default_rng(1)
    for _ in range(20):
        X = rng.normal(size=(7, 7))
        gamma = rng.uniform(0.1, 2.0)
        Z = singular_value_shrink(X, gamma)
        W = (X - Z) / gamma
        assert np.linalg.norm(W, 2) <= 1 + 1e-9
        nuc = np.linalg.svd(Z, compute_uv=False).sum()
        assert np.sum(W * Z) == pytest.approx(nuc, abs=1e-8)


def test_default_lambda():
    assert default_lambda(0.0, 100) == pytest.approx(30.0)
    assert default_lambda(1.0, 50) == 0.0
    assert default_lambda(0.75, 1024) == pytest.approx(48.0)
    with pytest.raises(ValueError):
        default_lambda(1.5, 10)


def test_svt_config_defaults():
    cfg = SvtConfig(lam=10.0)
    assert cfg.tau_ == pytest.approx(0.1) and cfg.delta_ == cfg.tau_
    assert cfg.max_iter == 500 and cfg.tol == 1e-4
    for bad in ({"lam": 0}, {"lam": 1, "tau": -1}, {"lam": 1, "tol": 0}):
        with pytest.raises(ValueError):
            SvtConfig(**bad)


def test_solver_zero_observation():
    res = solve_dual_svt(np.zeros((8, 8)), SvtConfig(lam=1.0))
    assert res.converged and res.iterations == 1
    assert not res.Y.any()


def test_solver_duals_nonnegative_and_pressure():
    inst = generate_instance(ModelConfig(24, 3, 0.1, 0.3, seed=2))
    states = []
    solve_dual_svt(inst.observed, SvtConfig(lam=2.0, max_iter=60),
                   callback=lambda s: states.append((s.Y.copy(), s.S.copy(), s.T.copy())))
    for (Y, S, T), (_, S1, T1) in zip(states, states[1:]):
        assert (S >= 0).all() and (T >= 0).all()
        assert (S1[Y > 1] > S[Y > 1]).all()
        assert (T1[Y < -1] > T[Y < -1]).all()


def test_solver_matches_convex_program_oracle():
    cp = pytest.importorskip("cvxpy")
    inst = generate_instance(ModelConfig(12, 3, 0.1, 0.4, seed=1))
    R = inst.observed.astype(float)
    lam, tau = 2.0, 0.5
    Y = cp.Variable(R.shape)
    objective = tau / 2 * cp.sum_squares(Y) - cp.sum(cp.multiply(R, Y)) + lam * cp.normNuc(Y)
    cp.Problem(cp.Minimize(objective), [Y <= 1, Y >= -1]).solve(solver=cp.SCS, eps=1e-9,
                                                                max_iters=200_000)
    res = solve_dual_svt(R, SvtConfig(lam=lam, tau=tau, max_iter=20_000, tol=1e-12))
    assert res.converged
    assert np.abs(res.raw - Y.value).max() < 1e-6


def test_solver_noiseless_small():
    for seed in range(3):
        inst = generate_instance(ModelConfig(32, 2, seed=seed))
        res = solve_dual_svt(inst.observed, SvtConfig.for_observation(inst.observed))
        assert sign_accuracy(res.Y, inst.rating) == 1.0
        assert np.abs(res.Y).max() <= 1.0


def test_solver_nonconvergence_is_flagged(caplog):
    inst = generate_instance(ModelConfig(32, 2, 0.1, 0.3, seed=0))
    with caplog.at_level(logging.WARNING):
        res = solve_dual_svt(inst.observed, SvtConfig(lam=5.0, max_iter=3))
    assert not res.converged and res.iterations == 3
    assert "without meeting" in caplog.text


def test_truncated_svd_path_matches_full():
    rng = np.random.default_rng(3)
    n = 1100
    X = rng.normal(size=(n, 5)) @ rng.normal(size=(5, n)) + 0.01 * rng.normal(size=(n, n))
    from jointclust.convex import _shrink_truncated

    gamma = 5.0
    full = singular_value_shrink(X, gamma)
    assert np.abs(_shrink_truncated(X, gamma, 8) - full).max() < 1e-6


def test_clusters_from_matrix():
    inst = generate_instance(ModelConfig(32, 4, seed=5))
    u, m = clusters_from_matrix(inst.rating.astype(float))
    assert exact_match(u, inst.user_truth) and exact_match(m, inst.movie_truth)
    noise = np.random.default_rng(0).uniform(-0.4, 0.4, size=inst.rating.shape)
    u2, m2 = clusters_from_matrix(inst.rating + noise)
    assert np.array_equal(u, u2) and np.array_equal(m, m2)
    u0, m0 = clusters_from_matrix(np.zeros((5, 5)))
    assert (u0 == 0).all() and (m0 == 0).all()
    u1, _ = clusters_from_matrix(np.array([[-1.0, 1], [1, 1], [-1, 1]]))
    assert list(u1) == [0, 1, 0]


def test_incoherence_examples():
    assert polar_inf_norm(np.array([[1]])) == pytest.approx(1.0)
    assert incoherence_mu(np.array([[1]]), 5) == pytest.approx(1.0)
    H = np.array([[1, 1], [1, -1]])
    assert polar_inf_norm(H) == pytest.approx(1 / np.sqrt(2))
    assert incoherence_mu(H, 3) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        polar_inf_norm(np.ones((3, 3)))


def test_expanded_polar_factor_identity():
    rng = np.random.default_rng(6)
    done = 0
    while done < 20:
        r, K = rng.integers(1, 9), rng.integers(1, 9)
        B = np.where(rng.random((r, r)) < 0.5, 1, -1)
        if np.linalg.matrix_rank(B) < r:
            continue
        lab = canonical_partition(r * K, r)
        U, _, Vt = np.linalg.svd(expand_rating_matrix(B, lab, lab).astype(float))
        UV = U[:, :r] @ Vt[:r]
        assert np.abs(UV).max() * K == pytest.approx(polar_inf_norm(B), abs=1e-8)
        done += 1


def test_conjecture_experiment_deterministic_and_bounded():
    a = conjecture_experiment([4], 1, seed=3)
    b = conjecture_experiment([4], 1, seed=3)
    assert a == b and len(a) == 1
    rows = conjecture_experiment([2, 4, 8], 30, seed=0)
    assert all(0 < row.max_raw <= 1 + 1e-12 for row in rows)
    assert all(row.scaled_max == pytest.approx(row.max_raw / np.sqrt(np.log(row.r) / row.r))
               for row in rows)
    with pytest.raises(ValueError):
        conjecture_experiment([1], 1, 0)
