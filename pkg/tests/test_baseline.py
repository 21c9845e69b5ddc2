import math
import time

import numpy as np
import pytest
import scipy.sparse as sp

from jointclust.baseline import (
    ambiguity_witness,
    epsilon_for_lower_bound,
    genie_denoise,
    nearest_neighbor_cluster,
    regime_classify,
    witness_is_valid,
    witness_rate,
)
from jointclust.metrics import exact_match
from jointclust.model import ModelConfig, generate_instance


def test_nn_noiseless():
    for seed in range(5):
        inst = generate_instance(ModelConfig(64, 4, seed=seed))
        assert np.array_equal(nearest_neighbor_cluster(inst.observed, 16), inst.user_truth)
        assert np.array_equal(nearest_neighbor_cluster(inst.observed, 16, axis=1),
                              inst.movie_truth)


def test_nn_all_erased_contiguous():
    assert np.array_equal(nearest_neighbor_cluster(np.zeros((9, 9)), 3),
                          np.repeat(np.arange(3), 3))


def test_nn_sparse_input_matches_dense():
    inst = generate_instance(ModelConfig(60, 3, 0.2, 0.6, seed=1))
    assert np.array_equal(nearest_neighbor_cluster(inst.observed, 20),
                          nearest_neighbor_cluster(sp.csr_matrix(inst.observed), 20))
    with pytest.raises(ValueError):
        nearest_neighbor_cluster(inst.observed, 7)


def test_nn_runtime_linear_in_observations():
    sizes, times = [], []
    for n in (256, 512, 1024, 2048):
        S = sp.csr_matrix(generate_instance(ModelConfig(n, 4, 0.1, 0.5, seed=0)).observed)
        best = math.inf
        for _ in range(3):
            t0 = time.perf_counter()
            nearest_neighbor_cluster(S, n // 4)
            best = min(best, time.perf_counter() - t0)
        sizes.append(S.nnz)
        times.append(best)
    slope = np.polyfit(np.log(sizes), np.log(times), 1)[0]
    assert abs(slope - 1) <= 0.3


def test_regime_impossible_row():
    # 1e4 * 100^2 * 1e-3^2 = 100, comfortably outside the impossible region
    rep = regime_classify(10_000, 100, 0.999)
    assert rep.rows[0].method == "lower_bound"
    assert rep.rows[0].value == pytest.approx(100.0)
    assert not rep.impossible
    rep = regime_classify(10_000, 100, epsilon_for_lower_bound(10_000, 100, 0.1))
    assert rep.rows[0].value == pytest.approx(0.1)
    assert rep.impossible and rep.rows[0].m_holds


def test_regime_all_feasible_when_fully_observed():
    rep = regime_classify(4096, 2048, 0.0)
    assert not rep.impossible
    assert rep.feasible_methods() == ["combinatorial", "convex", "spectral", "nearest_neighbor"]


def test_regime_forms_agree():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.choice([64, 256, 1000, 4096]))
        divisors = [d for d in range(1, n + 1) if n % d == 0]
        K = int(rng.choice(divisors))
        eps = float(rng.uniform(0, 1))
        rep = regime_classify(n, K, eps)
        for row in rep.rows:
            assert row.holds == row.m_holds, (n, K, eps, row.method)


def test_regime_constants_override():
    base = regime_classify(512, 64, 0.5)
    strict = regime_classify(512, 64, 0.5, constants={"convex": 100.0})
    assert base.rows[2].holds and not strict.rows[2].holds


def test_witness_rejects_noise_and_small_r():
    inst = generate_instance(ModelConfig(16, 4, 0.1, 0.5, seed=0))
    with pytest.raises(ValueError, match="genie"):
        ambiguity_witness(inst)
    assert genie_denoise(inst).config.p == 0
    with pytest.raises(ValueError):
        ambiguity_witness(generate_instance(ModelConfig(8, 1)))


def test_witness_trivial_cases():
    inst = generate_instance(ModelConfig(16, 4, 0.0, 1.0, seed=0))
    w = ambiguity_witness(inst)
    assert w is not None and witness_is_valid(inst, w)
    inst = generate_instance(ModelConfig(16, 4, seed=0))
    assert ambiguity_witness(inst) is None


def test_witness_swaps_users():
    inst = generate_instance(ModelConfig(16, 4, 0.0, 0.97, seed=3))
    w = ambiguity_witness(inst)
    assert w is not None
    assert w.user_labels[0] == 1 and w.user_labels[4] == 0
    assert not exact_match(w.user_labels, inst.user_truth)


def test_witness_every_returned_one_is_valid():
    eps = epsilon_for_lower_bound(64, 4, 0.5)
    for seed in range(50):
        inst = generate_instance(ModelConfig(64, 16, 0.0, eps, seed=seed))
        w = ambiguity_witness(inst)
        if w is not None:
            assert witness_is_valid(inst, w)


def test_epsilon_for_lower_bound():
    eps = epsilon_for_lower_bound(64, 4, 0.1)
    assert 64 * 16 * (1 - eps) ** 2 == pytest.approx(0.1)


def test_witness_rate_monotone_in_epsilon():
    trials = 150
    rates = [witness_rate(32, 4, eps, trials, seed=1) for eps in (0.9, 0.95, 0.99)]
    slack = 2 * math.sqrt(0.25 / trials)
    for lo, hi in zip(rates, rates[1:]):
        assert lo <= hi + 2 * slack
    assert rates[0] < rates[2]
