"""Nearest-neighbour clustering, parameter-regime diagnostics and the
swap construction showing when clusters are not identifiable."""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import ModelConfig, generate_instance
from .rng import derive_seed


def _csr(observed, axis):
    if sp.issparse(observed):
        m = sp.csr_matrix(observed, dtype=np.float64)
    else:
        m = sp.csr_matrix(np.asarray(observed, dtype=np.float64))
    if axis == 1:
        m = m.T.tocsr()
    elif axis != 0:
        raise ValueError(f"axis must be 0 (rows) or 1 (columns), got {axis}")
    return m


def nearest_neighbor_cluster(observed, K, axis=0):
    """Greedy disjoint nearest-neighbour clustering into groups of size ``K``.

    Items are visited in ascending order.  Each item that is still free
    seeds a group together with the ``K - 1`` free items most similar to it
    (similarity = number of co-observed, equal ratings; ties go to the
    smaller index).  Similarities of one seed cost one sparse product over
    the observed entries, so the whole pass is ``O(|Omega| r)``.

    ``observed`` may be a dense array or a scipy sparse matrix.
    """
    A = _csr(observed, axis)
    n = A.shape[0]
    if K < 1 or n % K:
        raise ValueError(f"cluster size K={K} does not divide n={n}")
    absA = abs(A)
    labels = np.full(n, -1, dtype=np.int64)
    free = np.ones(n, dtype=bool)
    group = 0
    for i in range(n):
        if not free[i]:
            continue
        free[i] = False
        labels[i] = group
        row = A.getrow(i)
        agree = (absA @ abs(row).T + A @ row.T).toarray().ravel() / 2
        cands = np.flatnonzero(free)
        order = np.lexsort((cands, -agree[cands]))
        chosen = cands[order[: K - 1]]
        labels[chosen] = group
        free[chosen] = False
        group += 1
    return labels


@dataclass(frozen=True)
class RegimeRow:
    method: str
    condition: str
    value: float
    threshold: float
    holds: bool
    m_condition: str
    m_threshold: float
    m_holds: bool


@dataclass(frozen=True)
class RegimeReport:
    n: int
    K: int
    r: float
    epsilon: float
    m: float
    impossible: bool
    rows: tuple

    def feasible_methods(self):
        return [row.method for row in self.rows if row.method != "lower_bound" and row.holds]


DEFAULT_CONSTANTS = {
    "lower_bound": 1.0,
    "combinatorial": 1.0,
    "convex": 1.0,
    "spectral": 1.0,
    "nearest_neighbor": 1.0,
}


def regime_classify(n, K, epsilon, constants=None):
    """Evaluate the sample-size conditions of each method at ``(n, K, epsilon)``.

    Asymptotic conditions are read as inequalities with explicit constants
    (default 1, ``log`` = natural log, ``r = n / K``).  Every condition is
    stated twice: in ``(n, K, epsilon)`` and in terms of the expected number
    of observations ``m = n^2 (1 - epsilon)``; both forms are equivalent.
    The lower-bound row ``holds`` when recovery is impossible.
    """
    c = dict(DEFAULT_CONSTANTS)
    c.update(constants or {})
    q = 1.0 - epsilon
    r = n / K
    ln = math.log(n)
    m = n * n * q
    rows = (
        RegimeRow(
            "lower_bound",
            "n K^2 (1-eps)^2 < c",
            n * K**2 * q**2, c["lower_bound"], n * K**2 * q**2 < c["lower_bound"],
            "m < sqrt(c) n^1.5 / K",
            math.sqrt(c["lower_bound"]) * n**1.5 / K,
            m < math.sqrt(c["lower_bound"]) * n**1.5 / K,
        ),
        RegimeRow(
            "combinatorial",
            "n K (1-eps)^2 >= c ln n",
            n * K * q**2, c["combinatorial"] * ln, n * K * q**2 >= c["combinatorial"] * ln,
            "m >= n^1.5 sqrt(c ln n) / sqrt(K)",
            n**1.5 * math.sqrt(c["combinatorial"] * ln / K),
            m >= n**1.5 * math.sqrt(c["combinatorial"] * ln / K),
        ),
        RegimeRow(
            "convex",
            "K (1-eps) >= c ln n",
            K * q, c["convex"] * ln, K * q >= c["convex"] * ln,
            "m >= c n^2 ln n / K",
            c["convex"] * n * n * ln / K,
            m >= c["convex"] * n * n * ln / K,
        ),
        RegimeRow(
            "spectral",
            "K (1-eps) >= c r ln^2 n",
            K * q, c["spectral"] * r * ln**2, K * q >= c["spectral"] * r * ln**2,
            "m >= c n^3 ln^2 n / K^2",
            c["spectral"] * n**3 * ln**2 / K**2,
            m >= c["spectral"] * n**3 * ln**2 / K**2,
        ),
        RegimeRow(
            "nearest_neighbor",
            "n (1-eps)^2 >= c ln n",
            n * q**2, c["nearest_neighbor"] * ln, n * q**2 >= c["nearest_neighbor"] * ln,
            "m >= n^1.5 sqrt(c ln n)",
            n**1.5 * math.sqrt(c["nearest_neighbor"] * ln),
            m >= n**1.5 * math.sqrt(c["nearest_neighbor"] * ln),
        ),
    )
    return RegimeReport(n, K, r, epsilon, m, rows[0].holds, rows)


@dataclass(frozen=True)
class Witness:
    user_labels: np.ndarray
    rating: np.ndarray


def genie_denoise(instance):
    """Copy of ``instance`` whose observed entries equal the true ratings.

    This is the side information the lower-bound argument grants: with
    flips revealed the observation is noiseless on its support.
    """
    from dataclasses import replace

    observed = np.where(instance.observed != 0, instance.rating, 0).astype(np.int8)
    return replace(instance, config=replace(instance.config, p=0.0), observed=observed)


def ambiguity_witness(instance):
    """Try the user-swap construction; return the alternative if it fits every observation.

    Users 0 (cluster 0) and K (cluster 1) trade places.  On each movie
    cluster ``l`` the group containing user 0 keeps cluster 0's rating
    unless user 0 has no observed rating there, in which case it copies
    cluster 1's rating, and symmetrically for the group containing user K.
    Returns ``None`` if the alternative contradicts an observed entry.
    """
    cfg = instance.config
    if cfg.p != 0:
        raise ValueError(
            "the swap construction assumes noiseless observations (p = 0); "
            "apply genie_denoise(instance) first"
        )
    if cfg.r < 2 or cfg.K < 2:
        raise ValueError("need at least two clusters of size at least two")
    K, r = cfg.K, cfg.r
    B = instance.block
    obs = instance.observed
    movies = instance.movie_truth

    labels = np.array(instance.user_truth, copy=True)
    labels[0], labels[K] = 1, 0
    group_a = np.r_[0, K + 1 : 2 * K]
    group_b = np.r_[K, 1:K]

    rating = np.array(instance.rating, copy=True)
    seen0 = np.zeros(r, dtype=bool)
    seenK = np.zeros(r, dtype=bool)
    np.logical_or.at(seen0, movies, obs[0] != 0)
    np.logical_or.at(seenK, movies, obs[K] != 0)
    row_a = np.where(seen0, B[0], B[1])[movies]
    row_b = np.where(seenK, B[1], B[0])[movies]
    rating[group_a] = row_a
    rating[group_b] = row_b

    mask = obs != 0
    if np.array_equal(rating[mask], obs[mask]):
        return Witness(labels, rating)
    return None


def witness_is_valid(instance, witness):
    """Block-constant under the swapped users and truthful on every observed entry."""
    labels = witness.user_labels
    R = witness.rating
    for k in np.unique(labels):
        rows = R[labels == k]
        if not (rows == rows[0]).all():
            return False
    for l in np.unique(instance.movie_truth):
        cols = R[:, instance.movie_truth == l]
        if not (cols == cols[:, :1]).all():
            return False
    mask = instance.observed != 0
    return bool(np.array_equal(R[mask], instance.observed[mask]))


def epsilon_for_lower_bound(n, K, value):
    """Erasure probability at which ``n K^2 (1 - eps)^2`` equals ``value``."""
    return 1.0 - math.sqrt(value / (n * K * K))


def witness_rate(n, K, epsilon, trials, seed):
    """Fraction of noiseless random instances admitting a swap witness."""
    found = 0
    for t in range(trials):
        cfg = ModelConfig(n, n // K, 0.0, epsilon, derive_seed(seed, "witness", t))
        if ambiguity_witness(generate_instance(cfg)) is not None:
            found += 1
    return found / trials

