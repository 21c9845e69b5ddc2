"""Pairwise row statistics and recovery scores."""

from dataclasses import asdict, dataclass

import numpy as np


def _rows(observed, i, i2):
    observed = np.asarray(observed)
    return observed[i].astype(np.int64), observed[i2].astype(np.int64)


def disagreement(observed, i, i2):
    """Number of columns where rows ``i`` and ``i2`` are both observed and differ."""
    a, b = _rows(observed, i, i2)
    return int(np.count_nonzero((a != 0) & (b != 0) & (a != b)))


def similarity(observed, i, i2):
    """Number of columns where rows ``i`` and ``i2`` are both observed and agree."""
    a, b = _rows(observed, i, i2)
    return int(np.count_nonzero((a != 0) & (a == b)))


def _gram(observed):
    a = np.asarray(observed, dtype=np.float64)
    co = np.abs(a) @ np.abs(a).T
    signed = a @ a.T
    return co, signed


def disagreement_matrix(observed):
    """All-pairs disagreement counts between rows (use ``observed.T`` for columns)."""
    co, signed = _gram(observed)
    return np.rint((co - signed) / 2).astype(np.int64)


def similarity_matrix(observed):
    co, signed = _gram(observed)
    return np.rint((co + signed) / 2).astype(np.int64)


def _same_pairs(counts):
    counts = np.asarray(counts, dtype=np.int64)
    return int(np.sum(counts * (counts - 1) // 2))


def pair_error(est, truth):
    """Fraction of item pairs whose same-cluster relation differs between partitions.

    A pair is misclassified when it is together in one partition and split
    in the other.  The value does not depend on how either partition labels
    its clusters.
    """
    est = np.asarray(est)
    truth = np.asarray(truth)
    if est.shape != truth.shape:
        raise ValueError(f"partitions differ in length: {est.shape} vs {truth.shape}")
    n = est.size
    if n < 2:
        return 0.0
    _, e_inv = np.unique(est, return_inverse=True)
    _, t_inv = np.unique(truth, return_inverse=True)
    table = np.zeros((e_inv.max() + 1, t_inv.max() + 1), dtype=np.int64)
    np.add.at(table, (e_inv, t_inv), 1)
    same_est = _same_pairs(table.sum(axis=1))
    same_truth = _same_pairs(table.sum(axis=0))
    same_both = _same_pairs(table)
    wrong = same_est + same_truth - 2 * same_both
    return wrong / (n * (n - 1) / 2)


def exact_match(est, truth):
    """True iff ``est`` equals ``truth`` up to a relabeling of clusters.

    Each estimated label is greedily mapped to the truth label it overlaps
    most; the match is exact when that map is injective and reproduces
    ``truth`` item by item.
    """
    est = np.asarray(est)
    truth = np.asarray(truth)
    if est.shape != truth.shape:
        raise ValueError(f"partitions differ in length: {est.shape} vs {truth.shape}")
    if est.size == 0:
        return True
    e_vals, e_inv = np.unique(est, return_inverse=True)
    t_vals, t_inv = np.unique(truth, return_inverse=True)
    if len(e_vals) != len(t_vals):
        return False
    table = np.zeros((len(e_vals), len(t_vals)), dtype=np.int64)
    np.add.at(table, (e_inv, t_inv), 1)
    mapping = table.argmax(axis=1)
    if len(np.unique(mapping)) != len(mapping):
        return False
    return bool(np.array_equal(mapping[e_inv], t_inv))


def sign_of(x):
    """Elementwise sign with ``sign(0) = +1``."""
    return np.where(np.asarray(x) >= 0, 1, -1).astype(np.int8)


def sign_accuracy(estimate, truth):
    estimate = np.asarray(estimate)
    truth = np.asarray(truth)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    if truth.size == 0:
        return 1.0
    return float(np.mean(sign_of(estimate) == truth))


@dataclass(frozen=True)
class EvalReport:
    """Scores of one recovery run against the planted truth.

    ``pair_error`` averages the user and movie pair errors (both sides have
    ``n`` items, so this is the misclassified fraction over all pairs of
    either kind); ``exact`` requires both sides to match.
    """

    pair_error: float
    exact: bool
    sign_accuracy: float
    runtime_ms: float | None = None
    user_pair_error: float = 0.0
    movie_pair_error: float = 0.0

    HEADER = (
        "pair_error",
        "exact",
        "sign_accuracy",
        "runtime_ms",
        "user_pair_error",
        "movie_pair_error",
    )

    def __post_init__(self):
        if self.exact and self.pair_error != 0:
            raise ValueError("an exact recovery must have zero pair error")

    def csv_fields(self):
        d = asdict(self)
        return [
            f"{d['pair_error']:.8f}",
            "1" if d["exact"] else "0",
            f"{d['sign_accuracy']:.8f}",
            "NA" if d["runtime_ms"] is None else f"{d['runtime_ms']:.3f}",
            f"{d['user_pair_error']:.8f}",
            f"{d['movie_pair_error']:.8f}",
        ]


def evaluate(instance, user_labels, movie_labels, rating_estimate, runtime_ms=None):
    upe = pair_error(user_labels, instance.user_truth)
    mpe = pair_error(movie_labels, instance.movie_truth)
    exact = exact_match(user_labels, instance.user_truth) and exact_match(
        movie_labels, instance.movie_truth
    )
    return EvalReport(
        pair_error=(upe + mpe) / 2,
        exact=exact,
        sign_accuracy=sign_accuracy(rating_estimate, instance.rating),
        runtime_ms=runtime_ms,
        user_pair_error=upe,
        movie_pair_error=mpe,
    )
