"""Spectral clustering with majority-vote block estimation and re-clustering.

Pipeline:

1. split the observed entries into two (possibly overlapping) random
   subsets, one for clustering and one for voting;
2. project the first subset onto its top ``r`` singular directions and
   cluster rows and columns of the projection (ball thresholding or
   k-means);
3. estimate each block sign by the sign of the summed votes in the second
   subset;
4. move every user to the block-row centre with the largest inner product
   against its observed ratings, and likewise every movie.
"""

from dataclasses import dataclass

import numpy as np

from .convex import _svd
from .metrics import sign_of
from .model import estimate_epsilon, expand_rating_matrix


@dataclass(frozen=True)
class SpectralOptions:
    tau: float | None = None
    use_kmeans: bool = False
    shared_omega: bool = False
    kmeans_restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.tau is not None and self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.kmeans_restarts < 1:
            raise ValueError("kmeans_restarts must be at least 1")


@dataclass(frozen=True)
class SpectralResult:
    user_labels: np.ndarray
    movie_labels: np.ndarray
    block: np.ndarray
    rating: np.ndarray


def default_tau(epsilon, r, n):
    """Clustering radius ``12 sqrt(1 - epsilon) r ln n``."""
    return 12.0 * np.sqrt(1.0 - epsilon) * r * np.log(n)


def split_omega(observed, epsilon, rng):
    """Randomly split the observed entries into two sub-observations.

    With ``d = (1 - epsilon) / 4`` every observed entry goes to the first
    output only with probability ``1/2 - d``, to the second only with
    probability ``1/2 - d``, to both with probability ``d`` and to neither
    with probability ``d``.
    """
    observed = np.asarray(observed)
    rows, cols = np.nonzero(observed)
    first = np.zeros_like(observed)
    second = np.zeros_like(observed)
    if rows.size == 0:
        return first, second
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(
            f"cannot split {rows.size} observed entries with erasure probability {epsilon}"
        )
    d = (1.0 - epsilon) / 4.0
    u = rng.random(rows.size)
    # categories: [0, 1/2-d) only first, [1/2-d, 1-2d) only second, then both, then neither
    only_first = u < 0.5 - d
    only_second = (u >= 0.5 - d) & (u < 1.0 - 2 * d)
    both = (u >= 1.0 - 2 * d) & (u < 1.0 - d)
    in_first = only_first | both
    in_second = only_second | both
    first[rows[in_first], cols[in_first]] = observed[rows[in_first], cols[in_first]]
    second[rows[in_second], cols[in_second]] = observed[rows[in_second], cols[in_second]]
    return first, second


def _top_r(M, r):
    U, s, Vt = _svd(np.asarray(M, dtype=np.float64))
    return U[:, :r], s[:r], Vt[:r]


def rank_r_project(M, r):
    """Best rank-``r`` approximation of ``M`` in Frobenius norm."""
    if r < 1 or r > min(np.shape(M)):
        raise ValueError(f"rank {r} out of range for a matrix of shape {np.shape(M)}")
    U, s, Vt = _top_r(M, r)
    return (U * s) @ Vt


def spectral_embedding(M, r):
    """Row and column coordinates of the rank-``r`` projection.

    Distances between rows of the projection equal distances between the
    returned row coordinates (``U_r diag(s_r)``), and likewise for columns,
    so clustering can work in ``r`` dimensions instead of ``n``.
    """
    U, s, Vt = _top_r(M, r)
    return U * s, Vt.T * s


def threshold_cluster(points, r, tau, rng):
    """Sequential ball clustering.

    ``r`` times: pick an unclustered point uniformly at random and claim every
    unclustered point within distance ``tau`` of it.  Points still unclaimed
    afterwards join cluster 0.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    for k in range(r):
        free = np.flatnonzero(labels < 0)
        if free.size == 0:
            break
        centre = points[free[rng.integers(free.size)]]
        dist = np.linalg.norm(points[free] - centre, axis=1)
        labels[free[dist <= tau]] = k
    labels[labels < 0] = 0
    return labels


def _sq_dists(points, centres):
    d = (
        np.sum(points**2, axis=1)[:, None]
        - 2 * points @ centres.T
        + np.sum(centres**2, axis=1)[None, :]
    )
    return np.maximum(d, 0.0)


def _kmeanspp(points, k, rng):
    n = points.shape[0]
    centres = [points[rng.integers(n)]]
    closest = _sq_dists(points, centres[0][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centres.append(points[idx])
        closest = np.minimum(closest, _sq_dists(points, points[idx][None, :])[:, 0])
    return np.array(centres)


def _lloyd(points, centres, max_iter, tol):
    for _ in range(max_iter):
        d = _sq_dists(points, centres)
        labels = d.argmin(axis=1)
        new = centres.copy()
        for k in range(centres.shape[0]):
            members = labels == k
            if members.any():
                new[k] = points[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the worst-served point
                far = int(d[np.arange(len(labels)), labels].argmax())
                new[k] = points[far]
        shift = np.sum((new - centres) ** 2)
        centres = new
        if shift <= tol:
            break
    d = _sq_dists(points, centres)
    labels = d.argmin(axis=1)
    return labels, float(d[np.arange(len(labels)), labels].sum())


def kmeans_cluster(points, r, restarts, rng, max_iter=100, tol=1e-10):
    """Lloyd's algorithm from k-means++ seeds; best of ``restarts`` by inertia."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if r <= 1 or n == 0:
        return np.zeros(n, dtype=np.int64)
    k = min(r, n)
    best_labels, best_inertia = None, np.inf
    for _ in range(restarts):
        labels, inertia = _lloyd(points, _kmeanspp(points, k, rng), max_iter, tol)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return best_labels.astype(np.int64)


def _one_hot(labels, r):
    out = np.zeros((len(labels), r))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def block_votes(observed, user_labels, movie_labels, r=None):
    """Summed observed ratings over every (user cluster, movie cluster) block."""
    user_labels = np.asarray(user_labels)
    movie_labels = np.asarray(movie_labels)
    if r is None:
        r = int(max(user_labels.max(initial=-1), movie_labels.max(initial=-1))) + 1
    C = _one_hot(user_labels, r)
    D = _one_hot(movie_labels, r)
    return C.T @ np.asarray(observed, dtype=np.float64) @ D


def majority_vote_blocks(observed, user_labels, movie_labels, r=None):
    """Block signs by majority vote; a tied or empty block gets +1."""
    return sign_of(block_votes(observed, user_labels, movie_labels, r))


def recluster_nearest_center(observed, block, movie_labels):
    """Assign each row to the block-row centre with the largest inner product.

    The centre of cluster ``k`` rates movie ``j`` as ``block[k, movie_labels[j]]``.
    Ties go to the smallest cluster index.  Call with ``observed.T``,
    ``block.T`` and the user labels to re-cluster movies.
    """
    block = np.asarray(block, dtype=np.float64)
    centres = block[:, np.asarray(movie_labels)]
    scores = np.asarray(observed, dtype=np.float64) @ centres.T
    return scores.argmax(axis=1).astype(np.int64)


def spectral_pipeline(observed, r, epsilon=None, opts=SpectralOptions(), rng=None):
    """Cluster users and movies and estimate the block and rating matrices.

    ``epsilon`` defaults to the empirical erasure rate of ``observed``.
    """
    from .rng import stream

    observed = np.asarray(observed)
    n = observed.shape[0]
    if epsilon is None:
        epsilon = estimate_epsilon(observed)
    if rng is None:
        rng = stream(opts.seed, "spectral")
    split_rng, cluster_rng = rng.spawn(2)

    if opts.shared_omega:
        first = second = observed
    else:
        first, second = split_omega(observed, epsilon, split_rng)

    user_pts, movie_pts = spectral_embedding(first, r)
    if opts.use_kmeans:
        users = kmeans_cluster(user_pts, r, opts.kmeans_restarts, cluster_rng)
        movies = kmeans_cluster(movie_pts, r, opts.kmeans_restarts, cluster_rng)
    else:
        if epsilon >= 1.0:
            raise ValueError("thresholding radius is zero when every entry is erased")
        tau = default_tau(epsilon, r, n) if opts.tau is None else opts.tau
        users = threshold_cluster(user_pts, r, tau, cluster_rng)
        movies = threshold_cluster(movie_pts, r, tau, cluster_rng)

    block = majority_vote_blocks(second, users, movies, r)
    new_users = recluster_nearest_center(second, block, movies)
    new_movies = recluster_nearest_center(second.T, block.T, users)
    rating = expand_rating_matrix(block, new_users, new_movies)
    return SpectralResult(new_users, new_movies, block, rating)
