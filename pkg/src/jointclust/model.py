"""Planted row/column cluster model and its observation channel.

An instance consists of an ``r x r`` block matrix ``B`` of +/-1 ratings,
equal-size user and movie partitions, the block-constant ``n x n`` rating
matrix ``R`` and the observation ``R_hat``: every entry of ``R`` is erased
with probability ``epsilon`` and otherwise sign-flipped with probability
``p``.  Erased entries are stored as 0, so the observed index set is the
nonzero support of ``R_hat``.

Arrays are plain numpy: block and rating matrices are ``int8`` over
{-1, +1}, observations ``int8`` over {-1, 0, +1}, partitions ``int64``
label vectors.
"""

from dataclasses import dataclass, field

import numpy as np

from .rng import stream

DISTINCT_ROWS_MAX_R = 12
DISTINCT_RETRIES = 1000


class InfeasibleBlockError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n: int
    r: int
    p: float = 0.0
    epsilon: float = 0.0
    seed: int = 0
    distinct_rows: bool | None = None

    def __post_init__(self):
        if self.n < 1 or self.r < 1:
            raise ValueError(f"n and r must be positive, got n={self.n}, r={self.r}")
        if self.n % self.r:
            raise ValueError(f"n={self.n} is not divisible by r={self.r}")
        if not 0.0 <= self.p < 0.5:
            raise ValueError(f"flip probability must lie in [0, 1/2), got {self.p}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"erasure probability must lie in [0, 1], got {self.epsilon}")

    @property
    def K(self):
        return self.n // self.r

    @property
    def m(self):
        """Expected number of observed entries."""
        return self.n**2 * (1.0 - self.epsilon)

    @property
    def use_distinct_rows(self):
        if self.distinct_rows is None:
            return self.r <= DISTINCT_ROWS_MAX_R
        return self.distinct_rows


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Instance:
    config: ModelConfig
    block: np.ndarray
    user_truth: np.ndarray
    movie_truth: np.ndarray
    rating: np.ndarray
    observed: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("block", "user_truth", "movie_truth", "rating", "observed"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n(self):
        return self.config.n

    @property
    def r(self):
        return self.config.r

    @property
    def K(self):
        return self.config.K

    def summary(self):
        c = self.config
        return {
            "n": c.n,
            "r": c.r,
            "K": c.K,
            "p": c.p,
            "epsilon": c.epsilon,
            "omega": int(np.count_nonzero(self.observed)),
            "m": c.m,
            "seed": c.seed,
        }


def _all_distinct(a):
    return len(np.unique(a, axis=0)) == a.shape[0]


def sample_block_matrix(r, rng, distinct_rows=False, max_retries=DISTINCT_RETRIES):
    """Draw an ``r x r`` matrix of independent fair +/-1 signs.

    With ``distinct_rows`` the draw is repeated until all rows and all
    columns are pairwise distinct, giving up after ``max_retries`` resamples.
    """
    if r < 1:
        raise ValueError(f"r must be positive, got {r}")
    for _ in range(max_retries + 1):
        block = np.where(rng.random((r, r)) < 0.5, 1, -1).astype(np.int8)
        if not distinct_rows or (_all_distinct(block) and _all_distinct(block.T)):
            return block
    raise InfeasibleBlockError(
        f"no {r}x{r} block matrix with distinct rows and columns after "
        f"{max_retries} resamples (retry cap)"
    )


def canonical_partition(n, r):
    """Contiguous equal-size groups: items ``k*K .. (k+1)*K - 1`` form group k."""
    if n % r:
        raise ValueError(f"n={n} is not divisible by r={r}")
    return np.repeat(np.arange(r, dtype=np.int64), n // r)


def expand_rating_matrix(block, user_labels, movie_labels):
    """Block expansion ``R[i, j] = B[user_labels[i], movie_labels[j]]``."""
    block = np.asarray(block)
    user_labels = np.asarray(user_labels)
    movie_labels = np.asarray(movie_labels)
    if block.ndim != 2:
        raise ValueError("block matrix must be two-dimensional")
    for name, labels, size in (
        ("user", user_labels, block.shape[0]),
        ("movie", movie_labels, block.shape[1]),
    ):
        if labels.size and (labels.min() < 0 or labels.max() >= size):
            raise ValueError(
                f"{name} partition uses labels outside [0, {size}) for a "
                f"{block.shape[0]}x{block.shape[1]} block matrix"
            )
    return block[np.ix_(user_labels, movie_labels)]


def apply_channels(rating, p, epsilon, rng):
    """Pass every entry through a BSC(p) and an erasure channel(epsilon)."""
    if not 0.0 <= p < 0.5:
        raise ValueError(f"flip probability must lie in [0, 1/2), got {p}")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"erasure probability must lie in [0, 1], got {epsilon}")
    rating = np.asarray(rating, dtype=np.int8)
    kept = rng.random(rating.shape) >= epsilon
    flipped = rng.random(rating.shape) < p
    out = np.where(flipped, -rating, rating).astype(np.int8)
    out[~kept] = 0
    return out


def generate_instance(config):
    block = sample_block_matrix(
        config.r, stream(config.seed, "block"), distinct_rows=config.use_distinct_rows
    )
    users = canonical_partition(config.n, config.r)
    movies = canonical_partition(config.n, config.r)
    rating = expand_rating_matrix(block, users, movies)
    observed = apply_channels(rating, config.p, config.epsilon, stream(config.seed, "channel"))
    return Instance(config, block, users, movies, rating, observed)


def omega(observed):
    """Observed index set as a pair of (row, col) index arrays in row-major order."""
    return np.nonzero(observed)


def estimate_epsilon(observed):
    observed = np.asarray(observed)
    if observed.size == 0:
        return 1.0
    return 1.0 - np.count_nonzero(observed) / observed.size


def estimate_r(observed, r_max):
    """Number of clusters from the largest gap among the top singular values.

    Returns the smallest ``t`` in ``[1, r_max)`` maximising
    ``sigma_t - sigma_{t+1}``.
    """
    observed = np.asarray(observed, dtype=float)
    if r_max > min(observed.shape):
        raise ValueError(f"r_max={r_max} exceeds matrix dimension {min(observed.shape)}")
    if r_max < 2:
        return 1
    s = np.linalg.svd(observed, compute_uv=False)[:r_max]
    gaps = s[:-1] - s[1:]
    return int(np.argmax(gaps)) + 1
