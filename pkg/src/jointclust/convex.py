"""Nuclear-norm regularised recovery of the rating matrix.

The estimator maximises ``<R_hat, Y> - lam * ||Y||_*`` over ``Y`` with entries
in ``[-1, 1]``.  It is solved through the smoothed problem

    min  tau/2 ||Y||_F^2 - <R_hat, Y> + lam ||Y||_*   s.t.  -1 <= Y <= 1

by dual gradient steps on the box multipliers ``S`` (for ``Y <= 1``) and
``T`` (for ``Y >= -1``); the primal minimiser for fixed multipliers is a
singular value shrinkage.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import svds

from .metrics import sign_of
from .model import sample_block_matrix
from .rng import stream

log = logging.getLogger(__name__)

FULL_SVD_MAX_N = 1024


class NumericalError(ArithmeticError):
    pass


def _svd(X):
    try:
        return np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        finite = bool(np.all(np.isfinite(X)))
        raise NumericalError(
            f"SVD failed on a {X.shape[0]}x{X.shape[1]} matrix "
            f"(finite={finite}, max|x|={np.nanmax(np.abs(X)) if X.size else 0:.3g})"
        ) from exc


def singular_value_shrink(X, gamma):
    """Soft-threshold the singular values of ``X`` by ``gamma``.

    This is the proximal map of ``gamma * ||.||_*``.
    """
    if gamma < 0:
        raise ValueError(f"shrinkage level must be non-negative, got {gamma}")
    X = np.asarray(X, dtype=np.float64)
    U, s, Vt = _svd(X)
    s = np.maximum(s - gamma, 0.0)
    keep = s > 0
    return (U[:, keep] * s[keep]) @ Vt[keep]


def _shrink_truncated(X, gamma, k):
    """Shrinkage from a partial SVD, widening it until the tail is provably zeroed."""
    n = min(X.shape)
    while k < n - 1:
        U, s, Vt = svds(X, k=k, random_state=0)
        if s.min() <= gamma:
            s = np.maximum(s - gamma, 0.0)
            return (U * s) @ Vt
        k = min(2 * k, n - 1)
    return singular_value_shrink(X, gamma)


def default_lambda(epsilon, n):
    """Regularisation weight ``3 * sqrt((1 - epsilon) * n)``."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"erasure probability must lie in [0, 1], got {epsilon}")
    return 3.0 * np.sqrt((1.0 - epsilon) * n)


@dataclass(frozen=True)
class SvtConfig:
    lam: float
    tau: float | None = None
    delta: float | None = None
    max_iter: int = 500
    tol: float = 1e-4
    full_svd: bool = False
    rank_cap: int | None = None

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        for name in ("tau", "delta"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter at least 1")

    @property
    def tau_(self):
        return 1e-2 * self.lam if self.tau is None else self.tau

    @property
    def delta_(self):
        return self.tau_ if self.delta is None else self.delta

    @classmethod
    def for_observation(cls, observed, **kw):
        from .model import estimate_epsilon

        observed = np.asarray(observed)
        lam = default_lambda(estimate_epsilon(observed), observed.shape[0])
        if lam == 0:
            lam = 1.0
        return cls(lam=lam, **kw)


@dataclass
class SvtState:
    Y: np.ndarray
    S: np.ndarray
    T: np.ndarray
    iter: int


@dataclass(frozen=True)
class SvtResult:
    Y: np.ndarray
    converged: bool
    iterations: int
    raw: np.ndarray


def solve_dual_svt(observed, cfg, callback=None):
    """Run the dual gradient iteration and return the clamped primal estimate.

    Each sweep computes ``Y_{k+1} = D_{lam/tau}((R_hat - S_k + T_k) / tau)`` and
    moves the multipliers along the constraint residuals of ``Y_k``:
    ``S_{k+1} = max(S_k + delta (Y_k - 1), 0)`` and
    ``T_{k+1} = max(T_k - delta (Y_k + 1), 0)``.  Iteration stops once
    ``||Y_{k+1} - Y_k||_F <= tol * max(1, ||Y_k||_F)`` or after ``max_iter``
    sweeps; running out of sweeps is reported through ``converged=False``.
    The multipliers must be stationary to the same relative tolerance, since
    the first sweeps repeat ``Y`` exactly while the multipliers are still zero.

    ``callback``, if given, receives an ``SvtState`` after every sweep.
    """
    R = np.asarray(observed, dtype=np.float64)
    n = min(R.shape)
    tau, delta = cfg.tau_, cfg.delta_
    gamma = cfg.lam / tau
    truncated = not cfg.full_svd and n > FULL_SVD_MAX_N
    k0 = cfg.rank_cap or min(n - 1, 4 * max(1, int(np.sqrt(n))) + 20)

    Y = np.zeros_like(R)
    S = np.zeros_like(R)
    T = np.zeros_like(R)
    converged = False
    it = 0
    while it < cfg.max_iter:
        X = (R - S + T) / tau
        Y_next = _shrink_truncated(X, gamma, k0) if truncated else singular_value_shrink(X, gamma)
        S_next = np.maximum(S + delta * (Y - 1.0), 0.0)
        T_next = np.maximum(T - delta * (Y + 1.0), 0.0)
        change = np.linalg.norm(Y_next - Y)
        scale = max(1.0, np.linalg.norm(Y))
        dual_change = np.linalg.norm(S_next - S) + np.linalg.norm(T_next - T)
        dual_scale = max(1.0, np.linalg.norm(S) + np.linalg.norm(T))
        Y, S, T = Y_next, S_next, T_next
        it += 1
        if callback is not None:
            callback(SvtState(Y, S, T, it))
        if change <= cfg.tol * scale and dual_change <= cfg.tol * dual_scale:
            converged = True
            break
    if not converged:
        log.warning("dual SVT stopped after %d sweeps without meeting tol=%g", it, cfg.tol)
    return SvtResult(Y=np.clip(Y, -1.0, 1.0), converged=converged, iterations=it, raw=Y)


def clusters_from_matrix(Y):
    """Group identical sign-rounded rows, and likewise columns.

    Clusters are numbered in order of first occurrence; zeros round to +1.
    """
    signs = sign_of(Y)
    return _group_identical(signs), _group_identical(signs.T)


def _group_identical(a):
    if a.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    _, first, inverse = np.unique(a, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inverse]


def polar_inf_norm(block):
    """Largest entry magnitude of ``U_B V_B^T`` for a full-rank block matrix."""
    B = np.asarray(block, dtype=np.float64)
    U, s, Vt = _svd(B)
    tol = s.max(initial=0.0) * max(B.shape) * np.finfo(float).eps
    if B.shape[0] != B.shape[1] or np.sum(s > tol) < B.shape[0]:
        raise ValueError("block matrix is rank deficient; incoherence needs full rank")
    return float(np.abs(U @ Vt).max())


def incoherence_mu(block, K):
    """Smallest ``mu`` with ``||U V^T||_inf <= mu sqrt(r) / n`` for the expanded matrix."""
    r = np.asarray(block).shape[0]
    n = r * K
    return polar_inf_norm(block) * n / (K * np.sqrt(r))


@dataclass(frozen=True)
class IncoherenceRow:
    r: int
    trials: int
    max_raw: float
    scaled_max: float
    resampled: int


def conjecture_experiment(r_values, trials, seed):
    """Largest ``||U_B V_B^T||_inf`` over random full-rank sign matrices, per ``r``.

    The maximum is divided by ``sqrt(ln r / r)``.  Singular draws are
    redrawn and counted in ``resampled``.
    """
    rows = []
    for r in r_values:
        if r < 2:
            raise ValueError(f"r must be at least 2, got {r}")
        rng = stream(seed, "incoherence", r)
        best = 0.0
        resampled = 0
        done = 0
        while done < trials:
            B = sample_block_matrix(r, rng)
            try:
                v = polar_inf_norm(B)
            except ValueError:
                resampled += 1
                continue
            best = max(best, v)
            done += 1
        rows.append(IncoherenceRow(r, trials, best, best / np.sqrt(np.log(r) / r), resampled))
    return rows
