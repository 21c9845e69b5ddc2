"""Running recovery algorithms on instances and sweeping phase diagrams.

Grid cells are indexed by ``(alpha, beta, trial)``; each cell draws one
instance with cluster size ``K ~ n**beta`` and erasure probability
``1 - n**(-alpha)`` and runs every requested algorithm on it.  All seeds are
derived from the master seed and the cell coordinates, so results do not
depend on the number of worker processes or on execution order.
"""

import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import combinatorial, convex, spectral
from .baseline import nearest_neighbor_cluster
from .metrics import evaluate
from .model import ModelConfig, estimate_epsilon, expand_rating_matrix, generate_instance
from .io import write_pgm
from .rng import derive_seed, stream

log = logging.getLogger(__name__)

ALGORITHMS = ("combinatorial", "convex", "spectral", "nn")
WORKERS_ENV = "JOINTCLUST_WORKERS"
SUCCESS_PAIR_ERROR = 0.05


def parse_algorithm(name):
    """Split ``"combinatorial:exhaustive"`` into ``("combinatorial", "exhaustive")``."""
    base, _, variant = name.partition(":")
    if base not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {base!r}; choose from {', '.join(ALGORITHMS)}")
    if base == "combinatorial":
        variant = variant or "greedy"
        if variant not in ("greedy", "exhaustive"):
            raise ValueError(f"combinatorial variant must be greedy or exhaustive, got {variant!r}")
    elif variant:
        raise ValueError(f"algorithm {base!r} takes no variant")
    return base, variant


@dataclass(frozen=True)
class Recovery:
    user_labels: np.ndarray
    movie_labels: np.ndarray
    rating: np.ndarray
    info: dict = field(default_factory=dict)


def _vote_rating(observed, users, movies):
    block = spectral.majority_vote_blocks(observed, users, movies)
    return expand_rating_matrix(block, users, movies)


def recover(observed, algorithm, r, seed=0, convex_opts=None, spectral_opts=None,
            node_budget=combinatorial.CLIQUE_NODE_BUDGET):
    """Run one algorithm given the number of clusters per side.

    Methods that only output partitions get a rating estimate by majority
    vote of the full observation over their blocks.
    """
    base, variant = parse_algorithm(algorithm)
    observed = np.asarray(observed)
    n = observed.shape[0]
    K = n // r
    info = {}
    if base == "combinatorial":
        if variant == "exhaustive":
            users = combinatorial.exhaustive_min_disagreement(observed, K, axis=0)
            movies = combinatorial.exhaustive_min_disagreement(observed, K, axis=1)
        else:
            users, fu = combinatorial.greedy_zero_disagreement(
                observed, 0, node_budget, return_fallbacks=True)
            movies, fm = combinatorial.greedy_zero_disagreement(
                observed, 1, node_budget, return_fallbacks=True)
            info["clique_fallbacks"] = fu + fm
        rating = _vote_rating(observed, users, movies)
    elif base == "nn":
        users = nearest_neighbor_cluster(observed, K, axis=0)
        movies = nearest_neighbor_cluster(observed, K, axis=1)
        rating = _vote_rating(observed, users, movies)
    elif base == "convex":
        opts = dict(convex_opts or {})
        lam = opts.pop("lam", None)
        scale = opts.pop("lambda_scale", 3.0)
        if lam is None:
            lam = scale / 3.0 * convex.default_lambda(estimate_epsilon(observed), n)
            if lam <= 0:
                lam = 1.0
        opts.setdefault("rank_cap", min(n - 1, 4 * r + 20))
        res = convex.solve_dual_svt(observed, convex.SvtConfig(lam=lam, **opts))
        users, movies = convex.clusters_from_matrix(res.Y)
        rating = res.Y
        info.update(converged=res.converged, iterations=res.iterations, lam=lam)
    else:
        opts = spectral_opts or spectral.SpectralOptions()
        res = spectral.spectral_pipeline(
            observed, r, opts=opts, rng=stream(seed, "spectral"))
        users, movies, rating = res.user_labels, res.movie_labels, res.rating
    return Recovery(users, movies, rating, info)


def evaluate_algorithm(instance, algorithm, seed=0, **kw):
    t0 = time.perf_counter()
    rec = recover(instance.observed, algorithm, instance.r, seed=seed, **kw)
    elapsed = (time.perf_counter() - t0) * 1e3
    report = evaluate(instance, rec.user_labels, rec.movie_labels, rec.rating, elapsed)
    return report, rec


def snap_cluster_size(n, beta):
    """Divisor of ``n`` closest to ``n**beta`` (ties to the smaller divisor)."""
    target = n**beta
    divisors = [d for d in range(1, n + 1) if n % d == 0]
    return min(divisors, key=lambda d: (abs(d - target), d))


def erasure_for(n, alpha):
    return 1.0 - n ** (-alpha)


def frange(start, stop, step):
    """Inclusive float range, rounded to suppress accumulation error."""
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, 10) for i in range(max(count, 0)))


@dataclass(frozen=True)
class GridSpec:
    n: int
    p: float
    alpha_range: tuple
    beta_range: tuple
    trials: int = 1
    algorithms: tuple = ("convex", "spectral")
    master_seed: int = 0
    lambda_scale: float = 3.0
    spectral_kmeans: bool = True
    spectral_shared: bool = True
    kmeans_restarts: int = 10
    record_timing: bool = False

    def __post_init__(self):
        for a in self.alphas + self.betas:
            if not 0.0 < a < 1.0:
                raise ValueError(f"alpha and beta must lie in (0, 1), got {a}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for name in self.algorithms:
            base, variant = parse_algorithm(name)
            if base == "combinatorial" and variant != "greedy":
                raise ValueError("phase grids run the greedy combinatorial variant only")

    @property
    def alphas(self):
        return frange(*self.alpha_range)

    @property
    def betas(self):
        return frange(*self.beta_range)

    def algorithm_labels(self):
        """Algorithm names as recorded in the CSV (variant spelled out)."""
        out = []
        for name in self.algorithms:
            base, _ = parse_algorithm(name)
            if base == "combinatorial":
                out.append("combinatorial:greedy")
            elif base == "spectral":
                tags = ["kmeans" if self.spectral_kmeans else "threshold"]
                if self.spectral_shared:
                    tags.append("shared")
                out.append("spectral:" + "+".join(tags))
            else:
                out.append(base)
        return out


@dataclass(frozen=True)
class GridCell:
    alpha: float
    beta: float
    K: int
    epsilon: float
    trial: int
    algorithm: str
    pair_error: float
    sign_accuracy: float
    exact: bool
    runtime_ms: float | None
    seed: int

    HEADER = ("alpha", "beta", "K", "r", "epsilon", "trial", "algorithm", "pair_error",
              "sign_accuracy", "exact", "success", "runtime_ms", "seed")

    @property
    def success(self):
        return self.pair_error < SUCCESS_PAIR_ERROR

    def row(self, n):
        return [
            f"{self.alpha:.4f}",
            f"{self.beta:.4f}",
            str(self.K),
            str(n // self.K),
            f"{self.epsilon:.8f}",
            str(self.trial),
            self.algorithm,
            f"{self.pair_error:.8f}",
            f"{self.sign_accuracy:.8f}",
            "1" if self.exact else "0",
            "1" if self.success else "0",
            "NA" if self.runtime_ms is None else f"{self.runtime_ms:.3f}",
            str(self.seed),
        ]


def cell_seed(spec, alpha, beta, trial):
    return derive_seed(spec.master_seed, "cell",
                       round(alpha * 1e6), round(beta * 1e6), trial)


def run_cell(spec, alpha, beta, trial):
    """Evaluate every algorithm of ``spec`` on the instance of one grid cell."""
    n = spec.n
    K = snap_cluster_size(n, beta)
    eps = erasure_for(n, alpha)
    seed = cell_seed(spec, alpha, beta, trial)
    inst = generate_instance(ModelConfig(n, n // K, spec.p, eps, seed))
    sopts = spectral.SpectralOptions(
        use_kmeans=spec.spectral_kmeans,
        shared_omega=spec.spectral_shared,
        kmeans_restarts=spec.kmeans_restarts,
    )
    cells = []
    for name, label in zip(spec.algorithms, spec.algorithm_labels()):
        report, _ = evaluate_algorithm(
            inst, name, seed=seed,
            convex_opts={"lambda_scale": spec.lambda_scale},
            spectral_opts=sopts,
        )
        cells.append(GridCell(
            alpha, beta, K, eps, trial, label, report.pair_error, report.sign_accuracy,
            report.exact, report.runtime_ms if spec.record_timing else None, seed,
        ))
    return cells


def _run_task(args):
    spec, alpha, beta, trial = args
    return run_cell(spec, alpha, beta, trial)


def _worker_count(workers):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, workers)


def _read_partial(path):
    """Rows of an interrupted run; only newline-terminated lines are trusted."""
    done = {}
    if not path.exists():
        return done
    lines = path.read_text().split("\n")[:-1]  # the last piece is empty or torn
    reader = csv.reader(lines)
    if next(reader, None) != list(GridCell.HEADER):
        return done
    for row in reader:
        if len(row) != len(GridCell.HEADER):
            continue
        rec = dict(zip(GridCell.HEADER, row))
        done[(rec["alpha"], rec["beta"], int(rec["trial"]), rec["algorithm"])] = row
    return done


def run_grid(spec, out_dir=None, workers=None, resume=True):
    """Evaluate every cell of the grid; optionally write CSV, images and frontier.

    Completed cells are appended to ``cells.partial.csv`` as they finish, so an
    interrupted run resumes where it stopped.  The final ``cells.csv`` is
    written in canonical order once all cells are done.
    """
    tasks = [(spec, a, b, t) for b in spec.betas for a in spec.alphas for t in range(spec.trials)]
    labels = spec.algorithm_labels()
    rows = {}
    partial = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        partial = out_dir / "cells.partial.csv"
        if resume:
            rows.update(_read_partial(partial))
        else:
            partial.unlink(missing_ok=True)

    def key(a, b, t, label):
        return (f"{a:.4f}", f"{b:.4f}", t, label)

    todo = [task for task in tasks
            if not all(key(task[1], task[2], task[3], lab) in rows for lab in labels)]
    if rows:
        log.info("resuming: %d of %d cells already done", len(tasks) - len(todo), len(tasks))

    fh = None
    writer = None
    if partial is not None:
        # rewrite rather than append, so a torn last line never merges with new rows
        fh = open(partial, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GridCell.HEADER)
        writer.writerows(rows.values())
        fh.flush()

    def record(cells):
        for c in cells:
            row = c.row(spec.n)
            rows[key(c.alpha, c.beta, c.trial, c.algorithm)] = row
            if writer is not None:
                writer.writerow(row)
        if fh is not None:
            fh.flush()

    try:
        nworkers = _worker_count(workers)
        if nworkers == 1 or len(todo) <= 1:
            for task in todo:
                record(_run_task(task))
        else:
            with ProcessPoolExecutor(max_workers=nworkers) as pool:
                for cells in pool.map(_run_task, todo):
                    record(cells)
    finally:
        if fh is not None:
            fh.close()

    ordered = [rows[key(a, b, t, lab)] for (_, a, b, t) in tasks for lab in labels]
    if out_dir is not None:
        with open(out_dir / "cells.csv", "w", newline="") as out:
            w = csv.writer(out, lineterminator="\n")
            w.writerow(GridCell.HEADER)
            w.writerows(ordered)
        summary = summarize(spec, ordered)
        write_images(spec, summary, out_dir)
        write_frontier(spec, summary, out_dir / "frontier.csv")
        partial.unlink(missing_ok=True)
    return ordered


def summarize(spec, rows):
    """Per (algorithm, alpha, beta): mean sign accuracy and success rate."""
    idx = {h: i for i, h in enumerate(GridCell.HEADER)}
    acc = {}
    for row in rows:
        k = (row[idx["algorithm"]], row[idx["alpha"]], row[idx["beta"]])
        sa, ok, cnt = acc.get(k, (0.0, 0, 0))
        acc[k] = (sa + float(row[idx["sign_accuracy"]]), ok + int(row[idx["success"]]), cnt + 1)
    return {k: (sa / cnt, ok / cnt) for k, (sa, ok, cnt) in acc.items()}


def intensity(metric):
    """Grey level: 255 at 1.0, 0 at or below 0.5, linear in between."""
    x = np.clip((np.asarray(metric, dtype=float) - 0.5) / 0.5, 0.0, 1.0)
    return np.rint(x * 255).astype(np.uint8)


def phase_image(spec, summary, label):
    """Pixel grid for one algorithm: rows are betas (largest on top), columns alphas."""
    alphas, betas = spec.alphas, spec.betas
    values = np.zeros((len(betas), len(alphas)))
    for bi, b in enumerate(reversed(betas)):
        for ai, a in enumerate(alphas):
            mean_acc, rate = summary[(label, f"{a:.4f}", f"{b:.4f}")]
            values[bi, ai] = mean_acc if label == "convex" else rate
    return intensity(values)


def write_images(spec, summary, out_dir):
    for label in spec.algorithm_labels():
        fname = label.replace(":", "_").replace("+", "_") + ".pgm"
        write_pgm(Path(out_dir) / fname, phase_image(spec, summary, label))


def frontier(spec, summary, label, min_rate=0.5):
    """Largest alpha per beta whose success rate reaches ``min_rate`` (None if none)."""
    out = {}
    for b in spec.betas:
        ok = [a for a in spec.alphas if summary[(label, f"{a:.4f}", f"{b:.4f}")][1] >= min_rate]
        out[b] = max(ok) if ok else None
    return out


def write_frontier(spec, summary, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("algorithm", "beta", "K", "largest_alpha"))
        for label in spec.algorithm_labels():
            for b, a in frontier(spec, summary, label).items():
                w.writerow((label, f"{b:.4f}", snap_cluster_size(spec.n, b),
                            "" if a is None else f"{a:.4f}"))


INCOHERENCE_HEADER = ("r", "trials", "max_raw", "scaled_max", "resampled")


def write_incoherence_csv(rows, path_or_file):
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INCOHERENCE_HEADER)
        for row in rows:
            w.writerow((row.r, row.trials, f"{row.max_raw:.10f}", f"{row.scaled_max:.10f}",
                        row.resampled))

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)
