"""Command-line interface: ``jointclust {gen,run,phase,incoherence,analyze}``.

Exit status is 0 on success, 1 for bad usage (flags, config file) and 2 when
the requested computation fails.  Any flag can also be given in a flat
``key = value`` file passed with ``--config``; flags on the command line win.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import (
    ambiguity_witness,
    epsilon_for_lower_bound,
    regime_classify,
    witness_is_valid,
)
from .convex import conjecture_experiment
from .experiments import (
    GridSpec,
    evaluate_algorithm,
    parse_algorithm,
    run_grid,
    write_incoherence_csv,
)
from .io import load_instance, save_instance
from .metrics import EvalReport
from .model import ModelConfig, generate_instance
from .rng import RNG_VERSION, derive_seed
from .spectral import SpectralOptions

CSV_VERSION = "1"
RUN_HEADER = ("algorithm",) + EvalReport.HEADER


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _range(text):
    try:
        parts = [float(x) for x in text.split(":")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}")
    if len(parts) == 1:
        parts = [parts[0], parts[0], 1.0]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}")
    return tuple(parts)


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _algo(text):
    try:
        parse_algorithm(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))
    return text


def _algo_list(text):
    return [_algo(x) for x in text.split(",") if x]


def _add_model_flags(p, required):
    p.add_argument("--n", type=int, required=required, help="number of users and movies")
    p.add_argument("--r", type=int, required=required, help="clusters per side")
    p.add_argument("--p", type=float, default=0.0, help="flip probability")
    p.add_argument("--epsilon", type=float, default=0.0, help="erasure probability")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distinct-rows", choices=("auto", "yes", "no"), default="auto",
                   help="force distinct block rows/columns (auto: when r <= 12)")


def _model_config(args):
    distinct = {"auto": None, "yes": True, "no": False}[args.distinct_rows]
    return ModelConfig(args.n, args.r, args.p, args.epsilon, args.seed, distinct)


def build_parser():
    parser = _Parser(prog="jointclust", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="key = value file with default flags")
        return p

    p = add("gen", "generate an instance file")
    _add_model_flags(p, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = add("run", "run one algorithm and score it against the planted truth")
    p.add_argument("--instance", type=Path, help="instance file (otherwise generate one)")
    _add_model_flags(p, required=False)
    p.add_argument("--algo", type=_algo, required=True,
                   help="combinatorial[:greedy|:exhaustive], convex, spectral or nn")
    p.add_argument("--algo-seed", type=int, default=0, help="seed for randomized algorithms")
    p.add_argument("--lambda", dest="lam", default="auto",
                   help="convex regularisation weight or 'auto'")
    p.add_argument("--lambda-scale", type=float, default=3.0,
                   help="multiplier c in lambda = c sqrt((1-eps) n) when --lambda auto")
    p.add_argument("--tau", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--kmeans", action="store_true", help="spectral: k-means instead of thresholding")
    p.add_argument("--shared-omega", action="store_true",
                   help="spectral: use every observation for both clustering and voting")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--timing", action="store_true", help="record wall-clock runtime")
    p.add_argument("--dump-matrix", type=Path, help="write the recovered matrix (.npy)")
    p.add_argument("--out", type=Path, help="CSV output (default stdout)")

    p = add("phase", "sweep an (alpha, beta) grid")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, default=0.0)
    p.add_argument("--alpha", type=_range, required=True, help="start:stop:step (inclusive)")
    p.add_argument("--beta", type=_range, required=True, help="start:stop:step (inclusive)")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--algos", type=_algo_list, default=["convex", "spectral"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda-scale", type=float, default=3.0)
    p.add_argument("--threshold", action="store_true",
                   help="spectral: ball thresholding instead of k-means")
    p.add_argument("--split-omega", action="store_true",
                   help="spectral: split observations between clustering and voting")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--workers", type=int, help="worker processes (default $JOINTCLUST_WORKERS or 1)")
    p.add_argument("--timing", action="store_true", help="record wall-clock runtime")
    p.add_argument("--no-resume", action="store_true", help="discard partial results")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = add("incoherence", "largest incoherence of random block matrices per r")
    p.add_argument("--r", type=_int_list, default=[4, 8, 16, 32, 64, 128])
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="CSV output (default stdout)")

    p = sub.add_parser("analyze", help="parameter-regime and lower-bound diagnostics")
    asub = p.add_subparsers(dest="what", required=True, parser_class=_Parser)
    q = asub.add_parser("regime", help="which methods' sample conditions hold")
    q.add_argument("--config", type=Path, help="key = value file with default flags")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--K", type=int, required=True)
    q.add_argument("--epsilon", type=float, required=True)
    q = asub.add_parser("witness", help="rate of non-identifiable instances")
    q.add_argument("--config", type=Path, help="key = value file with default flags")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--K", type=int, required=True)
    g = q.add_mutually_exclusive_group(required=True)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--lb-value", type=float, help="choose epsilon so that n K^2 (1-eps)^2 equals this")
    q.add_argument("--trials", type=int, default=200)
    q.add_argument("--seed", type=int, default=0)
    return parser


def read_config(path):
    """Flat ``key = value`` file; blank lines and ``#`` comments are ignored."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e.strerror}")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _config_argv(parser_for, config):
    """Turn config entries into argv tokens so they go through normal flag parsing."""
    argv = []
    actions = {a.dest: a for a in parser_for._actions}
    for key, value in config.items():
        action = actions.get(key)
        if action is None or not action.option_strings:
            raise UsageError(f"unknown config key {key!r}")
        flag = action.option_strings[-1]
        if action.nargs == 0:
            if value.lower() in ("1", "true", "yes", "on"):
                argv.append(flag)
            elif value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
        else:
            argv += [flag, value]
    return argv


def _emit_csv(rows, header, out):
    if out is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_generate(args):
    inst = generate_instance(_model_config(args))
    save_instance(inst, args.out)
    summary = inst.summary()
    print(" ".join(f"{k}={v}" for k, v in summary.items()))
    return 0


def cmd_run(args):
    if args.instance is not None:
        inst = load_instance(args.instance)
    else:
        if args.n is None or args.r is None:
            raise UsageError("run needs --instance or both --n and --r")
        inst = generate_instance(_model_config(args))
    convex_opts = {"tau": args.tau, "delta": args.delta, "tol": args.tol,
                   "max_iter": args.max_iter, "lambda_scale": args.lambda_scale}
    if args.lam != "auto":
        try:
            convex_opts["lam"] = float(args.lam)
        except ValueError:
            raise UsageError(f"--lambda must be a number or 'auto', got {args.lam!r}")
    sopts = SpectralOptions(use_kmeans=args.kmeans, shared_omega=args.shared_omega,
                            kmeans_restarts=args.restarts, seed=args.algo_seed)
    report, rec = evaluate_algorithm(inst, args.algo, seed=args.algo_seed,
                                     convex_opts=convex_opts, spectral_opts=sopts)
    if not args.timing:
        report = EvalReport(report.pair_error, report.exact, report.sign_accuracy, None,
                            report.user_pair_error, report.movie_pair_error)
    if args.dump_matrix is not None:
        np.save(args.dump_matrix, np.asarray(rec.rating))
    _emit_csv([[args.algo] + report.csv_fields()], RUN_HEADER, args.out)
    return 0


def cmd_phase_grid(args):
    spec = GridSpec(
        n=args.n, p=args.p, alpha_range=args.alpha, beta_range=args.beta,
        trials=args.trials, algorithms=tuple(args.algos), master_seed=args.seed,
        lambda_scale=args.lambda_scale, spectral_kmeans=not args.threshold,
        spectral_shared=not args.split_omega, kmeans_restarts=args.restarts,
        record_timing=args.timing,
    )
    out = Path(args.out)
    run_grid(spec, out, workers=args.workers, resume=not args.no_resume)
    meta = {
        "csv_version": CSV_VERSION,
        "rng": RNG_VERSION,
        "n": spec.n, "p": spec.p,
        "alpha_range": list(spec.alpha_range), "beta_range": list(spec.beta_range),
        "trials": spec.trials, "algorithms": spec.algorithm_labels(),
        "master_seed": spec.master_seed, "lambda_scale": spec.lambda_scale,
        "kmeans_restarts": spec.kmeans_restarts,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'cells.csv'}")
    return 0


def cmd_incoherence(args):
    rows = conjecture_experiment(args.r, args.trials, args.seed)
    if args.out is None:
        write_incoherence_csv(rows, sys.stdout)
    else:
        write_incoherence_csv(rows, args.out)
    return 0


def cmd_analyze(args):
    w = csv.writer(sys.stdout, lineterminator="\n")
    if args.what == "regime":
        rep = regime_classify(args.n, args.K, args.epsilon)
        w.writerow(("method", "condition", "value", "threshold", "holds",
                    "m_condition", "m", "m_threshold", "m_holds"))
        for row in rep.rows:
            w.writerow((row.method, row.condition, f"{row.value:.6g}", f"{row.threshold:.6g}",
                        int(row.holds), row.m_condition, f"{rep.m:.6g}",
                        f"{row.m_threshold:.6g}", int(row.m_holds)))
        return 0
    eps = args.epsilon
    if eps is None:
        eps = epsilon_for_lower_bound(args.n, args.K, args.lb_value)
    found = valid = 0
    for t in range(args.trials):
        cfg = ModelConfig(args.n, args.n // args.K, 0.0, eps, derive_seed(args.seed, "witness", t))
        inst = generate_instance(cfg)
        wit = ambiguity_witness(inst)
        if wit is not None:
            found += 1
            valid += witness_is_valid(inst, wit)
    w.writerow(("n", "K", "epsilon", "trials", "witnesses", "valid", "rate"))
    w.writerow((args.n, args.K, f"{eps:.8f}", args.trials, found, valid,
                f"{found / args.trials:.4f}"))
    return 0


COMMANDS = {
    "gen": cmd_generate,
    "run": cmd_run,
    "phase": cmd_phase_grid,
    "incoherence": cmd_incoherence,
    "analyze": cmd_analyze,
}


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _find_config(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    path = _find_config(argv)
    cmd = next((tok for tok in argv if tok in COMMANDS), None)
    if path is not None and cmd is not None:
        try:
            sub = _subparser(parser, cmd)
            idx = argv.index(cmd) + 1
            if cmd == "analyze":
                what = next((tok for tok in argv[idx:] if tok in ("regime", "witness")), None)
                if what is None:
                    raise UsageError("analyze needs regime or witness")
                sub = _subparser(sub, what)
                idx = argv.index(what, idx) + 1
            extra = _config_argv(sub, read_config(path))
        except UsageError as e:
            print(f"jointclust: error: {e}", file=sys.stderr)
            return 1
        # config entries go first so explicit flags override them
        argv = argv[:idx] + extra + argv[idx:]
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"jointclust: error: {e}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, RuntimeError, OSError) as e:
        print(f"jointclust: {args.command} failed: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
