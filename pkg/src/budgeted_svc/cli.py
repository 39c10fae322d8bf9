"""Command-line interface: generate, train, cluster, evaluate, gridsearch, diagnose.

Exit codes: 0 success, 1 bound violations or failed computation,
2 usage or configuration error, 3 I/O or parse error.  Every invocation
writes one JSON manifest next to its primary output.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .assignment import AssignConfig, assign_clusters
from .cvi import report as cvi_report
from .cvi import validate_report
from .data import (MIXTURE_PRESETS, Dataset, apply_standardization, gen_gaussian_mixture,
                   gen_moons, gen_rings, load_csv, load_iris, save_csv, standardize)
from .exceptions import (BudgetedSVCError, ConfigError, InvalidInputError, ParseError)
from .kernel_model import KernelExpansion
from .theory import audit_trace
from .trainer import TrainConfig, TrainTrace, train

JOBS_ENV = "BSVC_JOBS"
GRID = [2.0 ** e for e in (-5, -3, -1, 1, 3, 5)]
STRATEGY_FLAGS = {"removal": "removal", "proj-knn": "projection_knn",
                  "proj-rand": "projection_random"}
# metric name -> True when larger is better
METRICS = {"purity": True, "rand": True, "nmi": True, "compactness": False, "dbi": False}

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


# -- helpers -------------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class _Run:
    """Collects manifest fields for one invocation."""

    def __init__(self, args):
        self.args = args
        self.inputs = {}
        self.outputs = []
        self.config = {}
        self.start = time.perf_counter()

    def read(self, path):
        self.inputs[str(path)] = _sha256(path)
        return path

    def wrote(self, path):
        self.outputs.append(str(path))
        return path

    def write_manifest(self, status=EXIT_OK):
        primary = (self.outputs[0] if self.outputs else getattr(self.args, "out", None)
                   or getattr(self.args, "model_out", None) or self.args.command)
        path = self.args.manifest or primary + ".manifest.json"
        manifest = {
            "command": self.args.command,
            "argv": sys.argv[1:],
            "config": self.config,
            "seed": getattr(self.args, "seed", None),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "exit_code": status,
            "wall_time_s": time.perf_counter() - self.start,
            "version": __version__,
        }
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _load_data(run, args):
    data = load_csv(run.read(args.data), has_header=args.header,
                    label_column=args.label_column)
    return data


def _load_model(run, path):
    try:
        with open(run.read(path)) as fh:
            obj = json.load(fh)
        model = KernelExpansion.from_dict(obj)
    except (json.JSONDecodeError, InvalidInputError) as exc:
        raise ParseError(f"{path}: {exc}") from None
    return model, obj.get("standardize")


def _model_json(model, stand=None, config=None):
    obj = model.to_dict()
    if stand is not None:
        obj["standardize"] = stand
    if config is not None:
        obj["train_config"] = config
    return json.dumps(obj, sort_keys=True) + "\n"


def _write(run, path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)
    run.wrote(path)


def _train_config(args, seed=None, gamma=None, C=None):
    return TrainConfig(
        C=float(args.C if C is None else C), gamma=float(args.gamma if gamma is None else gamma),
        budget=args.budget, strategy=STRATEGY_FLAGS[args.strategy], k=args.k,
        stop_theta=args.stop_theta, max_steps=args.max_steps,
        seed=args.seed if seed is None else seed)


def _assign_config(args):
    return AssignConfig(epsilon=args.epsilon, fp_tol=args.fp_tol, fp_max_iter=args.fp_max_iter,
                        merge_tol=args.merge_tol, m_samples=args.m_samples)


def _maybe_standardize(data, enabled):
    if not enabled:
        return data, None
    out, mean, scale = standardize(data)
    return out, {"mean": mean.tolist(), "scale": scale.tolist()}


# -- commands ------------------------------------------------------------------

def cmd_generate(args, run):
    if args.shape == "rings":
        data = gen_rings(args.n, tuple(args.radii), args.noise,
                         args.center_n if args.center_n is not None else args.n // 2, args.seed)
    elif args.shape == "moons":
        data = gen_moons(args.n, args.noise, args.seed)
    elif args.shape in MIXTURE_PRESETS:
        means, sigmas = MIXTURE_PRESETS[args.shape]
        data = gen_gaussian_mixture([args.n] * len(means), means, sigmas, args.seed)
    else:
        data = load_iris()
    run.config = {"shape": args.shape, "n": args.n, "noise": args.noise,
                  "radii": list(args.radii), "center_n": args.center_n}
    save_csv(data, args.out, header=args.header)
    run.wrote(args.out)
    return EXIT_OK


def cmd_train(args, run):
    cfg = _train_config(args)
    run.config = cfg.to_dict() | {"standardize": args.standardize}
    data, stand = _maybe_standardize(_load_data(run, args), args.standardize)
    model, trace = train(data, cfg)
    _write(run, args.model_out, _model_json(model, stand, cfg.to_dict()))
    if args.trace_out:
        trace.to_jsonl(args.trace_out)
        run.wrote(args.trace_out)
    return EXIT_OK


def _apply_model_standardization(data, stand):
    if stand is None:
        return data
    return apply_standardization(data, stand["mean"], stand["scale"])


def cmd_cluster(args, run):
    cfg = _assign_config(args)
    run.config = {"epsilon": cfg.epsilon, "fp_tol": cfg.fp_tol, "fp_max_iter": cfg.fp_max_iter,
                  "merge_tol": cfg.merge_tol, "m_samples": cfg.m_samples}
    model, stand = _load_model(run, args.model)
    data = _apply_model_standardization(_load_data(run, args), stand)
    sol = assign_clusters(model, data, cfg)
    _write(run, args.out, sol.to_csv())
    sidecar = args.sidecar or args.out + ".json"
    _write(run, sidecar, sol.sidecar_json() + "\n")
    return EXIT_OK


def _read_labels(run, path):
    labels = {}
    try:
        with open(run.read(path), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[:2] != ["point_index", "cluster_id"]:
                raise ParseError("expected header point_index,cluster_id,...", 1)
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    labels[int(row[0])] = int(row[1])
                except (ValueError, IndexError):
                    raise ParseError("malformed labels row", lineno) from None
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None
    n = len(labels)
    if sorted(labels) != list(range(n)):
        raise ParseError(f"{path}: point indices must cover 0..{n - 1}")
    return np.array([labels[i] for i in range(n)], dtype=np.int64)


def cmd_evaluate(args, run):
    predicted = _read_labels(run, args.labels)
    data = _load_data(run, args)
    if data.n != predicted.shape[0]:
        raise InvalidInputError(f"{predicted.shape[0]} labels for {data.n} points")
    rep = cvi_report(data, predicted, data.labels).to_dict()
    validate_report(rep)
    run.config = {"has_truth": data.labels is not None}
    _write(run, args.out, json.dumps(rep, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def grid_cell_seed(seed, cell):
    """Training seed for grid cell ``cell``, derived from ``(seed, cell)``."""
    return int(np.random.SeedSequence([seed, cell]).generate_state(1, np.uint64)[0])


def evaluate_cell(data, train_cfg, assign_cfg):
    """Train, cluster and score one grid cell; returns a result row and the model JSON."""
    model, trace = train(data, train_cfg)
    row = {"gamma": train_cfg.gamma, "C": train_cfg.C, "seed": train_cfg.seed,
           "steps": len(trace), "support_size": len(model)}
    try:
        sol = assign_clusters(model, data, assign_cfg)
        rep = cvi_report(data, sol.labels, data.labels)
        row.update(rep.to_dict(), n_clusters=sol.n_clusters, M=sol.M,
                   boundary_size=int(sol.boundary_members.size), error="")
    except BudgetedSVCError as exc:
        row.update(dict.fromkeys(METRICS), n_clusters=None, M=None, boundary_size=None,
                   error=type(exc).__name__)
    return row, model


def _rank_key(metric):
    larger = METRICS[metric]

    def key(item):
        cell, row = item
        v = row[metric]
        if v is None or not math.isfinite(v):
            return (1, 0.0, cell)
        return (0, -v if larger else v, cell)
    return key


def _cell_job(payload):
    data, train_cfg, assign_cfg = payload
    row, model = evaluate_cell(data, train_cfg, assign_cfg)
    return row, model.to_dict()


def grid_search(data, gammas, Cs, base_cfg, assign_cfg, metric="purity", jobs=1):
    """Evaluate the ``gammas x Cs`` grid; returns ranked ``(cell, row, model_dict)``.

    Cell ``i`` (row-major over gammas then Cs) trains with
    ``grid_cell_seed(base_cfg.seed, i)``, so results do not depend on ``jobs``.
    """
    if not gammas or not Cs:
        raise ConfigError("gamma and C grids must be nonempty")
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}; choose from {sorted(METRICS)}")
    if metric in ("purity", "rand", "nmi") and data.labels is None:
        raise ConfigError(f"metric {metric!r} needs ground-truth labels")
    payloads = []
    for g in gammas:
        for C in Cs:
            cfg = TrainConfig(**{**base_cfg.to_dict(), "gamma": float(g), "C": float(C),
                                 "seed": grid_cell_seed(base_cfg.seed, len(payloads))})
            payloads.append((data, cfg, assign_cfg))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell_job, payloads))
    else:
        results = [_cell_job(p) for p in payloads]
    ranked = sorted(enumerate(r for r, _ in results), key=_rank_key(metric))
    return [(cell, row, results[cell][1]) for cell, row in ranked]


_TABLE_COLUMNS = ["rank", "cell", "gamma", "C", "seed", "n_clusters", "M", "boundary_size",
                  "steps", "support_size", "purity", "rand", "nmi", "compactness", "dbi", "error"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _table_csv(ranked):
    lines = [",".join(_TABLE_COLUMNS)]
    for rank, (cell, row, _) in enumerate(ranked, start=1):
        vals = {"rank": rank, "cell": cell, **row}
        lines.append(",".join(_fmt(vals[c]) for c in _TABLE_COLUMNS))
    return "\n".join(lines) + "\n"


def _parse_grid(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"grid {text!r} is not a comma-separated list of numbers") from None
    if not vals:
        raise ConfigError("grids must be nonempty")
    return vals


def cmd_gridsearch(args, run):
    gammas, Cs = _parse_grid(args.gamma_grid), _parse_grid(args.C_grid)
    jobs = args.jobs if args.jobs is not None else int(os.environ.get(JOBS_ENV, "1"))
    if jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    base = _train_config(args, gamma=1.0, C=1.0)
    assign_cfg = _assign_config(args)
    run.config = {**base.to_dict(), "gamma_grid": gammas, "C_grid": Cs, "metric": args.metric,
                  "epsilon": assign_cfg.epsilon, "jobs": jobs, "standardize": args.standardize}
    data, stand = _maybe_standardize(_load_data(run, args), args.standardize)
    ranked = grid_search(data, gammas, Cs, base, assign_cfg, args.metric, jobs)
    _write(run, args.out, _table_csv(ranked))
    if args.model_out:
        cell, row, model_dict = ranked[0]
        best = KernelExpansion.from_dict(model_dict)
        cfg = TrainConfig(**{**base.to_dict(), "gamma": row["gamma"], "C": row["C"],
                             "seed": row["seed"]})
        _write(run, args.model_out, _model_json(best, stand, cfg.to_dict()))
    return EXIT_OK


def cmd_diagnose(args, run):
    try:
        trace = TrainTrace.from_jsonl(run.read(args.trace))
    except InvalidInputError as exc:
        raise ParseError(f"{args.trace}: {exc}") from None
    strategy = STRATEGY_FLAGS[args.strategy]
    run.config = {"C": args.C, "R": args.R, "strategy": strategy}
    rep = audit_trace(trace, args.C, args.R, strategy)
    _write(run, args.out, rep.to_json() + "\n")
    if not rep.ok:
        for name in ("lemma1_violations", "lemma2_violations", "lemma4_violations"):
            for step, observed, bound in getattr(rep, name):
                print(f"{name[:-11]} violated at step {step}: {observed!r} > {bound!r}",
                      file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _add_data_args(p):
    p.add_argument("--data", required=True, help="input CSV")
    p.add_argument("--header", action="store_true", help="the CSV has a header row")
    p.add_argument("--label-column", type=int, default=None,
                   help="column holding class labels (negative counts from the end)")


def _add_train_args(p, grid=False):
    if not grid:
        p.add_argument("--gamma", type=float, default=1.0)
        p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--budget", type=_positive_int, default=None)
    p.add_argument("--strategy", choices=sorted(STRATEGY_FLAGS), default="removal")
    p.add_argument("--k", type=_positive_int, default=5)
    p.add_argument("--stop-theta", type=float, default=0.01)
    p.add_argument("--max-steps", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--standardize", action="store_true")


def _add_assign_args(p):
    p.add_argument("--epsilon", type=float, default=None,
                   help="extended-boundary tolerance (default: 10th percentile of |f|)")
    p.add_argument("--fp-tol", type=float, default=1e-6)
    p.add_argument("--fp-max-iter", type=_positive_int, default=500)
    p.add_argument("--merge-tol", type=float, default=1e-3)
    p.add_argument("--m-samples", type=_positive_int, default=20)


def build_parser():
    parser = argparse.ArgumentParser(prog="bsvc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--manifest", default=None,
                       help="manifest path (default: <primary output>.manifest.json)")
        p.set_defaults(func=fn)
        return p

    p = command("generate", cmd_generate, "write a synthetic or bundled dataset as CSV")
    p.add_argument("--shape", required=True,
                   choices=["rings", "moons", *MIXTURE_PRESETS, "iris"])
    p.add_argument("--n", type=_positive_int, default=200,
                   help="points per ring, moon or mixture component")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--radii", type=float, nargs=2, default=[1.0, 2.0])
    p.add_argument("--center-n", type=_positive_int, default=None,
                   help="points in the central rings blob (default n/2)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--header", action="store_true")
    p.add_argument("--out", required=True)

    p = command("train", cmd_train, "fit a budgeted one-class SVM")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--model-out", required=True)
    p.add_argument("--trace-out", default=None, help="per-step JSON-lines trace")

    p = command("cluster", cmd_cluster, "assign clusters with a trained model")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    _add_assign_args(p)
    p.add_argument("--out", required=True, help="labels CSV")
    p.add_argument("--sidecar", default=None, help="JSON sidecar (default: <out>.json)")

    p = command("evaluate", cmd_evaluate, "compute validity indices for a labelling")
    _add_data_args(p)
    p.add_argument("--labels", required=True, help="labels CSV written by 'cluster'")
    p.add_argument("--out", required=True)

    p = command("gridsearch", cmd_gridsearch, "search the (gamma, C) grid")
    _add_data_args(p)
    _add_train_args(p, grid=True)
    _add_assign_args(p)
    default_grid = ",".join(repr(v) for v in GRID)
    p.add_argument("--gamma-grid", default=default_grid)
    p.add_argument("--C-grid", default=default_grid)
    p.add_argument("--metric", choices=sorted(METRICS), default="purity")
    p.add_argument("--jobs", type=int, default=None,
                   help=f"worker processes (default: ${JOBS_ENV} or 1)")
    p.add_argument("--out", required=True, help="ranked table CSV")
    p.add_argument("--model-out", default=None, help="best model JSON")

    p = command("diagnose", cmd_diagnose, "audit a training trace against the bounds")
    p.add_argument("--trace", required=True)
    p.add_argument("--C", type=float, required=True)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--strategy", choices=sorted(STRATEGY_FLAGS), default="removal")
    p.add_argument("--out", required=True)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    run = _Run(args)
    try:
        status = args.func(args, run)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_USAGE
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_IO
    except BudgetedSVCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_VIOLATION
    try:
        run.write_manifest(status)
    except OSError as exc:
        print(f"error: cannot write manifest: {exc}", file=sys.stderr)
        status = status or EXIT_IO
    return status


if __name__ == "__main__":
    sys.exit(main())
