"""Command-line harness: generate data, fit, sweep the regularization path, evaluate.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver error.
Floats are written in shortest round-trip form, so runs with fixed seeds are
byte-identical.
"""

import argparse
import csv
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import DimensionMismatch, GniesError
from .graphs import (
    GraphClass,
    Pdag,
    dag_to_cpdag,
    dag_to_icpdag,
    enumerate_class,
    h_equivalent,
)
from .metrics import tdp_fdp
from .scm import GenParams, ScmModel, random_scm, sample
from .score import ScoreCache, sufficient_stats
from .search import SearchResult, gnies_fit, inner_fit, pool_stats

EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 2, 3, 4
BIC_LAMBDA_PRIME = 0.5


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------- io helpers

def _write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text, out):
    if out:
        _write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _fmt(x):
    return repr(float(x))


def write_csv(path, X, env=None):
    X = np.asarray(X, dtype=float)
    rows = []
    header = [f"x{j}" for j in range(X.shape[1])]
    if env is not None:
        header = ["env"] + header
    rows.append(",".join(header))
    for k, row in enumerate(X):
        vals = [_fmt(v) for v in row]
        if env is not None:
            vals = [str(int(env[k]))] + vals
        rows.append(",".join(vals))
    _write_atomic(path, "\n".join(rows) + "\n")


def _read_table(path):
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    try:
        body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric entry ({exc})") from exc
    if any(len(r) != len(header) for r in rows[1:]):
        raise DataError(f"{path}: rows have differing numbers of fields")
    if body.size and not np.all(np.isfinite(body)):
        raise DataError(f"{path}: non-finite values")
    return header, body.reshape(-1, len(header))


def read_data(path):
    """Per-environment matrices from a directory of env_k.csv or one CSV with an env column."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("env_*.csv"), key=lambda f: int(f.stem.split("_")[1]))
        if not files:
            raise DataError(f"no env_*.csv files in {path}")
        datasets, header0 = [], None
        for f in files:
            header, X = _read_table(f)
            if header0 is not None and header != header0:
                raise DataError(f"{f}: header differs from {files[0]}")
            header0 = header
            datasets.append(X)
        return datasets
    header, X = _read_table(path)
    if header[0] != "env":
        return [X]
    labels = X[:, 0]
    if np.any(labels != np.round(labels)):
        raise DataError(f"{path}: env labels must be integers")
    return [X[labels == e, 1:] for e in np.unique(labels)]


def standardize(datasets):
    """Scale each variable by its standard deviation over the pooled data."""
    pooled = np.vstack(datasets)
    sd = pooled.std(axis=0)
    if np.any(sd == 0):
        raise DataError("cannot standardize a constant variable")
    return [X / sd for X in datasets]


def _stats(args):
    datasets = read_data(args.data)
    if args.standardize:
        datasets = standardize(datasets)
    try:
        return sufficient_stats(datasets)
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def _parse_targets(s):
    if s is None:
        return None
    try:
        return frozenset(int(t) for t in s.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"bad target list {s!r}") from exc


def _lambda(args, N):
    if args.lam is not None and args.lambda_prime is not None:
        raise ConfigError("give either --lambda or --lambda-prime, not both")
    if args.lam is not None:
        if args.lam < 0:
            raise ConfigError("lambda must be non-negative")
        return args.lam
    lp = BIC_LAMBDA_PRIME if args.lambda_prime is None else args.lambda_prime
    if lp <= 0:
        raise ConfigError("lambda' must be positive")
    return lp * math.log(N)


# ------------------------------------------------------------------ commands

def cmd_generate(args):
    try:
        gp = GenParams(p=args.p, avg_degree=args.avg_degree,
                       weight_range=tuple(args.weight_range),
                       variance_range=tuple(args.variance_range),
                       intervention_variance_range=tuple(args.intervention_variance_range),
                       n_envs=args.n_envs, intervention_kind=args.kind, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.n < 2:
        raise ConfigError("n must be at least 2")
    data_seed = args.seed if args.data_seed is None else args.data_seed
    m, targets, env_targets = random_scm(gp)
    out = Path(args.out)
    files = []
    for e in range(gp.n_envs):
        X = sample(m, e, args.n, [data_seed, e])
        name = f"env_{e}.csv"
        write_csv(out / name, X)
        files.append(name)
    _write_atomic(out / "model.json", _dumps(m.to_json()))
    truth = {"targets": sorted(targets), "env_targets": [list(t) for t in env_targets],
             "kind": gp.intervention_kind}
    _write_atomic(out / "truth.json", _dumps(truth))
    manifest = {
        "kind": gp.intervention_kind,
        "model_seed": gp.seed,
        "data_seed": data_seed,
        "n": args.n,
        "params": {
            "p": gp.p,
            "avg_degree": gp.avg_degree,
            "weight_range": list(gp.weight_range),
            "variance_range": list(gp.variance_range),
            "intervention_variance_range": list(gp.intervention_variance_range),
            "n_envs": gp.n_envs,
        },
        "files": files,
    }
    _write_atomic(out / "manifest.json", _dumps(manifest))
    return 0


def _fit_one(args, stats, lam, cache):
    p = stats.p
    targets = _parse_targets(args.targets)
    known = _parse_targets(args.known_targets) or frozenset()
    for t in (targets or frozenset()) | known:
        if not 0 <= t < p:
            raise ConfigError(f"target {t} out of range for {p} variables")
    if args.pooled_ges:
        res = inner_fit(pool_stats(stats), (), lam, cache=None)
        return SearchResult(res.icpdag, frozenset(), res.score, lam, "pooled_ges", res.trace)
    if targets is not None:
        res = inner_fit(stats, targets, lam, cache)
        return SearchResult(res.icpdag, res.targets, res.score, lam, "known_targets", res.trace)
    return gnies_fit(stats, lam, method=args.method, known_targets=known, cache=cache,
                     threads=args.threads)


def cmd_fit(args):
    stats = _stats(args)
    lam = _lambda(args, stats.N)
    res = _fit_one(args, stats, lam, ScoreCache())
    out = res.to_json()
    out["n_total"] = stats.N
    _emit(_dumps(out), args.out)
    return 0


def _grid(s):
    try:
        grid = [float(v) for v in s.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad grid {s!r}") from exc
    if not grid:
        raise ConfigError("the lambda' grid is empty")
    if any(not v > 0 for v in grid):
        raise ConfigError("lambda' grid values must be positive")
    return grid


def cmd_path(args):
    grid = _grid(args.grid)
    stats = _stats(args)
    N = stats.N
    points = [(v, False) for v in grid]
    if BIC_LAMBDA_PRIME not in grid:
        points.append((BIC_LAMBDA_PRIME, True))
    cache = ScoreCache()  # unpenalized values, valid for every lambda
    lines = []
    for lp, marker in sorted(points):
        lam = lp * math.log(N)
        res = _fit_one(args, stats, lam, cache)
        row = {
            "lambda_prime": lp,
            "lambda": lam,
            "n_total": N,
            "bic": lp == BIC_LAMBDA_PRIME,
            "marker_only": marker,
            "n_edges": res.icpdag.n_edges,
            "result": res.to_json(),
        }
        lines.append(json.dumps(row, sort_keys=True, allow_nan=False))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def truth_class(m, targets, env_targets, kind, limit):
    d = m.dag
    if kind == "hard":
        mec = enumerate_class(dag_to_cpdag(d), (), limit)
        return GraphClass(g for g in mec.members if h_equivalent(d, g, env_targets))
    return enumerate_class(dag_to_icpdag(d, targets), targets, limit)


def cmd_eval(args):
    tdir = Path(args.truth)
    try:
        m = ScmModel.from_json(_load_json(tdir / "model.json"))
        truth = _load_json(tdir / "truth.json")
        targets = frozenset(truth["targets"])
        env_targets = [frozenset(t) for t in truth["env_targets"]]
        kind = truth.get("kind", "noise")
        res = _load_json(args.result)
        est = Pdag.from_json(res["icpdag"])
        est_targets = frozenset(res["targets"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed truth or result: {exc}") from exc
    if est.p != m.p:
        raise DataError(f"result has {est.p} nodes but the model has {m.p}")
    true_cls = truth_class(m, targets, env_targets, kind, args.limit)
    est_cls = enumerate_class(est, est_targets, args.limit)
    report = tdp_fdp(true_cls, est_cls).to_json()
    report["kind"] = kind
    report["true_targets"] = sorted(targets)
    report["est_targets"] = sorted(est_targets)
    _emit(_dumps(report), args.out)
    return 0


# -------------------------------------------------------------------- parser

def _range(s):
    try:
        lo, hi = (float(v) for v in s.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {s!r}") from exc
    return [lo, hi]


def _fit_flags(sp):
    sp.add_argument("data", help="directory of env_k.csv files or a CSV with an env column")
    sp.add_argument("--method", choices=("greedy", "rank"), default="greedy")
    sp.add_argument("--lambda", dest="lam", type=float, help="penalty weight")
    sp.add_argument("--lambda-prime", type=float,
                    help="penalty as a multiple of ln N (default 0.5, the BIC)")
    sp.add_argument("--targets", help="fit with these targets fixed, e.g. '0,2'")
    sp.add_argument("--known-targets", help="targets kept in every outer step")
    sp.add_argument("--pooled-ges", action="store_true", help="plain GES on pooled data")
    sp.add_argument("--standardize", action="store_true",
                    help="scale variables to unit pooled variance")
    sp.add_argument("--threads", type=int, help="worker threads (default GNIES_THREADS or 1)")
    sp.add_argument("--out", help="output file (default stdout)")


def build_parser():
    ap = argparse.ArgumentParser(prog="gnies", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON file of option defaults")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a model and write datasets")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--p", type=int, default=10)
    g.add_argument("--avg-degree", type=float, default=2.7)
    g.add_argument("--weight-range", type=_range, default=[0.5, 1.0])
    g.add_argument("--variance-range", type=_range, default=[1.0, 2.0])
    g.add_argument("--intervention-variance-range", type=_range, default=[5.0, 10.0])
    g.add_argument("--n-envs", type=int, default=5)
    g.add_argument("--n", type=int, default=1000, help="samples per environment")
    g.add_argument("--kind", choices=("noise", "hard"), default="noise")
    g.add_argument("--seed", type=int, default=0, help="model seed")
    g.add_argument("--data-seed", type=int, help="sampling seed (default: model seed)")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="estimate targets and the equivalence class")
    _fit_flags(f)
    f.set_defaults(func=cmd_fit)

    pa = sub.add_parser("path", help="fit along a grid of lambda' values (JSON lines)")
    _fit_flags(pa)
    pa.add_argument("--grid", default="0.01,0.25,0.5,1,2", help="comma-separated lambda' values")
    pa.set_defaults(func=cmd_path)

    e = sub.add_parser("eval", help="compare a fit result with the generating model")
    e.add_argument("--truth", required=True, help="directory written by 'generate'")
    e.add_argument("--result", required=True, help="result JSON written by 'fit'")
    e.add_argument("--limit", type=int, default=10**6, help="class enumeration cap")
    e.add_argument("--out", help="output file (default stdout)")
    e.set_defaults(func=cmd_eval)
    return ap, sub


def _apply_config(ap, sub, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        cfg = _load_json(known.config)
    except DataError as exc:
        raise ConfigError(str(exc)) from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    for name, sp in sub.choices.items():
        dests = {a.dest for a in sp._actions}
        sp.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()
                           if k.replace("-", "_") in dests})
    allowed = {a.dest for sp in sub.choices.values() for a in sp._actions}
    unknown = {k for k in cfg if k.replace("-", "_") not in allowed}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    ap, sub = build_parser()
    try:
        _apply_config(ap, sub, argv)
        args = ap.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"gnies: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DimensionMismatch) as exc:
        print(f"gnies: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GniesError as exc:
        print(f"gnies: solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
