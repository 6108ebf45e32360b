"""Command-line driver: ``gmprog run`` and ``gmprog bench``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .engine import EngineConfig, run
from .errors import GmProgError, InfeasibleProgram, InvalidCfg, SourceError
from .frontend import compile_source
from .mixture import map_estimate, marginalize, mixture_cov, mixture_mean
from .oracles import mc_estimate

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

# JSON schema of `run --json` output
RESULT_SCHEMA = {
    "type": "object",
    "required": ["program", "wall_time", "posterior", "evidence", "mean", "cov", "map",
                 "components"],
    "properties": {
        "program": {"type": "string"},
        "wall_time": {"type": "number", "minimum": 0},
        "posterior": {
            "type": "object",
            "required": ["vars", "weights", "means", "covs"],
            "properties": {
                "vars": {"type": "array", "items": {"type": "string"}},
                "weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "means": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                "covs": {"type": "array", "items": {"type": "array", "items": {
                    "type": "array", "items": {"type": "number"}}}},
            },
        },
        "evidence": {"type": "number", "minimum": 0},
        "mean": {"type": "array", "items": {"type": "number"}},
        "cov": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "map": {"type": "array", "items": {"type": "number"}},
        "components": {"type": "integer", "minimum": 1},
        "target": {"type": "string"},
        "trace": {"type": "array"},
        "oracle": {
            "type": "object",
            "required": ["mean", "std_err", "abs_dev", "rel_dev", "n_samples", "seed", "rng"],
        },
    },
}


def _parse_defines(items) -> dict:
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise argparse.ArgumentTypeError(f"--define expects NAME=VALUE, got {item!r}")
        out[name.strip()] = float(value)
    return out


def _fmt(x) -> str:
    return np.array2string(np.asarray(x, dtype=float), precision=6, floatmode="maxprec",
                           separator=", ")


def _report(path, result, wall, target, oracle) -> dict:
    post = result.posterior
    out = {"program": str(path), "wall_time": wall}
    out.update(result.to_json())
    if target is not None:
        i = post.index(target)
        marg = marginalize(post, [i])
        out["target"] = target
        out["mean"] = mixture_mean(marg).tolist()
        out["cov"] = mixture_cov(marg).tolist()
        out["map"] = map_estimate(marg).tolist()
    if oracle is not None:
        idx = [oracle.index(v) for v in ([target] if target else post.var_names)]
        om = oracle.mean[idx]
        sm = np.asarray(out["mean"])
        dev = np.abs(sm - om)
        out["oracle"] = {
            "mean": om.tolist(),
            "std_err": oracle.std_err_mean[idx].tolist(),
            "abs_dev": dev.tolist(),
            "rel_dev": (dev / np.maximum(np.abs(om), 1e-300)).tolist(),
            "n_samples": oracle.n_samples,
            "seed": oracle.seed,
            "rng": oracle.rng,
            "evidence": oracle.evidence,
        }
    return out


def _print_summary(rep: dict, out) -> None:
    names = [rep["target"]] if "target" in rep else rep["posterior"]["vars"]
    cov = np.asarray(rep["cov"])
    print(f"program:    {rep['program']}", file=out)
    print(f"variables:  {', '.join(names)}", file=out)
    print(f"evidence:   {rep['evidence']:.6g}", file=out)
    print(f"mean:       {_fmt(rep['mean'])}", file=out)
    print(f"variance:   {_fmt(np.diag(cov))}", file=out)
    print(f"map:        {_fmt(rep['map'])}", file=out)
    print(f"components: {rep['components']}", file=out)
    print(f"time:       {rep['wall_time']:.6g} s", file=out)
    if "oracle" in rep:
        o = rep["oracle"]
        print(f"mc mean:    {_fmt(o['mean'])} (n={o['n_samples']}, seed={o['seed']})", file=out)
        print(f"mc stderr:  {_fmt(o['std_err'])}", file=out)
        print(f"abs dev:    {_fmt(o['abs_dev'])}", file=out)


def cmd_run(args) -> int:
    path = Path(args.file)
    try:
        source = path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"{path}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        defines = _parse_defines(args.define)
        cfg = compile_source(source, defines)
        config = EngineConfig(record_trace=args.trace, prune_cap=args.prune_cap)
        start = time.perf_counter()
        result = run(cfg, config)
        wall = time.perf_counter() - start
        if args.target is not None and args.target not in result.posterior.var_names:
            print(f"{path}: unknown target variable {args.target!r}", file=sys.stderr)
            return EXIT_ERROR
        oracle = None
        if args.mc_check:
            oracle = mc_estimate(cfg, args.mc_check, args.seed)
    except SourceError as exc:
        print(exc.format(str(path)), file=sys.stderr)
        return EXIT_ERROR
    except InvalidCfg as exc:
        for d in exc.diagnostics:
            print(f"{path}: {d}", file=sys.stderr)
        return EXIT_ERROR
    except InfeasibleProgram as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (GmProgError, argparse.ArgumentTypeError, ValueError) as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    rep = _report(path, result, wall, args.target, oracle)
    if args.json:
        json.dump(rep, sys.stdout)
        sys.stdout.write("\n")
    else:
        _print_summary(rep, sys.stdout)
    return EXIT_OK


def _bench_one(prob: Path, side: dict, reps: int):
    cfg = compile_source(prob.read_text(encoding="utf-8"), side.get("define"))
    config = EngineConfig(prune_cap=side.get("prune_cap"))
    times = []
    result = None
    for _ in range(reps):
        start = time.perf_counter()
        result = run(cfg, config)
        times.append(time.perf_counter() - start)
    post = result.posterior
    value = float(mixture_mean(post)[post.index(side["target"])])
    return float(np.mean(times)), value


def cmd_bench(args) -> int:
    corpus = Path(args.dir)
    if not corpus.is_dir():
        print(f"{corpus}: not a directory", file=sys.stderr)
        return EXIT_ERROR
    rows = []
    failed = False
    for prob in sorted(corpus.glob("*.prob")):
        sidecar = prob.with_suffix(".json")
        if not sidecar.exists():
            print(f"warning: {prob.name}: no sidecar {sidecar.name}, skipped", file=sys.stderr)
            continue
        side = json.loads(sidecar.read_text(encoding="utf-8"))
        try:
            t, value = _bench_one(prob, side, args.reps)
        except GmProgError as exc:
            print(f"{prob.name}: {exc}", file=sys.stderr)
            rows.append((prob.stem, float("nan"), float("nan"), side["expected"], float("nan"), "ERROR"))
            failed = True
            continue
        expected = float(side["expected"])
        err = abs(value - expected)
        rel = err / abs(expected) if expected else err
        ok = err <= float(side["tol_abs"])
        failed |= not ok
        rows.append((prob.stem, t, value, expected, rel, "ok" if ok else "FAIL"))
    print(f"{'model':<20} {'time[s]':>10} {'value':>12} {'expected':>12} {'rel.err':>10}  status")
    for name, t, value, expected, rel, status in rows:
        print(f"{name:<20} {t:>10.4g} {value:>12.6g} {expected:>12.6g} {rel:>10.3g}  {status}")
    return EXIT_ERROR if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gmprog", description="Gaussian-mixture inference for probabilistic programs")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one program and report its posterior")
    r.add_argument("file")
    r.add_argument("--json", action="store_true", help="print the full result as JSON")
    r.add_argument("--target", metavar="VAR", help="report only this variable's marginal")
    r.add_argument("--mc-check", type=int, metavar="N", default=0,
                   help="compare against a Monte Carlo estimate with N samples")
    r.add_argument("--seed", type=int, default=0, metavar="S", help="seed for --mc-check")
    r.add_argument("--prune-cap", type=int, metavar="K", default=None,
                   help="prune any intermediate mixture above K components")
    r.add_argument("--define", action="append", metavar="NAME=VALUE",
                   help="bind a named constant (e.g. a loop bound)")
    r.add_argument("--trace", action="store_true", help="include per-node trace in JSON")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="run every program with a sidecar in a directory")
    b.add_argument("dir")
    b.add_argument("--reps", type=int, default=10, metavar="R")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
