"""Command-line experiment runner.

Subcommands ``run``, ``certify``, ``sweep``, ``fit-rate`` and ``enumerate``
all read one JSON config.  Outputs (CSV traces, certificate traces, sweep
summaries, SVG charts, JSON manifests) go to ``--out`` or the config's
``output`` directory.

Exit codes: 0 success, 1 certificate failure, 2 invalid config or input,
3 scheme/method mismatch, 4 run cap exceeded, 5 divergence.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import itertools
import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import certificates as cert
from . import estimators as est
from . import methods as meth
from . import prox as proxlib
from . import schedules as sched
from .errors import CertificateFailure, DescentLabError, Diverged, InvalidArgument, Unsupported
from .problems import as_weights, problem_from_dict

EXIT_OK, EXIT_CERT, EXIT_CONFIG, EXIT_MISMATCH, EXIT_CAP, EXIT_DIVERGED = 0, 1, 2, 3, 4, 5
SEED_ENV = "DESCENTLAB_SEED"
DEFAULT_CAP = 1000
NO_SCHEDULE = ("nesterov", "dual_averaging")


class ConfigError(Exception):
    """Invalid config; the message names the offending key."""

    def __init__(self, key, message):
        super().__init__(f"config error at '{key}': {message}")
        self.key = key


class Mismatch(Exception):
    pass


# --------------------------------------------------------------------------
# config handling


def load_config(path):
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("--config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("--config", "top level must be a JSON object")
    doc.setdefault("_base", str(path.parent))
    return doc


def config_hash(doc):
    clean = {k: v for k, v in doc.items() if k not in ("seeds", "output", "_base")}
    blob = json.dumps(clean, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _require(doc, key):
    if key not in doc:
        raise ConfigError(key, "missing required key")
    return doc[key]


def _wrap(key, fn, *args):
    try:
        return fn(*args)
    except InvalidArgument as exc:
        raise ConfigError(key, str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, str(exc)) from None


def build_problem(doc):
    spec = _require(doc, "problem")
    if isinstance(spec, str):
        path = Path(doc.get("_base", ".")) / spec
        if not path.exists():
            raise ConfigError("problem", f"fixture file not found: {path}")
        with open(path) as fh:
            spec = json.load(fh)
    return _wrap("problem", problem_from_dict, spec)


def horizon(doc):
    T = _require(doc, "T")
    if not isinstance(T, int) or isinstance(T, bool) or T < 1:
        raise ConfigError("T", f"horizon must be an integer >= 1, got {T!r}")
    return T


def initial_point(doc, problem):
    w0 = doc.get("w0", 0.0)
    if np.ndim(w0) == 0:
        return np.full(problem.dim, float(w0))
    return _wrap("w0", as_weights, w0, problem.dim)


def seeds_for(doc, cli_seeds=None):
    if cli_seeds:
        return list(cli_seeds)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return [int(s) for s in env.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(SEED_ENV, f"expected comma-separated integers, got {env!r}") from None
    seeds = doc.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds", "must be a nonempty list of integers")
    return seeds


def build_policy(doc, problem):
    return _wrap("schedule", sched.policy_from_dict, _require(doc, "schedule"), problem)


def is_stochastic(doc):
    return "sgd" in doc


def build_sgd_spec(doc, problem):
    sgd = doc["sgd"]
    if not isinstance(sgd, dict):
        raise ConfigError("sgd", "must be an object")
    policy = build_policy(doc, problem)
    args = {k: v for k, v in sgd.items() if k in ("estimator", "b", "beta", "stages", "inner", "snapshot", "loopless")}
    unknown = set(sgd) - set(args)
    if unknown:
        raise ConfigError(f"sgd.{sorted(unknown)[0]}", "unknown key")
    args.setdefault("inner", horizon(doc))
    if "prox" in doc:
        args["projection"] = _wrap("prox", proxlib.prox_from_dict, doc["prox"])
    return _wrap("sgd", lambda: est.SgdDriverSpec(policy=policy, **args))


def execute(doc, problem, seed):
    """One run of the configured method; returns a RunRecord."""
    with np.errstate(over="ignore", invalid="ignore"):
        return _execute(doc, problem, seed)


def _execute(doc, problem, seed):
    T = horizon(doc)
    w0 = initial_point(doc, problem)
    if is_stochastic(doc):
        spec = build_sgd_spec(doc, problem)
        return est.run_unified_sgd(problem, spec, w0, seed=seed)
    mdoc = dict(_require(doc, "method"))
    if mdoc.get("kind") == "noisy_gd":
        mdoc.setdefault("seed", seed)
    method = _wrap("method", meth.method_from_dict, mdoc)
    if mdoc["kind"] in NO_SCHEDULE:
        policy = None
    else:
        policy = build_policy(doc, problem)
    try:
        return meth.run_deterministic(problem, method, policy, w0, T)
    except InvalidArgument as exc:
        raise ConfigError("method", str(exc)) from None


# --------------------------------------------------------------------------
# output helpers


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_manifest(path, doc, seed, wall_time, command, outputs):
    manifest = {
        "command": command,
        "config_hash": config_hash(doc),
        "seed": seed,
        "git_describe": git_describe(),
        "wall_time": wall_time,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": [str(p) for p in outputs],
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def out_dir(args, doc):
    d = Path(args.out or doc.get("output") or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def svg_loglog(series, title="", width=640, height=420):
    """Minimal SVG line chart with log-log axes.  ``series`` maps label -> (t, y)."""
    pad = 50
    pts = {k: [(t, y) for t, y in zip(*v) if t > 0 and y > 0 and math.isfinite(y)] for k, v in series.items()}
    allp = [p for v in pts.values() for p in v]
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
             'fill="none" stroke="black"/>',
             f'<text x="{width / 2}" y="{pad / 2}" text-anchor="middle" font-size="14">{title}</text>']
    if allp:
        lx = [math.log10(t) for t, _ in allp]
        ly = [math.log10(y) for _, y in allp]
        x0, x1 = min(lx), max(lx) if max(lx) > min(lx) else min(lx) + 1
        y0, y1 = min(ly), max(ly) if max(ly) > min(ly) else min(ly) + 1

        def sx(t):
            return pad + (math.log10(t) - x0) / (x1 - x0) * (width - 2 * pad)

        def sy(y):
            return height - pad - (math.log10(y) - y0) / (y1 - y0) * (height - 2 * pad)

        parts.append(f'<text x="{pad}" y="{height - pad / 3}" font-size="11">t = 1e{x0:.1f} .. 1e{x1:.1f}'
                     f' (log); y = 1e{y0:.1f} .. 1e{y1:.1f} (log)</text>')
        for i, (label, p) in enumerate(pts.items()):
            if not p:
                continue
            col = colors[i % len(colors)]
            poly = " ".join(f"{sx(t):.2f},{sy(y):.2f}" for t, y in p)
            parts.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{poly}"/>')
            parts.append(f'<text x="{width - pad + 4}" y="{pad + 14 * (i + 1)}" font-size="10" fill="{col}">'
                         f'{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --------------------------------------------------------------------------
# subcommands


def cmd_run(args):
    doc = load_config(args.config)
    problem = build_problem(doc)
    horizon(doc)
    tag = config_hash(doc)[:12]
    outdir = out_dir(args, doc)
    for seed in seeds_for(doc, args.seed):
        start = time.perf_counter()
        run = execute(doc, problem, seed)
        path = outdir / f"run-{tag}-seed{seed}.csv"
        path.write_text(csv_text(meth.CSV_COLUMNS, run.rows()))
        write_manifest(outdir / f"run-{tag}-seed{seed}.manifest.json", doc, seed,
                       time.perf_counter() - start, "run", [path])
        print(f"wrote {path} ({run.T + 1} rows)")
    return EXIT_OK


def _scheme(doc):
    spec = _require(doc, "certificate")
    scheme = spec.get("scheme") if isinstance(spec, dict) else spec
    if scheme not in cert.SCHEMES:
        raise ConfigError("certificate", f"unknown scheme {scheme!r}")
    return scheme


def _report(trace):
    print(f"scheme {trace.scheme}: min slack {trace.min_slack!r}")
    if trace.first_violation is not None:
        where, reason, value = trace.first_violation
        print(f"first violation at {where}: {reason} = {value!r}")
    return EXIT_OK if trace.ok else EXIT_CERT


def cmd_certify(args):
    doc = load_config(args.config)
    problem = build_problem(doc)
    scheme = _scheme(doc)
    T = horizon(doc)
    tag = config_hash(doc)[:12]
    outdir = out_dir(args, doc)
    seeds = seeds_for(doc, args.seed)
    start = time.perf_counter()
    if scheme in ("sgd_convex_enumerated", "sgd_nonconvex_enumerated"):
        return _enumerated(doc, problem, scheme, outdir, tag)
    if scheme == "hybrid_vr":
        if not is_stochastic(doc) or doc["sgd"].get("estimator") != "hybrid":
            raise Mismatch("hybrid_vr needs an 'sgd' block with estimator 'hybrid'")
        L = problem.constants.L_avg or problem.constants.L
        prm0 = cert.HybridCertParams.from_horizon(L, T)
        doc = copy.deepcopy(doc)
        doc["schedule"] = {"kind": "constant", "eta": prm0.eta}
        doc["sgd"]["beta"] = prm0.beta
        runs = [execute(doc, problem, s) for s in seeds]
        b = doc["sgd"].get("b", 1)
        sh = max(est.sampling_variance(problem, w, b) for r in runs for w in r.iterates)
        prm = cert.HybridCertParams.from_horizon(L, T, sigma_hat_sq=sh)
        try:
            trace = cert.certify_hybrid(runs, prm, problem, strict=False, min_runs=min(20, len(seeds)))
        except InvalidArgument as exc:
            raise ConfigError("seeds", str(exc)) from None
        x = trace.extras
        print(f"ensemble mean {x['mean']!r} bound {x['bound']!r} margin {x['margin']!r}")
        return EXIT_OK if trace.ok else EXIT_CERT
    if is_stochastic(doc):
        raise Mismatch(f"scheme {scheme!r} certifies deterministic methods only")
    kind = _require(doc, "method").get("kind")
    if kind not in cert.COMPATIBLE[scheme]:
        raise Mismatch(f"scheme {scheme!r} does not apply to method {kind!r}")
    status = EXIT_OK
    for seed in seeds:
        run = execute(doc, problem, seed)
        try:
            trace = cert.certify_deterministic(run, problem, scheme, strict=False)
        except InvalidArgument as exc:
            raise Mismatch(str(exc)) from None
        path = outdir / f"certificate-{tag}-seed{seed}.csv"
        path.write_text(csv_text(cert.TRACE_COLUMNS, trace.rows()))
        write_manifest(outdir / f"certificate-{tag}-seed{seed}.manifest.json", doc, seed,
                       time.perf_counter() - start, "certify", [path])
        status = max(status, _report(trace))
    return status


def _enumerated(doc, problem, scheme, outdir, tag):
    if not is_stochastic(doc):
        raise Mismatch(f"scheme {scheme!r} needs an 'sgd' block")
    spec = build_sgd_spec(doc, problem)
    try:
        trace = cert.certify_stochastic_enumerated(problem, spec, initial_point(doc, problem), horizon(doc),
                                                   scheme, strict=False)
    except Unsupported as exc:
        raise Mismatch(str(exc)) from None
    path = outdir / f"enumerated-{tag}.csv"
    path.write_text(csv_text(cert.TRACE_COLUMNS, trace.rows()))
    x = trace.extras
    print(f"paths {x['paths']} nodes {x['nodes']} root bias {x['root_bias']!r}")
    return _report(trace)


def cmd_enumerate(args):
    doc = load_config(args.config)
    problem = build_problem(doc)
    spec = doc.get("certificate", "sgd_convex_enumerated")
    scheme = spec.get("scheme") if isinstance(spec, dict) else spec
    if scheme not in ("sgd_convex_enumerated", "sgd_nonconvex_enumerated"):
        raise ConfigError("certificate", f"enumerate needs an enumerated scheme, got {scheme!r}")
    return _enumerated(doc, problem, scheme, out_dir(args, doc), config_hash(doc)[:12])


def _set_path(doc, dotted, value):
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(dotted, "grid path does not name a config field")
        node = node[k]
    node[keys[-1]] = value


def _metric(run, name):
    if name == "F_gap":
        return run.F_gap
    if name in ("grad_norm_sq", "dist_sq", "F"):
        return np.asarray(getattr(run, name), dtype=float)
    raise ConfigError("metric", f"unknown metric {name!r}")


def cmd_sweep(args):
    doc = load_config(args.config)
    grid = _require(doc, "grid")
    if not isinstance(grid, dict) or not grid or any(not isinstance(v, list) or not v for v in grid.values()):
        raise ConfigError("grid", "grid must map config paths to nonempty lists")
    seeds = seeds_for(doc, args.seed)
    keys = list(grid)
    points = list(itertools.product(*(grid[k] for k in keys)))
    cap = args.cap if args.cap is not None else doc.get("cap", DEFAULT_CAP)
    total = len(points) * len(seeds)
    if total > cap:
        print(f"sweep needs {total} runs, cap is {cap}", file=sys.stderr)
        return EXIT_CAP
    metric_name = doc.get("metric", "F_gap")
    outdir = out_dir(args, doc)
    tag = config_hash(doc)[:12]
    rows, series = [], {}
    start = time.perf_counter()
    for point in points:
        sub = copy.deepcopy(doc)
        for k, v in zip(keys, point):
            _set_path(sub, k, v)
        problem = build_problem(sub)
        label = ", ".join(f"{k}={json.dumps(v, sort_keys=True)}" for k, v in zip(keys, point))
        for seed in seeds:
            run = execute(sub, problem, seed)
            y = _metric(run, metric_name)
            t = np.arange(len(y), dtype=float)
            try:
                slope = cert.fit_rate(y[1:], 0.5, t=t[1:])
            except InvalidArgument:
                slope = None
            rows.append((label, seed, float(y[-1]), slope))
            series[f"{label} seed {seed}"] = (t, y)
    path = outdir / f"sweep-{tag}.csv"
    path.write_text(csv_text(("point", "seed", f"final_{metric_name}", "slope"), rows))
    chart = outdir / f"sweep-{tag}.svg"
    chart.write_text(svg_loglog(series, title=f"{metric_name} vs t"))
    write_manifest(outdir / f"sweep-{tag}.manifest.json", doc, seeds, time.perf_counter() - start, "sweep",
                   [path, chart])
    for r in rows:
        print(",".join(_fmt(x) for x in r))
    return EXIT_OK


def cmd_fit_rate(args):
    if args.csv is None and args.config is None:
        raise ConfigError("--csv", "fit-rate needs --csv FILE or --config FILE")
    if args.csv is not None:
        try:
            with open(args.csv) as fh:
                reader = csv.DictReader(fh)
                data = [(r["t"], r.get(args.column)) for r in reader]
        except FileNotFoundError:
            raise ConfigError("--csv", f"file not found: {args.csv}") from None
        if any(v is None for _, v in data):
            raise ConfigError("--column", f"column {args.column!r} not in {args.csv}")
        pairs = [(float(t), float(v)) for t, v in data if v != ""]
    else:
        doc = load_config(args.config)
        problem = build_problem(doc)
        run = execute(doc, problem, seeds_for(doc, args.seed)[0])
        y = _metric(run, args.column)
        pairs = list(zip(range(len(y)), y))
    t = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    keep = t > 0
    window = tuple(args.t_range) if args.t_range else args.window
    try:
        slope = cert.fit_rate(y[keep], window, t=t[keep])
    except InvalidArgument as exc:
        raise ConfigError(args.column, str(exc)) from None
    print(repr(slope))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="descentlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="experiment config (JSON)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, action="append", help="seed (repeatable)")
        return sp

    common(sub.add_parser("run", help="run a method and write its CSV trace")).set_defaults(fn=cmd_run)
    common(sub.add_parser("certify", help="check a potential-function certificate")).set_defaults(fn=cmd_certify)
    sp = common(sub.add_parser("sweep", help="run a parameter grid"))
    sp.add_argument("--cap", type=int, help="maximum number of runs")
    sp.set_defaults(fn=cmd_sweep)
    sp = common(sub.add_parser("fit-rate", help="fit a log-log rate to a trace"), config_required=False)
    sp.add_argument("--csv", help="run trace CSV")
    sp.add_argument("--column", default="F_gap")
    sp.add_argument("--window", type=float, default=0.5, help="tail fraction")
    sp.add_argument("--t-range", type=float, nargs=2, metavar=("LO", "HI"))
    sp.set_defaults(fn=cmd_fit_rate)
    common(sub.add_parser("enumerate", help="exact expectation-tree certificate")).set_defaults(fn=cmd_enumerate)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except Mismatch as exc:
        print(f"scheme/method mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except Diverged as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DIVERGED
    except CertificateFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CERT
    except DescentLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
