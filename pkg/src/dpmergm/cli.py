"""Command-line entry point.

Every subcommand takes ``--config run.json`` and writes into one output
directory, always including ``manifest.json``. Exit codes: 0 success,
2 usage error, 3 invalid configuration or input data, 1 any other failure.
Failures print a JSON object to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__
from .assess import cocluster_matrix, gof_distance, group_samples, posterior_predictive, summarize_trace
from .dpm import DpmConfig, SamplerError, TraceWriter, read_trace, run_iims
from .errors import ConfigError, DpmErgmError, ParseError, SpecError, StructuralError
from .graph import FORMATS, Ensemble, Graph, load_ensemble, save_ensemble
from .pseudo import run_pms
from .ratio import sweep_estimator
from .simulate import SimConfig, simulate_draws
from .stats import ModelSpec, stats_matrix
from .synth import MixtureSpec, generate

REQUIRED = object()
MANIFEST_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(x):
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# config handling


def _section(d, schema, where, problems):
    """Validate dict ``d`` against ``schema`` (name -> default or REQUIRED)."""
    if not isinstance(d, dict):
        problems.append((where or "<root>", "expected an object"))
        return {}
    for k in sorted(set(d) - set(schema)):
        problems.append((f"{where}{k}", "unknown key"))
    out = {}
    for k, default in schema.items():
        if k in d:
            out[k] = d[k]
        elif default is REQUIRED:
            problems.append((f"{where}{k}", "required"))
        else:
            out[k] = default
    return out


def _guard(problems, field, fn, *args):
    try:
        return fn(*args)
    except ConfigError as e:
        problems.extend((f"{field}.{f}" if field else f, m) for f, m in e.problems)
    except (SpecError, ValueError, TypeError) as e:
        problems.append((field, str(e)))
    return None


def _sim(d, field, problems):
    s = _section(d or {}, {"burn_in": None, "thin": None}, f"{field}.", problems)
    return _guard(problems, field, lambda: SimConfig(s["burn_in"], s["thin"]))


def _model(terms, problems):
    if not isinstance(terms, list):
        problems.append(("model", "expected an array of term objects"))
        return None
    return _guard(problems, "model", ModelSpec, terms)


def _data(d, problems, base):
    s = _section(d, {"path": REQUIRED, "format": "json-bundle"}, "data.", problems)
    if "path" in s:
        p = Path(s["path"])
        p = p if p.is_absolute() else base / p
        if not p.exists():
            problems.append(("data.path", f"{p} does not exist"))
        s["path"] = str(p)
    if s.get("format") not in FORMATS:
        problems.append(("data.format", f"expected one of {list(FORMATS)}"))
    return s


def _resolve(path, base):
    p = Path(path)
    return p if p.is_absolute() else base / p


def load_config(path):
    p = Path(path)
    if not p.exists():
        raise ConfigError([("--config", f"{p} does not exist")])
    try:
        with open(p) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError([("--config", f"{p}:{e.lineno}: {e.msg}")]) from None
    if isinstance(cfg, dict) and "manifest_version" in cfg:
        cfg = cfg["config"]
    return cfg


# --------------------------------------------------------------------------
# subcommands; each returns (normalized config echo, manifest extras)


def cmd_synth(raw, out, base, workers):
    problems = []
    c = _section(raw, {"model": REQUIRED, "weights": REQUIRED, "thetas": REQUIRED, "n": REQUIRED,
                       "N": REQUIRED, "seed": 0, "directed": False, "sim": {}, "output_dir": None},
                 "", problems)
    spec = _model(c.get("model"), problems) if "model" in c else None
    sim = _sim(c.get("sim"), "sim", problems)
    ms = None
    if spec is not None and not problems:
        ms = _guard(problems, "", MixtureSpec, spec, c["weights"], c["thetas"], int(c["n"]), int(c["N"]),
                    int(c["seed"]), bool(c["directed"]))
    if problems:
        raise ConfigError(problems)
    ens, labels = generate(ms, sim, workers)
    path = save_ensemble(ens, out / "ensemble.json")
    return c, {"outputs": [path.name], "label_counts": np.bincount(labels).tolist()[1:]}


def _template(c, spec, problems, base):
    t = c["template"]
    if "data" in t:
        s = _section(t, {"data": REQUIRED, "index": 0}, "template.", problems)
        d = _data(s["data"], problems, base)
        if problems:
            return None, None
        ens = load_ensemble(d["path"], d["format"])
        i = int(s["index"])
        if not 0 <= i < ens.N:
            problems.append(("template.index", f"must be in [0, {ens.N})"))
            return None, None
        return ens.graphs[i], ens.covariates_for(i)
    s = _section(t, {"n": REQUIRED, "directed": False}, "template.", problems)
    if problems:
        return None, None
    return Graph.empty(int(s["n"]), bool(s["directed"])), None


def cmd_simulate(raw, out, base, workers):
    problems = []
    c = _section(raw, {"model": REQUIRED, "theta": REQUIRED, "template": REQUIRED, "count": 1,
                       "seed": 0, "sim": {}, "output_dir": None}, "", problems)
    spec = _model(c.get("model"), problems) if "model" in c else None
    sim = _sim(c.get("sim"), "sim", problems)
    g, cov = _template(c, spec, problems, base) if "template" in c else (None, None)
    if int(c.get("count", 1)) < 1:
        problems.append(("count", "must be >= 1"))
    if problems:
        raise ConfigError(problems)
    graphs, stats = simulate_draws(spec, c["theta"], g, cov, int(c["count"]), sim.with_seed(int(c["seed"])))
    save_ensemble(Ensemble(graphs, cov), out / "graphs.json")
    _write_rows(out / "stats.csv", spec.labels, ([_fmt(x) for x in row] for row in stats))
    return c, {"outputs": ["graphs.json", "stats.csv"], "mean_stats": stats.mean(axis=0).tolist()}


def cmd_ratio_sweep(raw, out, base, workers):
    problems = []
    c = _section(raw, {"model": REQUIRED, "theta": REQUIRED, "theta_prime": REQUIRED,
                       "m1_grid": [0, 2, 5], "m2_grid": [10, 100, 1000], "replications": 20,
                       "n": 4, "directed": False, "seed": 0, "sim": {}, "output_dir": None}, "", problems)
    spec = _model(c.get("model"), problems) if "model" in c else None
    sim = _sim(c.get("sim"), "sim", problems)
    for k in ("m1_grid", "m2_grid"):
        if not isinstance(c.get(k), list) or not c.get(k):
            problems.append((k, "expected a non-empty array"))
    if problems:
        raise ConfigError(problems)
    rows = sweep_estimator(spec, c["theta"], c["theta_prime"], c["m1_grid"], c["m2_grid"],
                           int(c["replications"]), n=int(c["n"]), directed=bool(c["directed"]),
                           sim=sim, seed=int(c["seed"]), workers=workers)
    _write_rows(out / "sweep.csv", ["m1", "m2", "replication", "estimate", "exact"],
                ([r["m1"], r["m2"], r["replication"], _fmt(r["estimate"]),
                  "" if r["exact"] is None else _fmt(r["exact"])] for r in rows))
    return c, {"outputs": ["sweep.csv"], "rows": len(rows)}


def _fit(raw, out, base, workers, which):
    problems = []
    c = _section(raw, {"data": REQUIRED, "model": REQUIRED, "dpm": REQUIRED, "output_dir": None},
                 "", problems)
    d = _data(c["data"], problems, base) if "data" in c else None
    spec = _model(c.get("model"), problems) if "model" in c else None
    dpm = _guard(problems, "dpm", DpmConfig.from_dict, c["dpm"]) if isinstance(c.get("dpm"), dict) else None
    if "dpm" in c and not isinstance(c["dpm"], dict):
        problems.append(("dpm", "expected an object"))
    if spec is not None and dpm is not None and spec.d != dpm.d:
        problems.append(("dpm.mu0", f"length {dpm.d} does not match the model dimension {spec.d}"))
    if problems:
        raise ConfigError(problems)
    ens = load_ensemble(d["path"], d["format"])
    for i in range(ens.N):
        spec.validate(ens.n, ens.directed, ens.covariates_for(i))
    warnings = []
    if which == "pms" and any(k in c["dpm"] for k in ("ratio_mmcmh", "ratio_alloc")):
        warnings.append("ratio_mmcmh/ratio_alloc are ignored by fit-pms")
        print(json.dumps({"warning": warnings[-1]}), file=sys.stderr)
    run = run_iims if which == "iims" else run_pms
    echo = dict(c, dpm=dpm.to_dict(), data=d)
    with TraceWriter(out / "trace.csv") as tw:
        try:
            trace = run(ens, spec, dpm, workers=workers, on_record=tw)
        except SamplerError as e:
            raise RunFailed(str(e), {"iterations_completed": len(e.trace)}) from e
    acc = summarize_trace(trace, dpm.burn_in)
    return echo, {"outputs": ["trace.csv"], "warnings": warnings,
                  "acceptance_rates": {g: v["acceptance_rate"] for g, v in acc["groups"].items()},
                  "modal_k_star": acc["modal_k_star"], "modal_occupied": acc["modal_occupied"]}


class RunFailed(Exception):
    def __init__(self, message, extra):
        super().__init__(message)
        self.extra = extra


def cmd_fit_iims(raw, out, base, workers):
    return _fit(raw, out, base, workers, "iims")


def cmd_fit_pms(raw, out, base, workers):
    return _fit(raw, out, base, workers, "pms")


def cmd_assess(raw, out, base, workers):
    problems = []
    c = _section(raw, {"data": REQUIRED, "model": REQUIRED, "trace": REQUIRED, "burn_in": 0,
                       "ppc": {}, "output_dir": None}, "", problems)
    d = _data(c["data"], problems, base) if "data" in c else None
    spec = _model(c.get("model"), problems) if "model" in c else None
    tpath = _resolve(c["trace"], base) if "trace" in c else None
    if tpath is not None and not tpath.exists():
        problems.append(("trace", f"{tpath} does not exist"))
    p = _section(c.get("ppc", {}), {"count": 500, "mode": "from-mean", "thin": 50, "seed": 0, "sim": {}},
                 "ppc.", problems)
    sim = _sim(p.get("sim"), "ppc.sim", problems)
    if p.get("mode") not in ("from-mean", "from-samples"):
        problems.append(("ppc.mode", "expected 'from-mean' or 'from-samples'"))
    if problems:
        raise ConfigError(problems)
    ens = load_ensemble(d["path"], d["format"])
    trace = read_trace(tpath, spec.d)
    if trace and trace[0].z.shape[0] != ens.N:
        raise ConfigError([("trace", f"trace has {trace[0].z.shape[0]} networks, data has {ens.N}")])
    burn = int(c["burn_in"])
    try:
        summary = summarize_trace(trace, burn, densities=True)
    except DpmErgmError as e:
        raise ConfigError([("burn_in", str(e))]) from None
    C = cocluster_matrix(trace, burn)
    blocks = np.array(summary["modal_assignment"])
    thetas, _ = group_samples(trace, burn, blocks)
    obs = stats_matrix(spec, ens.graphs, [ens.covariates_for(i) for i in range(ens.N)])
    sims, rows = {}, []
    for g in range(1, int(blocks.max()) + 1):
        if len(thetas[g]) == 0:
            continue
        first = int(np.flatnonzero(blocks == g)[0])
        src = thetas[g] if p["mode"] == "from-samples" else thetas[g].mean(axis=0)
        sims[g] = posterior_predictive(spec, src, ens.graphs[first], ens.covariates_for(first),
                                       int(p["count"]), p["mode"], sim, int(p["thin"]),
                                       seed=int(p["seed"]) + g)
        rows.extend([g] + [_fmt(x) for x in r] for r in sims[g])
    dist = gof_distance(obs, blocks, sims)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    _write_rows(out / "cocluster.csv", [str(i) for i in range(ens.N)], ([_fmt(x) for x in r] for r in C))
    _write_rows(out / "ppc_stats.csv", ["group"] + spec.labels, rows)
    _write_rows(out / "distance.csv", ["group", "distance"], ([g, _fmt(v)] for g, v in dist.items()))
    return c, {"outputs": ["summary.json", "cocluster.csv", "ppc_stats.csv", "distance.csv"],
               "modal_k_star": summary["modal_k_star"],
               "acceptance_rates": {g: v["acceptance_rate"] for g, v in summary["groups"].items()}}


COMMANDS = {
    "synth": cmd_synth,
    "simulate": cmd_simulate,
    "ratio-sweep": cmd_ratio_sweep,
    "fit-iims": cmd_fit_iims,
    "fit-pms": cmd_fit_pms,
    "assess": cmd_assess,
}


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _versions():
    out = {"python": platform.python_version(), "dpmergm": __version__}
    for pkg in ("numpy", "scipy", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def build_parser():
    p = _Parser(prog="dpmergm", description="Dirichlet-process mixtures of ERGMs for network ensembles.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="run configuration (JSON); a manifest also works")
        s.add_argument("--out", help="output directory (overrides output_dir in the config)")
        s.add_argument("--workers", type=int, default=1, help="concurrent chains (output does not depend on it)")
    return p


def _fail(code, payload):
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        return _fail(2, {"error": "usage", "message": str(e)})
    if args.workers < 1:
        return _fail(2, {"error": "usage", "message": "--workers must be >= 1"})
    t0 = time.time()
    try:
        raw = load_config(args.config)
        base = Path(args.config).resolve().parent
        out = args.out or (raw.get("output_dir") if isinstance(raw, dict) else None)
        if not out:
            raise ConfigError([("output_dir", "required (or pass --out)")])
        out = _resolve(out, Path.cwd() if args.out else base)
        out.mkdir(parents=True, exist_ok=True)
        echo, extra = COMMANDS[args.command](raw, out, base, args.workers)
    except ConfigError as e:
        return _fail(3, {"error": "config", "problems": [{"field": f, "message": m} for f, m in e.problems]})
    except (ParseError, StructuralError, SpecError) as e:
        return _fail(3, {"error": type(e).__name__, "message": str(e)})
    except RunFailed as e:
        return _fail(1, {"error": "run", "message": str(e), **e.extra})
    except DpmErgmError as e:
        return _fail(1, {"error": type(e).__name__, "message": str(e)})
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "command": args.command,
        "config": echo,
        "seed": _seed_of(echo),
        "workers": args.workers,
        "versions": _versions(),
        "wall_clock_seconds": time.time() - t0,
        **extra,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    return 0


def _seed_of(echo):
    if "dpm" in echo:
        return echo["dpm"]["seed"]
    return echo.get("seed")


if __name__ == "__main__":
    sys.exit(main())
