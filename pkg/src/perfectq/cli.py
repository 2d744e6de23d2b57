"""Command-line front end.

Subcommands: sample-infinite, sample-loss, sample-network, validate, bench.
Configuration is a single JSON file with nested sections; unknown keys are
rejected.  Output files are deterministic: reruns with identical inputs are
byte-identical (timing is printed to the console and kept out of the files
unless --timing is given, which opts out of byte-stable output).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .coalescence import StationModel, perfect_sample_infinite, perfect_sample_loss
from .distributions import from_config
from .errors import (BlockBudgetExceeded, ConfigError, IterationCap, NoRoot,
                     PerfectQError)
from .network import LossNetworkModel, Route, perfect_sample_network, validate_model
from .rng import RngStream, mix64
from .validation import (chi_square_test, erlang_b_distribution,
                         product_form_distribution, run_scaling_benchmark,
                         tv_distance)

_EXIT_OK = 0
_EXIT_CONFIG = 2
_EXIT_BUDGET = 3

_TOP_KEYS = {"model", "sampler", "experiment", "output"}
_MODEL_KEYS = {"kind", "interarrival", "service", "capacity", "scale",
               "capacities", "routes"}
_SAMPLER_KEYS = {"epsilon", "m", "max_blocks"}
_EXPERIMENT_KEYS = {"n", "seed", "s_values", "replications", "regime",
                    "beta", "horizon"}
_OUTPUT_KEYS = {"format", "dir"}
_ROUTE_KEYS = {"stations", "interarrival", "service"}


def _reject_unknown(section: dict, allowed: set, where: str):
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required field '{key}' in {where}")
    return section[key]


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    _reject_unknown(cfg, _TOP_KEYS, "config root")
    _reject_unknown(cfg.get("sampler", {}), _SAMPLER_KEYS, "sampler")
    _reject_unknown(cfg.get("experiment", {}), _EXPERIMENT_KEYS, "experiment")
    _reject_unknown(cfg.get("output", {}), _OUTPUT_KEYS, "output")
    model = _require(cfg, "model", "config")
    _reject_unknown(model, _MODEL_KEYS, "model")
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def build_station(cfg: dict) -> StationModel:
    model = cfg["model"]
    sampler = cfg.get("sampler", {})
    cap = model.get("capacity", None)
    capacity = math.inf if cap is None else float(cap)
    sm = StationModel(
        interarrival=from_config(_require(model, "interarrival", "model")),
        service=from_config(_require(model, "service", "model")),
        capacity=capacity,
        scale=int(model.get("scale", 1)),
        epsilon=sampler.get("epsilon"),
        m=sampler.get("m"),
        max_blocks=int(sampler.get("max_blocks", 10 ** 4)))
    errs = sm.validate()
    if errs:
        raise ConfigError("; ".join(errs))
    return sm


def build_network(cfg: dict) -> LossNetworkModel:
    model = cfg["model"]
    sampler = cfg.get("sampler", {})
    routes = []
    for i, rc in enumerate(_require(model, "routes", "model")):
        _reject_unknown(rc, _ROUTE_KEYS, f"routes[{i}]")
        routes.append(Route(
            stations=tuple(int(v) for v in _require(rc, "stations", f"routes[{i}]")),
            interarrival=from_config(_require(rc, "interarrival", f"routes[{i}]")),
            service=from_config(_require(rc, "service", f"routes[{i}]"))))
    nm = LossNetworkModel(
        capacities=tuple(float(c) if c is not None else math.inf
                         for c in _require(model, "capacities", "model")),
        routes=routes,
        scale=int(model.get("scale", 1)),
        epsilon=sampler.get("epsilon"),
        m=sampler.get("m"),
        max_blocks=int(sampler.get("max_blocks", 10 ** 4)))
    errs = validate_model(nm)
    if errs:
        raise ConfigError("; ".join(errs))
    return nm


def _fmt(x) -> str:
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


def _csv_cell(x) -> str:
    s = _fmt(x)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def write_records(records: list[dict], out_path: Path, fmt: str, header: dict):
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        with open(out_path, "w") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    else:
        cols = sorted({k for rec in records for k in rec}) if records else []
        with open(out_path, "w", newline="") as fh:
            meta_cols = ["config_hash", "version"]
            fh.write(",".join(meta_cols + cols) + "\r\n")
            for rec in records:
                row = [header["config_hash"], header["version"]]
                for c in cols:
                    v = rec.get(c)
                    if isinstance(v, (list, tuple)):
                        v = ";".join(_fmt(x) for x in v)
                    elif v is None:
                        v = ""
                    row.append(v)
                fh.write(",".join(_csv_cell(v) for v in row) + "\r\n")


def _out_dir(cfg: dict, args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(cfg.get("output", {}).get("dir")
                or os.environ.get("PERFECTQ_OUT", "runs"))


def _run_samples(kind: str, cfg: dict, args) -> int:
    n = args.n or int(cfg.get("experiment", {}).get("n", 100))
    seed = args.seed if args.seed is not None else int(
        cfg.get("experiment", {}).get("seed", 0))
    fmt = cfg.get("output", {}).get("format", "json")
    h = config_hash(cfg)
    tag = int(h[:16], 16)
    t0 = time.perf_counter()
    records = []
    if kind == "network":
        model = build_network(cfg)
        for rep in range(n):
            ns = perfect_sample_network(model, RngStream(seed, mix64(tag, rep)))
            records.append(ns.to_record(include_timing=args.timing))
        occ_mean = float(np.mean([sum(r["stations"]) for r in records]))
    else:
        model = build_station(cfg)
        sampler = perfect_sample_infinite if kind == "infinite" else perfect_sample_loss
        for rep in range(n):
            ps = sampler(model, RngStream(seed, mix64(tag, rep)))
            records.append(ps.to_record(include_timing=args.timing))
        occ_mean = float(np.mean([r["occupancy"] for r in records]))
    wall = time.perf_counter() - t0
    header = {"config_hash": h, "seed": seed, "version": __version__,
              "n": n, "command": f"sample-{kind}"}
    out = _out_dir(cfg, args) / f"sample-{kind}-{h[:8]}-seed{seed}.{ 'jsonl' if fmt=='json' else 'csv'}"
    write_records(records, out, fmt, header)
    print(f"sample-{kind}: n={n} seed={seed} mean_occupancy={occ_mean:.4f} "
          f"-> {out} ({wall:.1f}s)")
    return _EXIT_OK


def _run_validate(cfg: dict, args) -> int:
    n = args.n or int(cfg.get("experiment", {}).get("n", 2000))
    seed = args.seed if args.seed is not None else int(
        cfg.get("experiment", {}).get("seed", 0))
    h = config_hash(cfg)
    tag = int(h[:16], 16)
    oracle = args.oracle
    provenance = {"seed": seed, "config_hash": h, "n": n}
    if oracle == "product-form":
        model = build_network(cfg)
        target = product_form_distribution(model)
        counts: dict[tuple[int, ...], int] = {}
        for rep in range(n):
            ns = perfect_sample_network(model, RngStream(seed, mix64(tag, rep)))
            counts[ns.route_counts] = counts.get(ns.route_counts, 0) + 1
        states = sorted(target)
        obs = np.array([counts.get(st, 0) for st in states], dtype=float)
        probs = np.array([target[st] for st in states])
        report = chi_square_test(obs, probs, name="product-form",
                                 provenance=provenance)
        tv = tv_distance(obs / n, probs)
    else:
        model = build_station(cfg)
        occ = []
        for rep in range(n):
            ps = (perfect_sample_infinite if model.capacity == math.inf
                  else perfect_sample_loss)(model, RngStream(seed, mix64(tag, rep)))
            occ.append(ps.state.occupancy)
        occ = np.asarray(occ)
        a = (model.service.mean() /
             model.interarrival.scaled(model.scale).mean())
        if oracle == "erlang":
            if model.capacity == math.inf:
                raise ConfigError("erlang oracle needs a finite capacity")
            pmf, blocking = erlang_b_distribution(int(model.capacity), a)
            probs = pmf
        else:   # poisson
            kmax = int(max(occ.max(), 10))
            from scipy.stats import poisson
            probs = poisson.pmf(np.arange(kmax + 1), a)
            probs[-1] += poisson.sf(kmax, a)
        obs = np.bincount(occ, minlength=len(probs)).astype(float)
        if len(obs) > len(probs):   # observed beyond oracle support
            probs = np.pad(probs, (0, len(obs) - len(probs)))
        report = chi_square_test(obs, probs, name=oracle, provenance=provenance)
        tv = tv_distance(obs / n, probs)
    rec = report.to_record()
    rec["tv_distance"] = tv
    out = _out_dir(cfg, args) / f"validate-{oracle}-{h[:8]}-seed{seed}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        json.dump(rec, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"validate[{oracle}]: n={n} p={report.p_value:.4g} tv={tv:.4f} -> {out}")
    return _EXIT_OK


def _run_bench(cfg: dict, args) -> int:
    exp = cfg.get("experiment", {})
    regime = args.regime or exp.get("regime", "INF")
    s_values = args.s or exp.get("s_values", [8, 16, 32, 64])
    reps = args.reps or int(exp.get("replications", 100))
    seed = args.seed if args.seed is not None else int(exp.get("seed", 0))
    beta = float(exp.get("beta", 2.0))
    model = build_station(cfg)
    table = run_scaling_benchmark(regime, model.interarrival, model.service,
                                  [int(s) for s in s_values], reps, seed,
                                  beta=beta)
    h = config_hash(cfg)
    out_dir = _out_dir(cfg, args)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"bench-{regime.lower()}-{h[:8]}-seed{seed}.csv"
    recs = table.to_records()
    header = {"config_hash": h, "seed": seed, "version": __version__}
    write_records(recs, csv_path, "csv", header)
    summary = {"config_hash": h, "seed": seed, "version": __version__,
               "regime": regime,
               "slope_kappa": table.slope("kappa"),
               "slope_tau": table.slope("tau") if regime != "INF" else None,
               "rows": recs}
    json_path = out_dir / f"bench-{regime.lower()}-{h[:8]}-seed{seed}.json"
    with open(json_path, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")
    metric = "kappa" if regime == "INF" else "tau"
    print(f"bench[{regime}]: s={list(s_values)} reps={reps} "
          f"slope_{metric}={table.slope(metric):.3f} -> {csv_path}")
    return _EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perfectq",
                                description="Perfect sampling for infinite-server "
                                            "and loss systems")
    p.add_argument("--version", action="version", version=f"perfectq {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--n", type=int, default=None, help="number of samples")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--timing", action="store_true",
                        help="embed wall times in output files "
                             "(breaks byte-identical reruns)")

    for name in ("sample-infinite", "sample-loss", "sample-network"):
        common(sub.add_parser(name))
    v = sub.add_parser("validate")
    common(v)
    v.add_argument("--oracle", choices=["erlang", "poisson", "product-form"],
                   required=True)
    b = sub.add_parser("bench")
    common(b)
    b.add_argument("--regime", choices=["INF", "QD", "QED"], default=None)
    b.add_argument("--s", type=int, nargs="+", default=None)
    b.add_argument("--reps", type=int, default=None)
    return p


def run(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "sample-infinite":
            return _run_samples("infinite", cfg, args)
        if args.command == "sample-loss":
            return _run_samples("loss", cfg, args)
        if args.command == "sample-network":
            return _run_samples("network", cfg, args)
        if args.command == "validate":
            return _run_validate(cfg, args)
        if args.command == "bench":
            return _run_bench(cfg, args)
        raise ConfigError(f"unknown command {args.command}")   # pragma: no cover
    except (ConfigError, NoRoot) as e:
        print(f"config error: {e}", file=sys.stderr)
        return _EXIT_CONFIG
    except (BlockBudgetExceeded, IterationCap) as e:
        diag = Path(os.environ.get("PERFECTQ_OUT", "runs")) / "diagnostics.json"
        try:
            diag.parent.mkdir(parents=True, exist_ok=True)
            with open(diag, "w") as fh:
                json.dump({"error": type(e).__name__, "message": str(e)}, fh)
        except OSError:   # pragma: no cover
            pass
        print(f"budget/cap failure: {e} (diagnostics: {diag})", file=sys.stderr)
        return _EXIT_BUDGET
    except PerfectQError as e:   # pragma: no cover - defensive
        print(f"error: {e}", file=sys.stderr)
        return _EXIT_CONFIG


def main():   # console entry point
    sys.exit(run())
