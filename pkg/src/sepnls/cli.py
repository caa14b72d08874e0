"""Command-line interface.

Subcommands: simulate, stage1-map, estimate, mc, bench, bounds. Each takes a
JSON config (--config), an output directory (--out), and optional --seed and
--threads overrides. Unknown config keys are rejected. Exit codes: 0 success,
2 configuration or data errors, 3 when an estimate did not converge. Data
files are byte-deterministic for a given config and seed; timestamps go only
to run.log.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import time
from dataclasses import fields, replace

import numpy as np

from .bench import McConfig, mc_summary_json, run_mc, write_mc_csv
from .bounds import bounds_report, bounds_to_json
from .canon import InvalidModelError, OutOfBoundsError
from .datafiles import read_dataset, write_dataset, write_json
from .linlsq import SingularSystemError
from .models import (
    MODEL_IDS,
    default_sampler_config,
    default_solver_config,
    simulate,
    SimSpec,
)
from .stage1 import SamplerConfig, Stage1Error, run_stage1, write_map_csv
from .stage2 import SolverConfig, result_to_json, run_two_stage

CONFIG_ERRORS = (
    InvalidModelError, OutOfBoundsError, SingularSystemError, Stage1Error,
    ValueError, KeyError, TypeError, OSError, json.JSONDecodeError,
)


class ConfigError(ValueError):
    pass


def _check_keys(d, allowed, where):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(
            f"unknown key(s) in {where}: {sorted(unknown)}; allowed: {sorted(allowed)}"
        )


def _log(outdir, message):
    stamp = datetime.datetime.now().isoformat(timespec="milliseconds")
    with open(os.path.join(outdir, "run.log"), "a") as fh:
        fh.write(f"{stamp} {message}\n")


def _sim_spec(model_id, d, seed_override):
    _check_keys(d, ("N", "sigma", "seed", "truth1", "truth2", "fs",
                    "duration", "extra"), "sim")
    spec = SimSpec(model_id=model_id, **d)
    if seed_override is not None:
        spec.seed = seed_override
    return spec


def _sampler(model_id, d, seed_override):
    allowed = [f.name for f in fields(SamplerConfig)]
    _check_keys(d, allowed, "sampler")
    kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
    cfg = default_sampler_config(model_id, **kw)
    if seed_override is not None:
        cfg = replace(cfg, seed=seed_override)
    return cfg


def _solver(model_id, d):
    allowed = [f.name for f in fields(SolverConfig)]
    _check_keys(d, allowed, "solver")
    return default_solver_config(model_id, **d)


def _model_id(cfg):
    mid = cfg.get("model")
    if mid is not None and mid not in MODEL_IDS:
        raise ConfigError(f"unknown model {mid!r}; expected one of {MODEL_IDS}")
    return mid


def _load_data(cfg, seed_override):
    """Dataset from a file reference or an inline simulation block."""
    if "dataset" in cfg and "sim" in cfg:
        raise ConfigError("config must give either 'dataset' or 'sim', not both")
    if "dataset" in cfg:
        dataset, model, meta = read_dataset(cfg["dataset"])
        return dataset, model, meta
    mid = _model_id(cfg)
    if mid is None:
        raise ConfigError("config needs 'model' when simulating inline")
    res = simulate(_sim_spec(mid, cfg.get("sim", {}), seed_override))
    meta = {"truth1": [float(v) for v in res.truth1],
            "truth2": [float(v) for v in res.truth2]}
    return res.dataset, res.model, meta


def cmd_simulate(cfg, out, seed, threads):
    _check_keys(cfg, ("model", "sim", "name"), "config")
    mid = _model_id(cfg)
    if mid is None:
        raise ConfigError("simulate needs 'model'")
    t0 = time.perf_counter()
    res = simulate(_sim_spec(mid, cfg.get("sim", {}), seed))
    base = os.path.join(out, cfg.get("name", mid))
    csv_path, meta_path = write_dataset(
        base, res.dataset, res.model, res.truth1, res.truth2,
        res.sigma, res.spec.seed,
    )
    _log(out, f"simulate model={mid} N={res.dataset.N} -> {csv_path} "
              f"wall_ms={(time.perf_counter() - t0) * 1e3:.1f}")
    return 0


def cmd_stage1_map(cfg, out, seed, threads):
    _check_keys(cfg, ("model", "sim", "dataset", "sampler"), "config")
    dataset, model, _ = _load_data(cfg, seed)
    sampler = _sampler(model.model_id, cfg.get("sampler", {}), seed)
    t0 = time.perf_counter()
    report = run_stage1(model, dataset, sampler, threads=threads)
    map_path = os.path.join(out, "stage1_map.csv")
    write_map_csv(map_path, report)
    write_json(os.path.join(out, "stage1.json"), {
        "model_id": model.model_id,
        "verdict": report.verdict,
        "min_trace": float(report.min_trace),
        "chosen_xi2p": [float(v) for v in report.chosen.xi2p],
        "chosen_xi1p": [float(v) for v in report.chosen.xi1p],
        "n_candidates": len(report.records),
        "n_screened_ok": sum(r.screened_ok for r in report.records),
    })
    _log(out, f"stage1-map model={model.model_id} verdict={report.verdict} "
              f"wall_ms={(time.perf_counter() - t0) * 1e3:.1f}")
    return 0


def _estimate(cfg, out, seed, threads, with_bounds):
    dataset, model, _ = _load_data(cfg, seed)
    sampler = _sampler(model.model_id, cfg.get("sampler", {}), seed)
    solver = _solver(model.model_id, cfg.get("solver", {}))
    t0 = time.perf_counter()
    report, result = run_two_stage(model, dataset, sampler, solver, threads=threads)
    payload = result_to_json(result)
    if with_bounds or cfg.get("bounds"):
        bcfg = cfg.get("bounds") if isinstance(cfg.get("bounds"), dict) else {}
        _check_keys(bcfg, ("nsamples", "seed"), "bounds")
        rep = bounds_report(
            model, dataset, (report.chosen.xi1p, report.chosen.xi2p), result,
            nsamples=int(bcfg.get("nsamples", 200)),
            seed=int(bcfg.get("seed", 0)),
        )
        payload["bounds"] = bounds_to_json(rep)
    wall = (time.perf_counter() - t0) * 1e3
    return payload, result, wall


def cmd_estimate(cfg, out, seed, threads):
    _check_keys(cfg, ("model", "sim", "dataset", "sampler", "solver", "bounds"),
                "config")
    payload, result, wall = _estimate(cfg, out, seed, threads, with_bounds=False)
    write_json(os.path.join(out, "estimate.json"), payload)
    _log(out, f"estimate model={payload['model_id']} mode={payload['mode_used']} "
              f"converged={payload['converged']} wall_ms={wall:.1f}")
    return 0 if result.converged else 3


def cmd_bounds(cfg, out, seed, threads):
    _check_keys(cfg, ("model", "sim", "dataset", "sampler", "solver", "bounds"),
                "config")
    payload, result, wall = _estimate(cfg, out, seed, threads, with_bounds=True)
    write_json(os.path.join(out, "bounds.json"),
               {"model_id": payload["model_id"], "bounds": payload["bounds"]})
    _log(out, f"bounds model={payload['model_id']} "
              f"holds={payload['bounds']['bracket_holds']} wall_ms={wall:.1f}")
    return 0 if result.converged else 3


def _mc_common(cfg, out, seed, threads, default_estimators):
    _check_keys(cfg, ("model", "n_runs", "tau_c", "master_seed", "fixed_data",
                      "estimators", "sim", "sampler", "solver"), "config")
    mid = _model_id(cfg)
    if mid is None:
        raise ConfigError("config needs 'model'")
    estimators = tuple(cfg.get("estimators", default_estimators))
    mc = McConfig(
        model_id=mid,
        n_runs=int(cfg.get("n_runs", 500)),
        tau_c=float(cfg.get("tau_c", 0.1)),
        master_seed=int(seed if seed is not None else cfg.get("master_seed", 0)),
        fixed_data=bool(cfg.get("fixed_data", True)),
        estimators=estimators,
        sim=_sim_spec(mid, cfg.get("sim", {}), None) if "sim" in cfg else None,
        sampler=_sampler(mid, cfg["sampler"], None) if "sampler" in cfg else None,
        solver=_solver(mid, cfg.get("solver", {})) if "solver" in cfg else None,
    )
    t0 = time.perf_counter()
    report = run_mc(mc, threads=threads)
    write_mc_csv(os.path.join(out, "mc_runs.csv"), report)
    write_json(os.path.join(out, "mc_summary.json"), mc_summary_json(report))
    wall = (time.perf_counter() - t0) * 1e3
    pieces = " ".join(
        f"{k}={v['pct_correct']:.1f}%" for k, v in report.summary.items()
    )
    mean_wall = {
        k: float(np.mean([r.wall_ms for r in report.records if r.estimator == k]))
        for k in report.summary
    }
    walls = " ".join(f"{k}_mean_ms={v:.2f}" for k, v in mean_wall.items())
    _log(out, f"mc model={mid} n={mc.n_runs} {pieces} {walls} wall_ms={wall:.1f}")
    return 0


def cmd_mc(cfg, out, seed, threads):
    mid = cfg.get("model")
    default = ("proposed", "nlp", "hk") if mid == "scalar1" else ("proposed", "nlp")
    return _mc_common(cfg, out, seed, threads, default)


def cmd_bench(cfg, out, seed, threads):
    mid = cfg.get("model")
    default = ("nlp", "hk") if mid == "scalar1" else ("nlp",)
    return _mc_common(cfg, out, seed, threads, default)


_COMMANDS = {
    "simulate": cmd_simulate,
    "stage1-map": cmd_stage1_map,
    "estimate": cmd_estimate,
    "mc": cmd_mc,
    "bench": cmd_bench,
    "bounds": cmd_bounds,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="sepnls",
        description="Two-stage separable nonlinear least-squares estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed")
        p.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ConfigError("config root must be a JSON object")
        os.makedirs(args.out, exist_ok=True)
        return _COMMANDS[args.command](cfg, args.out, args.seed, args.threads)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
