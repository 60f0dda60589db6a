"""Command-line entry point ``singlab``.

Usage::

    singlab <command> [--config cfg.json] [--out DIR] [--threads N] [overrides]

Every artifact is written atomically next to a ``.meta.json`` sidecar
holding the full resolved config and the package version.  An existing
artifact is never modified: identical bytes are left alone and differing
bytes are refused.

Exit codes: 0 success, 2 configuration error, 3 numeric guard refusal,
4 acceptance-check failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset, sample_dataset
from .energy import CSV_COLUMNS as ENERGY_COLUMNS
from .energy import EnergyCurve, energy_curve, fit_lambda
from .evidence import ENGINES, QuadConfig, log_evidence
from .exceptions import ConvergenceError, GuardError, SinglabError, UnsupportedEngineError
from .latenterr import dn_curve, peak_assignment, theory_predictions
from .model import MixtureSpec, TrueModel
from .posterior import detect_phase, mass_curve
from .regions import RegionSet
from .sampler import gibbs_run, occupancy_stats

COMMANDS = ("simulate", "evidence", "energy-curve", "fit-lambda", "dn-curve", "posterior-mass", "gibbs", "peak",
            "phase-diagram", "theory", "check")

DEFAULT_CONFIG = {
    "spec": {"family": {"name": "binomial", "M": 3}, "K": 2,
             "prior": {"eta1": 0.25, "alpha": 1.0, "beta": 1.0, "scale": 3.0, "bound": 10.0}},
    "truth": {"astar": [1.0], "bstar": [0.5]},
    "n_grid": [100, 200, 400, 800, 1600],
    "R": 50,
    "seed": 20240601,
    "engine": "dp",
    "tol": 1e-6,
    "regions": {"delta_a": 0.1, "delta_b": 0.1},
    "n": 1000,
    "task": 0,
    "gibbs": {"iters": 200_000, "burnin": 20_000, "thin": 10},
    "fit_model": "ln_only",
    "peak_method": "icm_restarts",
    "eta_list": [0.25, 0.5, 2.0],
    "criteria": "fast",
}


class ConfigError(Exception):
    pass


def version_string() -> str:
    """``<version>`` or ``<version>+g<describe>`` when run from a git checkout."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _set_dotted(cfg: dict, key: str, value):
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def load_config(path=None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            cfg = _merge(cfg, json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        try:
            v = json.loads(v)
        except json.JSONDecodeError:
            pass
        _set_dotted(cfg, k, v)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        spec = MixtureSpec.from_dict(cfg["spec"])
        truth = TrueModel.from_dict(cfg["truth"])
        if truth.Kstar > spec.K:
            raise ConfigError("truth has more components than the learner")
        RegionSet(float(truth.bstar[0]), **cfg["regions"])
        if cfg["engine"] not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}")
        for key in ("R", "n", "seed", "task"):
            if int(cfg[key]) != cfg[key] or cfg[key] < 0:
                raise ConfigError(f"{key} must be a nonnegative integer")
        if not all(int(n) == n and n > 0 for n in cfg["n_grid"]):
            raise ConfigError("n_grid entries must be positive integers")
        if float(cfg["tol"]) <= 0:
            raise ConfigError("tol must be positive")
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed config: {exc!r}") from exc
    except SinglabError as exc:
        raise ConfigError(str(exc)) from exc


def _objects(cfg):
    return MixtureSpec.from_dict(cfg["spec"]), TrueModel.from_dict(cfg["truth"])


def _regions(cfg, truth):
    return RegionSet(float(truth.bstar[0]), **cfg["regions"])


def write_artifact(out: Path, name: str, text: str, cfg: dict) -> Path:
    """Atomically write ``out/name`` and its metadata sidecar."""
    out.mkdir(parents=True, exist_ok=True)
    meta = json.dumps({"artifact": name, "version": version_string(), "config": cfg}, indent=2, sort_keys=True)
    for fname, body in ((name, text), (name + ".meta.json", meta + "\n")):
        target = out / fname
        if target.exists():
            if target.read_text() == body:
                continue
            raise ConfigError(f"refusing to modify existing artifact {target}")
        fd, tmp = tempfile.mkstemp(dir=out, prefix=f".{fname}.")
        with os.fdopen(fd, "w") as fh:
            fh.write(body)
        os.replace(tmp, target)
    return out / name


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _dataset(cfg, args, spec, truth) -> Dataset:
    if getattr(args, "dataset", None):
        try:
            return Dataset.from_json(Path(args.dataset).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read dataset: {exc}") from exc
    return sample_dataset(truth, spec, int(cfg["n"]), int(cfg["seed"]), int(cfg["task"]))


def cmd_simulate(cfg, args, out):
    spec, truth = _objects(cfg)
    ds = _dataset(cfg, args, spec, truth)
    p = write_artifact(out, "dataset.json", ds.to_json() + "\n", cfg)
    print(str(p))


def cmd_evidence(cfg, args, out):
    spec, truth = _objects(cfg)
    ds = _dataset(cfg, args, spec, truth)
    res = log_evidence(ds, spec, cfg["engine"], config=QuadConfig(tol=float(cfg["tol"])))
    print(json.dumps({"log_z": float(res.log_z), "engine": res.engine, "err_est": float(res.err_est)}))


def _energy_curve(cfg, args, which=("x", "xy")):
    spec, truth = _objects(cfg)
    return energy_curve(spec, truth, cfg["n_grid"], int(cfg["R"]), int(cfg["seed"]), cfg["engine"], which,
                        workers=args.threads, config=QuadConfig(tol=float(cfg["tol"])))


def cmd_energy_curve(cfg, args, out):
    curve = _energy_curve(cfg, args)
    write_artifact(out, "energy_curve.csv", curve.to_csv(), cfg)
    if curve.errors:
        write_artifact(out, "energy_curve_errors.json", _json(curve.errors), cfg)
        raise GuardError(f"{len(curve.errors)} cells failed; see energy_curve_errors.json")


def read_energy_csv(path) -> EnergyCurve:
    import csv

    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows or tuple(rows[0].keys()) != ENERGY_COLUMNS:
        raise ConfigError(f"{path} is not an energy curve CSV")
    grid = sorted({int(r["n"]) for r in rows})
    R = max(int(r["replicate"]) for r in rows) + 1
    vals = {}
    for w, col in (("x", "f_tilde_x"), ("xy", "f_tilde_xy")):
        if rows[0][col] == "":
            continue
        v = np.full((len(grid), R), np.nan)
        for r in rows:
            v[grid.index(int(r["n"])), int(r["replicate"])] = float(r[col])
        vals[w] = v
    return EnergyCurve(np.array(grid), vals, engine=rows[0]["engine"], master_seed=int(rows[0]["seed"]))


def cmd_fit_lambda(cfg, args, out):
    curve = read_energy_csv(args.curve) if args.curve else _energy_curve(cfg, args)
    result = {}
    for which in curve.values:
        fit = fit_lambda(curve, cfg["fit_model"], which, seed=int(cfg["seed"]))
        result[which] = fit.to_dict()
        write_artifact(out, f"fit_lambda_{which}.json", fit.to_json() + "\n", cfg)
    print(json.dumps(result))


def cmd_dn_curve(cfg, args, out):
    spec, truth = _objects(cfg)
    dn = dn_curve(spec, truth, cfg["n_grid"], int(cfg["R"]), int(cfg["seed"]), cfg["engine"],
                  QuadConfig(tol=float(cfg["tol"])), workers=args.threads)
    write_artifact(out, "dn_curve.csv", dn.to_csv(), cfg)
    write_artifact(out, "dn_fit.json", dn.to_json() + "\n", cfg)
    print(dn.to_json())


def cmd_posterior_mass(cfg, args, out):
    spec, truth = _objects(cfg)
    mc = mass_curve(spec, truth, cfg["n_grid"], int(cfg["R"]), int(cfg["seed"]), _regions(cfg, truth),
                    QuadConfig(tol=float(cfg["tol"])), workers=args.threads)
    write_artifact(out, "mass_curve.csv", mc.to_csv(), cfg)
    phase = detect_phase(mc)
    write_artifact(out, "phase.json", _json({"eta1": spec.prior.eta1, "phase": phase}), cfg)
    print(json.dumps({"phase": phase}))


def cmd_gibbs(cfg, args, out):
    spec, truth = _objects(cfg)
    ds = _dataset(cfg, args, spec, truth)
    g = cfg["gibbs"]
    tr = gibbs_run(ds, spec, int(g["iters"]), int(g["burnin"]), int(g["thin"]), int(cfg["seed"]))
    regions = _regions(cfg, truth)
    write_artifact(out, "gibbs_trace.csv", tr.to_csv(regions), cfg)
    occ = occupancy_stats(tr, regions)
    summary = {"occ_w1": occ["occ_w1"], "occ_w2": occ["occ_w2"], "occ_w3": occ["occ_w3"],
               "occ_rest": occ["occ_rest"], "eta1": spec.prior.eta1, "n": ds.n, "seed": int(cfg["seed"])}
    write_artifact(out, "gibbs_summary.json", _json(summary), cfg)
    print(json.dumps(summary))


def cmd_peak(cfg, args, out):
    spec, truth = _objects(cfg)
    ds = _dataset(cfg, args, spec, truth)
    pk = peak_assignment(ds, spec, cfg["peak_method"], seed=int(cfg["seed"]))
    res = {"labels_used": pk.labels_used, "log_z": pk.log_z, "labels": pk.labels.tolist()}
    write_artifact(out, "peak.json", _json(res), cfg)
    print(json.dumps({"labels_used": pk.labels_used, "log_z": pk.log_z}))


def cmd_phase_diagram(cfg, args, out):
    spec, truth = _objects(cfg)
    rows = []
    for eta in cfg["eta_list"]:
        sp = spec.with_eta(float(eta))
        curve = energy_curve(sp, truth, cfg["n_grid"], int(cfg["R"]), int(cfg["seed"]), cfg["engine"], ("x",),
                             workers=args.threads, config=QuadConfig(tol=float(cfg["tol"])))
        fit = fit_lambda(curve, cfg["fit_model"], "x", seed=int(cfg["seed"]))
        mc = mass_curve(sp, truth, cfg["n_grid"], int(cfg["R"]), int(cfg["seed"]), _regions(cfg, truth),
                        QuadConfig(tol=float(cfg["tol"])), workers=args.threads)
        rows.append({"eta1": float(eta), "lambda_hat": fit.lambda_hat, "ci_lo": fit.ci_lo, "ci_hi": fit.ci_hi,
                     "phase": detect_phase(mc)})
    lines = ["eta1,lambda_hat,ci_lo,ci_hi,phase"]
    lines += [f"{r['eta1']!r},{r['lambda_hat']!r},{r['ci_lo']!r},{r['ci_hi']!r},{r['phase']}" for r in rows]
    write_artifact(out, "phase_diagram.csv", "\n".join(lines) + "\n", cfg)
    print(json.dumps(rows))


def cmd_theory(cfg, args, out):
    spec, truth = _objects(cfg)
    th = theory_predictions(spec.K, truth.Kstar, spec.family.d_c, spec.prior.eta1, spec.family)
    print(json.dumps(th.to_dict(), sort_keys=True))


def cmd_check(cfg, args, out):
    from .acceptance import CRITERIA, FAST, run_all

    which = cfg["criteria"]
    numbers = FAST if which == "fast" else (tuple(CRITERIA) if which == "all" else tuple(int(i) for i in which))
    results = run_all(numbers, echo=lambda s: print(s, flush=True))
    if not all(r.passed for r in results):
        return 4
    return 0


HANDLERS = {c: globals()["cmd_" + c.replace("-", "_")] for c in COMMANDS}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="singlab", description="Singular mixture-model laboratory.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config file; defaults reproduce the acceptance experiments")
    p.add_argument("--out", default="singlab_out", help="artifact directory")
    p.add_argument("--threads", type=int, default=1, help="worker processes for replication grids")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field (dotted keys, JSON values)")
    p.add_argument("--engine", choices=ENGINES)
    p.add_argument("--dataset", help="dataset JSON for evidence/gibbs/peak")
    p.add_argument("--tol", type=float)
    p.add_argument("--eta1", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--R", type=int)
    p.add_argument("--curve", help="energy curve CSV for fit-lambda")
    p.add_argument("--criteria", help="check: 'fast', 'all' or comma-separated numbers")
    return p


def _error(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    overrides = list(args.set)
    for flag, key in (("engine", "engine"), ("tol", "tol"), ("eta1", "spec.prior.eta1"), ("seed", "seed"),
                      ("n", "n"), ("R", "R")):
        v = getattr(args, flag)
        if v is not None:
            overrides.append(f"{key}={json.dumps(v)}")
    if args.criteria:
        crit = args.criteria if args.criteria in ("fast", "all") else [int(c) for c in args.criteria.split(",")]
        overrides.append(f"criteria={json.dumps(crit)}")
    try:
        cfg = load_config(args.config, overrides)
        code = HANDLERS[args.command](cfg, args, Path(args.out))
        return int(code or 0)
    except ConfigError as exc:
        return _error("ConfigError", str(exc), 2)
    except (GuardError, ConvergenceError, UnsupportedEngineError) as exc:
        return _error(type(exc).__name__, str(exc), 3)
    except SinglabError as exc:
        return _error(type(exc).__name__, str(exc), 2)


if __name__ == "__main__":
    sys.exit(main())
