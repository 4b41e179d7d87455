"""Command-line entry point: simulate, build-panel, estimate, report.

Every run writes ``run_report.json`` into its output directory, whether it
succeeds or fails. Data files are written to a temporary name and renamed
into place.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .exceptions import ConfigError, DataError, MigrateRumError, NoResults
from .gmm import GmmSpec, fit_system_gmm
from .lpm import PRESETS, FixedEffectSpec, fit_lpm, unit_interval_refit
from .mlogit import NestingSpec, fit_mixed_logit, marginal_effect_curve
from .panel import build_quasi_panel, status_frame
from .rumsim import WorldConfig, random_world, simulate_panel
from .trending import read_employment_csv

log = logging.getLogger("migrate_rum")
ESTIMATORS = ("lpm", "mlogit", "gmm")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return None if np.isnan(obj) else float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _clean(obj):
    # NaN is not valid JSON; emit null instead.
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def atomic_write(path, data):
    """Write text or bytes to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def write_json(path, payload):
    return atomic_write(path, json.dumps(_clean(payload), indent=2, sort_keys=True, default=_json_default) + "\n")


def write_csv(path, frame, index=False):
    return atomic_write(path, frame.to_csv(index=index, float_format="%.17g", lineterminator="\n"))


def digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_config(path):
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    base = path.parent
    # Relative input paths resolve against the config file's directory.
    for key in ("survey", "city_stats", "employment", "panel"):
        if isinstance(cfg.get(key), str) and not Path(cfg[key]).is_absolute():
            cfg[key] = str((base / cfg[key]).resolve())
    if isinstance(cfg.get("inputs"), list):
        cfg["inputs"] = [str((base / p).resolve()) if not Path(p).is_absolute() else p for p in cfg["inputs"]]
    return cfg


def _require(cfg, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"config is missing keys: {missing}")


def _input_file(cfg, key):
    _require(cfg, key)
    path = Path(cfg[key])
    if not path.is_file():
        raise ConfigError(f"input file for {key!r} not found: {path}")
    return path


# -- stages ----------------------------------------------------------------

def run_simulate(cfg, out, seed):
    world_cfg = cfg.get("world", {"random": {}})
    if "random" in world_cfg:
        params = dict(world_cfg["random"])
        if "years" in params:
            params["years"] = tuple(params["years"])
        world = random_world(**params)
    else:
        world = WorldConfig.from_dict(world_cfg)
    n = int(cfg.get("n_individuals", 100))
    sim = simulate_panel(world, n, cfg.get("true_coeffs"), seed=seed)
    files = {
        "panel": write_csv(out / "simulated_panel.csv", sim.rows),
        "params": atomic_write(out / "generator_params.json", sim.params_json() + "\n"),
    }
    return {
        "rows_out": int(len(sim.rows)),
        "started_log_c": sim.generator_params["started_log_c"],
        "diagnostics": {"move_share": sim.move_share()},
    }, files


def run_build_panel(cfg, out, seed):
    survey = pd.read_csv(_input_file(cfg, "survey"), dtype=str, keep_default_na=False)
    stats = pd.read_csv(_input_file(cfg, "city_stats"), dtype={"city_id": str})
    employment = read_employment_csv(_input_file(cfg, "employment"))
    built = build_quasi_panel(survey, stats, employment, strict=bool(cfg.get("strict", True)),
                              eps=float(cfg.get("started_log_eps", 1e-6 + 1.0)))
    files = {
        "panel": write_csv(out / "quasi_panel.csv", built.frame),
        "drop_report": write_json(out / "drop_report.json", built.report),
        "statuses": write_csv(out / "statuses.csv", status_frame(built.statuses)),
    }
    drops = dict(built.report["dropped"])
    drops.update(built.report["persons_dropped_in_assembly"])
    return {
        "rows_in": built.report["input_rows"],
        "rows_out": built.report["rows_out"],
        "drop_reasons": drops,
        "started_log_c": built.started_log_c,
    }, files


def _read_panel(cfg):
    path = _input_file(cfg, "panel")
    return pd.read_csv(path, dtype={"origin": str, "destination": str, "person_id": str, "family_id": str})


def _fe_spec(cfg):
    fe = cfg.get("fixed_effects", "baseline")
    columns = cfg.get("fe_columns", {})
    if not fe:
        return None
    if isinstance(fe, str):
        if fe not in PRESETS:
            raise ConfigError(f"unknown fixed-effect preset {fe!r}; choose from {sorted(PRESETS)}")
        return FixedEffectSpec.preset(fe, **columns)
    return FixedEffectSpec(tuple(fe), columns)


def _add_interactions(panel, cfg):
    for a, b in cfg.get("interactions", []):
        panel[f"{a}X{b}"] = panel[a] * panel[b]
    return panel


def run_estimate_lpm(cfg, out, seed):
    _require(cfg, "regressors")
    panel = _add_interactions(_read_panel(cfg), cfg)
    y = cfg.get("y", "migrate")
    try:
        result = fit_lpm(panel, cfg["regressors"], _fe_spec(cfg), cluster=cfg.get("cluster", "destination"), y=y)
    except KeyError as exc:
        raise ConfigError(f"unknown column {exc}") from exc
    table = result.summary_frame().rename_axis("term").reset_index()
    files = {"coefficients": write_csv(out / "lpm_coefficients.csv", table)}
    diag = result.diagnostics()
    if cfg.get("unit_interval"):
        refit, report = unit_interval_refit(result, panel, y=y)
        files["unit_interval"] = write_csv(
            out / "lpm_unit_interval_coefficients.csv", refit.summary_frame().rename_axis("term").reset_index())
        diag["prediction_report"] = report
    payload = {"estimator": "lpm", "coefficients": table.to_dict(orient="records"), "diagnostics": diag}
    files["result"] = write_json(out / "lpm_result.json", payload)
    return {"rows_in": int(len(panel)), "rows_out": result.n_obs, "diagnostics": diag}, files


def run_estimate_mlogit(cfg, out, seed):
    _require(cfg, "regressors")
    panel = _add_interactions(_read_panel(cfg), cfg)
    nesting = NestingSpec(**cfg.get("nesting", {}))
    result = fit_mixed_logit(panel, cfg["regressors"], nesting, nodes=int(cfg.get("nodes", 7)),
                             y=cfg.get("y", "migrate"), robust=bool(cfg.get("robust", False)))
    table = result.summary_frame().rename_axis("term").reset_index()
    files = {"coefficients": write_csv(out / "mlogit_coefficients.csv", table)}
    payload = {"estimator": "mlogit", "coefficients": table.to_dict(orient="records"),
               "diagnostics": result.diagnostics()}
    me = cfg.get("marginal_effect")
    if me:
        curve = marginal_effect_curve(result, me["variable"], step=float(me.get("step", 0.2)),
                                      grid=me.get("grid"), lower=me.get("lower"), upper=me.get("upper"))
        files["marginal_effects"] = write_csv(out / "marginal_effects.csv", curve)
        payload["marginal_effect"] = {"variable": me["variable"], "curve": curve.to_dict(orient="records")}
    files["result"] = write_json(out / "mlogit_result.json", payload)
    return {"rows_in": int(len(panel)), "rows_out": result.n_obs, "diagnostics": result.diagnostics()}, files


def run_estimate_gmm(cfg, out, seed):
    _require(cfg, "regressors")
    panel = _read_panel(cfg)
    spec_cfg = dict(cfg.get("spec", {}))
    if "fe" in spec_cfg:
        spec_cfg["fe"] = tuple(spec_cfg["fe"])
    spec = GmmSpec(**spec_cfg)
    result = fit_system_gmm(panel, cfg["regressors"], spec,
                            diff_hansen_subsets=cfg.get("diff_hansen", ()),
                            ar_orders=cfg.get("ar_orders", (1, 2)))
    table = result.summary_frame().rename_axis("term").reset_index()
    files = {"coefficients": write_csv(out / "gmm_coefficients.csv", table)}
    payload = {"estimator": "gmm", "coefficients": table.to_dict(orient="records"),
               "diagnostics": result.diagnostics()}
    files["result"] = write_json(out / "gmm_result.json", payload)
    return {"rows_in": int(len(panel)), "rows_out": result.n_obs, "diagnostics": result.diagnostics()}, files


def _markdown_table(records, columns):
    lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    for rec in records:
        cells = []
        for c in columns:
            v = rec.get(c)
            cells.append(f"{v:.4f}" if isinstance(v, float) else ("" if v is None else str(v)))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


def run_report(cfg, out, seed):
    inputs = [Path(p) for p in cfg.get("inputs", [])]
    results = []
    for d in inputs:
        if not d.exists():
            raise ConfigError(f"report input not found: {d}")
        candidates = sorted(d.glob("*_result.json")) if d.is_dir() else [d]
        for path in candidates:
            results.append((path, json.loads(path.read_text())))
    if not results:
        raise NoResults("no estimation results found in the report inputs")
    parts = ["# Estimation summary", ""]
    files = {}
    for path, res in results:
        name = res.get("estimator", path.stem)
        parts += [f"## {name} ({path.parent.name})", ""]
        stat_col = "z" if name in ("mlogit", "gmm") else "t"
        parts.append(_markdown_table(res["coefficients"], ["term", "coefficient", "std_error", stat_col, "p_value"]))
        parts.append("")
        diag = res.get("diagnostics", {})
        if name == "mlogit":
            parts += ["### Intra-class correlation", ""]
            for level, value in diag.get("icc", {}).items():
                parts.append(f"- {level}: {value:.4f} (variance {diag['variances'][level]:.4f})")
            parts.append("")
        if name == "gmm":
            hj = diag.get("hansen_j", {})
            parts += ["### Specification tests", "",
                      f"- instruments: {diag.get('n_instruments')}",
                      f"- Hansen J: {hj.get('stat')} (df {hj.get('df')}, p {hj.get('p')})"]
            parts += [f"- AR({k}) p: {v}" for k, v in diag.get("ar_tests", {}).items()]
            parts += [f"- difference-in-Hansen {d['subset']}: p {d['p_difference']}" for d in diag.get("diff_hansen", [])]
            parts += [f"- note: {diag.get('advisory')}", ""]
        if name == "lpm":
            parts += [f"- observations: {diag.get('n_obs')}, clusters: {diag.get('n_clusters')}, "
                      f"R2: {diag.get('r_squared')}, within R2: {diag.get('within_r_squared')}", ""]
        if "marginal_effect" in res:
            me = res["marginal_effect"]
            tag = f"{path.parent.name}_{me['variable']}"
            files[f"curve_{tag}"] = write_csv(out / f"marginal_effects_{tag}.csv", pd.DataFrame(me["curve"]))
    files["summary"] = atomic_write(out / "report.md", "\n".join(parts) + "\n")
    return {"rows_in": len(results), "diagnostics": {"blocks": len(results)}}, files


STAGES = {
    "simulate": run_simulate,
    "build-panel": run_build_panel,
    "report": run_report,
    ("estimate", "lpm"): run_estimate_lpm,
    ("estimate", "mlogit"): run_estimate_mlogit,
    ("estimate", "gmm"): run_estimate_gmm,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="migrate-rum", description="Migration choice modelling toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        p.add_argument("--threads", type=int, help="cap on BLAS/OpenMP worker threads")

    common(sub.add_parser("simulate", help="simulate a dyadic panel from the choice model"))
    common(sub.add_parser("build-panel", help="build the quasi-panel from survey and city data"))
    est = sub.add_parser("estimate", help="fit an estimator to a panel")
    est.add_argument("estimator", choices=ESTIMATORS)
    common(est)
    rep = sub.add_parser("report", help="summarize estimation outputs")
    common(rep)
    rep.add_argument("inputs", nargs="*", help="result directories or *_result.json files")
    return parser


def _configure_logging():
    level = os.environ.get("MIGRATE_RUM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def run(args):
    """Execute one stage; returns the process exit status."""
    out = Path(args.out)
    started = time.perf_counter()
    key = ("estimate", args.estimator) if args.command == "estimate" else args.command
    report = {
        "command": args.command,
        "estimator": getattr(args, "estimator", None),
        "package_version": __version__,
        "status": "ok",
    }
    try:
        cfg = load_config(args.config)
        if args.command == "report" and args.inputs:
            cfg["inputs"] = [str(Path(p).resolve()) for p in args.inputs]
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        cfg["seed"] = seed
        report.update({"config": cfg, "seed": seed})
        out.mkdir(parents=True, exist_ok=True)
        limiter = nullcontext()
        if args.threads:
            from threadpoolctl import threadpool_limits
            limiter = threadpool_limits(limits=int(args.threads))
        with limiter:
            summary, files = STAGES[key](cfg, out, seed)
        report.update(summary)
        report["outputs"] = {k: {"path": str(p), "sha256": digest(p)} for k, p in files.items()}
        status = 0
    except MigrateRumError as exc:
        report["status"] = "error"
        report["error"] = {"type": type(exc).__name__, "category": _category(exc),
                           "exit_code": exc.exit_code, "message": str(exc)}
        status = exc.exit_code
    except (FileNotFoundError, PermissionError, KeyError, TypeError, ValueError) as exc:
        # Bad inputs that surface as plain Python errors are configuration problems.
        report["status"] = "error"
        report["error"] = {"type": type(exc).__name__, "category": "config", "exit_code": 2, "message": str(exc)}
        status = 2
    report["timing_seconds"] = time.perf_counter() - started
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "run_report.json", report)
    except OSError as exc:
        log.error("could not write run report: %s", exc)
    if status:
        sys.stderr.write(json.dumps(_clean(report["error"]), default=_json_default) + "\n")
    else:
        log.info("%s finished in %.2fs", args.command, report["timing_seconds"])
    return status


def _category(exc):
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, DataError):
        return "data"
    return "numerical" if exc.exit_code == 4 else "other"


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
