"""Command-line front end.

Subcommands: ``detect`` (online detection over a CSV stream),
``bench-synth`` (FP/FN benchmark on synthetic Hawkes data), ``bench-mse``
(covariance-trace MSE versus the MCMC oracle), ``validate-blstm``
(sinusoid reconstruction check).  Every flag can also be given in a flat
``key=value`` config file; command-line flags win.  Exit codes: 0 on
success, 2 on configuration errors, 3 on data errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass

import numpy as np

from .engine import Detector, DetectorConfig, record_to_json
from .estimator import build_model
from .experiments import (
    run_mse_study,
    run_sinusoid_validation,
    run_synth_benchmark,
)
from .ingest import DataError, load_events, load_series


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Every tunable of the experiment runners, with CLI-facing names."""

    model: str = "hawkes"
    sampler: str = "svn"
    particles: int = 100
    pred_samples: int = 100
    iterations: int = 30
    step: float = 0.5
    hazard: float = 100.0
    levels: tuple[float, float] | None = None
    mode: str | None = None
    prune_k: int = 50
    mass_floor: float = 1e-6
    min_segment: int = 5
    seed: int = 0
    workers: int = 1
    prior_mean: float = 0.0
    prior_var: float | None = None
    sigma: float = 0.1
    input: str | None = None
    out: str | None = None
    timings: bool = False
    runs: int = 30
    window: int = 3
    checkpoints: tuple[int, ...] = (15, 35)
    svn_grid: tuple[int, ...] = (10, 30, 50, 100, 300, 500, 1000)
    smc_grid: tuple[int, ...] = (10, 30, 50, 100, 300, 500, 1000, 5000, 10000)
    reps: int = 30
    mcmc_steps: int = 500_000
    noise_sd: float = 0.15
    points: int = 51

    def resolved_mode(self) -> str:
        if self.mode is not None:
            return self.mode
        return "one_sided_upper" if self.model == "hawkes" else "two_sided"

    def resolved_levels(self) -> tuple[float, float]:
        if self.levels is not None:
            return self.levels
        return (0.05, 0.95) if self.model == "hawkes" else (0.025, 0.975)

    def detector_config(self) -> DetectorConfig:
        try:
            return DetectorConfig(
                hazard=self.hazard, n_particles=self.particles,
                n_pred_samples=self.pred_samples, sampler=self.sampler,
                n_iterations=self.iterations, step_size=self.step,
                levels=self.resolved_levels(), mode=self.resolved_mode(),
                prune_max=self.prune_k, prune_floor=self.mass_floor,
                min_segment=self.min_segment, seed=self.seed, n_workers=self.workers,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _parse_float_pair(text: str) -> tuple[float, float]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != 2:
        raise ConfigError(f"expected two comma-separated numbers, got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if not parts:
        raise ConfigError(f"expected comma-separated integers, got {text!r}")
    return tuple(int(p) for p in parts)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


_FIELD_PARSERS = {
    "levels": _parse_float_pair,
    "checkpoints": _parse_int_tuple,
    "svn_grid": _parse_int_tuple,
    "smc_grid": _parse_int_tuple,
    "timings": _parse_bool,
}


def _coerce(name: str, raw: str):
    field_types = {f.name: f for f in dataclasses.fields(RunConfig)}
    if name not in field_types:
        raise ConfigError(f"unknown config key {name!r}")
    if name in _FIELD_PARSERS:
        return _FIELD_PARSERS[name](raw)
    default = field_types[name].default
    try:
        if isinstance(default, bool):
            return _parse_bool(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw


def load_config_file(path: str) -> dict:
    """Flat key=value file; '#' comments and blank lines are skipped."""
    values = {}
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        values[key] = _coerce(key, value.strip())
    return values


def resolve_config(args: argparse.Namespace, command_defaults: dict | None = None) -> RunConfig:
    """defaults < command defaults < config file < explicit CLI flags."""
    values = dict(command_defaults or {})
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for f in dataclasses.fields(RunConfig):
        cli_value = getattr(args, f.name, None)
        if cli_value is not None:
            values[f.name] = cli_value
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--model", choices=("hawkes", "blstm", "gaussian-test"))
    sub.add_argument("--sampler", choices=("svn", "svgd", "smc", "exact"))
    sub.add_argument("--particles", type=int, dest="particles")
    sub.add_argument("--pred-samples", type=int, dest="pred_samples")
    sub.add_argument("--iterations", type=int)
    sub.add_argument("--step", type=float)
    sub.add_argument("--hazard", type=float)
    sub.add_argument("--levels", type=_parse_float_pair,
                     help="quantile levels as LOWER,UPPER")
    sub.add_argument("--mode", choices=("one_sided_upper", "two_sided"))
    sub.add_argument("--prune-k", type=int, dest="prune_k")
    sub.add_argument("--mass-floor", type=float, dest="mass_floor")
    sub.add_argument("--min-segment", type=int, dest="min_segment")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--workers", type=int)
    sub.add_argument("--prior-mean", type=float, dest="prior_mean")
    sub.add_argument("--prior-var", type=float, dest="prior_var")
    sub.add_argument("--sigma", type=float)
    sub.add_argument("--out", help="output file (default: stdout)")
    sub.add_argument("--timings", action="store_const", const=True, default=None,
                     help="include wall-clock timings in outputs (breaks byte determinism)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svocd",
                                     description="Stein variational online changepoint detection")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("detect", help="online changepoint detection over a CSV stream")
    _add_common(p)
    p.add_argument("--input", required=True, help="CSV input (events or series)")
    p.set_defaults(func=cmd_detect, command_defaults={})

    p = commands.add_parser("bench-synth", help="FP/FN benchmark on synthetic Hawkes data")
    _add_common(p)
    p.add_argument("--runs", type=int)
    p.add_argument("--window", type=int, help="FP/FN matching window in observations")
    p.set_defaults(func=cmd_bench_synth, command_defaults={"prior_var": 1.0})

    p = commands.add_parser("bench-mse", help="covariance-trace MSE versus the MCMC oracle")
    _add_common(p)
    p.add_argument("--checkpoints", type=_parse_int_tuple)
    p.add_argument("--svn-grid", type=_parse_int_tuple, dest="svn_grid")
    p.add_argument("--smc-grid", type=_parse_int_tuple, dest="smc_grid")
    p.add_argument("--reps", type=int)
    p.add_argument("--mcmc-steps", type=int, dest="mcmc_steps")
    p.set_defaults(func=cmd_bench_mse, command_defaults={"prior_var": 1.0})

    p = commands.add_parser("validate-blstm", help="Bayesian-LSTM sinusoid reconstruction check")
    _add_common(p)
    p.add_argument("--noise-sd", type=float, dest="noise_sd")
    p.add_argument("--points", type=int)
    p.set_defaults(func=cmd_validate_blstm,
                   command_defaults={"model": "blstm", "sigma": 0.3, "particles": 30,
                                     "iterations": 100})
    return parser


def _open_out(cfg: RunConfig):
    if cfg.out is None:
        return sys.stdout, False
    return open(cfg.out, "w", encoding="utf-8"), True


def cmd_detect(cfg: RunConfig) -> int:
    if cfg.input is None:
        raise ConfigError("detect needs --input")
    model = build_model(cfg.model, cfg.prior_mean, cfg.prior_var, cfg.sigma)
    detector_config = cfg.detector_config()
    data = load_events(cfg.input) if cfg.model == "hawkes" else load_series(cfg.input)
    if len(data) == 0:
        raise DataError(f"{cfg.input}: no observations")
    detector = Detector(model, detector_config)
    stream, close = _open_out(cfg)
    alerts = []
    step_ms = []
    try:
        for y in data:
            t0 = time.perf_counter()
            record = detector.step(y)
            step_ms.append((time.perf_counter() - t0) * 1e3)
            if record.alert:
                alerts.append(record.time)
            stream.write(record_to_json(record, include_timings=cfg.timings) + "\n")
        summary = {"summary": {"alerts": alerts, "n_observations": len(data),
                               "model": cfg.model, "sampler": cfg.sampler}}
        if cfg.timings:
            summary["summary"]["mean_step_ms"] = sum(step_ms) / len(step_ms)
        stream.write(json.dumps(summary, sort_keys=True) + "\n")
    finally:
        detector.close()
        if close:
            stream.close()
    return 0


def cmd_bench_synth(cfg: RunConfig) -> int:
    if cfg.model != "hawkes":
        raise ConfigError("bench-synth only supports the hawkes model")
    report = run_synth_benchmark(
        sampler=cfg.sampler, runs=cfg.runs, seed=cfg.seed, n_particles=cfg.particles,
        n_iterations=cfg.iterations, hazard=cfg.hazard, window=cfg.window,
        prior_var=cfg.prior_var if cfg.prior_var is not None else 1.0,
        n_pred_samples=cfg.pred_samples, min_segment=cfg.min_segment,
        n_workers=cfg.workers, step_size=cfg.step,
    )
    stream, close = _open_out(cfg)
    try:
        stream.write("run,fp,fn,alerts\n")
        for r in report.runs:
            stream.write(f"{r.run},{r.fp},{r.fn},{';'.join(map(str, r.alerts))}\n")
    finally:
        if close:
            stream.close()
    print(f"sampler={report.sampler} runs={len(report.runs)} "
          f"fp_mean={report.fp_mean:.4f} fp_std={report.fp_std:.4f} "
          f"fn_mean={report.fn_mean:.4f} fn_std={report.fn_std:.4f}")
    return 0


def cmd_bench_mse(cfg: RunConfig) -> int:
    if cfg.model != "hawkes":
        raise ConfigError("bench-mse only supports the hawkes model")
    rows = run_mse_study(
        seed=cfg.seed, checkpoints=cfg.checkpoints, svn_grid=cfg.svn_grid,
        smc_grid=cfg.smc_grid, reps=cfg.reps, mcmc_steps=cfg.mcmc_steps,
        n_iterations=cfg.iterations, step_size=cfg.step,
        prior_var=cfg.prior_var if cfg.prior_var is not None else 1.0,
    )
    stream, close = _open_out(cfg)
    try:
        stream.write("sampler,n_particles,checkpoint,mse,mse_std,mean_trace,oracle_trace,reps\n")
        for r in rows:
            stream.write(f"{r.sampler},{r.n_particles},{r.checkpoint},{r.mse!r},"
                         f"{r.mse_std!r},{r.mean_trace!r},{r.oracle_trace!r},{r.reps}\n")
    finally:
        if close:
            stream.close()
    return 0


def cmd_validate_blstm(cfg: RunConfig) -> int:
    if cfg.model != "blstm":
        raise ConfigError("validate-blstm only supports the blstm model")
    report = run_sinusoid_validation(
        seed=cfg.seed, n_particles=cfg.particles, n_iterations=cfg.iterations,
        sigma=cfg.sigma, noise_sd=cfg.noise_sd, n_points=cfg.points,
    )
    payload = {
        "data": report.data.tolist(),
        "targets": report.targets.tolist(),
        "mean_curve": report.mean_curve.tolist(),
        "map_curve": report.map_curve.tolist(),
        "band_lower": report.band_lower.tolist(),
        "band_upper": report.band_upper.tolist(),
        "coverage": report.coverage,
        "rmse_mean_vs_clean": report.rmse_mean_vs_clean,
        "rmse_map_vs_clean": report.rmse_map_vs_clean,
        "lag_affinity_mean": report.lag_affinity_mean,
        "lag_affinity_map": report.lag_affinity_map,
    }
    stream, close = _open_out(cfg)
    try:
        stream.write(json.dumps(payload, sort_keys=True) + "\n")
    finally:
        if close:
            stream.close()
    print(f"coverage={report.coverage:.3f} "
          f"rmse_mean={report.rmse_mean_vs_clean:.4f} rmse_map={report.rmse_map_vs_clean:.4f}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args, args.command_defaults)
        return args.func(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:  # config values rejected deeper in the stack
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
