"""Command-line front end.

``canonical-ouq run CONFIG`` solves the task described by a YAML config and
writes its results to the output directory; ``canonical-ouq validate CONFIG``
checks the config, the moment constraints and the model without optimizing.

Exit codes: 0 success, 2 config error, 3 infeasible or boundary moments,
4 bracketing failure, 5 model or protocol error, 6 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import hydraulic
from .baseline import DistributionSpec, bootstrap_ci, distribution_moments, empirical_quantile, sample
from .canonical import InputSpec, MomentConstraint
from .envelope import lower_envelope, max_quantile
from .errors import ConfigError, InfeasibleMoments, OUQError
from .models import ExternalModel, ExternalModelConfig, Model, builtin_model
from .objective import EQUALITY, INEQUALITY, PofObjective, ObjectiveSpec
from .solver import SolverConfig

log = logging.getLogger("canonical_ouq")

TASKS = ("envelope", "max_quantile", "baseline")


@dataclass
class ProblemConfig:
    inputs: list[InputSpec]
    model: dict
    task: str
    task_options: dict
    mode: str
    solver: SolverConfig
    output_dir: Path
    distributions: list[DistributionSpec | None] = field(default_factory=list)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.inputs]


def _require(mapping: dict, key: str, where: str):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ConfigError(f"{where}: missing key {key!r}")
    return mapping[key]


def _parse_distribution(raw: dict, bounds, where: str) -> DistributionSpec:
    family = _require(raw, "family", where)
    params = _require(raw, "params", where)
    truncate = raw.get("truncate", True)
    return DistributionSpec(family, tuple(params), tuple(bounds) if truncate else None)


def _parse_input(raw: dict, index: int) -> tuple[InputSpec, DistributionSpec | None]:
    where = f"inputs[{index}]"
    name = str(raw.get("name", f"x{index + 1}"))
    bounds = _require(raw, "bounds", where)
    if len(bounds) != 2:
        raise ConfigError(f"{where}: bounds must be [lower, upper]")
    lo, hi = float(bounds[0]), float(bounds[1])
    given = [k for k in ("moments", "intervals", "distribution") if k in raw]
    if len(given) != 1:
        raise ConfigError(f"{where}: give exactly one of moments, intervals, distribution")
    dist = None
    if "moments" in raw:
        spec = InputSpec.from_moments(lo, hi, raw["moments"], name)
    elif "intervals" in raw:
        cons = [MomentConstraint.interval(j, a, b) for j, (a, b) in enumerate(raw["intervals"], start=1)]
        spec = InputSpec(lo, hi, tuple(cons), name)
    else:
        dist = _parse_distribution(raw["distribution"], (lo, hi), where)
        n = int(raw.get("n_moments", 2))
        spec = InputSpec.from_moments(lo, hi, distribution_moments(dist, n).values, name)
    if raw.get("relax") is not None:
        spec = spec.relaxed(float(raw["relax"]))
    return spec, dist


def _expand_preset(raw: dict) -> list[dict]:
    """``inputs: {preset: hydraulic, n_moments: 2, relax: 0.05}`` shorthand."""
    preset = raw.get("preset")
    if preset != "hydraulic":
        raise ConfigError(f"unknown inputs preset {preset!r}")
    dists = hydraulic.distributions(truncated=False)
    out = []
    for name in hydraulic.NAMES:
        d = dists[name]
        entry = {
            "name": name,
            "bounds": list(hydraulic.BOUNDS[name]),
            "distribution": {"family": d.family, "params": list(d.params)},
            "n_moments": raw.get("n_moments", 2),
        }
        if raw.get("relax") is not None:
            entry["relax"] = raw["relax"]
        out.append(entry)
    return out


def _parse_solver(raw: dict | None, seed: int, workers: int | None) -> SolverConfig:
    raw = dict(raw or {})
    allowed = {"population", "mutation", "crossover", "max_generations", "tolerance", "stall_generations", "workers"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"solver: unknown keys {sorted(unknown)}")
    if workers is not None:
        raw["workers"] = workers
    return SolverConfig(seed=seed, **raw)


def load_config(path: str | Path, seed: int | None = None, workers: int | None = None,
                output_dir: str | None = None) -> ProblemConfig:
    """Parse and check a YAML problem config.  Command-line overrides win."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        inputs_raw = _require(raw, "inputs", "config")
        if isinstance(inputs_raw, dict):
            inputs_raw = _expand_preset(inputs_raw)
        if not isinstance(inputs_raw, list) or not inputs_raw:
            raise ConfigError("inputs must be a non-empty list")
        parsed = [_parse_input(r, i) for i, r in enumerate(inputs_raw)]
        inputs = [p[0] for p in parsed]
        task_raw = _require(raw, "task", "config")
        if not isinstance(task_raw, dict) or len(task_raw) != 1:
            raise ConfigError(f"task must hold exactly one of {TASKS}")
        (task, options), = task_raw.items()
        if task not in TASKS:
            raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
        mode = raw.get("mode", EQUALITY if all(s.is_equality for s in inputs) else INEQUALITY)
        if mode not in (EQUALITY, INEQUALITY):
            raise ConfigError(f"unknown mode {mode!r}")
        if mode == EQUALITY and not all(s.is_equality for s in inputs):
            raise ConfigError("equality mode needs moments (not intervals) on every input")
        solver = _parse_solver(raw.get("solver"), int(raw.get("seed", 0) if seed is None else seed), workers)
        model = _require(raw, "model", "config")
        if not isinstance(model, dict) or len({"builtin", "external"} & set(model)) != 1:
            raise ConfigError("model needs exactly one of 'builtin' or 'external'")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, OUQError):
            raise
        raise ConfigError(str(exc)) from exc
    out = Path(output_dir or raw.get("output", {}).get("directory", "results"))
    if not out.is_absolute() and output_dir is None:
        out = path.parent / out
    return ProblemConfig(inputs, model, task, dict(options or {}), mode, solver, out, [p[1] for p in parsed])


def build_model(config: ProblemConfig) -> Model:
    d = len(config.inputs)
    spec = config.model
    if "builtin" in spec:
        model = builtin_model(str(spec["builtin"]), d)
    else:
        ext = spec["external"]
        command = _require(ext, "command", "model.external")
        if isinstance(command, str):
            command = command.split()
        model = ExternalModel(
            ExternalModelConfig(
                tuple(str(c) for c in command),
                cwd=ext.get("cwd"),
                batch_size=int(ext.get("batch_size", 1024)),
                timeout=float(ext.get("timeout", 60.0)),
            ),
            dimension=d,
            units=str(ext.get("units", "")),
        )
    if model.dimension != d:
        raise ConfigError(f"model dimension {model.dimension} does not match {d} inputs")
    return model


def _threshold_grid(options: dict) -> np.ndarray:
    if "thresholds" in options:
        grid = np.asarray(options["thresholds"], dtype=float)
    else:
        try:
            grid = np.linspace(float(options["start"]), float(options["stop"]), int(options.get("num", 20)))
        except KeyError as exc:
            raise ConfigError("envelope task needs 'thresholds' or 'start'/'stop'[/'num']") from exc
    if grid.ndim != 1 or not grid.size or np.any(np.diff(grid) < 0):
        raise ConfigError("envelope thresholds must be a sorted, non-empty list")
    return grid


def _dump_json(path: Path, payload: Any) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _run_envelope(config: ProblemConfig, model: Model) -> list[Path]:
    grid = _threshold_grid(config.task_options)
    curve = lower_envelope(config.inputs, model, config.mode, grid, config.solver)
    out = config.output_dir
    csv_path = out / "envelope.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["h", "envelope_value", "raw_value"])
        for h, v, r in zip(curve.thresholds, curve.values, curve.raw_values):
            writer.writerow([repr(float(h)), repr(float(v)), repr(float(r))])
    points = []
    for j, h in enumerate(curve.thresholds):
        witness = curve.witness_measure(j)
        report = curve.reports[j]
        points.append({
            "h": float(h),
            "envelope_value": float(curve.values[j]),
            "raw_value": None if np.isnan(curve.raw_values[j]) else float(curve.raw_values[j]),
            "witness_index": int(curve.witness[j]),
            "measure": witness.to_dict(config.names) if witness is not None else None,
            "solver": report.to_dict() if report is not None else None,
            "error": curve.errors.get(j),
        })
    json_path = out / "envelope_measures.json"
    _dump_json(json_path, {"mode": config.mode, "points": points})
    return [csv_path, json_path]


def _run_max_quantile(config: ProblemConfig, model: Model) -> list[Path]:
    opts = config.task_options
    level = float(_require(opts, "level", "task.max_quantile"))
    if not 0 < level < 1:
        raise ConfigError(f"task.max_quantile: level {level} is not in (0, 1)")
    interval = tuple(float(v) for v in opts["interval"]) if "interval" in opts else None
    resolution = float(opts["resolution"]) if "resolution" in opts else None
    res = max_quantile(
        config.inputs, model, config.mode, level, interval, resolution, config.solver,
        restarts=int(opts.get("restarts", 3)),
    )
    path = config.output_dir / "quantile.json"
    _dump_json(path, {
        "level": res.level,
        "quantile": res.quantile,
        "bracket": [res.lower, res.upper],
        "envelope_at_bracket": [res.lower_value, res.upper_value],
        "witness": res.witness.to_dict(config.names) if res.witness is not None else None,
        "probes": [{"h": h, "value": v} for h, v in res.probes],
        "mode": config.mode,
    })
    return [path]


def _run_baseline(config: ProblemConfig, model: Model) -> list[Path]:
    opts = config.task_options
    if any(d is None for d in config.distributions):
        raise ConfigError("baseline task needs a distribution on every input")
    n = int(opts.get("n", 100_000))
    level = float(opts.get("level", 0.95))
    ci_level = float(opts.get("ci_level", 0.9))
    n_boot = int(opts.get("n_boot", 1000))
    seed = config.solver.seed
    streams = np.random.SeedSequence(seed).spawn(len(config.distributions))
    points = np.column_stack([sample(d, n, np.random.default_rng(s)) for d, s in zip(config.distributions, streams)])
    values = model.evaluate(points)
    q = empirical_quantile(values, level)
    lo, hi = bootstrap_ci(values, level, ci_level, n_boot, seed)
    path = config.output_dir / "baseline.json"
    _dump_json(path, {
        "n": n,
        "level": level,
        "quantile": q,
        "ci_level": ci_level,
        "ci": [lo, hi],
        "n_boot": n_boot,
        "seed": seed,
    })
    cdf_path = config.output_dir / "baseline_cdf.csv"
    probs = np.linspace(0.0, 1.0, 201)
    with cdf_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["h", "cdf"])
        for p, h in zip(probs, np.quantile(values, probs, method="inverted_cdf")):
            writer.writerow([repr(float(h)), repr(float(p))])
    return [path, cdf_path]


def run(config_path: str | Path, seed: int | None = None, workers: int | None = None,
        output_dir: str | None = None) -> list[Path]:
    config = load_config(config_path, seed, workers, output_dir)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    runner = {"envelope": _run_envelope, "max_quantile": _run_max_quantile, "baseline": _run_baseline}[config.task]
    with build_model(config) as model:
        if config.task != "baseline":
            # fail on infeasible constraints before any optimization starts
            PofObjective(ObjectiveSpec(tuple(config.inputs), model, 0.0, config.mode))
        return runner(config, model)


def validate(config_path: str | Path) -> str:
    """Check constraints and the model without optimizing; returns ``"ok"``."""
    config = load_config(config_path)
    with build_model(config) as model:
        objective = PofObjective(ObjectiveSpec(tuple(config.inputs), model, 0.0, config.mode))
        if config.mode == INEQUALITY:
            _, feasible = objective.measure(np.full(objective.dimension, 0.5))
            if not feasible:
                raise InfeasibleMoments("interval constraints admit no measure")
        centre = np.array([0.5 * (s.lower + s.upper) for s in config.inputs])
        value = model.handshake(centre) if isinstance(model, ExternalModel) else model(centre)
        if not np.all(np.isfinite(value)):
            raise ConfigError("model returned a non-finite value at the centre of the input box")
    return "ok"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="canonical-ouq", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="solve the task in a config file")
    p_run.add_argument("config", help="YAML problem config")
    p_run.add_argument("-o", "--output-dir", help="directory for result files (overrides the config)")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_run.add_argument("--workers", type=int, help="threads for objective evaluation")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config", help="YAML problem config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "run":
            for path in run(args.config, args.seed, args.workers, args.output_dir):
                print(path)
        else:
            print(validate(args.config))
    except OUQError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
