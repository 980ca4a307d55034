"""Command-line entry point.

Subcommands: ``run`` executes a scenario and writes the metric CSV plus a
summary and a rendered figure; ``verify`` certifies a scenario against
the matrix oracle; ``sweep`` repeats a base scenario across parameter
values; ``demo`` emits ready-to-run scenario files.

Exit codes: 0 success, 1 configuration error, 2 audit failure or oracle
mismatch.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_scenario, save_scenario
from .graphs import ring_with_chord
from .harness import (
    AuditError,
    ConfigError,
    ScenarioConfig,
    run_scenario,
    summary_text,
    write_metrics_csv,
)
from .oracle import spread
from .verify import verify_scenario

SEED_ENV = "PUSHSUM_SEED"
SWEEP_PARAMS = ("failure_probability", "T", "seed", "n")


def _error(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def _load(config_path: str, overrides) -> ScenarioConfig:
    cfg = load_scenario(config_path, overrides or ())
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            cfg = replace(cfg, seed=int(env_seed))
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer: {env_seed!r}") from exc
    return cfg


def cmd_run(args) -> int:
    try:
        cfg = _load(args.config, args.set)
    except ConfigError as exc:
        _error(str(exc))
        return 1
    try:
        result = run_scenario(cfg)
    except AuditError as exc:
        _error(str(exc))
        return 2
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(result.series, out)
    summary = summary_text(cfg, result)
    out.with_suffix(".summary.txt").write_text(summary)
    from .plotting import save_run_figure

    save_run_figure(result, out.with_suffix(".png"), title=f"{cfg.protocol} run")
    sys.stdout.write(summary)
    return 0


def cmd_verify(args) -> int:
    try:
        cfg = _load(args.config, args.set)
        checks = verify_scenario(cfg)
    except (ConfigError, ValueError) as exc:
        _error(str(exc))
        return 1
    failed = False
    for check in checks:
        if check.passed:
            print(f"PASS {check.name}")
        else:
            failed = True
            where = "" if check.failed_at is None else f" (first failure at iteration {check.failed_at})"
            print(f"FAIL {check.name}{where}: {check.detail}")
    return 2 if failed else 0


def _parse_sweep_value(param: str, text: str):
    if param == "failure_probability":
        return float(text)
    return int(text)


def _apply_sweep_value(cfg: ScenarioConfig, param: str, value) -> ScenarioConfig:
    if param == "failure_probability":
        return replace(cfg, failure_probability=value)
    if param == "T":
        return replace(cfg, T=value)
    if param == "seed":
        return replace(cfg, seed=value)
    # n: rebuild the topology as a directed ring plus chord, values 1..n
    loops = cfg.protocol != "robust"
    graph = ring_with_chord(value, self_loops=loops)
    return replace(cfg, graph=graph, x0=tuple(float(i) for i in range(1, value + 1)))


def cmd_sweep(args) -> int:
    try:
        cfg = _load(args.config, args.set)
    except ConfigError as exc:
        _error(str(exc))
        return 1
    if args.param not in SWEEP_PARAMS:
        _error(f"--param must be one of {SWEEP_PARAMS}")
        return 1
    raw_values = [v for v in (s.strip() for s in args.values.split(",")) if v]
    if not raw_values:
        _error("--values must list at least one value")
        return 1
    try:
        values = [_parse_sweep_value(args.param, v) for v in raw_values]
    except ValueError as exc:
        _error(f"--values: {exc}")
        return 1
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    final_spreads = []
    converged = []
    any_failed = False
    for value in values:
        try:
            run_cfg = _apply_sweep_value(cfg, args.param, value)
            run_cfg.validate()
            result = run_scenario(run_cfg)
        except (ConfigError, AuditError) as exc:
            _error(f"{args.param}={value}: {exc}")
            any_failed = True
            rows.append((value, "", float("nan")))
            final_spreads.append(None)
            converged.append(None)
            continue
        # values may contain dots, so build names with explicit extensions
        stem = f"run_{args.param}_{value}"
        write_metrics_csv(result.series, out_dir / f"{stem}.csv")
        from .plotting import save_run_figure

        save_run_figure(result, out_dir / f"{stem}.png", title=f"{args.param}={value}")
        final = spread(result.final_z)
        rows.append((value, "" if result.converged_at is None else result.converged_at, final))
        final_spreads.append(final)
        converged.append(result.converged_at)

    with open(out_dir / "summary.csv", "w") as fh:
        fh.write("value,converged_at,final_spread\n")
        for value, conv, final in rows:
            fh.write(f"{value},{conv},{final!r}\n")
    from .plotting import save_sweep_figure

    save_sweep_figure(args.param, values, final_spreads, converged, out_dir / "summary.png")
    return 2 if any_failed else 0


def _demo_scenario(name: str) -> ScenarioConfig:
    if name == "reliable":
        return ScenarioConfig(
            protocol="robust",
            graph=ring_with_chord(5),
            x0=(1.0, 2.0, 3.0, 4.0, 5.0),
            regime="robust",
            T=0,
            wake_probability=1.0,
            failure_probability=0.0,
            seed=1,
            iterations=20_000,
            audit_level="every_iteration",
        )
    if name == "lossy":
        # fixed eight-iteration blocks keep failures alive between forced
        # coverings, so the per-edge buffers actually carry mass
        return ScenarioConfig(
            protocol="robust",
            graph=ring_with_chord(5),
            x0=(1.0, 2.0, 3.0, 4.0, 5.0),
            block_lengths=(8,),
            repeat_blocks=True,
            wake_probability=0.5,
            failure_probability=0.5,
            seed=7,
            iterations=100_000,
            audit_level="boundaries",
        )
    if name == "diverging":
        lengths = tuple(2 ** k for k in range(1, 13))
        return ScenarioConfig(
            protocol="ordinary",
            graph=ring_with_chord(2, self_loops=True),
            x0=(0.0, 1.0),
            block_lengths=lengths,
            trace_mode="single_edge_per_block",
            iterations=sum(lengths),
            audit_level="boundaries",
            stop_when_converged=False,
        )
    raise ConfigError(f"unknown demo {name!r} (expected reliable, lossy or diverging)")


def cmd_demo(args) -> int:
    try:
        cfg = _demo_scenario(args.name)
    except ConfigError as exc:
        _error(str(exc))
        return 1
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_scenario(cfg, out)
    print(f"wrote {args.name} scenario to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pushsum",
        description="Simulate and verify averaging protocols over unreliable directed links.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario, write CSV/summary/figure")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True, help="CSV output path")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a scenario field, e.g. schedule.seed=3")
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser("verify", help="certify a scenario against the matrix oracle")
    verify.add_argument("--config", required=True)
    verify.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    verify.set_defaults(func=cmd_verify)

    sweep = sub.add_parser("sweep", help="run a scenario across parameter values")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--param", required=True, help=f"one of {', '.join(SWEEP_PARAMS)}")
    sweep.add_argument("--values", required=True, help="comma-separated list")
    sweep.add_argument("--out-dir", required=True)
    sweep.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    sweep.set_defaults(func=cmd_sweep)

    demo = sub.add_parser("demo", help="write a ready-made scenario file")
    demo.add_argument("--name", required=True, choices=("reliable", "lossy", "diverging"))
    demo.add_argument("--out", required=True)
    demo.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
