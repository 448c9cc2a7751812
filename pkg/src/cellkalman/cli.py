"""Command-line entry points.

Subcommands::

    generate    write a synthetic dataset (stream, latent states, complex, meta)
    forecast    run the filter over a stream, write report.json + steps.csv
    identify    run online cell identification, write identification.json
    decompose   write spectral diagnostics of a complex

Every subcommand accepts ``--config``; ``--seed``, ``--missing``,
``--epsilon`` and ``--out`` override the corresponding config entries.
Exit codes: 0 success, 1 configuration/usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .cellid import identify_cells
from .ekf import run_tkf
from .errors import CellKalmanError, ConfigError, SingularInnovation
from .harness import (
    RunConfig,
    apply_missing,
    evaluate,
    generate_synthetic,
    load_stream_csv,
    save_stream_csv,
)
from .spectral import build_operators, diagnostics, spectral_basis
from .topology import save_complex

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellkalman",
        description="Topological Kalman filtering on 2nd-order cell complexes",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("generate", "write a synthetic dataset"),
        ("forecast", "run the filter and write a run report"),
        ("identify", "run online 2-cell identification"),
        ("decompose", "write spectral diagnostics of the complex"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", type=Path, help="run configuration JSON")
        p.add_argument("--seed", type=int, help="master seed overriding all config seeds")
        p.add_argument("--missing", type=float, help="missing-data rate override")
        p.add_argument("--epsilon", type=float, help="identification tolerance override")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    return parser


def _load_config(args) -> RunConfig:
    config = RunConfig.from_json(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config.reseed(args.seed)
    if args.missing is not None:
        if not 0.0 <= args.missing < 1.0:
            raise ConfigError("--missing must lie in [0, 1)")
        config.missing_rate = args.missing
    if args.epsilon is not None:
        config.epsilon = args.epsilon
    return config


def _resolve_data(config: RunConfig):
    """Complex + stream from the configured sources."""
    if config.stream_source == "generate":
        return generate_synthetic(config)
    if isinstance(config.stream_source, dict) and "csv" in config.stream_source:
        cc = config.load_complex()
        stream = load_stream_csv(config.stream_source["csv"])
        if stream.n_components != cc.n_total:
            raise ConfigError(
                f"stream has {stream.n_components} components, complex has {cc.n_total}"
            )
        if config.missing_rate > 0:
            stream = apply_missing(stream, config.missing_rate, config.seeds["mask"])
        return cc, stream
    raise ConfigError(f"unrecognized stream_source: {config.stream_source!r}")


def _cmd_generate(config: RunConfig, out: Path) -> int:
    cc, stream = generate_synthetic(config)
    save_stream_csv(stream, out / "stream.csv")
    if stream.x_true is not None:
        np.savetxt(
            out / "states.csv",
            np.column_stack([np.arange(1, stream.t_steps + 1), stream.x_true]),
            delimiter=",", comments="",
            header="t," + ",".join(f"signal_{i}" for i in range(stream.x_true.shape[1])),
            fmt=["%d"] + ["%.17g"] * stream.x_true.shape[1],
        )
    save_complex(cc, out / "complex.json")
    meta = {"true_activation": cc.activation.tolist(), "t_steps": stream.t_steps}
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    config.to_json(out / "config.json")
    return 0


def _cmd_forecast(config: RunConfig, out: Path) -> int:
    cc, stream = _resolve_data(config)
    model = config.build_model(cc.n_total)
    report = run_tkf(
        stream.y, cc, model, rates=config.learning_rates, p_stab=config.p_stab,
    )
    report.write_json(out / "report.json")
    report.write_steps_csv(out / "steps.csv")
    return 0


def _cmd_identify(config: RunConfig, out: Path) -> int:
    cc, stream = _resolve_data(config)
    truth = cc.activation.copy() if config.stream_source == "generate" else None
    model = config.build_model(cc.n_total)
    warmup = max(1, int(np.ceil(config.warmup_fraction * stream.t_steps)))
    activation, report = identify_cells(
        stream.y, cc, model, warmup_steps=warmup, epsilon=config.epsilon,
        rates=config.identify_learning_rates, true_activation=truth,
    )
    report.write_json(out / "identification.json")
    inferred = cc.with_activation(activation)
    save_complex(inferred, out / "inferred_complex.json", active_only=True)
    if truth is not None:
        metrics = evaluate(predicted_activation=activation, true_activation=truth)
        with open(out / "metrics.json", "w") as fh:
            json.dump(metrics, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_decompose(config: RunConfig, out: Path) -> int:
    cc = config.load_complex() if config.stream_source != "generate" \
        else generate_synthetic(config)[0]
    ops = build_operators(cc)
    basis = spectral_basis(ops)
    with open(out / "diagnostics.json", "w") as fh:
        json.dump(diagnostics(ops, basis), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "forecast": _cmd_forecast,
    "identify": _cmd_identify,
    "decompose": _cmd_decompose,
}


def cli(argv=None) -> int:
    """Parse arguments and dispatch; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        config = _load_config(args)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](config, out)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SingularInnovation, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except CellKalmanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(cli())


if __name__ == "__main__":
    main()
