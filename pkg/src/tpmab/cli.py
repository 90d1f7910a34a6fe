"""Command-line entry point: run, bounds, dist, plot, presets."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .bounds import BOUNDS_COLUMNS, DegenerateInstanceError, InstanceSummary, bounds_table, log_grid, tightness_condition
from .env import TraceFormatError
from .harness import ConfigError, ExperimentConfig, ExperimentError, export_results, load_config, run_experiment, summary_table
from .plot import PlotError, bar_chart_svg, line_chart_svg, read_bound_series, read_series
from .presets import PRESET_NAMES, preset_config
from .spread import (
    PRESETS,
    InvalidParameterError,
    beta_binomial_spread,
    boltzmann_spread,
    expected_index,
    hypergeometric_spread,
    index_of_coincidence,
    named_spread,
    spread_from_spec,
    uniform_spread,
    zipfian_spread,
)

log = logging.getLogger("tpmab")

OUT_DIR_ENV = "TPMAB_OUT_DIR"


class CliError(Exception):
    pass


def _positive(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value!r}")
    return n


def _seed(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {value!r}") from None
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return n


def _float_list(value: str) -> list[float]:
    try:
        return [float(v) for v in value.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}") from None


def _add_common(p: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=_seed, default=default, help="base seed (overrides the config)")
    p.add_argument("--workers", type=_positive, default=default, help="parallel worker processes")
    p.add_argument("--out-dir", default=default, help=f"output directory (default: ${OUT_DIR_ENV} or ./results)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tpmab", description="Temporally-partitioned bandit experiments and bounds.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="{run,bounds,dist,plot,presets}")

    p = sub.add_parser("run", help="run an experiment from a config file or bundled preset")
    p.add_argument("--config", required=True, help="path to a JSON config, or a bundled preset name")
    p.add_argument("--horizon", type=_positive, help="override the horizon T")
    p.add_argument("--runs", type=_positive, help="override the number of runs")
    p.add_argument("--checkpoint-stride", type=_positive, help="rounds between recorded regret points")
    _add_common(p, suppress=True)

    p = sub.add_parser("bounds", help="evaluate the lower and upper regret bounds over a grid of horizons")
    p.add_argument("--alpha", type=_positive, required=True)
    p.add_argument("--tau-max", type=_positive, required=True)
    p.add_argument("--means", type=_float_list, required=True, help="comma-separated arm means")
    p.add_argument("--max-rewards", type=_float_list, required=True, help="comma-separated max rewards")
    p.add_argument(
        "--dist",
        default="uniform",
        help="spread: 'uniform', a preset name, 'kind:key=value,...' or a JSON object (default: uniform)",
    )
    p.add_argument("--t-min", type=int, default=2)
    p.add_argument("--t-max", type=int, default=100_000)
    p.add_argument("--points", type=_positive, default=50)
    p.add_argument("--tightness", action="store_true", help="print the tightness condition value to stderr")
    p.add_argument("--output", help="CSV path (default: stdout)")

    p = sub.add_parser("dist", help="inspect a spread PMF")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--kind", choices=["uniform", "beta_binomial", "zipfian", "boltzmann", "hypergeometric"])
    group.add_argument("--named", help=f"preset name ({', '.join(PRESETS)})")
    p.add_argument("--alpha", type=_positive, required=True)
    p.add_argument("--a", type=float, help="beta-binomial shape a")
    p.add_argument("--b", type=float, help="beta-binomial shape b")
    p.add_argument("--s", type=float, help="zipfian exponent")
    p.add_argument("--lam", type=float, help="boltzmann decay rate")
    p.add_argument("--n-pop", type=int, help="hypergeometric population size")
    p.add_argument("--csv", help="write the PMF as CSV")
    p.add_argument("--svg", help="write a bar chart of the PMF")

    p = sub.add_parser("plot", help="render results or bounds as SVG")
    p.add_argument("--input", required=True, help="results CSV/JSON from 'run' or a bounds CSV")
    p.add_argument("--overlay-bounds", help="bounds CSV to overlay")
    p.add_argument("--log-x", action="store_true")
    p.add_argument("--title", default="Cumulative regret")
    p.add_argument("--output", required=True)

    p = sub.add_parser("presets", help="list or export bundled configs")
    p.add_argument("action", nargs="?", choices=["list", "show", "export"], default="list")
    p.add_argument("name", nargs="?")
    p.add_argument("--output", help="destination for 'export'")
    return parser


def _resolve_out_dir(args, configured: str | None = None) -> Path:
    # flag, then environment, then the config's output.dir, then ./results
    return Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or configured or "results")


def _load_experiment(ref: str) -> ExperimentConfig:
    path = Path(ref)
    if path.exists() or ref not in PRESET_NAMES:
        if not path.exists():
            raise CliError(f"{ref}: config file not found (and not a bundled preset)")
        return load_config(path)
    return ExperimentConfig.from_dict(preset_config(ref))


def cmd_run(args) -> int:
    config = _load_experiment(args.config)
    if args.horizon is not None:
        config.horizon = args.horizon
    if args.runs is not None:
        config.num_runs = args.runs
    if args.checkpoint_stride is not None:
        config.checkpoint_stride = args.checkpoint_stride
    if args.seed is not None:
        config.base_seed = args.seed
    config.__post_init__()
    out_dir = _resolve_out_dir(args, config.out_dir)
    workers = args.workers or 1
    log.info("running %s: %d policies x %d runs, T=%d", config.name, len(config.policies), config.num_runs, config.horizon)
    result = run_experiment(config, workers=workers)
    written = []
    for fmt in config.formats:
        written.append(export_results(result, fmt, out_dir / f"{config.name}.{fmt}"))
    print(summary_table(result))
    for path in written:
        print(f"wrote {path}")
    return 0


def _parse_dist(text: str, alpha: int):
    text = text.strip()
    if text.startswith("{"):
        try:
            spec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CliError(f"--dist: invalid JSON ({exc.msg})") from None
        return spread_from_spec(spec, alpha=alpha)
    if ":" in text:
        kind, _, rest = text.partition(":")
        spec: dict = {"kind": kind}
        for item in filter(None, rest.split(",")):
            key, sep, value = item.partition("=")
            if not sep:
                raise CliError(f"--dist: expected key=value, got {item!r}")
            spec[key.strip()] = int(value) if key.strip() == "n_pop" else float(value)
        return spread_from_spec(spec, alpha=alpha)
    return spread_from_spec(text, alpha=alpha)


def _fmt(v: float) -> str:
    return repr(float(v))


def cmd_bounds(args) -> int:
    if args.t_min < 2:
        raise CliError(f"--t-min must be >= 2, got {args.t_min}")
    if args.t_max < args.t_min:
        raise CliError(f"--t-max ({args.t_max}) must be >= --t-min ({args.t_min})")
    if len(args.means) != len(args.max_rewards):
        raise CliError(f"--means has {len(args.means)} values but --max-rewards has {len(args.max_rewards)}")
    spread = _parse_dist(args.dist, args.alpha)
    inst = InstanceSummary.from_arrays(args.means, args.max_rewards, args.alpha, args.tau_max, spread)
    try:
        rows = bounds_table(inst, log_grid(args.t_min, args.t_max, args.points))
    except DegenerateInstanceError as exc:
        raise CliError(f"degenerate instance: {exc}") from None
    if args.tightness:
        value, tighter = tightness_condition(args.alpha, spread)
        print(f"tightness value {value!r} ({'>' if tighter else '<='} 1)", file=sys.stderr)
    fh = open(args.output, "w", encoding="utf-8", newline="") if args.output else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BOUNDS_COLUMNS)
        for row in rows:
            writer.writerow([row["T"]] + [_fmt(row[c]) for c in BOUNDS_COLUMNS[1:]])
    finally:
        if args.output:
            fh.close()
    if args.output:
        print(f"wrote {args.output}")
    return 0


def _dist_from_flags(args):
    alpha = args.alpha
    if args.named:
        return named_spread(args.named, alpha)

    def need(flag, value):
        if value is None:
            raise CliError(f"--kind {args.kind} needs {flag}")
        return value

    if args.kind == "uniform":
        return uniform_spread(alpha)
    if args.kind == "beta_binomial":
        return beta_binomial_spread(alpha, need("--a", args.a), need("--b", args.b))
    if args.kind == "zipfian":
        return zipfian_spread(alpha, need("--s", args.s))
    if args.kind == "boltzmann":
        return boltzmann_spread(alpha, need("--lam", args.lam))
    return hypergeometric_spread(alpha, need("--n-pop", args.n_pop))


def cmd_dist(args) -> int:
    pmf = _dist_from_flags(args)
    label = pmf.label or args.kind
    print(f"# {label}")
    print("k,probability")
    for k, p in enumerate(pmf.probs.tolist(), start=1):
        print(f"{k},{p!r}")
    print(f"E[Y] = {expected_index(pmf)!r}")
    print(f"index of coincidence = {index_of_coincidence(pmf)!r}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["k", "probability"])
            for k, p in enumerate(pmf.probs.tolist(), start=1):
                writer.writerow([k, repr(p)])
        print(f"wrote {args.csv}")
    if args.svg:
        Path(args.svg).write_text(bar_chart_svg(pmf.probs.tolist(), f"PMF of {label}"), encoding="utf-8")
        print(f"wrote {args.svg}")
    return 0


def cmd_plot(args) -> int:
    series = read_series(args.input)
    if args.overlay_bounds:
        series += read_bound_series(args.overlay_bounds)
    svg = line_chart_svg(series, log_x=args.log_x, title=args.title)
    out = Path(args.output)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg, encoding="utf-8")
    print(f"wrote {out}")
    return 0


def cmd_presets(args) -> int:
    if args.action == "list":
        for name in PRESET_NAMES:
            print(name)
        return 0
    if not args.name:
        raise CliError(f"presets {args.action} needs a preset name")
    try:
        text = json.dumps(preset_config(args.name), indent=2) + "\n"
    except KeyError as exc:
        raise CliError(exc.args[0]) from None
    if args.action == "export" and args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {"run": cmd_run, "bounds": cmd_bounds, "dist": cmd_dist, "plot": cmd_plot, "presets": cmd_presets}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (
        CliError,
        ConfigError,
        ExperimentError,
        InvalidParameterError,
        TraceFormatError,
        PlotError,
        OSError,
        ValueError,
    ) as exc:
        print(f"tpmab {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
