"""Command-line entry point: ``schumpeter-soc {simulate,sweep,analyze,preset}``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from . import __version__
from .exceptions import ConfigError, InsufficientDataError, ResourceError
from .experiment import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_RUNTIME,
    PRESETS,
    format_value,
    analyze_timeseries,
    parse_config,
    preset,
    run_bs_control,
    run_experiment,
    run_sweep,
)

log = logging.getLogger("schumpeter_soc")

# flag dest -> dotted config key
FLAG_KEYS = {
    "n": "model.n",
    "p": "model.p",
    "seed": "model.seed",
    "density_plus": "model.density_plus",
    "density_minus": "model.density_minus",
    "rule2": "model.rule2_variant",
    "initial_diversity": "model.initial_diversity",
    "track_product": "model.track_product",
    "steps": "steps",
    "burn_in": "burn_in_fraction",
    "tau_min": "analysis.tau_min",
    "binning": "analysis.binning",
    "threshold": "analysis.threshold",
    "out": "outputs.directory",
    "jobs": "jobs",
    "p_values": "p_values",
    "seeds": "replicate_seeds",
}


class UsageError(Exception):
    pass


def _tau_min(text: str):
    if text == "auto":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tau-min must be an integer or 'auto', got {text!r}")


def _float_list(text: str) -> list:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_common(sp: argparse.ArgumentParser, model: bool = True) -> None:
    sp.add_argument("--config", help="JSON config file; flags override its values")
    if model:
        g = sp.add_argument_group("model")
        g.add_argument("--n", type=int, help="number of possible products")
        g.add_argument("--p", type=float, help="innovation probability per step")
        g.add_argument("--seed", type=int)
        g.add_argument("--density-plus", type=float, help="creation tensor density")
        g.add_argument("--density-minus", type=float, help="destruction tensor density")
        g.add_argument("--rule2", choices=["random-flip", "fitness"])
        g.add_argument("--initial-diversity", type=int)
        g.add_argument("--track-product", type=int, metavar="IDX")
        g.add_argument("--steps", type=int)
    a = sp.add_argument_group("analysis")
    a.add_argument("--burn-in", type=float, metavar="FRACTION", help="leading fraction discarded")
    a.add_argument("--tau-min", type=_tau_min, help="integer or 'auto'")
    a.add_argument("--binning", choices=["log", "linear"])
    a.add_argument("--threshold", type=float, help="per-sample log-likelihood ratio margin")
    sp.add_argument("--out", metavar="DIR", help="output directory")
    sp.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    # argparse exits with 2 on bad flags, matching the config-error code
    parser = argparse.ArgumentParser(prog="schumpeter-soc", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="single model run")
    _add_common(sim)

    sw = sub.add_parser("sweep", help="runs over p values and/or seeds")
    _add_common(sw)
    sw.add_argument("--p-values", type=_float_list, metavar="P1,P2,...")
    sw.add_argument("--seeds", type=_int_list, metavar="S1,S2,...")
    sw.add_argument("--jobs", type=int, help="parallel worker processes")

    an = sub.add_parser("analyze", help="re-run the analysis on a timeseries.csv")
    an.add_argument("timeseries")
    _add_common(an, model=False)

    pr = sub.add_parser("preset", help="named reproduction run")
    pr.add_argument("name", choices=PRESETS)
    pr.add_argument("--steps", type=int, help="override the preset step count")
    pr.add_argument("--seed", type=int)
    pr.add_argument("--jobs", type=int, default=1)
    pr.add_argument("--out", metavar="DIR")
    pr.add_argument("-v", "--verbose", action="store_true")
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict:
    return {key: getattr(args, dest) for dest, key in FLAG_KEYS.items()
            if getattr(args, dest, None) is not None}


def _run(args: argparse.Namespace) -> int:
    if args.command == "preset":
        cfg = preset(args.name, args.out)
        if args.name == "bs-control":
            if args.steps is not None:
                cfg.bs.steps = args.steps
            if args.seed is not None:
                cfg.bs.seed = args.seed
            return _report(run_bs_control(cfg))
        ov = {"jobs": args.jobs}
        if args.steps is not None:
            ov["steps"] = args.steps
        if args.seed is not None:
            ov["model.seed"] = args.seed
        cfg = parse_config(None, ov, base=cfg)
        return _report(run_sweep(cfg) if cfg.p_values else run_experiment(cfg))

    cfg = parse_config(args.config, overrides_from_args(args))
    if args.command == "simulate":
        return _report(run_experiment(cfg))
    if args.command == "sweep":
        if cfg.p_values is None and cfg.replicate_seeds is None:
            raise UsageError("sweep needs --p-values and/or --seeds (or a config listing them)")
        if cfg.p_values == [] or cfg.replicate_seeds == []:
            raise UsageError("empty sweep list")
        return _report(run_sweep(cfg))
    return _report(analyze_timeseries(args.timeseries, cfg))


def _report(res) -> int:
    s = res.summary
    keys = [k for k in ("verdict", "alpha_mle", "slope_loglog", "lambda", "n_plateaus",
                        "n_ok", "n_failed", "extremal_verdict", "random_extinction_verdict")
            if k in s]
    for k in keys:
        print(f"{k}={format_value(s[k])}")
    print(f"output={res.directory}")
    return res.exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientDataError as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ResourceError, OSError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
