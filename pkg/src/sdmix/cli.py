"""Command-line entry point: ``sdmix {run,sweep,toy,gen-synth}``.

Exit codes: 0 success, 1 config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, parse_config
from .data import DataError, synthetic_series, write_domain_csv
from .training import NumericError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("sdmix")


def _figures(args):
    # the flag only switches figures off; otherwise the config decides
    return False if args.no_figures else None


def _cmd_run(args) -> int:
    from .experiment import run_experiment

    reports = run_experiment(args.config, args.out, seed=args.seed, figures=_figures(args))
    for r in reports:
        print(f"{r.algorithm:22s} seed {r.seed:<4d} mean held-out accuracy {r.mean_accuracy:.4f}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .experiment import run_sweep

    best, rows = run_sweep(args.config, args.out, seed=args.seed, jobs=args.jobs, figures=_figures(args))
    print(f"{len(rows)} combinations; best by validation: alpha={best['alpha']} top_c={best['top_c']} "
          f"gamma={best['gamma']} (val {best['mean_val_accuracy']:.4f})")
    return EXIT_OK


def _cmd_toy(args) -> int:
    from .config import ToyConfig
    from .toy import toy_boundary_demo

    exp = parse_config(args.config, require_data=False) if args.config else None
    cfg = exp.toy if exp is not None else ToyConfig()
    figures = not args.no_figures and (exp.figures if exp is not None else True)
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    results = toy_boundary_demo(cfg, args.out, figures=figures)
    for r in results:
        print(f"seed {r.seed:<4d} {r.method:14s} test {r.test_accuracy:.4f} near-wide {r.near_wide_accuracy:.4f}")
    return EXIT_OK


def _cmd_gen_synth(args) -> int:
    cfg = parse_config(args.config)
    if cfg.synthetic is None:
        raise ConfigError("gen-synth needs a [synthetic] section")
    seed = cfg.synthetic_seed if args.seed is None else args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for series in synthetic_series(cfg.synthetic, seed):
        path = out / f"domain_{series.domain_id}.csv"
        write_domain_csv(series, path)
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdmix", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="INI-style config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")

    p = sub.add_parser("run", help="leave-one-domain-out training and evaluation")
    common(p)
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="alpha x top_c x gamma grid, selected by validation accuracy")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="concurrent runs")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("toy", help="2-D Gaussian decision-boundary demo")
    common(p, config_required=False)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_toy)

    p = sub.add_parser("gen-synth", help="write the synthetic domains as CSV series")
    common(p)
    p.set_defaults(func=_cmd_gen_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
