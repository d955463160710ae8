"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime or numerical error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..filters import FilterError
from .config import ALGORITHMS, ConfigError, load_config
from .export import export_metrics_csv, write_outputs
from .runner import CASE_STUDIES, case_study_config, run, sweep_snr

logger = logging.getLogger("dwlfreq")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # bad arguments are configuration errors, not argparse's default status 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _algos(text: str) -> list[str]:
    names = [a.strip().upper() for a in text.split(",") if a.strip()]
    bad = [a for a in names if a not in ALGORITHMS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown algorithms {bad}; choose from {', '.join(ALGORITHMS)}")
    return names


def _levels(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR list {text!r}") from None


def _common(p: argparse.ArgumentParser, out_required: bool = False) -> None:
    p.add_argument("--out", type=Path, required=out_required, help="output directory for CSV files")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--algos", type=_algos, help="comma separated algorithm names")
    p.add_argument("--workers", type=int, default=None, help="processes for trial chunks")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dwlfreq", description="Distributed widely linear frequency estimation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a scenario file")
    sim.add_argument("--config", type=Path, required=True)
    _common(sim, out_required=True)

    cs = sub.add_parser("case-study", help="run one of the canonical case studies")
    cs.add_argument("number", type=int, help=f"case study, one of {sorted(CASE_STUDIES)}")
    cs.add_argument("--variant", default="gaussian", choices=["gaussian", "spike"], help="case study 2 only")
    cs.add_argument("--snr", type=float)
    _common(cs)

    sw = sub.add_parser("sweep-snr", help="bias and variance against SNR")
    sw.add_argument("--levels", type=_levels, default=[20.0, 30.0, 40.0, 50.0])
    sw.add_argument("--config", type=Path, help="scenario file; case study 5 by default")
    _common(sw)
    return parser


def _report(results) -> None:
    for res in results:
        for name in res.trajectories:
            m = res.metrics(name)
            print(f"{res.snr_db:>6} dB  {name:<10} bias {m.bias.mean():+.3e} Hz  variance {m.variance.mean():.3e} Hz^2")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            cfg = load_config(args.config).with_overrides(seed=args.seed, trials=args.trials, algorithms=args.algos)
            result = run(cfg, args.workers)
            for path in write_outputs(result, args.out):
                print(path)
            _report([result])
        elif args.command == "case-study":
            cfg = case_study_config(args.number, variant=args.variant, seed=args.seed, trials=args.trials,
                                    algorithms=args.algos, snr_db=args.snr)
            result = run(cfg, args.workers)
            if args.out is not None:
                for path in write_outputs(result, args.out):
                    print(path)
            _report([result])
        else:
            base = load_config(args.config) if args.config else case_study_config(5)
            base = base.with_overrides(seed=args.seed)
            results = sweep_snr(args.levels, base, args.algos, args.trials, args.workers)
            if args.out is not None:
                print(export_metrics_csv(results, Path(args.out) / "sweep.csv"))
            _report(results)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (FilterError, np.linalg.LinAlgError, FloatingPointError, OSError, ValueError) as exc:
        logger.error("run failed: %s", exc)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
