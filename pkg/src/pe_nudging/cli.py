"""Command line: ``pe-nudging {run-reference,twin,sweep,check}``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical abort
(CFL violation, non-finite state), 3 check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .dynamics import NumericalError
from .experiments import CHECKS, check_experiment, reference_experiment, sweep_experiment, twin_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pe-nudging", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", required=True, type=Path, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: config output_dir)")
        p.add_argument("--quiet", action="store_true", help="only print errors")

    common(sub.add_parser("run-reference", help="spin-up plus reference run"))
    common(sub.add_parser("twin", help="twin experiment (reference vs assimilated)"))
    common(sub.add_parser("sweep", help="twin experiments over mu / delta / forcing-mode grids"))
    chk = sub.add_parser("check", help="observation axioms, coercivity or parameter gates")
    chk.add_argument("which", choices=CHECKS)
    common(chk)
    return parser


def _summary_line(command: str, result) -> str:
    if command == "twin":
        tw = result["twin"]
        fit = tw.get("decay_fit") or {}
        pl = tw.get("plateau") or {}
        return (f"twin: rate={fit.get('rate', float('nan')):.4g} r2={fit.get('r_squared', float('nan')):.4f} "
                f"plateau_H1={pl.get('level', float('nan')):.4g} gates_pass={result['gates']['report']['pass_A'] and result['gates']['report']['pass_gate1'] and result['gates']['report']['pass_gate2']}")
    if command == "sweep":
        ok = sum(c["status"] == "ok" for c in result["cells"])
        slopes = ", ".join(f"mu={s['mu']:g}/{s['forcing_mode']}: {s['slope']}" for s in result["scaling_fit"])
        return f"sweep: {ok}/{len(result['cells'])} cells ok; scaling slopes [{slopes}]"
    if command == "run-reference":
        return f"run-reference: sup_H2(spin-up tail)={result['spin_up']['tail_max_H2']:.4g}"
    return ""


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed)
        out = args.out if args.out is not None else cfg.output_dir
        if args.command == "run-reference":
            result = reference_experiment(cfg, out)
        elif args.command == "twin":
            result = twin_experiment(cfg, out)
        elif args.command == "sweep":
            result = sweep_experiment(cfg, out)
        else:
            ok, report = check_experiment(cfg, args.which, out)
            if not args.quiet:
                print(f"check {args.which}: {'PASS' if ok else 'FAIL'} {report['result']}")
            return EXIT_OK if ok else EXIT_CHECK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if not args.quiet:
        print(_summary_line(args.command, result))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
