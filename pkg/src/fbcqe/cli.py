"""Command-line interface.

Subcommands: solve, sweep, crossings, truncation-check, calibrate-shots.
Flags override values from an optional INI config file (--config).
Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from . import experiments
from .errors import NumericalError, ValidationError


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the contract reserves 2 for numerical
    # failures, so usage problems exit 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="INI config file")
    p.add_argument("--out", metavar="DIR", help="output directory (default runs/)")
    p.add_argument("--seed", type=int, help="root seed (u64)")
    p.add_argument("--backend", choices=["exact", "sampled"], help="expectation backend")
    p.add_argument("--shots", type=int, help="shots per expectation (sampled backend)")
    p.add_argument("--jobs", type=int, help="parallel sweep workers (default 1)")
    p.add_argument("--bless", action="store_true", default=None, help="write golden files")
    p.add_argument("--goldens", metavar="DIR", help="golden-file directory")
    # model
    p.add_argument("--n-sites", type=int, dest="n_sites")
    p.add_argument("--omega-b", type=float, dest="omega_b")
    p.add_argument("--omega-f", type=float, dest="omega_f")
    p.add_argument("--g", type=float, dest="g_c", help="coupling strength")
    p.add_argument("--n-max", type=int, dest="n_max", help="boson truncation")
    p.add_argument("--hamiltonian-file", dest="hamiltonian_file", metavar="PATH")
    p.add_argument("--fermion-modes", type=int, dest="fermion_modes")
    # sweep range
    p.add_argument("--g-lo", type=float, dest="g_lo")
    p.add_argument("--g-hi", type=float, dest="g_hi")
    p.add_argument("--points", type=int)
    # solver knobs
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--tol-variance", type=float, dest="tol_variance")
    p.add_argument("--tol-energy", type=float, dest="tol_energy")


_CONFIG_KEYS = (
    "out",
    "seed",
    "backend",
    "shots",
    "jobs",
    "bless",
    "goldens",
    "n_sites",
    "omega_b",
    "omega_f",
    "g_c",
    "n_max",
    "hamiltonian_file",
    "fermion_modes",
    "g_lo",
    "g_hi",
    "points",
    "max_iters",
    "tol_variance",
    "tol_energy",
)


def build_parser() -> _Parser:
    parser = _Parser(prog="fbcqe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("solve", "single-point solve; writes trace.txt and summary.txt"),
        ("sweep", "coupling sweep; writes sweep.csv"),
        ("crossings", "locate ground-sector level crossings by bisection"),
        ("truncation-check", "ground-energy drift under larger boson ceilings"),
        ("calibrate-shots", "fit shots against mean energy error"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "crossings":
            p.add_argument("--tol", type=float, default=1e-6, help="bisection tolerance")
        if name == "truncation-check":
            p.add_argument("--n-max-list", help="comma-separated ceilings, e.g. 4,6,8")
            p.add_argument("--tol", type=float, default=1e-9, help="allowed drift")
        if name == "calibrate-shots":
            p.add_argument("--target", type=float, default=7e-3, help="target mean |error|")
            p.add_argument("--shots-grid", help="comma-separated shot counts")
            p.add_argument("--probe-points", type=int, default=7)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {k: getattr(args, k) for k in _CONFIG_KEYS}
        config = experiments.load_config(args.config, overrides)
        if args.command == "solve":
            return experiments.cmd_solve(config)
        if args.command == "sweep":
            return experiments.cmd_sweep(config)
        if args.command == "crossings":
            return experiments.cmd_crossings(config, tol=args.tol)
        if args.command == "truncation-check":
            ceilings = None
            if args.n_max_list:
                ceilings = [int(tok) for tok in args.n_max_list.split(",")]
            return experiments.cmd_truncation_check(config, n_max_list=ceilings, tol=args.tol)
        if args.command == "calibrate-shots":
            grid = (1_000_000, 4_000_000, 16_000_000)
            if args.shots_grid:
                grid = tuple(int(tok) for tok in args.shots_grid.split(","))
            return experiments.cmd_calibrate_shots(
                config, target=args.target, shots_grid=grid, probe_points=args.probe_points
            )
        raise ValidationError(f"unknown command {args.command!r}")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
