"""Command-line interface.

Exit codes: 0 success, 1 invalid configuration or inputs, 2 numerical
failure (invariant violation), 3 resource guard.
"""
from __future__ import annotations

import argparse
import sys

from .config import MODES, ConfigError, build_config, parse_value, read_config_file
from .errors import InvariantViolation, ResourceGuardError
from .runner import run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_RESOURCE = 0, 1, 2, 3

_FLAGS = [
    ("L", "linear lattice size (even)"),
    ("J", "hopping amplitude, the energy unit"),
    ("h_s", "on-site energy of system sites"),
    ("gamma", "coupling rates, comma or space separated"),
    ("M", "bath levels per site"),
    ("omega_max", "largest bath level"),
    ("dt", "trajectory time step"),
    ("t_s", "final time"),
    ("N_TJ", "number of trajectories"),
    ("N_init", "number of random bath initializations"),
    ("seed", "master random seed"),
    ("sample_times", "sample times (default: every 1/J up to t_s)"),
    ("output", "output directory"),
    ("x_min", "smallest size entering scaling fits"),
    ("max_modes", "refuse runs with more modes than this"),
    ("workers", "worker processes for trajectories"),
    ("inputs", "input CSVs for analyze"),
    ("observable", "column fitted by analyze"),
    ("n_boot", "bootstrap resamples for the collapse"),
    ("grid", "starting points per parameter for the collapse"),
    ("gamma_c_range", "search range for gamma_c"),
    ("nu_range", "search range for nu"),
    ("zeta_range", "search range for zeta"),
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fermibath", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="mode", required=True, parser_class=_Parser)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run the {mode} pipeline")
        p.add_argument("--config", help="flat key=value file; command-line flags take precedence")
        for name, help_text in _FLAGS:
            p.add_argument(f"--{name}", dest=name, nargs="+", default=argparse.SUPPRESS,
                           metavar="VALUE", help=help_text)
    return parser


def parse_args(argv=None):
    args = vars(_parser().parse_args(argv))
    mode = args.pop("mode")
    config_file = args.pop("config", None)
    layers = [read_config_file(config_file)] if config_file else []
    cli = {key: parse_value(key, " ".join(values)) for key, values in args.items()}
    cli["mode"] = mode
    return build_config(*layers, cli)


def main(argv=None) -> int:
    try:
        config = parse_args(argv)
        result = run(config)
    except ResourceGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except InvariantViolation as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for note in result.notes:
        print(f"note: {note}", file=sys.stderr)
    for name, path in result.files.items():
        print(f"{name}: {path}")
    print(f"manifest: {result.manifest}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
