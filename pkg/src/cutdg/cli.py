"""Command-line front end.

Configuration can come from flags, from a flat key=value config file, or
both; flags win. Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""

import argparse
import json
import sys

import numpy as np

from . import harness
from .linalg import NumericalError

CASES = ("example1", "example3", "example4", "patch-test")
SPACES = ("dg", "trefftz")
STABS = ("gp", "wgp", "agg")


class UsageError(Exception):
    pass


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="cutdg",
        description=(
            "Unfitted DG / Trefftz DG solver on level-set geometries with "
            "ghost-penalty or aggregation stabilisation."
        ),
    )
    parser.add_argument("--config", help="flat key=value config file (flags win)")
    parser.add_argument("--case", choices=CASES, help="predefined case (default example1)")
    parser.add_argument("--space", choices=SPACES, help="ansatz space (default dg)")
    parser.add_argument("--stab", choices=STABS, help="stabilisation (default gp)")
    parser.add_argument("--k", type=int, help="polynomial degree (default 2)")
    parser.add_argument("--levels", type=int, help="refinement levels from n=8 (default 3)")
    parser.add_argument("--beta", type=float, help="Nitsche/IP penalty (default 10*k^2)")
    parser.add_argument("--gamma", type=float, help="ghost-penalty scaling override")
    parser.add_argument("--quad-order", type=int, help="quadrature order (default 2k+2)")
    parser.add_argument("--output", help="CSV output path (default results.csv)")
    parser.add_argument("--threads", type=int, help="assembly/matvec threads (default 1)")
    return parser


_DEFAULTS = {
    "case": "example1",
    "space": "dg",
    "stab": "gp",
    "k": 2,
    "levels": 3,
    "beta": None,
    "gamma": None,
    "quad_order": None,
    "output": "results.csv",
    "threads": 1,
}

_FILE_TYPES = {
    "case": str, "space": str, "stab": str, "k": int, "levels": int,
    "beta": float, "gamma": float, "quad_order": int, "output": str,
    "threads": int,
}


def _read_config_file(path):
    values = {}
    try:
        with open(path, encoding="utf-8") as stream:
            for lineno, raw in enumerate(stream, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key=value")
                key, _, text = line.partition("=")
                key = key.strip().replace("-", "_")
                if key not in _FILE_TYPES:
                    raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
                text = text.strip()
                try:
                    value = json.loads(text)
                except json.JSONDecodeError:
                    value = text
                try:
                    values[key] = _FILE_TYPES[key](value)
                except (TypeError, ValueError):
                    raise UsageError(
                        f"{path}:{lineno}: bad value {text!r} for {key!r}"
                    ) from None
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    return values


def parse_config(argv):
    """Merge defaults, config file and flags into a config namespace."""
    args = _build_parser().parse_args(argv)
    merged = dict(_DEFAULTS)
    if args.config:
        merged.update(_read_config_file(args.config))
    for key in _DEFAULTS:
        flag = getattr(args, key)
        if flag is not None:
            merged[key] = flag
    if merged["case"] not in CASES:
        raise UsageError(f"unknown case {merged['case']!r}")
    if merged["space"] not in SPACES:
        raise UsageError(f"unknown space {merged['space']!r}")
    if merged["stab"] not in STABS:
        raise UsageError(f"unknown stabilisation {merged['stab']!r}")
    if merged["k"] < 0:
        raise UsageError("k must be non-negative")
    if merged["levels"] < 1:
        raise UsageError("levels must be >= 1")
    if merged["stab"] == "agg" and merged["gamma"] not in (None, 0.0):
        raise UsageError("aggregation keeps the ghost penalty out of the "
                         "matrix; a nonzero gamma override is contradictory")
    return argparse.Namespace(**merged)


def _run_patch_test(config):
    """Reproduce a global harmonic polynomial with every variant."""
    case = harness.get_case("patch-test")
    k = max(config.k, 2)
    worst = 0.0
    for space_mode in SPACES:
        for stab in STABS:
            records, _ = harness.run_case(
                case, space_mode, stab, k, levels=[harness.BASE_SUBDIVISIONS],
                beta=config.beta, gamma=config.gamma,
                quad_order=config.quad_order,
            )
            worst = max(worst, records[0].l2)
            print(f"patch-test space={space_mode} stab={stab} k={k}: "
                  f"L2 error {records[0].l2:.3e}")
    print(f"patch-test max L2 error {worst:.3e}")
    return worst < 1e-9


def main(argv=None):
    try:
        config = parse_config(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        if config.case == "patch-test":
            return 0 if _run_patch_test(config) else 1
        records, _ = harness.run_case(
            config.case, config.space, config.stab, config.k, config.levels,
            beta=config.beta, gamma=config.gamma, quad_order=config.quad_order,
        )
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1

    print(harness.eoc_table(records), end="")
    with open(config.output, "w", encoding="utf-8", newline="") as stream:
        stream.write(harness.report_csv(records))
    print(f"wrote {config.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
