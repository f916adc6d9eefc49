"""Command-line entry points.

    qfd run <config.toml>     execute a scenario, write an artifact directory
    qfd check <suite>         run a verification suite, print verdicts
    qfd info <artifact-dir>   summarize a run manifest

Exit codes: 0 success, 2 config parse error, 3 validation error,
4 numerical abort. QFD_THREADS caps library-level parallelism.
"""

import argparse
import json
import os
import sys


def _cap_threads():
    cap = os.environ.get("QFD_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, cap)


_cap_threads()

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4


def cmd_run(args):
    from .config import ConfigParseError, ConfigValidationError, load_config
    from .pipelines import run_scenario
    from .propagator import PropagationError
    from .qfdft import SCFConvergenceError
    try:
        cfg = load_config(args.config)
    except ConfigParseError as exc:
        print(f"config parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigValidationError as exc:
        print(f"config validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        manifest = run_scenario(cfg)
    except ConfigValidationError as exc:
        print(f"config validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (PropagationError, SCFConvergenceError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if cfg.mode == "check":
        print(f"suite {manifest['suite']}: "
              f"{'all passed' if manifest['passed'] else 'FAILURES'}")
        return EXIT_OK
    print(f"artifacts written to {cfg.output_dir} "
          f"({len(manifest['files'])} files)")
    return EXIT_OK


def cmd_check(args):
    from .checks import run_suite, write_verdicts
    try:
        results = run_suite(args.suite, progress=print)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.output:
        write_verdicts(results, args.output)
        print(f"verdicts written to {args.output}")
    n_pass = sum(1 for r in results if r.passed)
    print(f"{n_pass}/{len(results)} criteria passed")
    return EXIT_OK


def cmd_info(args):
    path = os.path.join(args.artifact_dir, "manifest.json")
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"mode:          {manifest['mode']}")
    print(f"qfd version:   {manifest['qfd_version']}")
    print(f"seed:          {manifest['seed']}")
    print(f"wall clock:    {manifest['wall_clock_s']:.2f} s")
    print(f"files:         {len(manifest['files'])}")
    extents = manifest.get("extents", {})
    for key in ("x_min", "x_max", "n", "n_traj"):
        if key in extents and extents[key] is not None:
            print(f"{key + ':':14s} {extents[key]}")
    times = extents.get("snapshot_times") or []
    if times:
        print(f"snapshots:     {len(times)} over t in [{times[0]}, {times[-1]}]")
    print("--- config ---")
    print(manifest["config_text"].rstrip())
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(prog="qfd",
                                     description="quantum fluid dynamics toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario from a TOML config")
    p_run.add_argument("config")
    p_run.set_defaults(fn=cmd_run)

    p_check = sub.add_parser("check", help="run a verification suite")
    p_check.add_argument("suite")
    p_check.add_argument("--output", help="write verdict CSV here")
    p_check.set_defaults(fn=cmd_check)

    p_info = sub.add_parser("info", help="summarize an artifact directory")
    p_info.add_argument("artifact_dir")
    p_info.set_defaults(fn=cmd_info)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
