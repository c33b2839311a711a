"""Command-line entry point for image-based IM-RKPM damage simulations.

Exit codes: 0 success, 1 validation failure (bad config or input, failed
verification suite), 2 convergence failure, 3 I/O failure.
"""

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, export, pipeline, verify
from ._accel import set_threads
from .config import parse_config
from .errors import ImrkpmError, MissingFileError

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("imrkpm")


def _common(p, config_required=True):
    p.add_argument("--config", required=config_required, help="run configuration file")
    p.add_argument("--out", help="output directory (default: [output] directory of the config)")
    p.add_argument("--threads", type=int, default=None, help="worker threads")
    p.add_argument("--seed", type=int, default=None, help="random seed (default: [run] seed, 42)")


def build_parser():
    parser = argparse.ArgumentParser(prog="imrkpm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="Otsu labels, SVM training and node generation")
    _common(p)

    p = sub.add_parser("simulate", help="run the load program of a config")
    _common(p)
    p.add_argument("--snapshot-every", type=int, default=None, metavar="K",
                   help="write a state snapshot every K committed steps (0 disables)")

    p = sub.add_parser("verify", help="run the property suites")
    _common(p, config_required=False)
    p.add_argument("--suite", action="append", choices=sorted(verify.SUITES), help="run only these suites")

    p = sub.add_parser("export", help="convert snapshots to field CSV and VTK")
    p.add_argument("inputs", nargs="+", help="snapshot files (.npz) or directories holding them")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--vtk", action="store_true", help="also write legacy VTK files")
    return parser


def _out_dir(args, cfg):
    return Path(args.out) if args.out else cfg.output_dir()


def cmd_segment(args):
    cfg = parse_config(args.config)
    seed = args.seed if args.seed is not None else cfg["run"]["seed"]
    _, _, report = pipeline.run_segment(cfg, _out_dir(args, cfg), seed=seed, threads=args.threads)
    sys.stdout.write(report)
    return EXIT_OK


def cmd_simulate(args):
    cfg = parse_config(args.config)
    seed = args.seed if args.seed is not None else cfg["run"]["seed"]
    outcome = pipeline.simulate(cfg, _out_dir(args, cfg), snapshot_every=args.snapshot_every,
                                seed=seed, threads=args.threads)
    done = sum(r.converged for r in outcome.results)
    print(f"{done} steps committed; curve written to {outcome.curve_path}")
    if not outcome.completed:
        failed = outcome.results[-1] if outcome.results else None
        where = f" at u_bar={failed.u_bar:g}" if failed is not None else ""
        print(f"simulation halted: step did not converge{where}", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_verify(args):
    seed = 42
    if args.config:
        seed = parse_config(args.config, check_files=False)["run"]["seed"]
    seed = args.seed if args.seed is not None else seed
    if args.threads:
        set_threads(args.threads)
    results = verify.run_all(seed=seed, names=args.suite)
    report = verify.format_report(results)
    sys.stdout.write(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify_report.txt").write_text(report)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def _snapshot_files(inputs):
    files = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            files.extend(sorted(p.glob("*.npz")))
        elif p.is_file():
            files.append(p)
        else:
            raise MissingFileError(f"no such snapshot or directory: {p}")
    if not files:
        raise MissingFileError("no snapshot files found")
    return files


def cmd_export(args):
    out = Path(args.out)
    for f in _snapshot_files(args.inputs):
        fields = export.snapshot_fields(export.load_snapshot(f))
        export.write_fields_csv(out / f"{f.stem}.csv", fields)
        if args.vtk:
            export.write_vtk(out / f"{f.stem}.vtk", fields, title=f"imrkpm {f.stem}")
        print(f"exported {f}")
    return EXIT_OK


COMMANDS = {"segment": cmd_segment, "simulate": cmd_simulate, "verify": cmd_verify, "export": cmd_export}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ImrkpmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
