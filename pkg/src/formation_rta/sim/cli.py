"""Command line: ``run``, ``verify`` and ``montecarlo``.

Reports go to stdout as tab-separated ``key<TAB>value`` lines (and to
``report.tsv`` under ``--out``).  Exit status: 0 no hard violation,
2 hard violation, 1 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..core import ConfigError
from .config import load_scenario
from .engine import run
from .montecarlo import monte_carlo
from .trace import TraceParseError, write_trace
from .verify import verify_trace

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2

log = logging.getLogger("formation_rta")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="formation-rta", description="Formation rejoin run time assurance simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate one scenario and verify the trace")
    r.add_argument("--scenario", required=True, type=Path)
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    r.add_argument("--plot", action="store_true", help="also write a .dat table and PNG figures")

    v = sub.add_parser("verify", help="re-verify a recorded trace")
    v.add_argument("--trace", required=True, type=Path)

    m = sub.add_parser("montecarlo", help="randomized initial geometry over a scenario template")
    m.add_argument("--scenario", required=True, type=Path)
    m.add_argument("--n", required=True, type=int)
    m.add_argument("--seed", required=True, type=int)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--out", type=Path, default=None)
    return p


def _emit(rows, out_dir: Path | None = None) -> None:
    text = "".join(f"{k}\t{v}\n" for k, v in rows)
    sys.stdout.write(text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.tsv").write_text(text)


def _run(args) -> int:
    cfg = load_scenario(args.scenario)
    trace, report = run(cfg, seed=args.seed)
    stem = cfg.name or args.scenario.stem
    trace_path = write_trace(trace, args.out / f"{stem}.trace.csv")
    rows = [("scenario", stem), ("seed", str(trace.meta["seed"])),
            ("config_hash", trace.meta["config_hash"]), ("trace", str(trace_path))]
    if args.plot:
        from .plotting import write_dat, write_figures
        rows.append(("dat", str(write_dat(trace, args.out / f"{stem}.dat"))))
        rows.extend(("figure", str(p)) for p in write_figures(trace, args.out, stem))
    _emit(rows + report.rows(), args.out)
    return EXIT_VIOLATION if report.hard_violation else EXIT_OK


def _verify(args) -> int:
    report = verify_trace(args.trace)
    _emit([("trace", str(args.trace))] + report.rows())
    return EXIT_VIOLATION if report.hard_violation else EXIT_OK


def _montecarlo(args) -> int:
    if args.n < 1:
        raise ConfigError("--n must be at least 1")
    cfg = load_scenario(args.scenario)
    agg = monte_carlo(cfg, args.n, args.seed, workers=args.workers)
    _emit([("scenario", cfg.name)] + agg.rows(), args.out)
    return EXIT_VIOLATION if agg.hard_violations else EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:   # --help, or a usage error already reported
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handler = {"run": _run, "verify": _verify, "montecarlo": _montecarlo}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    except TraceParseError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
