"""Command-line front end.

    broadbeam design <config> [--out DIR] [--b-path on|off] [--max-iters N] [--seed N]
    broadbeam evaluate <coeffs.csv> <config> [--out DIR]
    broadbeam reproduce <II|IV|VI|VIII> [--out DIR] [--jobs N]
    broadbeam dump-program <config> [--out FILE]
    broadbeam show-config <example> <kind>

Exit codes: 0 optimal, 1 bad configuration or usage, 2 infeasible,
3 numerical failure.
"""
from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor
import logging
import os
import sys

import yaml

from . import config as cfgmod
from . import presets, socp
from .errors import ConfigError
from .runner import EXIT_CONFIG, EXIT_OK, evaluate_file, first_program, run_design


class _Parser(argparse.ArgumentParser):
    # usage errors must not collide with the "infeasible" exit code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _onoff(v: str) -> bool:
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return v == "on"


def _print_metrics(report, stream=None):
    stream = stream or sys.stdout
    for k, v in report.metrics().items():
        print(f"{k} = {v!r}", file=stream)


def cmd_design(args) -> int:
    rc = cfgmod.load(args.config)
    out = args.out or rc.data["output"]["dir"]
    res = run_design(rc, out, b_path=args.b_path, max_iters=args.max_iters, seed=args.seed)
    print(f"status = {res.status}")
    if res.report is not None:
        _print_metrics(res.report)
    else:
        print(res.message)
    print(f"output = {out}")
    return res.code


def cmd_evaluate(args) -> int:
    rc = cfgmod.load(args.config)
    _print_metrics(evaluate_file(rc, args.coeffs, args.out))
    return EXIT_OK


def cmd_dump(args) -> int:
    rc = cfgmod.load(args.config)
    text = socp.dump_program(first_program(rc))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_show_config(args) -> int:
    sys.stdout.write(yaml.safe_dump(presets.example_config(args.example, args.kind), sort_keys=False))
    return EXIT_OK


def _reproduce_one(job):
    example, label, outdir = job
    rc = cfgmod.build(presets.example_config(example, presets.LABELS[label]))
    res = run_design(rc, os.path.join(outdir, label.replace("(", "-").replace(")", "").lower()))
    return label, res.status, (res.report.metrics() if res.report is not None else None)


def reproduce(table: str, outdir: str = "reproduce", jobs: int = 1) -> list:
    """Run every design of a published table; rows of ``(label, metric, measured, reported)``.

    A reported ``NF`` matches when the design is infeasible.
    """
    example, cols = presets.TABLES[table]
    jobs_ = [(example, label, os.path.join(outdir, table)) for label in cols]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            done = list(ex.map(_reproduce_one, jobs_))
    else:
        done = [_reproduce_one(j) for j in jobs_]
    rows = []
    for label, status, metrics in done:
        ref = cols[label]
        if ref == presets.NF:
            rows.append((label, "status", status, presets.NF))
            continue
        for k, v in ref.items():
            rows.append((label, k, metrics[k] if metrics else status, v))
    return rows


def format_rows(rows) -> str:
    lines = [f"{'design':<10} {'metric':<10} {'measured':>14} {'reported':>10} {'delta':>12}"]
    for label, k, meas, ref in rows:
        if isinstance(meas, float) and isinstance(ref, float):
            lines.append(f"{label:<10} {k:<10} {meas:>14.6g} {ref:>10.6g} {meas - ref:>12.3g}")
        else:
            match = "match" if (ref == presets.NF) == (meas == "infeasible") else "MISMATCH"
            lines.append(f"{label:<10} {k:<10} {str(meas):>14} {str(ref):>10} {match:>12}")
    return "\n".join(lines)


def cmd_reproduce(args) -> int:
    rows = reproduce(args.table, args.out, args.jobs)
    text = format_rows(rows)
    print(text)
    os.makedirs(os.path.join(args.out, args.table), exist_ok=True)
    with open(os.path.join(args.out, args.table, "comparison.txt"), "w") as fh:
        fh.write(text + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="broadbeam", description="Broadband filter-and-sum beamformer design.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("design", help="run the design a config describes")
    d.add_argument("config")
    d.add_argument("--out", help="output directory (default: output.dir of the config)")
    d.add_argument("--b-path", type=_onoff, default=None, metavar="on|off",
                   help="also iterate from the unregularized start (v2 only)")
    d.add_argument("--max-iters", type=int, default=None)
    d.add_argument("--seed", type=int, default=None, help="recorded in the report; the designs are deterministic")
    d.set_defaults(func=cmd_design)

    e = sub.add_parser("evaluate", help="metrics of a coefficient file under a config's bands")
    e.add_argument("coeffs")
    e.add_argument("config")
    e.add_argument("--out", help="also write report and CSV curves here")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("reproduce", help="rerun a published results table")
    r.add_argument("table", choices=sorted(presets.TABLES))
    r.add_argument("--out", default="reproduce")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_reproduce)

    dp = sub.add_parser("dump-program", help="write the initial conic program in text form")
    dp.add_argument("config")
    dp.add_argument("--out")
    dp.set_defaults(func=cmd_dump)

    s = sub.add_parser("show-config", help="print the config of a published example design")
    s.add_argument("example", type=int, choices=sorted(presets.EXAMPLES))
    s.add_argument("kind", choices=cfgmod.KINDS)
    s.set_defaults(func=cmd_show_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
