"""``ojapca`` command line: run, sweep, theory, compare, ingest-run.

Exit status is 0 on success, 2 for configuration errors and 3 for runtime
or numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from ..exceptions import ConfigError, GapViolation, OjaError, ThresholdOutOfRange
from ..theory import rate_constants
from .config import parse_config
from .experiment import compare_online_offline, ingest_run, load_raw, run_experiment, sweep
from .io import jsonable, write_json

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("ojapca")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ojapca", description="Streaming PCA experiments with Oja's iteration.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_outputs(p):
        p.add_argument("config", help="YAML experiment file")
        p.add_argument("--csv", help="override output.csv")
        p.add_argument("--json", help="override output.json")
        p.add_argument("--threads", type=int, help="worker threads (default: OJA_THREADS or all cores)")
        return p

    with_outputs(sub.add_parser("run", help="run one experiment"))
    sw = sub.add_parser("sweep", help="grid over the lists in the config's sweep section")
    sw.add_argument("config")
    sw.add_argument("--json", help="write all grid-point fits here")
    sw.add_argument("--threads", type=int)

    th = sub.add_parser("theory", help="print rate constants for a spectrum")
    th.add_argument("--lambdas", type=float, nargs="+", required=True)
    th.add_argument("-p", type=int, required=True)
    th.add_argument("-q", type=int)
    th.add_argument("--gamma-tilde", type=float)
    th.add_argument("-n", type=int, help="sample size for the minimax bound")
    th.add_argument("-c", type=float, default=1.0, help="minimax constant")

    with_outputs(sub.add_parser("compare", help="online error vs offline PCA on fresh batches"))

    ing = sub.add_parser("ingest-run", help="single pass over a CSV or binary data file")
    ing.add_argument("config")
    ing.add_argument("--data", help="override the config's data path")
    ing.add_argument("--csv")
    ing.add_argument("--json")
    ing.add_argument("--checkpoint", help="write the final basis here")
    return parser


def _load(args):
    cfg = parse_config(args.config)
    for key in ("csv", "json", "checkpoint"):
        val = getattr(args, key, None)
        if val:
            cfg.output[key] = val
    return cfg


def _cmd_run(args) -> int:
    cfg = _load(args)
    res = run_experiment(cfg, threads=args.threads)
    fit = res.summary.get("fit") or {}
    print(json.dumps(jsonable({"trials": cfg.R, "rows": len(res.records), "fit": fit}), indent=2))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    raw = load_raw(args.config)
    if not raw.get("sweep"):
        raise ConfigError("sweep subcommand needs a non-empty 'sweep' section")
    results = sweep(raw, threads=args.threads)
    if args.json:
        write_json(results, args.json)
    for r in results:
        print(json.dumps(jsonable({"index": r["index"], "point": r["point"], "fit": r["fit"]})))
    return EXIT_OK


def _cmd_theory(args) -> int:
    try:
        rc = rate_constants(args.lambdas, args.p, args.q, args.gamma_tilde, args.n, args.c)
    except (ValueError, GapViolation, ThresholdOutOfRange) as exc:
        raise ConfigError(str(exc)) from exc
    print(json.dumps(jsonable(rc.to_dict()), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfg = _load(args)
    csv_out = cfg.output.pop("csv", None)
    json_out = cfg.output.pop("json", None)
    rows = compare_online_offline(cfg, threads=args.threads)
    if csv_out:
        with open(csv_out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\r\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: "" if v is None else v for k, v in row.items()})
    if json_out:
        write_json({"config": cfg.echo(), "comparison": rows}, json_out)
    print(json.dumps(jsonable(rows), indent=2))
    return EXIT_OK


def _cmd_ingest(args) -> int:
    cfg = _load(args)
    if args.data:
        cfg.data = args.data
        cfg.source_path = None
    res = ingest_run(cfg)
    print(json.dumps(jsonable({"n_samples": res.summary["n_samples"], "d": res.summary["d"],
                               "p": res.summary["p"]})))
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "theory": _cmd_theory,
    "compare": _cmd_compare,
    "ingest-run": _cmd_ingest,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OjaError, OSError, ArithmeticError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
