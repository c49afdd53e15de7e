"""Command line interface.

Verbs::

    rigidfluid check   --scenario S.toml [--out DIR]
    rigidfluid run     --scenario S.toml --out DIR [--restart-every N]
    rigidfluid reverse --scenario S.toml --out DIR
    rigidfluid sweep   --scenario S.toml --out DIR --param time.slices --values 16,32

Common flags: ``--slices N``, ``--mesh-h H``, ``--seed S``, ``--threads K``.
Exit status: 0 when every run is CERTIFIED, 1 when a run fails a stage,
2 for usage, scenario and I/O errors.
"""

import argparse
import json
import logging
import os
import sys

from .errors import InputError, RigidFluidError
from .pipeline import check_scenario, run_pipeline, run_restarts, run_reversal, max_newton_residual
from .report import emit_outputs, report_dict, write_json, write_table
from .scenario import get_path, load_scenario

log = logging.getLogger("rigidfluid")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, metavar="PATH", help="scenario TOML file")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--slices", type=int, metavar="N", help="override time.slices")
    common.add_argument("--mesh-h", type=float, metavar="H", help="override mesh.h")
    common.add_argument("--seed", type=int, metavar="S", help="override the scenario seed")
    common.add_argument("--threads", type=int, default=1, metavar="K", help="worker threads")
    common.add_argument("-v", "--verbose", action="store_true", help="log stage progress")

    p = argparse.ArgumentParser(prog="rigidfluid", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("check", parents=[common], help="geometry and mass properties only")
    r = sub.add_parser("run", parents=[common], help="full certification pipeline")
    r.add_argument("--restart-every", type=int, metavar="N",
                   help="also re-certify the tail scenarios at every N-th grid index")
    sub.add_parser("reverse", parents=[common], help="certify the time-reversed scenario")
    s = sub.add_parser("sweep", parents=[common], help="vary one scalar parameter")
    s.add_argument("--param", required=True, help="dotted scenario key, e.g. time.slices")
    s.add_argument("--values", required=True, help="comma-separated values")
    return p


def _scenario(args):
    sc = load_scenario(args.scenario)
    over = {}
    if args.slices is not None:
        over["time.slices"] = args.slices
    if args.mesh_h is not None:
        over["mesh.h"] = args.mesh_h
    if args.seed is not None:
        over["seed"] = args.seed
    return sc.replace(**over) if over else sc


def _parse_value(text, like):
    if isinstance(like, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    try:
        return json.loads(text)
    except ValueError:
        return text


def _summary(report):
    return f"{report.verdict}" + (f": {report.failed.message}" if report.failed else "")


def cmd_check(args, sc):
    rep = check_scenario(sc, log.info)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_json(os.path.join(args.out, "report.json"), report_dict(rep))
    print(json.dumps(rep.stages[0].to_dict(), indent=2))
    print(_summary(rep))
    return EXIT_OK if rep.certified else EXIT_FAILED


def cmd_run(args, sc):
    rep = run_pipeline(sc, args.threads, log=log.info)
    extra = {}
    rows = []
    if args.restart_every:
        entries = run_restarts(sc, args.restart_every, forward=rep, threads=args.threads, log=log.info)
        extra["restarts"] = [{k: v for k, v in e.items() if k != "report"} for e in entries]
        for e in entries:
            ineq = e.get("inequality", {})
            rows.append((e["s"], e["t"], e["verdict"], ineq.get("pass"), ineq.get("max_excess")))
    if args.out:
        emit_outputs(rep, args.out, extra)
        if rows:
            write_table(os.path.join(args.out, "restarts.csv"),
                        ["s", "t", "verdict", "energy_inequality", "max_excess"], rows)
    print(_summary(rep))
    ok = rep.certified and all(r[2] == "CERTIFIED" and r[3] for r in rows)
    return EXIT_OK if ok else EXIT_FAILED


def cmd_reverse(args, sc):
    fwd = run_pipeline(sc, args.threads, log=log.info)
    if not fwd.certified:
        print(f"forward run is not certified ({_summary(fwd)}); nothing to reverse", file=sys.stderr)
        return EXIT_USAGE
    rev = run_reversal(sc, forward=fwd, threads=args.threads, log=log.info)
    if args.out:
        fF, fT = max_newton_residual(fwd)
        emit_outputs(rev, args.out, {"forward": {"verdict": fwd.verdict,
                                                 "sha256": sc.content_hash(),
                                                 "max_force_residual": fF,
                                                 "max_torque_residual": fT}})
    print(_summary(rev))
    return EXIT_OK if rev.certified else EXIT_FAILED


def cmd_sweep(args, sc):
    try:
        like = get_path(sc.data, args.param)
    except (KeyError, IndexError, TypeError):
        raise InputError(f"unknown sweep parameter {args.param!r}") from None
    rows = []
    for text in args.values.split(","):
        v = _parse_value(text.strip(), like)
        sub = sc.replace(**{args.param: v})
        rep = run_pipeline(sub, args.threads, log=log.info)
        F, T = max_newton_residual(rep)
        lam = rep.stage("lambda")
        slack = lam.data.get("min_slack") if lam is not None else None
        rows.append((v, rep.verdict, rep.failed.message if rep.failed else "", F, T, slack))
        print(f"{args.param}={v}: {_summary(rep)}")
        if args.out:
            emit_outputs(rep, os.path.join(args.out, f"{args.param}={v}"))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_table(os.path.join(args.out, "sweep.csv"),
                    ["value", "verdict", "message", "max_force_residual", "max_torque_residual",
                     "min_slack"], rows)
    return EXIT_OK if all(r[1] == "CERTIFIED" for r in rows) else EXIT_FAILED


COMMANDS = {"check": cmd_check, "run": cmd_run, "reverse": cmd_reverse, "sweep": cmd_sweep}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        sc = _scenario(args)
        return COMMANDS[args.verb](args, sc)
    except (InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RigidFluidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
