"""Command-line entry point: ``triage-cascade <command> [options]``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
Failures print one line to stderr: ``ERROR[<Code>] <message>``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings

from . import errors, pipeline


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", default="run", help="run directory (default: ./run)")
    common.add_argument("--seed", type=int, help="set every named seed to N")
    common.add_argument("--quiet", action="store_true", help="only print errors")
    common.add_argument("--cohort", help="cohort CSV (default: <out>/cohort.csv)")
    common.add_argument("--schema", help="schema JSON (default: <out>/schema.json or the bundled schema)")

    p = argparse.ArgumentParser(prog="triage-cascade", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic cohort")
    s.add_argument("--n", type=int, help="number of participants")
    s.add_argument("--advanced-fraction", type=float)
    s.add_argument("--basic-noise", type=float)
    s.add_argument("--advanced-noise", type=float)
    s.add_argument("--rate", type=float, help="conversion base rate")

    t = sub.add_parser("train", parents=[common], help="fit basic, advanced and triage models")
    t.add_argument("--delta", type=float)
    t.add_argument("--folds", type=int)
    t.add_argument("--test-n", type=int)

    th = sub.add_parser("threshold", parents=[common], help="choose the escalation threshold")
    th.add_argument("--strategy", help="risk_cap:R | knee | fixed:T")

    e = sub.add_parser("evaluate", parents=[common], help="held-out comparison report")
    e.add_argument("--no-bootstrap", action="store_true", help="point estimates only")
    e.add_argument("--B", type=int, dest="bootstrap_B")

    pr = sub.add_parser("predict", parents=[common], help="route patients from a CSV")
    pr.add_argument("input", help="patient CSV")

    ex = sub.add_parser("explain", parents=[common], help="attribute escalation scores")
    ex.add_argument("input", help="patient CSV")
    ex.add_argument("--id", action="append", dest="ids", help="patient id (repeatable)")
    ex.add_argument("--method", choices=("exact", "sampled"), default="exact")
    ex.add_argument("--samples", type=int, default=50_000)
    ex.add_argument("--top", type=int)
    return p


def _config(args) -> pipeline.RunConfig:
    cfg = pipeline.RunConfig.load(args.config) if args.config else pipeline.RunConfig()
    if args.seed is not None:
        cfg.set_seed(args.seed)
    if args.cohort:
        cfg.cohort = args.cohort
    if args.schema:
        cfg.schema = args.schema
    cmd = args.command
    if cmd == "synth":
        for flag, key in (("n", "n_total"), ("advanced_fraction", "advanced_fraction"),
                          ("basic_noise", "basic_noise"), ("advanced_noise", "advanced_noise"),
                          ("rate", "conversion_base_rate")):
            if getattr(args, flag) is not None:
                cfg.synth = {**cfg.synth, key: getattr(args, flag)}
    elif cmd == "train":
        if args.delta is not None:
            cfg.delta = args.delta
        if args.folds is not None:
            cfg.cv_folds = args.folds
        if args.test_n is not None:
            cfg.test_n = args.test_n
    elif cmd == "threshold" and args.strategy:
        cfg.threshold_strategy = args.strategy
    elif cmd == "evaluate" and args.bootstrap_B is not None:
        cfg.bootstrap_B = args.bootstrap_B
    return cfg


def _run(args) -> int:
    cfg = _config(args)
    run = pipeline.Run(args.out)
    say = (lambda *a: None) if args.quiet else print
    cmd = args.command
    if cmd == "synth":
        cfg.synth_config().validate()
        paths = pipeline.run_synth(run, cfg)
        say(f"wrote {paths[0]}")
    elif cmd == "train":
        res = pipeline.run_train(run, cfg)
        say(f"triage CV AUROC {res.triage_cv_auroc:.4f}; "
            f"triage labels {res.triage_labels.positive_rate:.1%} positive; models in {run.path('models')}")
    elif cmd == "threshold":
        choice = pipeline.run_threshold(run, cfg)
        pt = choice.point
        extra = "" if pt is None else f" (coverage {pt.coverage:.3f}, risk {pt.risk:.3f})"
        say(f"tau = {choice.tau:.6g}{extra}")
    elif cmd == "evaluate":
        rep = pipeline.run_evaluate(run, cfg, bootstrap=not args.no_bootstrap)
        say(f"escalation rate {rep['escalation_rate']:.2f}")
        for name, entry in rep["models"].items():
            say(f"  {name:15s} AUROC {entry['metrics']['auroc']:.4f}")
    elif cmd == "predict":
        decisions, problems = pipeline.run_predict(run, cfg, args.input)
        say(f"{len(decisions)} decisions, {len(problems)} rejected rows -> {run.path('decisions.jsonl')}")
        if problems:
            first = problems[0]
            print(f"ERROR[{first['error']}] {len(problems)} row(s) rejected; first at row {first['row']}: "
                  f"{first['message']}", file=sys.stderr)
            return errors.DataError.exit_code
    elif cmd == "explain":
        recs = pipeline.run_explain(run, cfg, args.input, ids=args.ids, method=args.method,
                                    top_k=args.top, n_samples=args.samples)
        for r in recs:
            say(json.dumps({"patient_id": r.patient_id, "score": r.score, "escalate": r.escalate,
                            "top": [e.feature for e in r.top(3)]}))
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    if args.quiet:
        warnings.simplefilter("ignore")
    try:
        return _run(args)
    except errors.TriageError as exc:
        msg = " ".join(str(exc).split())
        print(f"ERROR[{exc.code}] {msg}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"ERROR[IOError] {' '.join(str(exc).split())}", file=sys.stderr)
        return errors.ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
