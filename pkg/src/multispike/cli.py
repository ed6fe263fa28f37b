"""Command-line entry point: ``multispike <command> [options]``.

Exit codes: 0 success, 1 a check failed, 2 usage error, 3 invalid config,
4 missing data, 5 checkpoint version mismatch.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import checkpoint, checks, experiments
from .config import ConfigError, RunConfig
from .data import load_mnist
from .optim import evaluate

EXIT_CHECK_FAILED = 1
EXIT_BAD_CONFIG = 3
EXIT_NO_DATA = 4
EXIT_CKPT_VERSION = 5


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="key = value config file (flags override it)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key; repeatable")
    group = p.add_argument_group("run configuration")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type in (bool, "bool"):
            group.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        else:
            group.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper())


def _config_from(args, base: RunConfig | None = None) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else (base or RunConfig())
    values = {f.name: getattr(args, f.name) for f in fields(RunConfig)
              if getattr(args, f.name, None) is not None}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    return RunConfig.from_strings(values, cfg)


def _write_report(report: dict, path):
    text = json.dumps(report, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    return text


def cmd_train(args) -> int:
    # a resumed run keeps the checkpoint's settings unless overridden explicitly
    base = checkpoint.load(args.resume)[1] if args.resume else None
    cfg = _config_from(args, base)
    experiments.train_run(cfg, resume=args.resume, log=print)
    print(f"outputs in {cfg.out_dir}")
    return 0


def _eval_checkpoint(args):
    model, cfg = checkpoint.load(args.checkpoint)
    data_dir = args.data_dir or cfg.data_dir
    ds = load_mnist(data_dir, args.split)
    if args.samples:
        ds = ds.subset(args.samples)
    return evaluate(model, ds.images, ds.labels, n_jobs=args.n_jobs), cfg


def cmd_eval(args) -> int:
    res, cfg = _eval_checkpoint(args)
    out = Path(args.out_dir or Path(args.checkpoint).parent)
    out.mkdir(parents=True, exist_ok=True)
    hist = experiments.spike_histogram(res.spike_counts)
    experiments.write_histogram(out / f"spike_hist_{args.split}.csv", hist)
    summary = {"split": args.split, "samples": int(res.v_out.shape[0]), "accuracy": res.accuracy,
               "mean_spikes": res.mean_spikes, "truncated": res.truncated,
               "max_spikes": int(len(hist) - 1)}
    print(_write_report(summary, out / f"eval_{args.split}.json"))
    return 0


def cmd_spike_hist(args) -> int:
    res, _ = _eval_checkpoint(args)
    hist = experiments.spike_histogram(res.spike_counts)
    path = Path(args.out) if args.out else Path(args.checkpoint).parent / f"spike_hist_{args.split}.csv"
    experiments.write_histogram(path, hist)
    for k, n in enumerate(hist):
        print(f"{k:3d} {int(n)}")
    print(f"histogram written to {path}")
    return 0


def cmd_sweep_tau(args) -> int:
    cfg = _config_from(args)
    taus = [float(t) for t in args.taus.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = experiments.sweep_tau(cfg, taus, seeds, log=print)
    for r in rows:
        if r["row"] == "mean":
            print(f"tau {r['tau_i']}: accuracy {r['test_accuracy']:.4f} +/- "
                  f"{r['test_accuracy_stderr']:.4f}, spikes {r['mean_spikes']:.3f}")
    print(f"sweep written to {Path(cfg.out_dir) / 'sweep.csv'}")
    return 0


def _report_exit(report, path) -> int:
    print(_write_report(report, path))
    return 0 if report["passed"] else EXIT_CHECK_FAILED


def cmd_gradcheck(args) -> int:
    return _report_exit(checks.gradcheck(args.cases, args.seed, step=args.step, fault=args.fault,
                                         weight_law=args.weights), args.report)


def cmd_oracle_check(args) -> int:
    oracle = checks.oracle_check(args.cases, args.seed, max_step=args.max_step, weight_law=args.weights)
    residual = checks.residual_check(args.cases, args.seed, weight_law=args.weights)
    report = {"suites": [oracle, residual], "passed": oracle["passed"] and residual["passed"]}
    return _report_exit(report, args.report)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multispike", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network and write metrics and checkpoints")
    _add_config_flags(p)
    p.add_argument("--resume", type=Path, help="continue from this checkpoint")
    p.set_defaults(func=cmd_train)

    for name, func, text in (("eval", cmd_eval, "evaluate a checkpoint"),
                             ("spike-hist", cmd_spike_hist, "hidden spike-count histogram")):
        p = sub.add_parser(name, help=text)
        p.add_argument("checkpoint", type=Path)
        p.add_argument("--split", choices=("train", "test"), default="test")
        p.add_argument("--data-dir")
        p.add_argument("--samples", type=int, default=0, help="use only the first N samples")
        p.add_argument("--n-jobs", type=int, default=1)
        if name == "eval":
            p.add_argument("--out-dir", help="defaults to the checkpoint's directory")
        else:
            p.add_argument("--out", help="CSV path")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep-tau", help="train across time constants and seeds")
    _add_config_flags(p)
    p.add_argument("--taus", default="0.2,0.4,0.8,1.6,3.2")
    p.add_argument("--seeds", default="0")
    p.set_defaults(func=cmd_sweep_tau)

    p = sub.add_parser("gradcheck", help="backward pass against finite differences")
    p.add_argument("--cases", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-6)
    p.add_argument("--fault", choices=("flip_db", "drop_reset"),
                   help="inject a known gradient bug (the check must then fail)")
    p.add_argument("--weights", choices=checks.WEIGHT_LAWS, default="spiky",
                   help="random weight law of the tiny networks")
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("oracle-check", help="forward pass against ODE integration and root residuals")
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-step", type=float, default=1e-4)
    p.add_argument("--weights", choices=checks.WEIGHT_LAWS, default="spiky",
                   help="random weight law of the tiny networks")
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except FileNotFoundError as exc:
        print(f"missing data: {exc}", file=sys.stderr)
        return EXIT_NO_DATA
    except checkpoint.CheckpointVersionError as exc:
        print(f"checkpoint version mismatch: {exc}", file=sys.stderr)
        return EXIT_CKPT_VERSION


if __name__ == "__main__":
    sys.exit(main())
