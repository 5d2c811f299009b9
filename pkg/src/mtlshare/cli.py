"""Command-line front end.

    mtlshare train <config>
    mtlshare eval <config> <checkpoint>
    mtlshare compare <config> <config> [...] [--seeds S] [--jobs J]
    mtlshare gradcheck

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_state, save_state
from .config import ConfigError, parse_config
from .data import DataError
from .experiment import compare, format_comparison, render_table, run_experiment
from .gradsuite import run_suite, sigma_agreement
from .metrics import cumulative_accuracy, format_metrics
from .trainer import build_state, evaluate

log = logging.getLogger("mtlshare")

GRAD_TOLERANCE = 1e-4
SIGMA_TOLERANCE = 1e-10


class ValidationError(Exception):
    pass


def _prepare_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    probe = path / ".write-probe"
    try:
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {path} is not writable: {exc}") from exc


def _write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(path)
    except OSError:
        tmp.unlink(missing_ok=True)
        raise


def cmd_train(args) -> int:
    cfg = parse_config(path=args.config)
    run_dir = cfg.run_dir
    _prepare_dir(run_dir)
    result, names = run_experiment(cfg)
    _write(run_dir / "metrics.csv", format_metrics(result.series, names))
    save_state(result.state, run_dir / "checkpoint.mtls")
    final = result.final
    accs = "  ".join(f"{n}={a:.4f}" for n, a in zip(names, final.accuracies))
    print(f"{cfg.name}: {result.batches} batches  {accs}  cumulative={final.cumulative:.4f}")
    print(f"wrote {run_dir / 'metrics.csv'} and {run_dir / 'checkpoint.mtls'}")
    return 0


def cmd_eval(args) -> int:
    cfg = parse_config(path=args.config)
    tasks = cfg.build_tasks()
    backbone = cfg.build_backbone(tasks)
    state = build_state(cfg.train_config(), backbone)
    load_state(state, args.checkpoint)
    correct, totals = evaluate(state, tasks)
    lines = ["task,correct,total,accuracy"]
    for t, c, n in zip(tasks, correct, totals):
        lines.append(f"{t.name},{c},{n},{c / n:.6g}")
    cum = cumulative_accuracy(correct, totals)
    lines.append(f"cumulative,{sum(correct)},{sum(totals)},{cum:.6g}")
    text = "\n".join(lines) + "\n"
    _prepare_dir(cfg.run_dir)
    _write(cfg.run_dir / "eval.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_compare(args) -> int:
    if len(args.configs) < 2:
        raise ValidationError("compare needs at least two configs")
    configs = [parse_config(path=p) for p in args.configs]
    out_dir = Path(configs[0]["out_dir"])
    _prepare_dir(out_dir)
    rows, names = compare(configs, seeds=args.seeds, jobs=args.jobs)
    _write(out_dir / "comparison.csv", format_comparison(rows, names))
    sys.stdout.write(render_table(rows, names))
    print(f"wrote {out_dir / 'comparison.csv'}")
    return 0


def cmd_gradcheck(args) -> int:
    ok = True
    for name, err in run_suite(args.seed).items():
        passed = err < GRAD_TOLERANCE
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:28s} max rel. error {err:.3e}")
    for method in ("uncertainty", "automatic"):
        err = sigma_agreement(method, args.seed)
        passed = err < SIGMA_TOLERANCE
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  sigma analytic ({method:11s}) max abs. diff  {err:.3e}")
    return 0 if ok else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtlshare", description="Multi-task learning experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one config; writes metrics.csv and checkpoint.mtls")
    p.add_argument("config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the config's test splits")
    p.add_argument("config")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="multi-seed comparison table over several configs")
    p.add_argument("configs", nargs="+")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference check of every primitive and network")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValidationError, ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CheckpointError, OSError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
