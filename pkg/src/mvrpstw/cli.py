"""Command-line front end: ``python -m mvrpstw <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .autodiff import CheckpointError
from .instances import InstanceFormatError, PRESETS, generate, read_instances, read_solutions, \
    write_instances, write_solutions
from .oracle import NodeLimitError, OracleSizeError
from .problem import ValidationError, validate_routes, evaluate_solution
from .trainer import TrainConfig, TrainingError, train

EXIT_OK, EXIT_INVALID, EXIT_CONFIG = 0, 2, 3

log = logging.getLogger("mvrpstw")


class _Parser(argparse.ArgumentParser):
    # usage mistakes are configuration errors, not validation failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}") from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for per-instance solving")
    common.add_argument("--out", help="output file")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="mvrpstw", description="Multi-vehicle routing with soft time windows: solvers and experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate instances (JSON lines)")
    g.add_argument("--preset", required=True, choices=sorted(PRESETS))
    g.add_argument("--count", type=int, required=True)

    s = sub.add_parser("solve", parents=[common], help="solve an instance file")
    s.add_argument("--method", required=True, choices=harness.METHODS)
    s.add_argument("--in", dest="inp", required=True, help="instance file")
    s.add_argument("--ckpt", help="model checkpoint (method maam)")
    s.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    s.add_argument("--samples", type=int, default=1)

    t = sub.add_parser("train", parents=[common], help="train a model with REINFORCE")
    t.add_argument("--preset", required=True, choices=sorted(PRESETS))
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--instances-per-epoch", type=int, default=2000)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--dim", type=int, default=64)
    t.add_argument("--layers", type=int, default=2)
    t.add_argument("--heads", type=int, default=4)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--eval-size", type=int, default=256)
    t.add_argument("--log", help="per-epoch CSV log")

    b = sub.add_parser("bench", parents=[common], help="compare methods on one generated set (CSV)")
    b.add_argument("--preset", required=True, choices=sorted(PRESETS))
    b.add_argument("--count", type=int, default=100)
    b.add_argument("--methods", type=_csv_list(str), default=["nn", "ils1"])
    b.add_argument("--ckpt")
    b.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    b.add_argument("--samples", type=int, default=1)

    w = sub.add_parser("sweep", parents=[common], help="hyper-parameter sensitivity curves (CSV)")
    w.add_argument("--axis", required=True, choices=sorted(harness.SWEEP_AXES))
    w.add_argument("--values", required=True, type=_csv_list(int))
    w.add_argument("--preset", required=True, choices=sorted(PRESETS))
    w.add_argument("--epochs", type=int, default=20)
    w.add_argument("--instances-per-epoch", type=int, default=2000)
    w.add_argument("--batch", type=int, default=64)
    w.add_argument("--dim", type=int, default=64)
    w.add_argument("--layers", type=int, default=2)
    w.add_argument("--heads", type=int, default=4)
    w.add_argument("--lr", type=float, default=1e-4)
    w.add_argument("--eval-size", type=int, default=256)

    r = sub.add_parser("robustness", parents=[common], help="evaluate a model on fewer customers / other capacities")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--preset", required=True, choices=sorted(PRESETS), help="preset the model was trained on")
    r.add_argument("--counts", type=_csv_list(int), default=[])
    r.add_argument("--capacity-factors", type=_csv_list(float), default=[])
    r.add_argument("--count", type=int, default=100)
    r.add_argument("--methods", type=_csv_list(str), default=["nn", "ils1"])

    v = sub.add_parser("validate", parents=[common], help="re-check a solution file against an instance file")
    v.add_argument("--instances", required=True)
    v.add_argument("--solutions", required=True)
    return p


def _train_config(a, **extra) -> TrainConfig:
    return TrainConfig(gen_config=PRESETS[a.preset], epochs=a.epochs, instances_per_epoch=a.instances_per_epoch,
                       batch_size=a.batch, learning_rate=a.lr, eval_set_size=a.eval_size, embed_dim=a.dim,
                       n_layers=a.layers, n_heads=a.heads, seed=a.seed, **extra)


def _emit_report(report: harness.ExperimentReport, out) -> None:
    if out:
        report.write_csv(out)
    for r in report.rows:
        print(f"{r.preset:>16} {r.method:>12}  cost {r.mean_cost:10.4f}  travel {r.mean_travel:10.4f}  "
              f"penalty {r.mean_penalty:9.4f}  {r.mean_seconds:8.4f}s  n={r.n_instances}")


def cmd_gen(a) -> int:
    if a.count < 0:
        raise harness.ConfigError("--count must be >= 0")
    if not a.out:
        raise harness.ConfigError("gen needs --out")
    insts = generate(PRESETS[a.preset], a.count, seed=a.seed)
    write_instances(a.out, insts)
    print(f"wrote {len(insts)} instances to {a.out}")
    return EXIT_OK


def cmd_solve(a) -> int:
    insts = read_instances(a.inp)
    if a.method == "maam":
        model = harness.load_model(a.ckpt)
        for fleet in sorted({i.fleet_size for i in insts}):
            if fleet != model.cfg.fleet_size:
                raise harness.ConfigError(f"checkpoint is for {model.cfg.fleet_size} vehicles, "
                                          f"instances have {fleet}")
        sols, _ = harness.run_maam(model, insts, a.mode, a.samples, a.seed)
    else:
        sols, _ = harness.run_classic(a.method, insts, a.seed, a.jobs)
    if a.out:
        write_solutions(a.out, sols)
    for k, s in enumerate(sols):
        print(f"{k}\t{s.cost.total:.6f}\ttravel {s.cost.travel:.6f}\tpenalty {s.cost.penalty:.6f}")
    return EXIT_OK


def cmd_train(a) -> int:
    cfg = _train_config(a)
    model, tlog = train(cfg, progress=lambda r: print(
        f"epoch {r['epoch']:3d}  train {r['train_cost_mean']:.4f}  eval {r['eval_cost_mean']:.4f}  "
        f"replaced {int(r['baseline_replaced'])}  {r['seconds']:.1f}s", flush=True))
    print(f"untrained eval cost {tlog.initial_eval_cost:.4f}")
    if a.out:
        model.save(a.out)
    if a.log:
        tlog.write_csv(a.log)
    return EXIT_OK


def cmd_bench(a) -> int:
    rep = harness.run_benchmark(a.methods, a.preset, a.count, a.seed, a.ckpt, a.jobs, a.mode, a.samples)
    _emit_report(rep, a.out)
    return EXIT_OK


def cmd_sweep(a) -> int:
    rows = harness.run_sensitivity(a.axis, a.values, _train_config(a))
    if a.out:
        harness.write_sweep_csv(a.out, rows)
    for r in rows:
        print(f"{a.axis}={r['value']}  epoch {r['epoch']:3d}  eval {r['eval_cost']:.4f}")
    return EXIT_OK


def cmd_robustness(a) -> int:
    if not a.counts and not a.capacity_factors:
        raise harness.ConfigError("give --counts and/or --capacity-factors")
    rep = harness.run_robustness(a.ckpt, a.preset, a.counts, a.capacity_factors, a.count, a.seed,
                                 [m for m in a.methods if m != "maam"], a.jobs)
    _emit_report(rep, a.out)
    return EXIT_OK


def cmd_validate(a) -> int:
    insts = read_instances(a.instances)
    sols = read_solutions(a.solutions)
    if len(insts) != len(sols):
        print(f"count mismatch: {len(insts)} instances, {len(sols)} solutions")
        return EXIT_INVALID
    bad = 0
    lines = []
    for k, (inst, rec) in enumerate(zip(insts, sols)):
        try:
            validate_routes(inst, rec["routes"])
            sol = evaluate_solution(inst, rec["routes"])
            ok = all(abs(getattr(sol.cost, f) - rec[f]) <= 1e-6 * max(1.0, abs(rec[f]))
                     for f in ("travel", "penalty", "total"))
            msg = "ok" if ok else (f"cost mismatch: recorded {rec['total']!r}, "
                                   f"recomputed {sol.cost.total!r}")
        except ValidationError as exc:
            ok, msg = False, str(exc)
        bad += not ok
        lines.append(f"{k}\t{'ok' if ok else 'FAIL'}\t{'' if ok else msg}".rstrip())
    print("\n".join(lines))
    if a.out:
        Path(a.out).write_text("\n".join(lines) + "\n")
    print(f"{len(insts) - bad}/{len(insts)} solutions valid")
    return EXIT_OK if bad == 0 else EXIT_INVALID


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "train": cmd_train, "bench": cmd_bench,
            "sweep": cmd_sweep, "robustness": cmd_robustness, "validate": cmd_validate}


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if a.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[a.command](a)
    except (ValidationError, InstanceFormatError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (harness.ConfigError, CheckpointError, OracleSizeError, FileNotFoundError, KeyError,
            ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NodeLimitError, TrainingError, harness.SweepError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
