"""``fosae`` command line: gen-data, train, grid, encode, emit-pddl, plan, solve, interpret, validate."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import ama1, puzzle
from .config import default_seed, dump_config, resolve_config
from .interpret import collect_all, collect_examples, render_report
from .model import ConfigError, load_checkpoint
from .pipeline import (
    GRID_FIELDS,
    bits_to_ints,
    encode_dataset,
    eval_arity_grid,
    int_to_bits,
    train,
)
from .planner import (
    DEFAULT_BUDGET_MB,
    PlanningError,
    ResourceError,
    format_plan,
    parse_pddl,
    read_plan,
    search,
    validate_plan,
)

log = logging.getLogger("fosae")

EXIT_OK = 0
EXIT_UNSOLVED = 1
EXIT_ERROR = 2
EXIT_SOME_UNSOLVED = 3

# flag name -> FosaeConfig key
CONFIG_FLAGS = {
    "units": "num_units",
    "arity": "arity",
    "predicates": "num_predicates",
    "attention_hidden": "attention_hidden",
    "pn_hidden": "pn_hidden",
    "decoder_hidden": "decoder_hidden",
    "tau_start": "tau_start",
    "tau_min": "tau_min",
    "tau_decay": "tau_decay",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "learning_rate": "learning_rate",
    "seed": "seed",
    "dtype": "dtype",
}


def _add_config_flags(p):
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    p.add_argument("--units", type=int)
    p.add_argument("--arity", type=int)
    p.add_argument("--predicates", type=int)
    p.add_argument("--attention-hidden", type=int)
    p.add_argument("--pn-hidden", type=int)
    p.add_argument("--decoder-hidden", type=int)
    p.add_argument("--tau-start", type=float)
    p.add_argument("--tau-min", type=float)
    p.add_argument("--tau-decay", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--dtype", choices=("float32", "float64"))


def _config_from_args(args, base=None):
    overrides = {key: getattr(args, flag) for flag, key in CONFIG_FLAGS.items()}
    config = resolve_config(args.config, overrides, base)
    return config


def _seed(args):
    return default_seed() if getattr(args, "seed", None) is None else args.seed


def build_parser():
    parser = argparse.ArgumentParser(prog="fosae", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate 8-puzzle transition pairs")
    p.add_argument("--count", type=int, default=20000)
    p.add_argument("--seed", type=int)
    p.add_argument("--split", type=float, default=0.9, help="training fraction")
    p.add_argument("--dedup", action="store_true", help="never repeat a (pre, suc) pair")
    p.add_argument("--walk-length", type=int, default=5)
    p.add_argument("--out", required=True, help="output dataset directory")

    p = sub.add_parser("train", help="train an autoencoder")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="checkpoint directory")
    _add_config_flags(p)

    p = sub.add_parser("grid", help="train a (A, U, P) grid and tabulate test error")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="CSV path (a contour PNG is written next to it)")
    p.add_argument("--max-units", type=int, default=8)
    p.add_argument("--max-predicates", type=int, default=8)
    p.add_argument("--arities", default="1,2,3")
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--metric", default="test_object_se", choices=("test_mse", "test_object_se"))
    _add_config_flags(p)

    p = sub.add_parser("encode", help="encode a dataset into a transition log CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("emit-pddl", help="write the grounded PDDL model for one instance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset to take transitions from (with --transitions dataset)")
    p.add_argument("--transitions", choices=("all", "dataset"), default="dataset")
    p.add_argument("--steps", type=int, default=7)
    p.add_argument("--seed", type=int)
    p.add_argument("--domain", required=True)
    p.add_argument("--problem", required=True)

    p = sub.add_parser("plan", help="blind search on a PDDL domain/problem")
    p.add_argument("--domain", required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--budget-mb", type=int, default=DEFAULT_BUDGET_MB)
    p.add_argument("--out", help="plan file (default: stdout)")

    p = sub.add_parser("solve", help="generate instances, plan, validate, decode")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--steps", type=int, default=7)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int)
    p.add_argument("--transitions", choices=("all", "dataset"), default="all")
    p.add_argument("--data", help="dataset directory (for --transitions dataset)")
    p.add_argument("--budget-mb", type=int, default=DEFAULT_BUDGET_MB)
    p.add_argument("--out", help="results CSV (traces and a PNG go next to it)")
    p.add_argument("--emit-only", metavar="DIR", help="write PDDL per instance and skip search")

    p = sub.add_parser("interpret", help="positive/negative argument examples per predicate")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--pred", type=int)
    which.add_argument("--all", action="store_true")
    p.add_argument("--max-k", type=int, default=10)
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.add_argument("--out", help="report path (.csv for CSV, otherwise text)")

    p = sub.add_parser("validate", help="check a plan file against a PDDL task")
    p.add_argument("--domain", required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--plan", required=True)
    return parser


# ---------------------------------------------------------------------------


def cmd_gen_data(args):
    seed = _seed(args)
    ts = puzzle.generate_transitions(args.count, seed, split=args.split, dedup=args.dedup,
                                     walk_length=args.walk_length)
    ds = puzzle.Dataset.from_transitions(ts)
    puzzle.save_dataset(ds, args.out)
    print(f"wrote {len(ts)} pairs ({ts.num_train} train / {ts.num_test} test) to {args.out}")
    return EXIT_OK


def cmd_train(args):
    config = _config_from_args(args)
    if args.print_config:
        sys.stdout.write(dump_config(config))
        return EXIT_OK
    if not args.data or not args.out:
        raise ConfigError("train needs --data and --out")
    data = puzzle.load_dataset(args.data)
    model, history = train(config, data, checkpoint_dir=args.out)
    from .plotting import plot_training_history

    plot_training_history(history, Path(args.out) / "training.png")
    best = min((r for r in history.rows if r.get("test_mse") is not None), key=lambda r: r["test_mse"], default=None)
    if best is not None:
        print(f"best epoch {best['epoch']}: test MSE {best['test_mse']:.6f}, "
              f"object SE {best['test_object_se']:.6f}")
    return EXIT_OK


def cmd_grid(args):
    base = _config_from_args(args, base={"epochs": 50})
    if args.print_config:
        sys.stdout.write(dump_config(base))
        return EXIT_OK
    if not args.data or not args.out:
        raise ConfigError("grid needs --data and --out")
    data = puzzle.load_dataset(args.data)
    arities = [int(a) for a in args.arities.split(",") if a]
    out = Path(args.out)
    rows = eval_arity_grid(base, data, range(1, args.max_units + 1), range(1, args.max_predicates + 1),
                           arities, csv_path=out,
                           progress=lambda r: log.info("A=%d U=%d P=%d %s=%s", r["arity"], r["units"],
                                                       r["predicates"], args.metric, r.get(args.metric)))
    from .pipeline import min_achieving_propositions
    from .plotting import plot_arity_contours

    plot_arity_contours(rows, out.with_suffix(".png"), metric=args.metric, threshold=args.threshold)
    for a in arities:
        best = min_achieving_propositions(rows, a, args.threshold, args.metric)
        print(f"A={a}: smallest U*P with {args.metric} <= {args.threshold}: {best}")
    return EXIT_OK


def cmd_encode(args):
    model, _ = load_checkpoint(args.checkpoint)
    data = puzzle.load_dataset(args.data)
    tlog = encode_dataset(model, data)
    n = tlog.num_propositions
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pre", "suc", "count"])
        for (pre, suc), count in tlog.counts.items():
            writer.writerow([_bitstring(pre, n), _bitstring(suc, n), count])
    print(f"{len(tlog.counts)} distinct encoded pairs; {tlog.distinct_inputs} distinct input states -> "
          f"{tlog.distinct_encoded} distinct encodings (collision rate {tlog.collision_rate:.4%})")
    return EXIT_OK


def _bitstring(value, n):
    return "".join("1" if b else "0" for b in int_to_bits(value, n))


def cmd_emit_pddl(args):
    from .solve import build_planner

    model, _ = load_checkpoint(args.checkpoint)
    data = puzzle.load_dataset(args.data) if args.data else None
    planner = build_planner(model, args.transitions, data)
    init_tiles, goal_tiles = puzzle.make_instance(args.steps, [_seed(args), args.steps, 0])
    grounded = ama1.GroundedModel(planner.grounded.num_propositions, planner.grounded.actions,
                                  planner.encode_tiles(init_tiles), planner.encode_tiles(goal_tiles))
    domain, problem = ama1.emit_pddl(grounded)
    Path(args.domain).write_text(domain)
    Path(args.problem).write_text(problem)
    print(f"{grounded.num_propositions} propositions, {len(grounded.actions)} actions")
    return EXIT_OK


def cmd_plan(args):
    task = parse_pddl(Path(args.domain).read_text(), Path(args.problem).read_text())
    try:
        result = search(task, budget_mb=args.budget_mb)
    except ResourceError as exc:
        print(f"error: {exc}; {json.dumps(exc.stats)}", file=sys.stderr)
        return EXIT_ERROR
    print(f"; expanded {result.expanded}, generated {result.generated}, {result.seconds:.4f} s", file=sys.stderr)
    if not result.solved:
        print("; unsolvable", file=sys.stderr)
        return EXIT_UNSOLVED
    text = format_plan(result.plan)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_solve(args):
    from .solve import format_trace, solve, summarize, write_results

    model, _ = load_checkpoint(args.checkpoint)
    data = puzzle.load_dataset(args.data) if args.data else None
    rows, traces = solve(model, args.steps, args.count, seed=_seed(args), transitions=args.transitions,
                         data=data, budget_mb=args.budget_mb, emit_dir=args.emit_only)
    if args.emit_only:
        print(f"wrote {args.count} PDDL instances to {args.emit_only}")
        return EXIT_OK
    if args.out:
        out = Path(args.out)
        write_results(rows, out)
        with open(out.with_suffix(".traces.txt"), "w") as fh:
            for row, decoded in zip(rows, traces):
                fh.write(f"# instance {row['instance']} cost {row['cost']}\n")
                fh.write(format_trace(decoded))
        from .plotting import plot_solve_results

        plot_solve_results(rows, out.with_suffix(".png"))
    else:
        write_results(rows, "/dev/stdout")
    s = summarize(rows)
    print(f"solved {s['solved']}/{s['instances']}, valid {s['valid']}, decoded-valid {s['decoded_valid']}, "
          f"mean cost {s['mean_cost']}, mean search time {s['mean_seconds']}", file=sys.stderr)
    return EXIT_OK if s["solved"] == s["instances"] else EXIT_SOME_UNSOLVED


def cmd_interpret(args):
    model, _ = load_checkpoint(args.checkpoint)
    data = puzzle.load_dataset(args.data).states(args.split)
    if args.all:
        examples = collect_all(model, data, args.max_k)
    else:
        examples = [collect_examples(model, data, args.pred, args.max_k)]
    fmt = "csv" if args.out and args.out.endswith(".csv") else "text"
    report = render_report(examples, fmt)
    if args.out:
        Path(args.out).write_text(report)
    else:
        sys.stdout.write(report)
    return EXIT_OK


def cmd_validate(args):
    task = parse_pddl(Path(args.domain).read_text(), Path(args.problem).read_text())
    plan = read_plan(Path(args.plan).read_text())
    result = validate_plan(task, plan)
    if result.ok:
        print(f"plan valid, cost {len(plan)}")
        return EXIT_OK
    print(f"plan invalid at step {result.failed_step}: {result.reason}")
    return EXIT_UNSOLVED


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "grid": cmd_grid,
    "encode": cmd_encode,
    "emit-pddl": cmd_emit_pddl,
    "plan": cmd_plan,
    "solve": cmd_solve,
    "interpret": cmd_interpret,
    "validate": cmd_validate,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, PlanningError, puzzle.ValidationError, ama1.ValidationError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
