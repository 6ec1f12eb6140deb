"""End-to-end planning: encode, build the grounded model, search, decode."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ama1, puzzle
from .model import FosaeModel, decode_np, encode
from .pipeline import TransitionLog, bits_to_ints, encode_dataset, int_to_bits
from .planner import DEFAULT_BUDGET_MB, ResourceError, search, validate_plan

log = logging.getLogger(__name__)

RESULT_FIELDS = ("instance", "steps", "seed", "solved", "cost", "expanded", "generated", "seconds",
                 "valid", "decoded_valid", "failure", "init")


def full_transition_log(model: FosaeModel, states=None):
    """Encode every legal 8-puzzle move among ``states`` (default: all reachable).

    Each state is encoded once; returns ``(log, codes)`` where ``codes`` maps
    tile tuples to their encoded int.
    """
    states = puzzle.reachable_states() if states is None else list(states)
    ints = bits_to_ints(encode(model, puzzle.encode_states(states)))
    codes = dict(zip(states, ints))
    counts = {}
    for s in states:
        for t in puzzle.successors(s):
            if t in codes:
                key = (codes[s], codes[t])
                counts[key] = counts.get(key, 0) + 1
    return TransitionLog(model.config.num_propositions, counts, len(states), len(set(ints))), codes


@dataclass
class Planner:
    """A grounded task built once from a transition log, reused per instance."""

    model: FosaeModel
    log: TransitionLog
    grounded: ama1.GroundedModel
    task: object

    @classmethod
    def build(cls, model: FosaeModel, log: TransitionLog):
        grounded = ama1.build_model(log, 0, 0)
        return cls(model, log, grounded, ama1.to_task(grounded))

    def encode_tiles(self, tiles):
        return bits_to_ints(encode(self.model, puzzle.encode_state(tiles)[None]))[0]

    def decode_plan_states(self, init_code, plan):
        """Latent states along ``plan`` decoded to tile tuples (None where undecodable)."""
        n = self.model.config.num_propositions
        state = init_code
        codes = [state]
        for name in plan:
            a = self.task.action_index(name)
            state = self.task.apply(state, a)
            codes.append(state)
        recon = decode_np(self.model, np.stack([int_to_bits(c, n) for c in codes]))
        tiles = []
        for r in recon:
            try:
                tiles.append(puzzle.decode_state(r))
            except puzzle.ValidationError:
                tiles.append(None)
        return tiles


def plan_instance(planner: Planner, init_tiles, goal_tiles, budget_mb=DEFAULT_BUDGET_MB):
    """Solve one instance; returns (result row, decoded tile sequence)."""
    n = planner.model.config.num_propositions
    init_code = planner.encode_tiles(init_tiles)
    goal_code = planner.encode_tiles(goal_tiles)
    full = (1 << n) - 1
    row = {"solved": False, "cost": None, "expanded": 0, "generated": 0, "seconds": 0.0,
           "valid": False, "decoded_valid": False, "failure": "", "init": "".join(map(str, init_tiles))}
    if init_code == goal_code and tuple(init_tiles) != tuple(goal_tiles):
        row["failure"] = "representation: init and goal encode identically"
        return row, []
    task = planner.task.with_problem(init_code, goal_code, ~goal_code & full)
    try:
        result = search(task, budget_mb=budget_mb)
    except ResourceError as exc:
        row.update(exc.stats)
        row["failure"] = str(exc)
        return row, []
    row.update(expanded=result.expanded, generated=result.generated, seconds=result.seconds)
    if not result.solved:
        row["failure"] = "unsolvable in the grounded model"
        return row, []
    row["solved"] = True
    row["cost"] = result.cost
    row["valid"] = validate_plan(task, result.plan).ok
    decoded = planner.decode_plan_states(init_code, result.plan)
    row["decoded_valid"] = (
        None not in decoded
        and decoded[0] == tuple(init_tiles)
        and decoded[-1] == tuple(goal_tiles)
        and all(puzzle.is_single_swap(a, b) for a, b in zip(decoded, decoded[1:]))
    )
    row["plan"] = result.plan
    return row, decoded


def solve(model: FosaeModel, steps, count, seed=0, transitions="all", data=None,
          budget_mb=DEFAULT_BUDGET_MB, planner=None, emit_dir=None):
    """Generate ``count`` instances of ``steps``-move walks and plan for each.

    ``transitions`` selects the observations the grounded model is built
    from: ``"all"`` enumerates every legal move of the puzzle, ``"dataset"``
    uses the pairs in ``data``.  With ``emit_dir`` the PDDL files are written
    there and no search is run.
    """
    if planner is None:
        planner = build_planner(model, transitions, data)
    rows, traces = [], []
    for i in range(count):
        inst_seed = [seed, steps, i]
        init_tiles, goal_tiles = puzzle.make_instance(steps, inst_seed)
        if emit_dir is not None:
            emit_instance(planner, init_tiles, goal_tiles, Path(emit_dir) / f"instance-{i:03d}")
            continue
        row, decoded = plan_instance(planner, init_tiles, goal_tiles, budget_mb)
        row.update(instance=i, steps=steps, seed=seed)
        rows.append(row)
        traces.append(decoded)
    return rows, traces


def build_planner(model, transitions="all", data=None):
    if transitions == "all":
        log_, _ = full_transition_log(model)
    elif transitions == "dataset":
        if data is None:
            raise ValueError("transitions='dataset' needs a dataset")
        log_ = encode_dataset(model, data)
    else:
        raise ValueError(f"unknown transition source {transitions!r}")
    log.info("transition log: %d pairs, %d distinct inputs, %d distinct encodings",
             len(log_.counts), log_.distinct_inputs, log_.distinct_encoded)
    return Planner.build(model, log_)


def emit_instance(planner: Planner, init_tiles, goal_tiles, directory):
    directory.mkdir(parents=True, exist_ok=True)
    grounded = planner.grounded
    grounded = ama1.GroundedModel(grounded.num_propositions, grounded.actions,
                                  planner.encode_tiles(init_tiles), planner.encode_tiles(goal_tiles))
    domain, problem = ama1.emit_pddl(grounded)
    (directory / "domain.pddl").write_text(domain)
    (directory / "problem.pddl").write_text(problem)
    return directory


def summarize(rows):
    solved = [r for r in rows if r["solved"]]
    return {
        "instances": len(rows),
        "solved": len(solved),
        "valid": sum(1 for r in solved if r["valid"]),
        "decoded_valid": sum(1 for r in solved if r["decoded_valid"]),
        "mean_cost": float(np.mean([r["cost"] for r in solved])) if solved else None,
        "mean_seconds": float(np.mean([r["seconds"] for r in solved])) if solved else None,
    }


def write_results(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: r.get(k) for k in RESULT_FIELDS})


def format_trace(decoded):
    """Decoded plan states as (tile, x, y) attribute tables, one block per step."""
    lines = []
    for step, tiles in enumerate(decoded):
        lines.append(f"step {step}")
        if tiles is None:
            lines.append("  (undecodable)")
            continue
        for cell_row in range(puzzle.SIDE):
            cells = tiles[cell_row * puzzle.SIDE:(cell_row + 1) * puzzle.SIDE]
            lines.append("  " + " ".join("." if t == 0 else str(t) for t in cells))
        attrs = sorted((t, c % puzzle.SIDE, c // puzzle.SIDE) for c, t in enumerate(tiles))
        lines.append("  " + " ".join(f"({t},{x},{y})" for t, x, y in attrs))
    return "\n".join(lines) + "\n"
