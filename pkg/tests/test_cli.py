"""Command line, config handling and the end-to-end solve driver."""

import csv
import json

import numpy as np
import pytest

from fosae import puzzle
from fosae.cli import main
from fosae.config import check_config_dict, default_seed, dump_config, load_config_file, resolve_config
from fosae.model import ConfigError, FosaeConfig, FosaeModel, save_checkpoint
from fosae.solve import build_planner, full_transition_log, solve, summarize

TINY_FLAGS = ["--units", "2", "--predicates", "2", "--attention-hidden", "8", "--pn-hidden", "4",
              "--decoder-hidden", "16", "--epochs", "1", "--dtype", "float32"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--count", "300", "--seed", "3", "--out", str(root / "data")]) == 0
    assert main(["train", "--data", str(root / "data"), "--out", str(root / "ckpt"), *TINY_FLAGS]) == 0
    return root


# ---------------------------------------------------------------- config


def test_empty_config_gives_defaults(tmp_path, monkeypatch):
    monkeypatch.delenv("FOSAE_SEED", raising=False)
    (tmp_path / "c.json").write_text("{}")
    assert resolve_config(tmp_path / "c.json") == FosaeConfig()


def test_flag_overrides_file(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"num_units": 4, "epochs": 7}))
    c = resolve_config(tmp_path / "c.json", {"num_units": 5, "epochs": None})
    assert (c.num_units, c.epochs) == (5, 7)


def test_print_config_roundtrip(tmp_path, capsys):
    assert main(["train", "--print-config", "--units", "3", "--tau-decay", "0.95", "--seed", "4"]) == 0
    printed = capsys.readouterr().out
    (tmp_path / "c.json").write_text(printed)
    again = resolve_config(tmp_path / "c.json")
    assert again == FosaeConfig(num_units=3, tau_decay=0.95, seed=4)
    assert dump_config(again) == printed


def test_unknown_key_and_type_mismatch(tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps({"num_units": 2, "nmu_predicates": 3}))
    with pytest.raises(ConfigError, match="nmu_predicates"):
        load_config_file(tmp_path / "bad.json")
    with pytest.raises(ConfigError, match="epochs"):
        check_config_dict({"epochs": "ten"})
    with pytest.raises(ConfigError, match="arity"):
        check_config_dict({"arity": True})
    assert check_config_dict({"learning_rate": 1})["learning_rate"] == 1.0


def test_cli_config_error_exit_code(tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"bogus": 1}))
    assert main(["train", "--config", str(tmp_path / "bad.json"), "--print-config"]) == 2
    assert "bogus" in capsys.readouterr().err


def test_seed_env_fallback(monkeypatch):
    monkeypatch.setenv("FOSAE_SEED", "17")
    assert default_seed() == 17
    assert resolve_config().seed == 17
    monkeypatch.setenv("FOSAE_SEED", "x")
    with pytest.raises(ConfigError):
        default_seed()


# ---------------------------------------------------------------- subcommands


def test_gen_data_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["gen-data", "--count", "50", "--seed", "9", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "payload.bin").read_bytes() == (tmp_path / "b" / "payload.bin").read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert (manifest["train_pairs"], manifest["test_pairs"], manifest["seed"]) == (45, 5, 9)


def test_train_outputs(workspace):
    ckpt = workspace / "ckpt"
    for name in ("manifest.json", "weights.bin", "metrics.csv", "training.png"):
        assert (ckpt / name).exists()
    assert json.loads((ckpt / "manifest.json").read_text())["config"]["num_units"] == 2


def test_encode_csv(workspace):
    out = workspace / "log.csv"
    assert main(["encode", "--checkpoint", str(workspace / "ckpt"), "--data", str(workspace / "data"),
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert rows and all(len(r["pre"]) == 4 and len(r["suc"]) == 4 for r in rows)
    assert sum(int(r["count"]) for r in rows) == 300


def test_interpret_all_and_single(workspace, capsys):
    out = workspace / "report.csv"
    assert main(["interpret", "--checkpoint", str(workspace / "ckpt"), "--data", str(workspace / "data"),
                 "--all", "--max-k", "3", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert {r["predicate"] for r in rows} == {"0", "1"}
    assert main(["interpret", "--checkpoint", str(workspace / "ckpt"), "--data", str(workspace / "data"),
                 "--pred", "1", "--max-k", "2"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("predicate 1\n") and "positive:" in text


def test_emit_plan_validate(workspace, tmp_path, capsys):
    # a planning problem over the observed transitions: goal = successor of the first pair
    from fosae import ama1
    from fosae.model import load_checkpoint
    from fosae.pipeline import encode_dataset

    model, _ = load_checkpoint(workspace / "ckpt")
    log = encode_dataset(model, puzzle.load_dataset(workspace / "data"))
    pre, suc = next((p, s) for p, s in log.pairs if p != s)
    domain, problem = ama1.emit_pddl(ama1.build_model(log, pre, suc))
    (tmp_path / "d.pddl").write_text(domain)
    (tmp_path / "p.pddl").write_text(problem)
    plan = tmp_path / "plan.txt"
    assert main(["plan", "--domain", str(tmp_path / "d.pddl"), "--problem", str(tmp_path / "p.pddl"),
                 "--out", str(plan)]) == 0
    assert plan.read_text().endswith("; cost = 1\n")
    assert main(["validate", "--domain", str(tmp_path / "d.pddl"), "--problem", str(tmp_path / "p.pddl"),
                 "--plan", str(plan)]) == 0
    plan.write_text("; cost = 0\n")
    assert main(["validate", "--domain", str(tmp_path / "d.pddl"), "--problem", str(tmp_path / "p.pddl"),
                 "--plan", str(plan)]) == 1
    # emit-pddl from the dataset transitions writes a parseable pair
    assert main(["emit-pddl", "--checkpoint", str(workspace / "ckpt"), "--data", str(workspace / "data"),
                 "--steps", "2", "--domain", str(tmp_path / "d2.pddl"), "--problem", str(tmp_path / "p2.pddl")]) == 0
    assert "; 4 propositions" in (tmp_path / "d2.pddl").read_text()


def test_plan_exit_codes(tmp_path):
    domain = tmp_path / "d.pddl"
    problem = tmp_path / "p.pddl"
    domain.write_text("(define (domain")
    problem.write_text("(define (problem x) (:domain d) (:init) (:goal (and)))")
    assert main(["plan", "--domain", str(domain), "--problem", str(problem)]) == 2
    domain.write_text("(define (domain d) (:requirements :strips) (:predicates (p)))")
    problem.write_text("(define (problem x) (:domain d) (:init) (:goal (and (p))))")
    assert main(["plan", "--domain", str(domain), "--problem", str(problem)]) == 1
    problem.write_text("(define (problem x) (:domain d) (:init (p)) (:goal (and (p))))")
    assert main(["plan", "--domain", str(domain), "--problem", str(problem)]) == 0


# ---------------------------------------------------------------- solve


def test_solve_zero_steps_gives_empty_plans(trained_puzzle):
    model, _, _ = trained_puzzle
    rows, traces = solve(model, steps=0, count=3)
    assert all(r["solved"] and r["cost"] == 0 and r["valid"] for r in rows)
    assert all(len(t) == 1 and t[0] == puzzle.GOAL for t in traces)


def test_solve_cli_writes_results(trained_puzzle, tmp_path):
    _, _, ckpt = trained_puzzle
    out = tmp_path / "solve.csv"
    assert main(["solve", "--checkpoint", str(ckpt), "--steps", "7", "--count", "3", "--seed", "5",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 3 and all(r["solved"] == "True" and r["valid"] == "True" for r in rows)
    assert all(int(r["cost"]) <= 7 for r in rows)
    assert out.with_suffix(".png").exists()
    assert "step 0" in out.with_suffix(".traces.txt").read_text()


def test_solve_emit_only(trained_puzzle, tmp_path):
    _, _, ckpt = trained_puzzle
    emit = tmp_path / "pddl"
    assert main(["solve", "--checkpoint", str(ckpt), "--steps", "2", "--count", "2", "--transitions",
                 "dataset", "--data", str(_dataset_dir(tmp_path)), "--emit-only", str(emit)]) == 0
    assert sorted(p.name for p in emit.iterdir()) == ["instance-000", "instance-001"]
    assert (emit / "instance-000" / "domain.pddl").read_text().startswith("(define (domain fosae)")


def _dataset_dir(tmp_path):
    d = tmp_path / "data"
    puzzle.save_dataset(puzzle.Dataset.from_transitions(puzzle.generate_transitions(50, seed=0)), d)
    return d


def test_collision_flagged_as_representation_failure():
    # one unit, one predicate with a huge bias: every state encodes to the same bit
    c = FosaeConfig(num_units=1, arity=1, num_predicates=1, attention_hidden=4, pn_hidden=2, decoder_hidden=4)
    model = FosaeModel.initialize(c)
    model.params["pn_b2"].data[:] = [[[50.0, -50.0]]]
    states = puzzle.reachable_states()[:200]
    log, codes = full_transition_log(model, states)
    assert len(set(codes.values())) == 1 and log.collision_rate > 0.99
    rows, _ = solve(model, steps=3, count=2, planner=build_planner(model, "dataset", _pairs(states)))
    assert all(not r["solved"] and r["failure"].startswith("representation") for r in rows)
    assert summarize(rows)["solved"] == 0


def _pairs(states):
    pre = [s for s in states for t in puzzle.successors(s)][:100]
    suc = [t for s in states for t in puzzle.successors(s)][:100]
    return np.stack([puzzle.encode_states(pre), puzzle.encode_states(suc)], axis=1)


def test_solve_cli_some_unsolved_exit_code(workspace, tmp_path):
    # every state encodes to the same bits, so no instance is solvable
    c = FosaeConfig(num_units=1, arity=1, num_predicates=1, attention_hidden=4, pn_hidden=2, decoder_hidden=4)
    model = FosaeModel.initialize(c)
    model.params["pn_b2"].data[:] = [[[50.0, -50.0]]]
    save_checkpoint(model, tmp_path / "ckpt")
    assert main(["solve", "--checkpoint", str(tmp_path / "ckpt"), "--steps", "3", "--count", "2",
                 "--transitions", "dataset", "--data", str(workspace / "data")]) == 3
