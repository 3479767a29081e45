"""Staged experiment harness on a desk-scale grid."""

import json
import math
from pathlib import Path

import pytest

from ruleshift import nn
from ruleshift.evalkit import read_report
from ruleshift.harness import (
    DISTS,
    ExperimentConfig,
    METHODS,
    build_report,
    checkpoint_path,
    environment_pair,
    eval_cell,
    run_experiment,
    train_and_save,
)
from ruleshift.policy import TrainConfig

TINY = ExperimentConfig(
    seed=0,
    sft_episodes=12,
    sft_epochs=8,
    sft_stop_acc=0.999,
    enumeration_orders=1,
    rl_updates=1,
    rl_episodes_per_update=4,
    eval_episodes=4,
    viters=(1, 2),
    train=TrainConfig(sft_epochs=8),
)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    runs = tmp_path_factory.mktemp("runs")
    csv_path = run_experiment(str(runs), TINY)
    return runs, csv_path


# --- environment pairing -----------------------------------------------------


def test_environment_pair_gp_rule_shift():
    id_env, ood_env = environment_pair("gp")
    assert id_env.rule.face_rule == "all_ten"
    assert ood_env.rule.face_rule == "ordinal"
    id_env, _ = environment_pair("gp", viter=3)
    assert id_env.rule.max_verify_steps == 3


def test_environment_pair_nav_space_shift():
    id_env, ood_env = environment_pair("nav", viter=4)
    assert id_env.config.action_space == "absolute"
    assert ood_env.config.action_space == "relative"
    assert id_env.config.verify_cap == 4
    assert ood_env.config.verify_cap == 4


def test_environment_pair_unknown():
    with pytest.raises(ValueError):
        environment_pair("chess")


def test_experiment_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(sft_episodes=0)
    with pytest.raises(ValueError):
        ExperimentConfig(viters=())
    with pytest.raises(ValueError):
        ExperimentConfig(viters=(0,))
    with pytest.raises(ValueError):
        ExperimentConfig(rl_episodes_per_update=0)


# --- staged artifacts -----------------------------------------------------------


def test_run_layout(tiny_run):
    runs, csv_path = tiny_run
    assert csv_path == runs / "report.csv"
    assert (runs / "accounting.json").exists()
    assert (runs / "metrics.jsonl").exists()
    assert (runs / "cells.jsonl").exists()
    for env in ("gp", "nav"):
        for method in METHODS:
            assert checkpoint_path(str(runs), env, method).exists()


def test_checkpoints_reload_with_meta(tiny_run):
    runs, _ = tiny_run
    params, meta = nn.load_params(str(checkpoint_path(str(runs), "gp", "SFT")))
    assert meta["env"] == "gp"
    assert meta["method"] == "SFT"
    assert params["w_embed"].shape == (256, 88)


def test_accounting_shape(tiny_run):
    runs, _ = tiny_run
    accounting = json.loads((runs / "accounting.json").read_text())
    for env in ("gp", "nav"):
        assert accounting[env]["n"] > 0
        sft = accounting[env]["sft"]
        assert sft["d_sft"] > 0
        assert sft["records"] > 0
        rl = accounting[env]["rl"]
        assert rl["d_rl"] > 0
        assert rl["e"] > 0
        assert rl["d_i"] > 0
        assert rl["d_o"] > 0


def test_cells_cover_the_grid(tiny_run):
    runs, _ = tiny_run
    records = [json.loads(x) for x in (runs / "cells.jsonl").read_text().splitlines()]
    keys = {(r["env"], r["method"], r["dist"], r["viter"]) for r in records}
    expected = {
        (env, method, dist, viter)
        for env in ("gp", "nav")
        for method in METHODS
        for dist in DISTS
        for viter in TINY.viters
    }
    assert keys == expected
    for r in records:
        assert r["episodes"] == TINY.eval_episodes
        transcripts = (runs / r["transcripts"]).read_text().splitlines()
        assert len(transcripts) == TINY.eval_episodes


def test_report_rows_and_consistency(tiny_run):
    runs, csv_path = tiny_run
    with open(csv_path) as fh:
        rows = read_report(fh)
    # gp: success only; nav: success + per-step
    cells = len(METHODS) * len(DISTS) * len(TINY.viters)
    assert len(rows) == cells + 2 * cells

    for row in rows:
        assert row.condition in {f"{m}-{d}" for m in METHODS for d in DISTS}
        assert 0.0 <= row.value <= 1.0
        assert row.compute_gflops > 0
        if row.metric == "success_rate":
            assert row.n == TINY.eval_episodes
        # stderr always matches the binomial formula at the row's own n
        expected = math.sqrt(row.value * (1 - row.value) / row.n)
        assert row.stderr == pytest.approx(expected, abs=1e-9)

    gp_metrics = {r.metric for r in rows if r.env == "gp"}
    nav_metrics = {r.metric for r in rows if r.env == "nav"}
    assert gp_metrics == {"success_rate"}
    assert nav_metrics == {"success_rate", "per_step_accuracy"}


def test_rl_costs_more_flops_than_sft(tiny_run):
    runs, csv_path = tiny_run
    with open(csv_path) as fh:
        rows = read_report(fh)
    for env in ("gp", "nav"):
        sft = {r.compute_gflops for r in rows if r.env == env and r.condition.startswith("SFT")}
        rl = {r.compute_gflops for r in rows if r.env == env and r.condition.startswith("RL")}
        assert len(sft) == 1 and len(rl) == 1
        assert rl.pop() > sft.pop()


def test_build_report_is_reproducible_from_disk(tiny_run):
    runs, _ = tiny_run
    a = build_report(str(runs))
    b = build_report(str(runs))
    assert a == b


def test_metrics_log_has_training_curves(tiny_run):
    runs, _ = tiny_run
    events = [json.loads(x) for x in (runs / "metrics.jsonl").read_text().splitlines()]
    phases = {e.get("phase") for e in events}
    assert "sft" in phases
    assert "rl" in phases
    assert "done" in phases
    sft_events = [e for e in events if e.get("phase") == "sft"]
    assert all("loss" in e for e in sft_events)


# --- stage errors -----------------------------------------------------------------


def test_rl_requires_sft_checkpoint(tmp_path):
    with pytest.raises(FileNotFoundError):
        train_and_save(str(tmp_path), "gp", "RL", TINY)


def test_eval_requires_checkpoint(tmp_path):
    with pytest.raises(FileNotFoundError):
        eval_cell(str(tmp_path), "gp", "SFT", "ID", 5, 2, seed=0)


def test_report_requires_cells(tmp_path):
    with pytest.raises(FileNotFoundError):
        build_report(str(tmp_path))


def test_eval_cell_validates_dist(tiny_run):
    runs, _ = tiny_run
    with pytest.raises(ValueError):
        eval_cell(str(runs), "gp", "SFT", "NEAR", 5, 2, seed=0)


def test_train_and_save_validates_method(tmp_path):
    with pytest.raises(ValueError):
        train_and_save(str(tmp_path), "gp", "DPO", TINY)
