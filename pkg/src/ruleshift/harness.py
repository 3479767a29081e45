"""Experiment orchestration: SFT, PPO from the SFT init, evaluation, report.

The probe design is one training distribution per environment and one rule
shift: the card game trains under the all-ten face rule and shifts to the
ordinal rule; navigation trains in the absolute action space and shifts to
the relative one. Each trained method (SFT, RL) is evaluated on both sides
of the shift across the verification-iteration presets.

Stages communicate only through files in a runs directory, so they can run
as separate CLI invocations:

    checkpoints/{env}_{method}.npz   trained parameters
    accounting.json                  token counts for the compute estimates
    metrics.jsonl                    training curves (append-only)
    transcripts/{cell}.jsonl         one evaluated episode per line
    cells.jsonl                      one record per evaluated grid cell
    report.csv                       the final metric table
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Callable, Optional

import numpy as np

from . import evalkit, nn, policy, revision
from .gp_env import GeneralPointsEnv, RuleConfig
from .nav_env import NavEnvConfig, NavigationEnv

VITER_PRESETS = (1, 3, 5, 10)
METHODS = ("SFT", "RL")
DISTS = ("ID", "OOD")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    sft_episodes: int = 400
    sft_epochs: int = 120
    sft_stop_acc: float = 0.995
    enumeration_orders: int = 4
    rl_updates: int = 6
    rl_episodes_per_update: int = 16
    eval_episodes: int = 48
    viters: tuple[int, ...] = VITER_PRESETS
    train: policy.TrainConfig = field(default_factory=policy.TrainConfig)

    def __post_init__(self):
        if self.sft_episodes < 1 or self.eval_episodes < 1:
            raise ValueError("sft_episodes and eval_episodes must be positive")
        if self.rl_updates < 0 or self.rl_episodes_per_update < 1:
            raise ValueError("rl settings must be non-negative / positive")
        if not self.viters or any(v < 1 for v in self.viters):
            raise ValueError("viters must be positive")


def environment_pair(env_name: str, viter: Optional[int] = None):
    """(in-distribution env, rule-shifted env) for a probe environment."""
    if env_name == "gp":
        kw = {} if viter is None else {"max_verify_steps": viter}
        return (
            GeneralPointsEnv(RuleConfig(face_rule="all_ten", **kw)),
            GeneralPointsEnv(RuleConfig(face_rule="ordinal", **kw)),
        )
    if env_name == "nav":
        kw = {} if viter is None else {"verify_cap": viter}
        return (
            NavigationEnv(NavEnvConfig(action_space="absolute", **kw)),
            NavigationEnv(NavEnvConfig(action_space="relative", **kw)),
        )
    raise ValueError(f"unknown environment {env_name!r}")


# --- SFT ----------------------------------------------------------------------------


def sft_train(
    env,
    config: ExperimentConfig,
    log: Optional[Callable[[dict], None]] = None,
) -> tuple[nn.Params, dict]:
    """Fit the tiny policy to expert decisions; returns (params, accounting).

    Accounting carries the token counts the compute estimates need: d_sft is
    the whitespace token count of the prompt/target dataset the structured
    corpus stands in for.
    """
    records = list(
        policy.iter_sft_records(env, config.sft_episodes, "expert", config.seed)
    )
    d_sft = sum(
        evalkit.token_count(prompt) + evalkit.token_count(target)
        for prompt, target, _, _ in records
    )
    corpus = [(f.vector(), d) for _, _, f, d in records]
    if env.kind == "gp":
        corpus += policy.gp_enumeration_sweep(
            env, config.seed, config.enumeration_orders
        )

    params = policy.make_policy_params(config.train.seed)
    opt = nn.Adam(config.train.learning_rate)
    rng = Random(config.seed)
    order = list(range(len(corpus)))
    train_cfg = config.train
    acc = 0.0
    epoch = -1
    for epoch in range(config.sft_epochs):
        rng.shuffle(order)
        losses = []
        for lo in range(0, len(order), train_cfg.batch_size):
            chunk = [corpus[i] for i in order[lo : lo + train_cfg.batch_size]]
            params, loss = policy.sft_update(params, chunk, train_cfg, opt)
            losses.append(loss)
        acc = policy.exact_match_rate(params, corpus)
        if log:
            log(
                {
                    "phase": "sft",
                    "epoch": epoch,
                    "loss": float(np.mean(losses)),
                    "exact_match": acc,
                }
            )
        if acc >= config.sft_stop_acc:
            break
    info = {
        "records": len(records),
        "corpus": len(corpus),
        "epochs": epoch + 1,
        "exact_match": acc,
        "d_sft": d_sft,
    }
    return params, info


# --- RL -----------------------------------------------------------------------------


class _RecordingPolicy(policy.TinyPolicy):
    """Tiny policy that keeps its per-turn features/decisions for the trainer."""

    def __init__(self, params, seed):
        super().__init__(params, seed=seed, mode="sample")
        self.trace: list[tuple[np.ndarray, tuple, float, float]] = []

    def act(self, prompt: str, view):
        text, logp, value = super().act(prompt, view)
        self.trace.append(
            (self.last_features.vector(), self.last_decisions, logp, value)
        )
        return text, logp, value


def _episode_entries(
    transcript: revision.Transcript,
    trace,
    train_cfg: policy.TrainConfig,
) -> list[policy.RolloutEntry]:
    rewards = [turn.reward for turn in transcript.turns]
    if not rewards:
        return []
    rewards[-1] += transcript.step_limit_penalty
    values = [value for _, _, _, value in trace]
    adv = policy.compute_advantages(
        rewards, values, train_cfg.gamma, train_cfg.gae_lambda
    )
    return [
        policy.RolloutEntry(
            x=x,
            decisions=decisions,
            old_logp=logp,
            advantage=float(adv[t]),
            ret=float(adv[t] + values[t]),
        )
        for t, (x, decisions, logp, _) in enumerate(trace)
    ]


def rl_train(
    env,
    params: nn.Params,
    config: ExperimentConfig,
    log: Optional[Callable[[dict], None]] = None,
) -> tuple[nn.Params, dict]:
    """PPO over sequential-revision rollouts; returns (params, accounting).

    Accounting records d_rl (tokens trained on) plus the rollout-buffer
    components (generation calls, mean input/output tokens) that determine
    the buffer multiplier.
    """
    train_cfg = config.train
    opt = nn.Adam(train_cfg.learning_rate)
    rng = Random(config.seed ^ 0x00BAB10C)
    d_rl = 0
    calls = 0
    input_tokens = 0
    output_tokens = 0
    returns: list[float] = []
    for update in range(config.rl_updates):
        rollout: list[policy.RolloutEntry] = []
        for _ in range(config.rl_episodes_per_update):
            seed = rng.randrange(2**31)
            pol = _RecordingPolicy(params, seed=seed)
            transcript = revision.run_episode(env, pol, seed=seed)
            if len(pol.trace) != len(transcript.turns):
                continue  # a forfeited turn has no trace entry; skip the episode
            rollout.extend(_episode_entries(transcript, pol.trace, train_cfg))
            returns.append(transcript.total_return())
            for t, turn in enumerate(transcript.turns):
                prompt_tokens = evalkit.token_count(
                    revision.build_prompt(transcript, t)
                )
                out_tokens = evalkit.token_count(turn.model_text)
                d_rl += prompt_tokens + out_tokens
                calls += 1
                input_tokens += prompt_tokens
                output_tokens += out_tokens
        if not rollout:
            continue
        params, stats = policy.ppo_update(params, rollout, train_cfg, opt)
        if log:
            log(
                {
                    "phase": "rl",
                    "update": update,
                    "mean_return": float(
                        np.mean(returns[-config.rl_episodes_per_update :])
                    ),
                    **{k: float(v) for k, v in stats.items()},
                }
            )
    info = {
        "updates": config.rl_updates,
        "d_rl": d_rl,
        "e": calls,
        "d_i": input_tokens / calls if calls else 0.0,
        "d_o": output_tokens / calls if calls else 0.0,
        "mean_return": float(np.mean(returns)) if returns else 0.0,
    }
    return params, info


# --- runs-directory plumbing ----------------------------------------------------------


def _append_jsonl(path: Path, record: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, ensure_ascii=False))
        fh.write("\n")


def _load_accounting(runs: Path) -> dict:
    path = runs / "accounting.json"
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    return {}


def _store_accounting(runs: Path, env_name: str, update: dict) -> None:
    accounting = _load_accounting(runs)
    accounting.setdefault(env_name, {}).update(update)
    (runs / "accounting.json").write_text(
        json.dumps(accounting, indent=2, sort_keys=True), encoding="utf-8"
    )


def checkpoint_path(runs_dir: str, env_name: str, method: str) -> Path:
    return Path(runs_dir) / "checkpoints" / f"{env_name}_{method.lower()}.npz"


def train_and_save(
    runs_dir: str,
    env_name: str,
    method: str,
    config: ExperimentConfig,
    init: Optional[str] = None,
) -> Path:
    """Run one training stage and persist its artifacts. Returns the checkpoint.

    RL initializes from `init` when given, else from this runs directory's
    SFT checkpoint for the same environment.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    runs = Path(runs_dir)
    (runs / "checkpoints").mkdir(parents=True, exist_ok=True)
    train_env, _ = environment_pair(env_name)
    metrics_path = runs / "metrics.jsonl"

    def log(event: dict) -> None:
        _append_jsonl(metrics_path, {"env": env_name, **event})

    if method == "SFT":
        params, info = sft_train(train_env, config, log)
        _store_accounting(runs, env_name, {"n": nn.param_count(params), "sft": info})
    else:
        source = Path(init) if init else checkpoint_path(runs_dir, env_name, "SFT")
        if not source.exists():
            raise FileNotFoundError(
                f"no SFT initialization at {source}; run the SFT stage first"
            )
        params, _ = nn.load_params(str(source))
        params, info = rl_train(train_env, params, config, log)
        _store_accounting(runs, env_name, {"rl": info})

    target = checkpoint_path(runs_dir, env_name, method)
    nn.save_params(
        str(target),
        params,
        {
            "env": env_name,
            "method": method,
            "seed": config.seed,
            "feature_dim": policy.FEATURE_DIM,
            "hidden": policy.HIDDEN,
        },
    )
    return target


def evaluate_policy(
    env, params: nn.Params, episodes: int, seed: int
) -> list[revision.Transcript]:
    rng = Random(seed)
    out = []
    for _ in range(episodes):
        ep_seed = rng.randrange(2**31)
        pol = policy.TinyPolicy(params, seed=ep_seed, mode="sample")
        out.append(revision.run_episode(env, pol, seed=ep_seed))
    return out


def eval_cell(
    runs_dir: str,
    env_name: str,
    method: str,
    dist: str,
    viter: int,
    episodes: int,
    seed: int,
) -> dict:
    """Evaluate one grid cell from its checkpoint; persist transcripts + record."""
    if dist not in DISTS:
        raise ValueError(f"dist must be one of {DISTS}")
    runs = Path(runs_dir)
    source = checkpoint_path(runs_dir, env_name, method)
    if not source.exists():
        raise FileNotFoundError(f"no checkpoint at {source}; train {method} first")
    params, _ = nn.load_params(str(source))
    id_env, ood_env = environment_pair(env_name, viter)
    env = id_env if dist == "ID" else ood_env
    transcripts = evaluate_policy(env, params, episodes, seed)

    cell = f"{env_name}_{method.lower()}_{dist.lower()}_v{viter}"
    (runs / "transcripts").mkdir(parents=True, exist_ok=True)
    rel_path = f"transcripts/{cell}.jsonl"
    with open(runs / rel_path, "w", encoding="utf-8") as fh:
        revision.write_episode_log(transcripts, fh)
    record = {
        "env": env_name,
        "method": method,
        "dist": dist,
        "viter": viter,
        "episodes": episodes,
        "seed": seed,
        "transcripts": rel_path,
    }
    _append_jsonl(runs / "cells.jsonl", record)
    return record


def _read_cell_transcripts(runs: Path, record: dict) -> list[revision.Transcript]:
    out = []
    with open(runs / record["transcripts"], encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(
                    revision.transcript_from_events(json.loads(line)["events"])
                )
    return out


def _cell_flops(accounting: dict, env_name: str, method: str):
    env_acct = accounting.get(env_name, {})
    n = env_acct.get("n")
    sft = env_acct.get("sft")
    if n is None or sft is None:
        raise ValueError(f"accounting for {env_name} is incomplete; train SFT first")
    if method == "SFT":
        return evalkit.flops_sft(evalkit.FlopsConfig(n=n, d_sft=sft["d_sft"]))
    rl = env_acct.get("rl")
    if rl is None:
        raise ValueError(f"accounting for {env_name} has no RL stage")
    return evalkit.flops_rl(
        evalkit.FlopsConfig(
            n=n,
            d_init=sft["d_sft"],
            d_rl=rl["d_rl"],
            e=rl["e"],
            d_i=rl["d_i"],
            d_o=rl["d_o"],
            env=env_name,
        )
    )


def build_report(runs_dir: str) -> list[evalkit.ReportRow]:
    """Recompute every cell's metrics from persisted transcripts."""
    runs = Path(runs_dir)
    cells_path = runs / "cells.jsonl"
    if not cells_path.exists():
        raise FileNotFoundError(f"no cells.jsonl under {runs_dir}; evaluate first")
    accounting = _load_accounting(runs)
    rows: list[evalkit.ReportRow] = []
    with open(cells_path, encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    for record in records:
        transcripts = _read_cell_transcripts(runs, record)
        env_name = record["env"]
        flops = _cell_flops(accounting, env_name, record["method"])
        condition = f"{record['method']}-{record['dist']}"
        common = dict(
            condition=condition, env=env_name, viter=record["viter"], flops=flops
        )
        rows.append(
            evalkit.ReportRow.from_metric(
                evalkit.success_rate(transcripts, env_name),
                metric="success_rate",
                **common,
            )
        )
        if env_name == "nav":
            rows.append(
                evalkit.ReportRow.from_metric(
                    evalkit.per_step_accuracy(transcripts),
                    metric="per_step_accuracy",
                    **common,
                )
            )
    return rows


def write_report_csv(runs_dir: str, out_path: Optional[str] = None) -> Path:
    path = Path(out_path) if out_path else Path(runs_dir) / "report.csv"
    rows = build_report(runs_dir)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        evalkit.write_report(rows, fh)
    return path


def run_experiment(out_dir: str, config: Optional[ExperimentConfig] = None) -> Path:
    """The full grid: train both methods on both envs, evaluate, emit the csv."""
    config = config if config is not None else ExperimentConfig()
    runs = Path(out_dir)
    runs.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    for env_name in ("gp", "nav"):
        for method in METHODS:
            train_and_save(out_dir, env_name, method, config)
        for method in METHODS:
            for dist in DISTS:
                for viter in config.viters:
                    eval_cell(
                        out_dir,
                        env_name,
                        method,
                        dist,
                        viter,
                        config.eval_episodes,
                        seed=config.seed + viter,
                    )
    _append_jsonl(runs / "metrics.jsonl", {"phase": "done", "elapsed": time.time() - t0})
    return write_report_csv(out_dir)
