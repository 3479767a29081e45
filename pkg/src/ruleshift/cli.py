"""Command-line entry points.

Subcommands: sample, solve, gen-routes, make-sft-data, train sft|rl, eval,
serve, report, experiment. Config files are JSON with a required integer
`version: 1`; unknown keys anywhere in the file are errors naming the field.
Environment variables: RULESHIFT_CONFIG (default config path) and
RULESHIFT_LOG (log level name).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from random import Random
from typing import Optional, Sequence

from . import evalkit, harness, nn, policy, revision, service
from .gp_env import RuleConfig, map_card, sample_quadruple, solve
from .nav_env import generate_route, route_to_dict
from .service import ConfigError

log = logging.getLogger("ruleshift")

_TOP_KEYS = {"version", "experiment", "train", "env"}


def load_config(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path!r} not found")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path!r} is not valid json: {exc.msg}")
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    if data.get("version") != 1:
        raise ConfigError("config field 'version' must be the integer 1")
    for key in data:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    for section in ("experiment", "train"):
        sub = data.get(section, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        allowed = {
            "experiment": {
                f.name for f in dataclasses.fields(harness.ExperimentConfig)
            }
            - {"train"},
            "train": {f.name for f in dataclasses.fields(policy.TrainConfig)},
        }[section]
        for key in sub:
            if key not in allowed:
                raise ConfigError(f"unknown config key '{section}.{key}'")
    return data


def experiment_config(
    data: Optional[dict], seed: Optional[int] = None
) -> harness.ExperimentConfig:
    data = data or {}
    train = policy.TrainConfig(**data.get("train", {}))
    exp = dict(data.get("experiment", {}))
    if "viters" in exp:
        exp["viters"] = tuple(exp["viters"])
    if seed is not None:
        exp["seed"] = seed
    return harness.ExperimentConfig(**exp, train=train)


def _maybe_config(args) -> Optional[dict]:
    path = args.config or os.environ.get("RULESHIFT_CONFIG")
    return load_config(path) if path else None


# --- subcommand bodies ----------------------------------------------------------------


def _cmd_sample(args) -> int:
    rule = RuleConfig(
        face_rule=args.face_rule,
        target=args.target,
        sampling=args.sampling,
        colors=args.colors,
    )
    rng = Random(args.seed)
    for _ in range(args.count):
        cards = sample_quadruple(rule, rng.randrange(2**31))
        numbers = [map_card(c.rank, rule.face_rule) for c in cards]
        print(json.dumps({"cards": [c.label() for c in cards], "numbers": numbers}))
    return 0


def _cmd_solve(args) -> int:
    try:
        numbers = tuple(int(v) for v in args.numbers.split(","))
    except ValueError:
        raise ConfigError(f"--numbers must be comma-separated integers, got {args.numbers!r}")
    if len(numbers) != 4:
        raise ConfigError("--numbers needs exactly 4 values")
    formula = solve(numbers, args.target)
    if formula is None:
        print(f"no formula over {sorted(numbers)} reaches {args.target}", file=sys.stderr)
        return 1
    print(f"{formula}={args.target}")
    return 0


def _cmd_gen_routes(args) -> int:
    from .nav_env import DEFAULT_LANDMARK_POOL, HOLDOUT_LANDMARK_POOL, RouteConfig

    pool = {"default": DEFAULT_LANDMARK_POOL, "holdout": HOLDOUT_LANDMARK_POOL}[
        args.landmark_pool
    ]
    config = RouteConfig(
        turning_points=args.turning_points,
        min_straight=args.min_straight,
        max_straight_road_length=args.max_straight,
        landmark_pool=pool,
        landmark_probability=args.landmark_probability,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = Random(args.seed)
    for i in range(args.count):
        route = generate_route(rng.randrange(2**31), config)
        path = out / f"route_{i:04d}.json"
        path.write_text(
            json.dumps(route_to_dict(route), indent=2, sort_keys=True),
            encoding="utf-8",
        )
    print(f"wrote {args.count} routes under {out}")
    return 0


def _env_from_flags(args, viter: Optional[int] = None):
    pair = harness.environment_pair(args.env, viter)
    return pair[0 if getattr(args, "dist", "id") == "id" else 1]


def _cmd_make_sft_data(args) -> int:
    env = _env_from_flags(args)
    with open(args.out, "w", encoding="utf-8") as fh:
        n = policy.make_sft_dataset(env, args.episodes, args.mode, args.seed, fh)
    print(f"wrote {n} records to {args.out}")
    return 0


def _cmd_train(args) -> int:
    config = experiment_config(_maybe_config(args), args.seed)
    target = harness.train_and_save(
        args.out, args.env, args.stage.upper(), config, init=args.init
    )
    log.info("trained %s/%s", args.env, args.stage)
    print(f"checkpoint: {target}")
    return 0


def _cmd_eval(args) -> int:
    if args.method:
        if not args.runs:
            raise ConfigError("--method needs --runs (the training artifacts)")
        default_viter = 5 if args.env == "gp" else 2
        record = harness.eval_cell(
            args.runs,
            args.env,
            args.method.upper(),
            args.dist.upper(),
            args.viter if args.viter is not None else default_viter,
            args.episodes,
            args.seed,
        )
        print(json.dumps(record))
        return 0

    env = _env_from_flags(args, args.viter)
    if args.policy == "tiny":
        if not args.checkpoint:
            raise ConfigError("--policy tiny needs --checkpoint")
        params, _ = nn.load_params(args.checkpoint)
        transcripts = harness.evaluate_policy(env, params, args.episodes, args.seed)
    else:
        rng = Random(args.seed)
        transcripts = []
        for _ in range(args.episodes):
            ep_seed = rng.randrange(2**31)
            pol = (
                policy.ExpertPolicy(env)
                if args.policy == "expert"
                else policy.UniformRandomPolicy(env, seed=ep_seed)
            )
            transcripts.append(revision.run_episode(env, pol, seed=ep_seed))

    if args.transcripts:
        with open(args.transcripts, "w", encoding="utf-8") as fh:
            revision.write_episode_log(transcripts, fh)

    metrics = {
        "success_rate": dataclasses.asdict(
            evalkit.success_rate(transcripts, args.env)
        )
    }
    if args.env == "nav":
        metrics["per_step_accuracy"] = dataclasses.asdict(
            evalkit.per_step_accuracy(transcripts)
        )
    payload = json.dumps(metrics, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return 0


def _cmd_serve(args) -> int:
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        if not host or not port.isdigit():
            raise ConfigError("--tcp must be HOST:PORT")
        log.info("serving on %s:%s", host, port)
        service.serve_tcp(host, int(port), master_seed=args.seed)
    else:
        service.serve_stdio(master_seed=args.seed)
    return 0


def _cmd_report(args) -> int:
    path = harness.write_report_csv(args.runs_dir, args.out)
    print(f"report: {path}")
    return 0


def _cmd_experiment(args) -> int:
    config = experiment_config(_maybe_config(args), args.seed)
    path = harness.run_experiment(args.out, config)
    print(f"report: {path}")
    return 0


# --- parser -----------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, out_default: Optional[str] = None):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="json config file (version 1)")
    if out_default is not None:
        p.add_argument("--out", default=out_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ruleshift",
        description="Rule-shift generalization probes: environments, training, serving.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="emit solvable card quadruples")
    _add_common(p)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--face-rule", default="all_ten", choices=("all_ten", "ordinal"))
    p.add_argument("--target", type=int, default=24)
    p.add_argument("--sampling", default="uniform", choices=("uniform", "face_required"))
    p.add_argument("--colors", default="all", choices=("all", "black", "red"))
    p.set_defaults(run=_cmd_sample)

    p = sub.add_parser("solve", help="run the expert formula solver")
    _add_common(p)
    p.add_argument("--numbers", required=True, help="comma-separated, e.g. 1,3,10,6")
    p.add_argument("--target", type=int, default=24)
    p.set_defaults(run=_cmd_solve)

    p = sub.add_parser("gen-routes", help="generate navigation routes as json files")
    _add_common(p, out_default="routes")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--turning-points", type=int, default=2)
    p.add_argument("--min-straight", type=int, default=1)
    p.add_argument("--max-straight", type=int, default=4)
    p.add_argument("--landmark-pool", default="default", choices=("default", "holdout"))
    p.add_argument("--landmark-probability", type=float, default=1.0)
    p.set_defaults(run=_cmd_gen_routes)

    p = sub.add_parser("make-sft-data", help="write a prompt/target jsonl dataset")
    _add_common(p, out_default="sft.jsonl")
    p.add_argument("--env", required=True, choices=("gp", "nav"))
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--mode", default="expert", choices=("expert", "suboptimal"))
    p.set_defaults(run=_cmd_make_sft_data)

    p = sub.add_parser("train", help="run a training stage into a runs directory")
    _add_common(p, out_default="runs")
    p.add_argument("stage", choices=("sft", "rl"))
    p.add_argument("--env", required=True, choices=("gp", "nav"))
    p.add_argument("--init", default=None, help="rl: initial checkpoint (.npz)")
    p.set_defaults(run=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy, or a trained grid cell")
    _add_common(p)
    p.add_argument("--env", required=True, choices=("gp", "nav"))
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--policy", default=None, choices=("expert", "random", "tiny"))
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--method", default=None, choices=("sft", "rl"))
    p.add_argument("--runs", default=None, help="runs directory for --method")
    p.add_argument("--dist", default="id", choices=("id", "ood"))
    p.add_argument("--viter", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument(
        "--transcripts",
        default=None,
        metavar="PATH",
        help="also dump evaluated episodes as an event-log jsonl",
    )
    p.set_defaults(run=_cmd_eval)

    p = sub.add_parser("serve", help="serve the line protocol (stdio, or tcp)")
    _add_common(p)
    p.add_argument("--tcp", default=None, metavar="HOST:PORT")
    p.set_defaults(run=_cmd_serve)

    p = sub.add_parser("report", help="build the metric csv from runs artifacts")
    _add_common(p, out_default=None)
    p.add_argument("--in", dest="runs_dir", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(run=_cmd_report)

    p = sub.add_parser("experiment", help="full grid: train, evaluate, report")
    _add_common(p, out_default="runs")
    p.set_defaults(run=_cmd_experiment)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(
            logging, os.environ.get("RULESHIFT_LOG", "WARNING").upper(), logging.WARNING
        )
    )
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
