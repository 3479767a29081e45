"""Command line: run a batch of episodes against a configured server."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import Optional, Sequence

from .config import BridgeConfigError, load_bridge_config
from .endpoint import EndpointError
from .protocol import ProtocolError
from .runner import run_agent, write_log


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agent-bridge",
        description="Relay a chat model through the environment line protocol.",
    )
    parser.add_argument("--config", required=True, help="bridge json config (version 1)")
    parser.add_argument("--episodes", type=int, default=10)
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    parser.add_argument("--out", default="-", help="episode log path, or - for stdout")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_bridge_config(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        records = run_agent(config, args.episodes)
    except (BridgeConfigError, ProtocolError, EndpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.out == "-":
        write_log(records, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            write_log(records, fh)
        print(f"wrote {len(records)} episodes to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
