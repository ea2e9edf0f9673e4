"""Command line entry point: ``agentnet run sfc|cc|ra`` plus LLM-Proto socket tools."""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources

from .errors import AgentNetError
from .experiments import KINDS, emit_outputs, load_config, run_experiment


def default_config(kind: str) -> str:
    return str(resources.files("agentnet") / "scenarios" / f"{kind}.yaml")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agentnet", description="Agent-driven network experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment and write its outputs")
    run.add_argument("kind", choices=KINDS)
    run.add_argument("--config", help="scenario file (defaults to the bundled one)")
    run.add_argument("--seed", type=int, required=True)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--reasoner", help="scripted:<path> or http (default: the config's script)")

    send = sub.add_parser("proto-send", help="send an LLM-Proto stream over UDP")
    send.add_argument("--host", default="127.0.0.1")
    send.add_argument("--port", type=int, required=True)
    send.add_argument("--messages", type=int, default=100)
    send.add_argument("--size", type=int, default=1400)
    send.add_argument("--rate-bps", type=int, default=1_000_000)
    send.add_argument("--reliable-fraction", type=float, default=0.5)
    send.add_argument("--timeout", type=float, default=120.0)

    recv = sub.add_parser("proto-recv", help="receive one LLM-Proto stream over UDP")
    recv.add_argument("--host", default="127.0.0.1")
    recv.add_argument("--port", type=int, required=True)
    recv.add_argument("--idle-timeout", type=float, default=10.0)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config or default_config(args.kind), args.seed, args.reasoner, args.out,
                              kind=args.kind)
            result = run_experiment(cfg)
            for path in emit_outputs(result, args.out):
                print(path)
            return 0
        from . import sockets

        if args.command == "proto-send":
            out = sockets.run_sender(args.host, args.port, args.messages, args.size, args.rate_bps,
                                     args.reliable_fraction, args.timeout)
        else:
            out = sockets.run_receiver(args.host, args.port, idle_timeout_s=args.idle_timeout)
        print(json.dumps(out, sort_keys=True))
        return 0
    except (AgentNetError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
