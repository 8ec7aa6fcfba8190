"""Batch command line.

    rigidmd run <config> [--stop-after N]   simulate; checkpoint; write results
    rigidmd restart <checkpoint>            continue a checkpointed run to its end
    rigidmd check <config>                  validate and print the effective config
    rigidmd version

Exit codes: 0 success, 1 invalid input (config or usage), 2 runtime failure.
"""

import argparse
import sys
from pathlib import Path

from . import __version__
from .errors import CheckpointError, ConfigError, RigidMDError, SimulationError

CHECKPOINT_NAME = "checkpoint.bin"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parser():
    p = _Parser(prog="rigidmd", description="NVT molecular dynamics of rigid molecules")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run a simulation")
    r.add_argument("config")
    r.add_argument("--stop-after", type=int, default=None, metavar="N",
                   help="stop after N steps and leave a checkpoint")
    s = sub.add_parser("restart", help="continue from a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--stop-after", type=int, default=None, metavar="N")
    c = sub.add_parser("check", help="validate a config file")
    c.add_argument("config")
    sub.add_parser("version", help="print the version")
    return p


def _drive(sim, cfg, stop_after):
    out = Path(cfg.run["output"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SimulationError(f"cannot create output directory {out}: {exc}") from None
    ckpt_path = out / CHECKPOINT_NAME
    interval = cfg.run["checkpoint_interval"]
    target = sim.total_steps if stop_after is None else min(sim.total_steps, sim.step_count + stop_after)
    while sim.step_count < target:
        chunk = target - sim.step_count if not interval else min(interval, target - sim.step_count)
        sim.advance(chunk)
        if interval:
            sim.write_checkpoint(ckpt_path)
    sim.write_checkpoint(ckpt_path)
    if sim.finished:
        from .output import emit_results

        emit_results(sim.results(), out)
        print(f"results written to {out}")
    else:
        print(f"stopped at step {sim.step_count} of {sim.total_steps}; checkpoint {ckpt_path}")
    sim.evaluator.close()


def main(argv=None):
    from .config import build_simulation, load_config, parse_config

    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "version":
            print(f"rigidmd {__version__}")
            return 0
        if args.command == "check":
            cfg = load_config(args.config)
            print(cfg.to_text(), end="")
            return 0
        if args.command == "run":
            cfg = load_config(args.config)
            _drive(build_simulation(cfg), cfg, args.stop_after)
            return 0
        if args.command == "restart":
            from . import checkpoint

            try:
                blob = Path(args.checkpoint).read_bytes()
            except OSError as exc:
                raise CheckpointError(f"cannot read {args.checkpoint}: {exc}") from None
            rec = checkpoint.unpack(blob)
            cfg = parse_config(rec["config"])
            sim = build_simulation(cfg)
            sim.load_checkpoint(rec)
            _drive(sim, cfg, args.stop_after)
            return 0
    except ConfigError as exc:
        print("configuration invalid:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return 1
    except RigidMDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
