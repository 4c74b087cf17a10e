"""``nomore`` command-line entry point."""

from __future__ import annotations

import argparse
import sys

from .config import COMMANDS, load_config, parse_overrides
from .nomorelization import Wrapper


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nomore", description=(
        "Normalizer-free residual blocks with noise injection: noise-law simulation, "
        "assertion tests, variance probes and desk-scale training comparisons."))
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", metavar="FILE", help="key=value file; flags override its values")
    p.add_argument("--seed", type=int, help="base seed (u64)")
    p.add_argument("--out", metavar="DIR", help="output directory (default: out)")
    p.add_argument("--gamma-noise", type=float, metavar="F", help="noise amplitude of NoMore blocks")
    p.add_argument("--wrapper", choices=[w.value for w in Wrapper if w is not Wrapper.NONE],
                   help="block wrapper for single-wrapper commands")
    p.add_argument("--dataset", metavar="synth|cifar10:PATH", help="training data source")
    p.add_argument("--bench", action="store_true", default=None,
                   help="measure wall time (written to a separate timing file)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key; repeatable")
    return p


def config_from_args(args):
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k] = v
    values = parse_overrides(overrides)
    flags = {"seed": args.seed, "output_dir": args.out, "gamma_noise": args.gamma_noise,
             "wrapper": args.wrapper, "dataset": args.dataset, "bench": args.bench}
    values.update({k: v for k, v in flags.items() if v is not None})
    return load_config(args.command, args.config, values)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ValueError, OSError) as exc:
        parser.error(str(exc))
    from .experiments import run_command

    try:
        rep = run_command(cfg)
    except OSError as exc:
        print(f"nomore: {exc}", file=sys.stderr)
        return 1
    for f in rep.files:
        print(f)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
