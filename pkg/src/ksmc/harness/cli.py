"""Command line entry point ``ksmc``.

Examples::

    ksmc list-presets
    ksmc describe sensor_multimodal
    ksmc preset banana_moments --seeds 5 --out results/banana
    ksmc --threads 4 run my_experiment.yaml

``--seed s`` with ``--seeds k`` runs seeds ``s, ..., s+k-1``. The output
directory is ``--out``, else ``$KSMC_OUTPUT_DIR/<name>``, else the
config's ``output_dir``, else ``results/<name>``.
"""

import argparse
import sys

from .. import __version__
from ..exceptions import ConfigurationError
from .config import load_config
from .presets import describe_preset, list_presets, load_preset
from .runner import run_experiment

__all__ = ["main"]


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker processes across runs (default 1)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="first seed; overrides the config's seed list")

    p = argparse.ArgumentParser(prog="ksmc", parents=[common],
                                description="Kernel SMC experiment runner.")
    p.add_argument("--version", action="version", version=f"ksmc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run an experiment config file")
    run.add_argument("config")
    preset = sub.add_parser("preset", parents=[common], help="run a shipped preset")
    preset.add_argument("name")
    for s in (run, preset):
        s.add_argument("--seeds", type=int, metavar="K", help="number of seeds to run")
        s.add_argument("--out", metavar="DIR", help="output directory")
        s.add_argument("--quiet", action="store_true", help="no progress output")
    sub.add_parser("list-presets", help="list shipped presets")
    describe = sub.add_parser("describe", help="describe a shipped preset")
    describe.add_argument("name")
    return p


def _seed_list(cfg, k, start):
    if k is None and start is None:
        return None
    if k is not None and k < 1:
        raise ConfigurationError("--seeds must be a positive integer")
    start = cfg.seeds[0] if start is None else start
    return list(range(start, start + (len(cfg.seeds) if k is None else k)))


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "list-presets":
            print("\n".join(list_presets()))
            return 0
        if args.command == "describe":
            print(describe_preset(args.name))
            return 0
        cfg = load_config(args.config) if args.command == "run" else load_preset(args.name)
        seeds = _seed_list(cfg, args.seeds, getattr(args, "seed", None))
        if seeds is not None:
            cfg = cfg.with_seeds(seeds)
        threads = getattr(args, "threads", 1)
        if threads < 1:
            raise ConfigurationError("--threads must be a positive integer")

        def progress(done, total):
            print(f"\r{cfg.name}: {done}/{total} runs", end="", file=sys.stderr, flush=True)

        result = run_experiment(cfg, output_dir=args.out, threads=threads,
                                progress=None if args.quiet else progress)
    except ConfigurationError as exc:
        print(f"ksmc: error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        print(file=sys.stderr)
    for f in result.failures:
        print(f"FAILED {f['run_id']}: {f['error']}", file=sys.stderr)
    print(f"{result.n_runs - len(result.failures)}/{result.n_runs} runs completed; "
          f"results in {result.output_dir}")
    return result.exit_status


if __name__ == "__main__":
    sys.exit(main())
