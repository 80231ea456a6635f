"""Command-line entry point: ``empnca {evolve,sweep-k,finetune,simulate,analyze}``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .config import PRESETS, load_analysis_config, load_config, make_config
from .errors import EmpncaError
from .nca import DeathRule


def _experiment_config(args, default_preset="desk", target=True):
    overrides = {"master_seed": args.seed, "output_dir": args.out}
    if target:
        overrides["target"] = args.target
    if args.config:
        return load_config(args.config, preset=args.preset, **overrides)
    return make_config({}, preset=args.preset or default_preset, **overrides)


def _common(p, target=True):
    p.add_argument("--config", help="experiment config JSON (or a run manifest to replay)")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named parameter preset (default: desk)")
    p.add_argument("--seed", type=int, help="master seed (u64)")
    p.add_argument("--workers", type=int, help=f"worker processes (default: ${harness.WORKERS_ENV} or 1)")
    if target:
        p.add_argument("--target", help="square:12 | triangle:13 | x:5 | biped | file:<path>")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="empnca", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="run independent evolutionary replicates")
    _common(p)
    p.add_argument("--resume", metavar="RUN_DIR", help="continue one replicate from its latest checkpoint")

    p = sub.add_parser("sweep-k", help="sweep the empowerment horizon against both loss-only controls")
    _common(p)
    p.add_argument("--k", required=True, help="comma-separated horizons, e.g. 1,5,10,17,25,32,40,45")

    p = sub.add_parser("finetune", help="seed runs with champions and evolve on a new target")
    _common(p)
    p.add_argument("--champions", required=True, help="champion genome file or directory")
    p.add_argument("--variant", default="bi_loss", choices=harness.FINETUNE_VARIANTS)
    p.add_argument("--k", type=int, help="empowerment horizon for tri_loss_empowerment (default 1)")

    p = sub.add_parser("simulate", help="roll out one genome")
    p.add_argument("--genome", required=True)
    p.add_argument("-M", "--M", type=int, default=25, dest="M")
    p.add_argument("-N", "--N", type=int, default=50, dest="N")
    p.add_argument("--target")
    p.add_argument("--frames", help="directory for PBM/PGM frames")
    p.add_argument("--trace", help="NDJSON trace output file")
    p.add_argument("--death-rule", default=DeathRule.OVERWRITE_ALWAYS.value,
                   choices=[d.value for d in DeathRule])
    p.add_argument("--synchronous", action="store_true", help="double-buffered updates")

    p = sub.add_parser("analyze", help="homeostasis metrics for a directory of champions")
    p.add_argument("--champions", required=True)
    p.add_argument("--config", help="analysis config JSON")
    p.add_argument("--out", help="output directory (default: the champions directory)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "evolve":
            if args.resume:
                row = harness.cmd_resume(args.resume)
                print(f"{args.resume}: champion loss {row['loss']!r}")
                return 0
            out = harness.cmd_evolve(_experiment_config(args), args.workers)
        elif args.command == "sweep-k":
            k_list = [int(v) for v in args.k.split(",") if v.strip()]
            out = harness.cmd_sweep_k(_experiment_config(args), k_list, args.workers)
        elif args.command == "finetune":
            if not args.target:
                raise EmpncaError("finetune needs --target")
            cfg = _experiment_config(args, default_preset="finetune", target=False)
            out = harness.cmd_finetune(args.champions, args.target, args.variant, cfg, args.workers, k=args.k)
        elif args.command == "simulate":
            harness.cmd_simulate(args.genome, args.M, args.N, args.target, args.frames, args.trace,
                                 DeathRule(args.death_rule), args.synchronous, stream=sys.stdout)
            return 0
        else:
            out = harness.cmd_analyze(args.champions, load_analysis_config(args.config), args.out)
    except (EmpncaError, FileNotFoundError) as exc:
        print(f"empnca: error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
