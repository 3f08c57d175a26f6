"""Command-line interface.

Verbs: gen-data, train, train-prior, reconstruct, swap, sample, traverse,
eval, compare-priors, ablate.  Every verb writes its artifacts under a run
directory (config snapshot, metrics report, checkpoints, figures).

Exit codes: 0 success, 2 usage error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ExperimentConfig, default_config
from .errors import ConfigurationError, ContractViolation, DomainError, NumericFailure


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqdae",
        description="Sequence diffusion autoencoder: train, sample, evaluate.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset container")
    p.add_argument("--generator", required=True,
                   choices=["bouncing_shapes", "toy_speaker", "toy_physio"])
    p.add_argument("--n", type=int, default=2048)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--correlated", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train encoder + denoiser under the single loss")
    p.add_argument("--run", required=True, help="run directory for artifacts")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", help="config file")
    group.add_argument("--preset", choices=["bouncing_shapes", "toy_speaker", "toy_physio"])
    p.add_argument("--data", help="dataset container (default: generate from config)")
    p.add_argument("--steps", type=int, help="override optimizer.steps")
    p.add_argument("--seed", type=int, help="override global seed")

    p = sub.add_parser("train-prior", help="train the latent prior on a finished run")
    p.add_argument("--run", required=True)
    p.add_argument("--data", help="dataset container (default: generate from config)")

    p = sub.add_parser("reconstruct", help="reconstruct test sequences")
    p.add_argument("--run", required=True)
    p.add_argument("--data")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("swap", help="conditional swaps over a fresh pair list")
    p.add_argument("--run", required=True)
    p.add_argument("--data")
    p.add_argument("--n-pairs", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sample", help="unconditional samples through the prior")
    p.add_argument("--run", required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int)

    p = sub.add_parser("traverse", help="PCA traversal of the static code")
    p.add_argument("--run", required=True)
    p.add_argument("--data")
    p.add_argument("--component", type=int, default=0)
    p.add_argument("--alphas", type=float, nargs="+",
                   default=[-0.3, -0.15, 0.0, 0.15, 0.3])
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="metrics report for a finished run")
    p.add_argument("--run", required=True)
    p.add_argument("--data")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("compare-priors", help="dependent vs independent prior")
    p.add_argument("--run", required=True)
    p.add_argument("--data")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--sample-n", type=int, default=512)

    p = sub.add_parser("ablate", help="share-static x dynamic-dim grid")
    p.add_argument("--run", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--config")
    group.add_argument("--preset", choices=["bouncing_shapes", "toy_speaker", "toy_physio"])
    p.add_argument("--steps", type=int, help="override optimizer.steps per cell")
    p.add_argument("--small-k", type=int)
    p.add_argument("--large-k", type=int)
    return parser


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        config = ExperimentConfig.load(args.config)
    else:
        config = default_config(args.preset)
    if getattr(args, "steps", None):
        config = config.with_overrides(
            optimizer=config.optimizer.__class__(
                **{**config.optimizer.__dict__, "steps": args.steps}))
    if getattr(args, "seed", None) is not None:
        config = config.with_overrides(seed=args.seed)
    return config.validate()


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    from . import harness

    try:
        if args.verb == "gen-data":
            batch = harness.run_gen_data(args.generator, args.n, args.frames,
                                         args.seed, args.out, args.correlated)
            print(f"wrote {batch.n_sequences} sequences to {args.out}")
        elif args.verb == "train":
            result = harness.run_train(_load_config(args), args.run, args.data)
            print(f"final loss {result.losses[-1]:.5f}; checkpoint under {args.run}")
        elif args.verb == "train-prior":
            harness.run_train_prior(args.run, args.data)
            print(f"prior appended to checkpoint under {args.run}")
        elif args.verb == "reconstruct":
            harness.run_reconstruct(args.run, args.data, n=args.n, seed=args.seed)
            print(f"reconstruction figures under {args.run}/figures")
        elif args.verb == "swap":
            harness.run_swap(args.run, args.data, n_pairs=args.n_pairs, seed=args.seed)
            print(f"swap figures under {args.run}/figures")
        elif args.verb == "sample":
            harness.run_sample(args.run, n=args.n, seed=args.seed, steps=args.steps)
            print(f"samples under {args.run}/figures")
        elif args.verb == "traverse":
            harness.run_traverse(args.run, args.data, component=args.component,
                                 alphas=tuple(args.alphas), index=args.index,
                                 seed=args.seed)
            print(f"traversal figures under {args.run}/figures")
        elif args.verb == "eval":
            report = harness.evaluate_run(args.run, args.data, threads=args.threads,
                                          seed=args.seed)
            sys.stdout.write(report.to_text())
        elif args.verb == "compare-priors":
            report = harness.compare_priors(args.run, args.data, n_seeds=args.seeds,
                                            sample_n=args.sample_n)
            sys.stdout.write(report.to_text())
        elif args.verb == "ablate":
            report = harness.run_ablation(_load_config(args), args.run,
                                          small_k=args.small_k, large_k=args.large_k)
            sys.stdout.write(report.to_text())
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigurationError, ContractViolation, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
