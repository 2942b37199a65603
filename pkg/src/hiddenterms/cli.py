"""Command-line experiment runner.

Subcommands: generate (data only), train (joint physics-informed method),
ude (baseline), sweep, compare, symfit (symbolic regression on a stored
checkpoint), inspect (pretty-print checkpoints/reports). Exit codes:
0 success, 2 configuration error, 3 numeric failure, 4 partial sweep
failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from .errors import CheckpointError, ConfigError, NumericsError
from .experiments import (ExperimentConfig, compare_methods, load_sweep,
                          make_problem, make_reference, run_experiment,
                          run_sweep, symfit_checkpoint)
from .neural import load_checkpoint
from .sampling import collocation_to_csv, dataset_to_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_PARTIAL = 4


def _load_config(args):
    config = ExperimentConfig.load(args.config)
    if args.seed is not None:
        config.seeds = [args.seed]
    return config


def _cmd_generate(args):
    config = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    reference = make_reference(config)
    for seed in config.seeds:
        _, _, dataset, colloc = make_problem(config, seed, reference)
        dataset_to_csv(dataset, os.path.join(args.out, f"dataset_seed{seed}.csv"))
        collocation_to_csv(colloc,
                           os.path.join(args.out, f"collocation_seed{seed}.csv"))
    print(f"wrote datasets for seeds {config.seeds} to {args.out}")
    return EXIT_OK


def _cmd_train(args):
    config = _load_config(args)
    result = run_experiment(config, args.out, method="pinn",
                            dry_run=args.dry_run)
    if args.dry_run:
        print(f"config valid; manifest written to {args.out}")
    else:
        s = result["summary"]
        print(f"median hidden-term MSE {s['median_hidden_mse']:.3e}, "
              f"median surrogate MSE {s['median_surrogate_mse']:.3e}")
    return EXIT_OK


def _cmd_ude(args):
    config = _load_config(args)
    if config.ude is None:
        config.ude = {}
    result = run_experiment(config, args.out, method="ude",
                            dry_run=args.dry_run)
    if args.dry_run:
        print(f"config valid; manifest written to {args.out}")
    else:
        s = result["summary"]
        print(f"median hidden-term MSE {s['median_hidden_mse']:.3e}")
    return EXIT_OK


def _cmd_sweep(args):
    base, axes = load_sweep(args.config)
    result = run_sweep(base, axes, args.out, method=args.method,
                       workers=args.workers)
    print(f"sweep table: {result['csv']} ({result['failures']} failed cells)")
    return EXIT_PARTIAL if result["failures"] else EXIT_OK


def _cmd_compare(args):
    config = _load_config(args)
    result = compare_methods(config, args.out)
    s = result["summary"]
    print(f"median hidden-term MSE: joint {s['median_pinn_hidden_mse']:.3e} "
          f"vs baseline {s['median_ude_hidden_mse']:.3e} "
          f"-> winner {s['winner']}")
    return EXIT_OK


def _cmd_symfit(args):
    config = _load_config(args)
    out_path = args.out
    if os.path.isdir(out_path) or out_path.endswith(os.sep):
        os.makedirs(out_path, exist_ok=True)
        out_path = os.path.join(out_path, "symbolic.json")
    models = symfit_checkpoint(args.checkpoint, config, out_path)
    for m in models:
        print(f"output {m['output']}: {m['expression']} (mse {m['mse']:.3e})")
    return EXIT_OK


def _cmd_inspect(args):
    path = args.path
    if path.endswith(".json"):
        with open(path) as fh:
            payload = json.load(fh)
        if isinstance(payload, dict) and payload.get("format") == "hiddenterms-mlp":
            net, meta = load_checkpoint(path)
            params = net.flat_params()
            print(f"network checkpoint: widths {net.widths}, "
                  f"{net.n_params} parameters")
            print(f"  init seed {meta['init_seed']}, "
                  f"train steps {meta['train_steps']}")
            print(f"  parameter range [{params.min():.4g}, {params.max():.4g}], "
                  f"rms {np.sqrt(np.mean(params ** 2)):.4g}")
        elif isinstance(payload, dict) and "trace_pinn" in payload:
            print(f"training report (seed {payload.get('seed')}):")
            print(f"  iterations {len(payload['trace_pinn'])}")
            print(f"  final L_M {payload['trace_measurement'][-1]:.3e}, "
                  f"L_B {payload['trace_boundary'][-1]:.3e}, "
                  f"L_P {payload['trace_pinn'][-1]:.3e}")
            print(f"  hidden MSE {payload['hidden_mse']:.3e}, "
                  f"surrogate MSE {payload['surrogate_mse']:.3e}")
        else:
            print(json.dumps(payload, indent=1)[:4000])
    else:
        raise ConfigError(f"inspect supports JSON artifacts, got {path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hiddenterms",
        description="Discover hidden differential-equation terms from data")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, out=True):
        if config:
            p.add_argument("--config", required=True, help="experiment config JSON")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed list with one seed")
        p.add_argument("--dry-run", action="store_true",
                       help="validate config and write manifest only")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel worker processes (sweep cells)")

    common(sub.add_parser("generate", help="write datasets and collocation sets"))
    common(sub.add_parser("train", help="run the joint training method"))
    common(sub.add_parser("ude", help="run the unrolled-ODE baseline"))
    sp = sub.add_parser("sweep", help="run a sweep config over its axes")
    common(sp)
    sp.add_argument("--method", choices=("pinn", "ude"), default="pinn")
    common(sub.add_parser("compare", help="train both methods on shared data"))
    sp = sub.add_parser("symfit", help="symbolic fit of a stored checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", required=True, help="f_net checkpoint JSON")
    sp = sub.add_parser("inspect", help="pretty-print a JSON artifact")
    sp.add_argument("path")
    return parser


_HANDLERS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "ude": _cmd_ude,
    "sweep": _cmd_sweep,
    "compare": _cmd_compare,
    "symfit": _cmd_symfit,
    "inspect": _cmd_inspect,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ConfigError, CheckpointError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"numeric failure: {exc} {exc.context}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
