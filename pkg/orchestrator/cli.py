"""
OrtSAE Command Line
===================
One command per pipeline stage:

    gen-data    synthetic world JSON + activation file
    train       train an SAE from a run config on an activation file
    eval        metric report of a checkpoint
    metasae     composition rate of a checkpoint's decoder
    decompose   express features of checkpoint A in the dictionary of B
    compare     unique-feature fractions between two checkpoints
    experiment  scaled comparison of BatchTopK and OrtSAE (see run_pipeline.py)

Usage:
    python orchestrator/cli.py gen-data --out data/world --rows 16384 --seed 0
    python orchestrator/cli.py train --config run.json --data data/world/activations.bin --out data/runs/ortsae
    python orchestrator/cli.py eval --checkpoint data/runs/ortsae --data data/world/activations.bin --world data/world/world.json

Errors are reported as a single line "error: <message>" on stderr with exit
code 1; usage errors exit with 2.
"""

import argparse
import os
import sys
from typing import List, Optional

import pandas as pd

# =============================================================================
# Path Setup
# =============================================================================
SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
PROJECT_ROOT = os.path.dirname(SCRIPT_DIR)
sys.path.insert(0, PROJECT_ROOT)

from orchestrator.logger import get_data_logger, get_eval_logger, get_train_logger
from src.datagen.activation_file import read_activations, write_activations
from src.datagen.sources import ArrayDataSource
from src.datagen.synthetic_world import default_world, firing_summary, load_world, sample_batch, save_world
from src.metasae.composition import META_STEPS, train_meta_sae
from src.metrics.decomposition import decompose_dictionary
from src.metrics.geometry import UNIQUE_THRESHOLD, unique_features
from src.metrics.report import build_report, save_report
from src.numerics.rng import RngStream, DATA_STREAM
from src.train.checkpoint import load_checkpoint, resolve_checkpoint_path
from src.train.trainer import train
from src.utils.config import load_run_config, load_settings, seed_override, settings_section
from src.utils.errors import OrtSaeError


WORLD_FILE = "world.json"
ACTIVATIONS_FILE = "activations.bin"
FIRING_FILE = "firing.csv"


def _print_table(title: str, df: pd.DataFrame) -> None:
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)
    print(df.to_markdown(index=False))


def _run_dir(checkpoint: str) -> str:
    return os.path.dirname(resolve_checkpoint_path(checkpoint)) or "."


# =============================================================================
# Commands
# =============================================================================
def cmd_gen_data(args) -> int:
    logger = get_data_logger()
    world_cfg = settings_section("world", load_settings(args.settings))

    rows = args.rows if args.rows is not None else int(world_cfg.get("rows", 16384))
    world = default_world(
        args.seed,
        n=int(world_cfg.get("dim_n", 32)),
        num_features=int(world_cfg.get("num_features", 64)),
        fire_prob=float(world_cfg.get("fire_prob", 0.06)),
    )
    x, codes = sample_batch(world, rows, RngStream(seed=args.seed, stream=DATA_STREAM))

    os.makedirs(args.out, exist_ok=True)
    save_world(world, os.path.join(args.out, WORLD_FILE))
    write_activations(os.path.join(args.out, ACTIVATIONS_FILE), x, logger)
    summary = firing_summary(codes)
    summary.to_csv(os.path.join(args.out, FIRING_FILE), index=False)

    logger.info(f"Generated {rows} rows from a world with {world.num_features} features in {world.dim_n} dimensions")
    print(f"[OK] wrote {WORLD_FILE}, {ACTIVATIONS_FILE} and {FIRING_FILE} to {args.out}")
    return 0


def cmd_train(args) -> int:
    logger = get_train_logger()
    sae_cfg, train_cfg = load_run_config(args.config, settings_path=args.settings)
    x = read_activations(args.data, logger)

    source = ArrayDataSource(x, RngStream(seed=train_cfg.seed, stream=DATA_STREAM))
    result = train(source, sae_cfg, train_cfg, out_dir=args.out, logger=logger)

    if len(result.history):
        _print_table("TRAINING (last metrics row)", result.history.tail(1))
    print(f"\n[OK] checkpoint and metrics written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    logger = get_eval_logger()
    checkpoint = load_checkpoint(args.checkpoint)
    sae_cfg = checkpoint.sae_config()
    x = read_activations(args.data, logger)

    world = load_world(args.world) if args.world else None
    reference = load_checkpoint(args.reference).params.w_dec if args.reference else None

    report = build_report(checkpoint.params, sae_cfg, x, world=world, reference_w_dec=reference, logger=logger)
    out_dir = args.out or os.path.join(_run_dir(args.checkpoint), "eval")
    save_report(report, out_dir, checkpoint.params.w_dec, sae_cfg.delta, logger)

    _print_table("METRIC REPORT", report.to_frame())
    _print_table("CLUSTERING", report.clustering_frame())
    return 0


def cmd_metasae(args) -> int:
    logger = get_eval_logger()
    checkpoint = load_checkpoint(args.checkpoint)

    seed = args.seed
    if seed is None:
        seed = seed_override()
    if seed is None:
        seed = int(checkpoint.metadata.get("seed", 0))

    out_dir = args.out or os.path.join(_run_dir(args.checkpoint), "metasae")
    result = train_meta_sae(checkpoint.params.w_dec, seed, steps=args.steps, out_dir=out_dir, logger=logger)

    print(f"composition_rate: {result.rate:.6f}")
    print(f"[OK] meta checkpoint written to {out_dir}")
    return 0


def cmd_decompose(args) -> int:
    logger = get_eval_logger()
    w_a = load_checkpoint(args.a).params.w_dec
    w_b = load_checkpoint(args.b).params.w_dec

    table = decompose_dictionary(w_a, w_b, logger)
    out_path = args.out or os.path.join(_run_dir(args.a), "decompositions.csv")
    directory = os.path.dirname(out_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    table.to_csv(out_path, index=False)

    print(f"accepted decompositions: {len(table)} of {w_a.shape[1]} features")
    if not table.empty:
        _print_table("DECOMPOSITIONS (first 10)", table.head(10))
    print(f"\n[OK] written to {out_path}")
    return 0


def cmd_compare(args) -> int:
    logger = get_eval_logger()
    w_a = load_checkpoint(args.a).params.w_dec
    w_b = load_checkpoint(args.b).params.w_dec

    table = pd.DataFrame([
        {"direction": "a_vs_b", "threshold": args.threshold, "unique_fraction": unique_features(w_a, w_b, args.threshold)},
        {"direction": "b_vs_a", "threshold": args.threshold, "unique_fraction": unique_features(w_b, w_a, args.threshold)},
    ])
    logger.info(f"Unique fractions: a->b {table.unique_fraction[0]:.4f}, b->a {table.unique_fraction[1]:.4f}")
    if args.out:
        table.to_csv(args.out, index=False)

    _print_table("UNIQUE FEATURES", table)
    return 0


def cmd_experiment(args) -> int:
    from orchestrator.run_pipeline import run_experiments

    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    run_experiments(
        settings=load_settings(args.settings),
        seeds=seeds,
        total_steps=args.steps,
        out_dir=args.out,
    )
    return 0


# =============================================================================
# Parser
# =============================================================================
class OneLineErrorParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors are a single "error: ..." line (exit 2)."""

    def error(self, message):
        self.exit(2, f"error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = OneLineErrorParser(
        prog="ortsae",
        description="OrtSAE training and analysis toolkit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("--settings", type=str, help="Path to settings.yaml (default: config/settings.yaml)")
    subparsers = parser.add_subparsers(dest="command", required=True, help="Available commands")

    # gen-data
    gen = subparsers.add_parser("gen-data", help="Generate a synthetic world and activation file")
    gen.add_argument("--out", required=True, help="Output directory")
    gen.add_argument("--rows", type=int, help="Number of activation rows (default: settings world.rows)")
    gen.add_argument("--seed", type=int, default=0, help="World and sampling seed")
    gen.set_defaults(func=cmd_gen_data)

    # train
    tr = subparsers.add_parser("train", help="Train an SAE")
    tr.add_argument("--config", help="Run config (flat JSON or YAML)")
    tr.add_argument("--data", required=True, help="Activation file")
    tr.add_argument("--out", required=True, help="Run directory for checkpoints and metrics.csv")
    tr.set_defaults(func=cmd_train)

    # eval
    ev = subparsers.add_parser("eval", help="Compute the metric report of a checkpoint")
    ev.add_argument("--checkpoint", required=True, help="Checkpoint file or run directory")
    ev.add_argument("--data", required=True, help="Activation file to evaluate on")
    ev.add_argument("--world", help="World JSON for ground-truth MMCS")
    ev.add_argument("--reference", help="Checkpoint to count unique features against")
    ev.add_argument("--out", help="Output directory (default: <run>/eval)")
    ev.set_defaults(func=cmd_eval)

    # metasae
    meta = subparsers.add_parser("metasae", help="Composition rate via a meta SAE")
    meta.add_argument("--checkpoint", required=True, help="Checkpoint file or run directory")
    meta.add_argument("--seed", type=int, help="Meta seed (default: ORTSAE_SEED or the checkpoint seed)")
    meta.add_argument("--steps", type=int, default=META_STEPS, help="Meta training steps")
    meta.add_argument("--out", help="Meta run directory (default: <run>/metasae)")
    meta.set_defaults(func=cmd_metasae)

    # decompose
    dec = subparsers.add_parser("decompose", help="Decompose features of A in the dictionary of B")
    dec.add_argument("--a", required=True, help="Checkpoint whose features are decomposed")
    dec.add_argument("--b", required=True, help="Checkpoint providing the dictionary")
    dec.add_argument("--out", help="CSV path (default: <run A>/decompositions.csv)")
    dec.set_defaults(func=cmd_decompose)

    # compare
    cmp_parser = subparsers.add_parser("compare", help="Unique-feature fractions between two checkpoints")
    cmp_parser.add_argument("--a", required=True, help="First checkpoint")
    cmp_parser.add_argument("--b", required=True, help="Second checkpoint")
    cmp_parser.add_argument("--threshold", type=float, default=UNIQUE_THRESHOLD, help="|cos| threshold")
    cmp_parser.add_argument("--out", help="Optional CSV path")
    cmp_parser.set_defaults(func=cmd_compare)

    # experiment
    exp = subparsers.add_parser("experiment", help="Scaled BatchTopK vs OrtSAE experiments")
    exp.add_argument("--seeds", help="Comma-separated seeds (default: settings experiment.seeds)")
    exp.add_argument("--steps", type=int, help="Training steps per run (default: settings train.total_steps)")
    exp.add_argument("--out", help="Output directory (default: settings paths.analytics_dir)")
    exp.set_defaults(func=cmd_experiment)

    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """
    Parse argv and run one command.

    Returns:
        Exit code: 0 on success, 1 on a toolkit or I/O error, 2 on usage errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0

    try:
        return args.func(args)
    except (OrtSaeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


# =============================================================================
# Entry Point
# =============================================================================
if __name__ == "__main__":
    sys.exit(run())
