"""
Run Pipeline - Experiment Orchestrator
======================================
This script runs the scaled BatchTopK vs OrtSAE experiments on synthetic
superposition data with known ground-truth features.

1. Build the synthetic world and an evaluation set for every seed
2. Train the BatchTopK baseline and OrtSAE (chunk counts from settings)
3. Evaluate: explained variance, MeanCosSim, ground-truth MMCS, composition rate,
   with the MeanCosSim of the untrained parameters as a reference row
4. Compare dictionaries: unique features both ways, decomposition counts
5. Periodic penalty variant (every 5th step, γ scaled by 5) with ortho time share
6. Chunk-count sweep

All tables are written as CSV files under data/analytics/.
"""

import sys
import os
from datetime import datetime
from typing import Dict, List, Optional, Sequence

import pandas as pd

# =============================================================================
# Path Setup
# =============================================================================
# Add the project root to the Python path so imports work correctly
SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
PROJECT_ROOT = os.path.dirname(SCRIPT_DIR)
sys.path.insert(0, PROJECT_ROOT)

# =============================================================================
# Imports
# =============================================================================
from orchestrator.logger import get_pipeline_logger, get_train_logger, get_eval_logger
from src.datagen.sources import WorldDataSource
from src.datagen.synthetic_world import SyntheticWorld, default_world, sample_batch
from src.metasae.composition import META_STEPS, composition_rate
from src.metrics.decomposition import decompose_dictionary
from src.metrics.geometry import unique_features
from src.metrics.report import build_report
from src.numerics.rng import RngStream, DATA_STREAM, EVAL_STREAM
from src.sae.model import SaeConfig, init_params
from src.train.trainer import TrainConfig, TrainResult, train
from src.utils.config import build_configs, load_settings, settings_section


BASELINE = "batchtopk"
RANDOM_INIT = "random_init"

HEADLINE_FILE = "headline.csv"
UNIQUE_FILE = "unique_features.csv"
DECOMPOSITION_FILE = "decompositions.csv"
PERIODIC_FILE = "periodic.csv"
SWEEP_FILE = "chunk_sweep.csv"
SUMMARY_FILE = "acceptance_summary.csv"


def ortsae_name(chunk_count: int, period: int = 1) -> str:
    name = f"ortsae_k{chunk_count}"
    return name if period == 1 else f"{name}_p{period}"


def variant_config(base: SaeConfig, gamma: float, chunk_count: int, period: int = 1) -> SaeConfig:
    """The base SAE config with the orthogonality settings replaced."""
    values = base.to_dict()
    values["lam"] = values.pop("lambda")
    values.update(gamma=gamma, chunk_count=chunk_count, penalty_period=period)
    return SaeConfig(**values)


def train_on_world(world: SyntheticWorld, sae_cfg: SaeConfig, train_cfg: TrainConfig, logger) -> TrainResult:
    source = WorldDataSource(world, RngStream(seed=train_cfg.seed, stream=DATA_STREAM))
    return train(source, sae_cfg, train_cfg, logger=logger)


def evaluate_run(name: str, seed: int, result: TrainResult, sae_cfg: SaeConfig, world, x_eval, meta_steps: int, logger) -> Dict:
    report = build_report(result.params, sae_cfg, x_eval, world=world, logger=logger)
    return {
        "seed": seed,
        "variant": name,
        "chunk_count": sae_cfg.chunk_count,
        "penalty_period": sae_cfg.penalty_period,
        "gamma": sae_cfg.gamma,
        "explained_variance": report.explained_variance,
        "mean_cos_sim": report.mean_cos_sim,
        "actual_l0": report.actual_l0,
        "ground_truth_mmcs": report.ground_truth_mmcs,
        "composition_rate": composition_rate(result.params.w_dec, seed, steps=meta_steps, logger=logger),
        "final_dead": result.final_dead,
        "ortho_seconds": result.ortho_seconds,
        "wall_seconds": result.wall_seconds,
        "ortho_share": result.ortho_share,
    }


def evaluate_init(seed: int, n: int, sae_cfg: SaeConfig, world, x_eval, logger) -> Dict:
    """Untrained parameters of the seed: the MeanCosSim every run starts from."""
    params = init_params(n, sae_cfg.dict_size, RngStream(seed=seed))
    report = build_report(params, sae_cfg, x_eval, world=world, logger=logger)
    return {
        "seed": seed,
        "variant": RANDOM_INIT,
        "chunk_count": sae_cfg.chunk_count,
        "penalty_period": sae_cfg.penalty_period,
        "gamma": sae_cfg.gamma,
        "explained_variance": report.explained_variance,
        "mean_cos_sim": report.mean_cos_sim,
        "actual_l0": report.actual_l0,
        "ground_truth_mmcs": report.ground_truth_mmcs,
    }


def summarize(headline: pd.DataFrame, periodic: pd.DataFrame) -> pd.DataFrame:
    """
    Per-seed comparison of every OrtSAE variant against the baseline.

    mcs_ratio = MeanCosSim(OrtSAE) / MeanCosSim(BatchTopK); ev_gap is the
    absolute explained-variance difference. init_mean_cos_sim is the
    random-init reference of the seed.
    """
    rows = []
    for seed, group in headline.groupby("seed"):
        base = group[group.variant == BASELINE].iloc[0]
        init = group[group.variant == RANDOM_INIT]
        init_mcs = float(init.mean_cos_sim.iloc[0]) if len(init) else float("nan")
        for _, run in group[~group.variant.isin([BASELINE, RANDOM_INIT])].iterrows():
            rows.append({
                "seed": seed,
                "variant": run.variant,
                "init_mean_cos_sim": init_mcs,
                "mcs_ratio": run.mean_cos_sim / base.mean_cos_sim,
                "ev_gap": abs(run.explained_variance - base.explained_variance),
                "composition_lower": run.composition_rate < base.composition_rate,
                "mmcs_delta": run.ground_truth_mmcs - base.ground_truth_mmcs,
            })
    summary = pd.DataFrame(rows)
    if not periodic.empty:
        summary = summary.merge(
            periodic[["seed", "mcs_relative_change", "ortho_share_ratio"]], on="seed", how="left"
        )
    return summary


def run_experiments(
    settings: Optional[Dict] = None,
    seeds: Optional[Sequence[int]] = None,
    total_steps: Optional[int] = None,
    out_dir: Optional[str] = None,
    logger=None,
) -> Dict[str, pd.DataFrame]:
    """
    Run every experiment and write the CSV tables.

    Args:
        settings: Parsed settings.yaml (default: loaded from disk)
        seeds: Seeds to run (default: experiment.seeds)
        total_steps: Training steps per run (default: train.total_steps)
        out_dir: Output directory (default: paths.analytics_dir)
        logger: Optional pipeline logger

    Returns:
        Dictionary of table name -> DataFrame
    """
    if logger is None:
        logger = get_pipeline_logger()
    train_logger = get_train_logger()
    eval_logger = get_eval_logger()

    settings = load_settings() if settings is None else settings
    exp = settings_section("experiment", settings)
    world_cfg = settings_section("world", settings)
    paths = settings_section("paths", settings)

    base_sae, base_train = build_configs(None, settings)
    seeds = list(seeds) if seeds is not None else list(exp.get("seeds", [0, 1, 2]))
    steps = total_steps if total_steps is not None else base_train.total_steps
    gamma = float(exp.get("ortho_gamma", 0.25))
    headline_chunks = list(exp.get("headline_chunks", [1, 4]))
    sweep_chunks = list(exp.get("sweep_chunks", [1, 2, 4, 8, 16]))
    period = int(exp.get("periodic_period", 5))
    eval_rows = int(exp.get("eval_rows", 4096))
    meta_steps = int(exp.get("meta_steps", META_STEPS))
    out_dir = out_dir or paths.get("analytics_dir", "data/analytics")
    os.makedirs(out_dir, exist_ok=True)

    start_time = datetime.now()
    logger.info("=" * 60)
    logger.info("OrtSAE Experiment Pipeline Started")
    logger.info(f"Start Time: {start_time.strftime('%Y-%m-%d %H:%M:%S')}")
    logger.info(f"Seeds: {seeds} | steps: {steps} | gamma: {gamma} | chunks: {headline_chunks}")
    logger.info("=" * 60)

    headline_rows: List[Dict] = []
    unique_rows: List[Dict] = []
    decomposition_rows: List[Dict] = []
    periodic_rows: List[Dict] = []

    for seed in seeds:
        # =====================================================================
        # STEP 1: WORLD - Ground truth and evaluation set
        # =====================================================================
        logger.info("\n" + "=" * 60)
        logger.info(f"SEED {seed}: WORLD")
        logger.info("=" * 60)

        world = default_world(
            seed,
            n=int(world_cfg.get("dim_n", 32)),
            num_features=int(world_cfg.get("num_features", 64)),
            fire_prob=float(world_cfg.get("fire_prob", 0.06)),
        )
        x_eval, _ = sample_batch(world, eval_rows, RngStream(seed=seed, stream=EVAL_STREAM))
        train_cfg = TrainConfig(**{**base_train.to_dict(), "seed": seed, "total_steps": steps})

        # =====================================================================
        # STEP 2: TRAIN + EVALUATE - Baseline and OrtSAE variants
        # =====================================================================
        logger.info("\n" + "=" * 60)
        logger.info(f"SEED {seed}: HEADLINE COMPARISON")
        logger.info("=" * 60)

        baseline_cfg = variant_config(base_sae, 0.0, 1)
        headline_rows.append(evaluate_init(seed, world.dim_n, baseline_cfg, world, x_eval, eval_logger))

        runs = {}
        variants = [(BASELINE, baseline_cfg)]
        variants += [(ortsae_name(k), variant_config(base_sae, gamma, k)) for k in headline_chunks]
        for name, sae_cfg in variants:
            logger.info(f"\n--- {name} ---")
            result = train_on_world(world, sae_cfg, train_cfg, train_logger)
            runs[name] = result
            headline_rows.append(evaluate_run(name, seed, result, sae_cfg, world, x_eval, meta_steps, eval_logger))

        # =====================================================================
        # STEP 3: COMPARE - Unique features and decompositions
        # =====================================================================
        logger.info("\n" + "=" * 60)
        logger.info(f"SEED {seed}: CROSS-MODEL COMPARISON")
        logger.info("=" * 60)

        w_base = runs[BASELINE].params.w_dec
        for k in headline_chunks:
            name = ortsae_name(k)
            w_ort = runs[name].params.w_dec
            unique_rows.append({
                "seed": seed,
                "variant": name,
                "ortsae_unique_vs_baseline": unique_features(w_ort, w_base),
                "baseline_unique_vs_ortsae": unique_features(w_base, w_ort),
            })
            decomposition_rows.append({
                "seed": seed,
                "variant": name,
                "baseline_in_ortsae": len(decompose_dictionary(w_base, w_ort, eval_logger)),
                "ortsae_in_baseline": len(decompose_dictionary(w_ort, w_base, eval_logger)),
                "dict_size": w_base.shape[1],
            })

        # =====================================================================
        # STEP 4: PERIODIC VARIANT - Penalty every few steps
        # =====================================================================
        logger.info("\n" + "=" * 60)
        logger.info(f"SEED {seed}: PERIODIC VARIANT (period {period})")
        logger.info("=" * 60)

        reference_chunks = headline_chunks[-1]
        reference = runs[ortsae_name(reference_chunks)]
        periodic_cfg = variant_config(base_sae, gamma, reference_chunks, period)
        periodic = train_on_world(world, periodic_cfg, train_cfg, train_logger)
        periodic_report = build_report(periodic.params, periodic_cfg, x_eval, world=world, logger=eval_logger)
        reference_mcs = next(
            r["mean_cos_sim"] for r in headline_rows
            if r["seed"] == seed and r["variant"] == ortsae_name(reference_chunks)
        )
        periodic_rows.append({
            "seed": seed,
            "variant": ortsae_name(reference_chunks, period),
            "mean_cos_sim": periodic_report.mean_cos_sim,
            "reference_mean_cos_sim": reference_mcs,
            "mcs_relative_change": abs(periodic_report.mean_cos_sim - reference_mcs) / reference_mcs,
            "explained_variance": periodic_report.explained_variance,
            "ortho_share": periodic.ortho_share,
            "reference_ortho_share": reference.ortho_share,
            "ortho_share_ratio": periodic.ortho_share / reference.ortho_share if reference.ortho_share > 0 else float("nan"),
        })

    # =========================================================================
    # STEP 5: CHUNK SWEEP - First seed only
    # =========================================================================
    logger.info("\n" + "=" * 60)
    logger.info("CHUNK-COUNT SWEEP")
    logger.info("=" * 60)

    sweep_rows = []
    sweep_seed = seeds[0]
    world = default_world(
        sweep_seed,
        n=int(world_cfg.get("dim_n", 32)),
        num_features=int(world_cfg.get("num_features", 64)),
        fire_prob=float(world_cfg.get("fire_prob", 0.06)),
    )
    x_eval, _ = sample_batch(world, eval_rows, RngStream(seed=sweep_seed, stream=EVAL_STREAM))
    train_cfg = TrainConfig(**{**base_train.to_dict(), "seed": sweep_seed, "total_steps": steps})
    for k in sweep_chunks:
        if base_sae.dict_size % k != 0 or base_sae.dict_size // k < 2:
            logger.warning(f"Skipping chunk_count {k}: does not divide dict_size {base_sae.dict_size}")
            continue
        sae_cfg = variant_config(base_sae, gamma, k)
        result = train_on_world(world, sae_cfg, train_cfg, train_logger)
        report = build_report(result.params, sae_cfg, x_eval, world=world, logger=eval_logger)
        sweep_rows.append({
            "seed": sweep_seed,
            "chunk_count": k,
            "mean_cos_sim": report.mean_cos_sim,
            "explained_variance": report.explained_variance,
            "ground_truth_mmcs": report.ground_truth_mmcs,
            "ortho_seconds": result.ortho_seconds,
            "ortho_share": result.ortho_share,
        })

    # =========================================================================
    # SAVE
    # =========================================================================
    tables = {
        "headline": pd.DataFrame(headline_rows),
        "unique_features": pd.DataFrame(unique_rows),
        "decompositions": pd.DataFrame(decomposition_rows),
        "periodic": pd.DataFrame(periodic_rows),
        "chunk_sweep": pd.DataFrame(sweep_rows),
    }
    tables["summary"] = summarize(tables["headline"], tables["periodic"])

    files = {
        "headline": HEADLINE_FILE,
        "unique_features": UNIQUE_FILE,
        "decompositions": DECOMPOSITION_FILE,
        "periodic": PERIODIC_FILE,
        "chunk_sweep": SWEEP_FILE,
        "summary": SUMMARY_FILE,
    }
    for name, filename in files.items():
        path = os.path.join(out_dir, filename)
        tables[name].to_csv(path, index=False)
        logger.info(f"Saved {name} to: {path}")

    print("\n" + "=" * 60)
    print("HEADLINE COMPARISON")
    print("=" * 60)
    print(tables["headline"][["seed", "variant", "explained_variance", "mean_cos_sim", "ground_truth_mmcs", "composition_rate"]].to_markdown(index=False))

    print("\n" + "=" * 60)
    print("ACCEPTANCE SUMMARY")
    print("=" * 60)
    print(tables["summary"].to_markdown(index=False))

    end_time = datetime.now()
    logger.info("\n" + "=" * 60)
    logger.info("PIPELINE COMPLETED SUCCESSFULLY")
    logger.info(f"Duration: {end_time - start_time}")
    logger.info("=" * 60)
    return tables


def main():
    """Run the experiments with settings from config/settings.yaml."""
    return run_experiments()


# =============================================================================
# Entry Point
# =============================================================================
if __name__ == "__main__":
    # Change to project root for relative paths
    os.chdir(PROJECT_ROOT)
    try:
        main()
    except KeyboardInterrupt:
        print("\n\n[!] Pipeline interrupted by user")
        sys.exit(1)
    except Exception as e:
        print(f"\n\n[X] Pipeline failed with error: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)
