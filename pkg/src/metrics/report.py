"""
Metric Report Module
====================
Collects the full metric suite for one SAE into a MetricReport and writes
it out as CSV files.

Usage:
    from src.metrics.report import build_report, save_report

    report = build_report(params, sae_cfg, x, world=world)
    save_report(report, "data/analytics/eval")
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from orchestrator.logger import get_eval_logger
from src.datagen.synthetic_world import SyntheticWorld
from src.metrics.fidelity import explained_variance
from src.metrics.geometry import (
    DEFAULT_THRESHOLDS, clustering_coefficient, ground_truth_mmcs, mean_cos_sim,
    nearest_cosine_table, unique_features,
)
from src.sae.model import SaeConfig, SaeParams, forward


REPORT_FILE = "report.csv"
CLUSTERING_FILE = "clustering.csv"
NEAREST_FILE = "nearest_cos.csv"


@dataclass
class MetricReport:
    """
    Fidelity and atomicity metrics of one SAE.

    unique_fraction needs a reference dictionary and ground_truth_mmcs a
    synthetic world; both are None when those are not supplied.
    """

    explained_variance: float
    mean_cos_sim: float
    actual_l0: float
    clustering: List[Tuple[float, float]] = field(default_factory=list)
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS
    unique_fraction: Optional[float] = None
    ground_truth_mmcs: Optional[float] = None

    def summary(self) -> Dict[str, Optional[float]]:
        return {
            "explained_variance": self.explained_variance,
            "mean_cos_sim": self.mean_cos_sim,
            "actual_l0": self.actual_l0,
            "unique_fraction": self.unique_fraction,
            "ground_truth_mmcs": self.ground_truth_mmcs,
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([self.summary()])

    def clustering_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "threshold": list(self.thresholds),
            "density": [d for d, _ in self.clustering],
            "coefficient": [c for _, c in self.clustering],
        })


def build_report(
    params: SaeParams,
    sae_cfg: SaeConfig,
    x: np.ndarray,
    world: Optional[SyntheticWorld] = None,
    reference_w_dec: Optional[np.ndarray] = None,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    logger=None,
) -> MetricReport:
    """
    Evaluate an SAE on a data matrix.

    The whole matrix is encoded as one batch (for BatchTopK the budget is
    rows · k across all of it).

    Args:
        params: SAE parameters
        sae_cfg: SAE configuration
        x: Evaluation rows
        world: Synthetic world for ground-truth MMCS (optional)
        reference_w_dec: Other decoder for the unique-feature fraction (optional)
        thresholds: Clustering thresholds
        logger: Optional logger

    Returns:
        MetricReport
    """
    if logger is None:
        logger = get_eval_logger()

    trace = forward(params, sae_cfg, x)
    delta = sae_cfg.delta

    report = MetricReport(
        explained_variance=explained_variance(x, trace.recon),
        mean_cos_sim=mean_cos_sim(params.w_dec, delta),
        actual_l0=trace.l0,
        clustering=clustering_coefficient(params.w_dec, thresholds, delta),
        thresholds=tuple(thresholds),
        unique_fraction=None if reference_w_dec is None else unique_features(params.w_dec, reference_w_dec, delta=delta),
        ground_truth_mmcs=None if world is None else ground_truth_mmcs(world, params.w_dec, delta),
    )

    logger.info(
        f"EV {report.explained_variance:.4f} | MeanCosSim {report.mean_cos_sim:.4f} | "
        f"L0 {report.actual_l0:.2f}"
        + ("" if report.ground_truth_mmcs is None else f" | MMCS {report.ground_truth_mmcs:.4f}")
        + ("" if report.unique_fraction is None else f" | unique {report.unique_fraction:.4f}")
    )
    return report


def save_report(report: MetricReport, out_dir: str, w_dec: np.ndarray, delta: float, logger=None) -> Dict[str, str]:
    """
    Write report.csv, clustering.csv and nearest_cos.csv into out_dir.

    Returns:
        Mapping of file kind to path
    """
    if logger is None:
        logger = get_eval_logger()

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "report": os.path.join(out_dir, REPORT_FILE),
        "clustering": os.path.join(out_dir, CLUSTERING_FILE),
        "nearest": os.path.join(out_dir, NEAREST_FILE),
    }
    report.to_frame().to_csv(paths["report"], index=False)
    report.clustering_frame().to_csv(paths["clustering"], index=False)
    nearest_cosine_table(w_dec, delta).to_csv(paths["nearest"], index=False)

    for kind, path in paths.items():
        logger.info(f"Saved {kind} to: {path}")
    return paths
