"""Splits, metrics, bootstrap intervals and rank statistics."""
from .bootstrap import BootstrapError, BootstrapResult, bootstrap_ci, bootstrap_scores
from .cv import CVResult, OuterResult, SplitPlan, nested_cv, refit, select
from .metrics import (
    METRICS, MetricError, MetricReport, auprc, auroc, compute_metrics, confusion, threshold_metrics,
)
from .splits import SplitError, largest_remainder, stratified_folds, stratified_split
from .stats import (
    Q_TABLE, CDDiagram, RankMatrix, StatsError, cd_cliques, cd_diagram_data, chi2_sf,
    critical_difference, friedman_test, gap_significant, nemenyi_posthoc, rank_matrix, significant_pairs,
)

__all__ = [
    "BootstrapError", "BootstrapResult", "CDDiagram", "CVResult", "METRICS", "MetricError",
    "MetricReport", "OuterResult", "Q_TABLE", "RankMatrix", "SplitError", "SplitPlan",
    "StatsError", "auprc", "auroc", "bootstrap_ci", "bootstrap_scores", "cd_cliques",
    "cd_diagram_data", "chi2_sf", "compute_metrics", "confusion", "critical_difference",
    "friedman_test", "gap_significant", "largest_remainder", "nemenyi_posthoc", "nested_cv", "rank_matrix",
    "refit", "select", "significant_pairs", "stratified_folds", "stratified_split",
    "threshold_metrics",
]
