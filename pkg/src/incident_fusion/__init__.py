"""Bayesian fusion of crowdsourced traffic reports for incident detection and localization.

Reports are binned onto a hexagonal grid, grouped into incident hypotheses,
and fused step by step into a detection probability and a distribution over
regions. The joint probability feeds small classifiers that decide alerts.
"""
from .geo import BACKEND, CellId, GeoPoint, GridConfig, InvalidInput, ReportArea, area_overlaps, cell_of
from .ingest import GroundTruthRecord, Report, parse_ground_truth, parse_reports
from .priors import PriorTable, estimate_priors, lookup
from .fusion import (
    BeliefState,
    DetectionDecision,
    FusionConfig,
    detect_posterior,
    joint_posterior,
    localize_posterior,
    sequential_update,
)
from .classify import Scheme, fit_forest, fit_logistic, learn_threshold, predict_proba
from .evaluation import kfold_cv, lead_time, precision_recall_f1, roc_auc
from .pipeline import Detector, build_feature_rows

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CellId", "GeoPoint", "GridConfig", "InvalidInput", "ReportArea", "area_overlaps", "cell_of",
    "GroundTruthRecord", "Report", "parse_ground_truth", "parse_reports",
    "PriorTable", "estimate_priors", "lookup",
    "BeliefState", "DetectionDecision", "FusionConfig", "detect_posterior", "joint_posterior",
    "localize_posterior", "sequential_update",
    "Scheme", "fit_forest", "fit_logistic", "learn_threshold", "predict_proba",
    "kfold_cv", "lead_time", "precision_recall_f1", "roc_auc",
    "Detector", "build_feature_rows",
    "__version__",
]
