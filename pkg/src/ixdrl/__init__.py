"""Interestingness analysis of reinforcement-learning agent traces.

The package turns traces of probed agent outputs into per-timestep
interestingness dimensions, clusters traces on their mean interestingness and
explains dimensions with boosted trees and Shapley values.
"""

__version__ = "0.1.0"

from .analysis import InterestingnessAnalyzer, InterestingnessRecord, analyze
from .attribution import (build_features, find_abnormal, global_importance, local_explanation,
                          train_gbt)
from .clustering import CompleteLinkageClustering, cluster_traces
from .gbt import GradientBoostedTrees
from .shapley import shap_exact, shap_tree
from .traces import TraceSet, load_traceset, save_traceset, validate_traceset

__all__ = [
    "InterestingnessAnalyzer", "InterestingnessRecord", "analyze", "build_features",
    "find_abnormal", "global_importance", "local_explanation", "train_gbt",
    "CompleteLinkageClustering", "cluster_traces", "GradientBoostedTrees", "shap_exact",
    "shap_tree", "TraceSet", "load_traceset", "save_traceset", "validate_traceset",
]
