"""Metrics, the stratified evaluation protocol and report output."""

from .metrics import auc, nmae, normalized_gini, nrmse
from .stratified import EvalResult, TaskMetrics, stratified_eval

__all__ = ["EvalResult", "TaskMetrics", "auc", "nmae", "normalized_gini", "nrmse", "stratified_eval"]
