"""Assembly of metric reports and paired comparisons."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..core.config_types import EvalConfig, Segment
from ..core.matrices import LabelMatrix
from ..core.predictions import PredictionSet
from ..utils.exceptions import DimensionMismatch
from .metrics import macro_f1_at_k, precision_at_k, recall_at_k
from .significance import TTestResult, paired_t_test

logger = logging.getLogger(__name__)


@dataclass
class MetricReport:
    """Averages, segment F1 and per-query vectors of one prediction run."""

    p_at: Dict[int, float]
    r_at: Dict[int, float]
    macro_f1_at: Dict[Tuple[Segment, int], float]
    per_query: Dict[str, np.ndarray]
    n_queries: int
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {}
        for k, value in sorted(self.p_at.items()):
            out[f"P@{k}"] = value
        for k, value in sorted(self.r_at.items()):
            out[f"R@{k}"] = value
        ks = sorted({k for _, k in self.macro_f1_at})
        for k in ks:
            out[f"macroF1@{k}"] = {
                segment.value: self.macro_f1_at[(segment, k)]
                for segment in Segment
                if (segment, k) in self.macro_f1_at
            }
        out["n_queries"] = self.n_queries
        out["metadata"] = self.metadata
        return out


def evaluate(
    preds: PredictionSet,
    truths: LabelMatrix,
    train_labels: LabelMatrix,
    cfg: EvalConfig,
) -> MetricReport:
    """
    P@k and R@k averaged over queries with non-empty truth, plus macro F1@k
    per training-frequency segment.
    """
    if len(preds) != truths.n_rows:
        raise DimensionMismatch(
            f"{len(preds)} prediction rows but {truths.n_rows} ground-truth rows"
        )
    if train_labels.n_labels != truths.n_labels:
        raise DimensionMismatch(
            f"training labels cover {train_labels.n_labels} labels, "
            f"test {truths.n_labels}"
        )
    kept = [i for i in range(truths.n_rows) if truths.row(i).size]
    per_query: Dict[str, np.ndarray] = {}
    p_at: Dict[int, float] = {}
    r_at: Dict[int, float] = {}
    for k in cfg.ks:
        p = np.array([precision_at_k(preds[i], truths.row(i), k) for i in kept])
        r = np.array([recall_at_k(preds[i], truths.row(i), k) for i in kept])
        per_query[f"P@{k}"] = p
        per_query[f"R@{k}"] = r
        p_at[k] = float(np.mean(p)) if p.size else 0.0
        r_at[k] = float(np.mean(r)) if r.size else 0.0

    train_freq = train_labels.label_frequencies()
    macro = {}
    for k in cfg.ks:
        for segment, value in macro_f1_at_k(
            preds, truths, cfg.segments, train_freq, k
        ).items():
            macro[(segment, k)] = value

    excluded = truths.n_rows - len(kept)
    if excluded:
        logger.info(f"Excluded {excluded} queries with empty ground truth")
    return MetricReport(
        p_at=p_at,
        r_at=r_at,
        macro_f1_at=macro,
        per_query=per_query,
        n_queries=len(kept),
        metadata={
            "excluded_empty_truth": excluded,
            "segment_thresholds": list(cfg.segments.thresholds),
            "f1_label_rule": "labels absent from both truth and top-k are excluded",
        },
    )


def compare_reports(
    first: MetricReport, second: MetricReport, metric: Optional[str] = None
) -> Dict[str, TTestResult]:
    """Paired t-test per shared per-query metric (or a single named one)."""
    names = [metric] if metric else sorted(set(first.per_query) & set(second.per_query))
    return {
        name: paired_t_test(first.per_query[name], second.per_query[name])
        for name in names
    }
