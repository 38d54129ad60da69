"""
Mean average precision over per-frame speaking scores, overall and per category.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from core.errors import DimensionError, UndefinedMetricError
from services.report_renderer import ReportRenderer
from services.score_file import ScoreTrack

logger = logging.getLogger(__name__)

REPORT_CATEGORIES = ("OC", "SI", "FO", "HVN", "SS", "synthetic")


def average_precision(probabilities: Sequence[float], labels: Sequence[int]) -> float:
    """Step-interpolated AP: mean precision at the rank of every positive.

    Rows are ranked by descending probability; equal probabilities keep their
    input order.
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels)
    if probabilities.shape != labels.shape or probabilities.ndim != 1:
        raise DimensionError(
            f"Need matching 1-d scores and labels, got {probabilities.shape} and {labels.shape}"
        )
    positives = int(np.count_nonzero(labels == 1))
    if positives == 0:
        raise UndefinedMetricError("Average precision is undefined without positive labels")

    order = np.argsort(-probabilities, kind="stable")
    hits = (labels[order] == 1).astype(np.float64)
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(np.sum(precision * hits) / positives)


@dataclass
class EvaluationReport:
    overall: float
    rows: int
    # None marks a category with no rows
    per_category: Dict[str, Optional[float]] = field(default_factory=dict)
    errors: Dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, object]:
        return {
            "overall": self.overall,
            "rows": self.rows,
            "per_category": dict(self.per_category),
            "errors": dict(self.errors),
        }


def evaluate(track: ScoreTrack, categories: Sequence[str] = REPORT_CATEGORIES) -> EvaluationReport:
    """Overall AP over the union of all rows plus AP within every present category.

    A category present in the scores but without positives is recorded in
    ``errors`` instead of failing the whole evaluation.
    """
    overall = average_precision(track.probabilities, track.labels)
    wanted = list(categories) + [c for c in track.categories() if c not in categories]
    per_category: Dict[str, Optional[float]] = {}
    errors: Dict[str, str] = {}
    for category in wanted:
        subset = track.subset(category)
        if not len(subset):
            per_category[category] = None
            continue
        try:
            per_category[category] = average_precision(subset.probabilities, subset.labels)
        except UndefinedMetricError as e:
            logger.warning(f"Category {category}: {e}")
            per_category[category] = None
            errors[category] = str(e)
    return EvaluationReport(overall, len(track), per_category, errors)


def render_evaluation(report: EvaluationReport, by_category: bool = True) -> str:
    return ReportRenderer().render(
        "evaluation_report.txt.j2", report=report, by_category=by_category
    )
