import numpy as np
import pytest

from app.evaluation import average_precision, evaluate, render_evaluation
from core.errors import DimensionError, UndefinedMetricError
from services.score_file import ScoreRow, ScoreTrack


def brute_force_ap(probabilities, labels):
    ranked = sorted(range(len(labels)), key=lambda i: -probabilities[i])
    hits, total = 0, 0.0
    for rank, index in enumerate(ranked, start=1):
        if labels[index] == 1:
            hits += 1
            total += hits / rank
    return total / hits


def track_of(probabilities, labels, categories=None):
    categories = categories or ["OC"] * len(labels)
    return ScoreTrack(
        ScoreRow("v", "e", i / 25.0, float(p), int(g), c)
        for i, (p, g, c) in enumerate(zip(probabilities, labels, categories))
    )


class TestAveragePrecision:
    def test_known_value(self):
        ap = average_precision([0.9, 0.8, 0.7, 0.6], [0, 1, 1, 0])
        assert ap == pytest.approx(0.58333, abs=1e-5)

    def test_perfect_ranking(self):
        assert average_precision([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_positive(self):
        assert average_precision([0.1, 0.5], [1, 1]) == 1.0

    def test_ties_keep_input_order(self):
        assert average_precision([0.5, 0.5], [1, 0]) == 1.0
        assert average_precision([0.5, 0.5], [0, 1]) == 0.5

    def test_matches_brute_force(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            n = int(rng.integers(1, 40))
            labels = rng.integers(0, 2, n)
            if not labels.any():
                labels[int(rng.integers(n))] = 1
            # coarse values so ties occur often
            probabilities = np.round(rng.uniform(0, 1, n), 1)
            assert average_precision(probabilities, labels) == pytest.approx(
                brute_force_ap(list(probabilities), list(labels)), abs=1e-12
            )

    def test_no_positives(self):
        with pytest.raises(UndefinedMetricError):
            average_precision([0.2, 0.4], [0, 0])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            average_precision([0.2, 0.4], [0])


class TestEvaluate:
    def test_overall_and_categories(self):
        probabilities = [0.9, 0.8, 0.7, 0.6, 0.3, 0.2]
        labels = [0, 1, 1, 0, 1, 0]
        track = track_of(probabilities, labels, ["OC", "OC", "OC", "OC", "SI", "SI"])
        report = evaluate(track)
        assert report.rows == 6
        assert report.overall == pytest.approx(brute_force_ap(probabilities, labels))
        assert report.per_category["OC"] == pytest.approx(7 / 12)
        assert report.per_category["SI"] == 1.0
        assert report.per_category["FO"] is None
        assert report.errors == {}

    def test_category_without_positives_is_reported(self):
        track = track_of([0.9, 0.1, 0.4], [1, 0, 0], ["OC", "OC", "SS"])
        report = evaluate(track)
        assert report.per_category["SS"] is None
        assert "SS" in report.errors
        assert report.overall == 1.0

    def test_unlisted_category_still_evaluated(self):
        report = evaluate(track_of([0.9], [1], ["extra"]), categories=("OC",))
        assert report.per_category == {"OC": None, "extra": 1.0}

    def test_rendering(self):
        track = track_of([0.9, 0.8, 0.7, 0.6], [0, 1, 1, 0])
        report = evaluate(track)
        assert render_evaluation(report, by_category=False).strip() == "mAP 0.5833 over 4 frames"
        text = render_evaluation(report, by_category=True)
        assert "OC      0.5833" in text
        assert "absent" in text
        assert report.as_dict()["per_category"]["OC"] == pytest.approx(7 / 12)
