"""
Per-frame score files written by inference and read by evaluation.

Columns: video_id, entity_id, frame_timestamp, probability, label, category
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Union

import numpy as np

from core.errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

SCORE_COLUMNS = ("video_id", "entity_id", "frame_timestamp", "probability", "label", "category")


@dataclass(frozen=True)
class ScoreRow:
    video_id: str
    entity_id: str
    frame_timestamp: float
    probability: float
    label: int
    category: str


class ScoreTrack:
    """Ordered score rows; order matters for tie-breaking in average precision."""

    def __init__(self, rows: Iterable[ScoreRow] = ()):
        self.rows: List[ScoreRow] = list(rows)
        for index, row in enumerate(self.rows, start=1):
            if not 0.0 <= row.probability <= 1.0:
                raise ValidationError(f"row {index}: probability {row.probability} not in [0, 1]")

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def extend(self, rows: Iterable[ScoreRow]) -> None:
        self.rows.extend(ScoreTrack(rows).rows)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([row.probability for row in self.rows], dtype=np.float64)

    @property
    def labels(self) -> np.ndarray:
        return np.array([row.label for row in self.rows], dtype=np.int64)

    def categories(self) -> List[str]:
        return list(dict.fromkeys(row.category for row in self.rows))

    def subset(self, category: str) -> "ScoreTrack":
        return ScoreTrack(row for row in self.rows if row.category == category)


def write_scores(track: ScoreTrack, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SCORE_COLUMNS)
        for row in track:
            writer.writerow(
                [
                    row.video_id,
                    row.entity_id,
                    repr(float(row.frame_timestamp)),
                    f"{row.probability:.9f}",
                    row.label,
                    row.category,
                ]
            )
    logger.info(f"Wrote {len(track)} scores to {path}")


def read_scores(path: Union[str, Path]) -> ScoreTrack:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Score file not found: {path}")
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = [h.strip() for h in next(reader, [])]
        if tuple(header) != SCORE_COLUMNS:
            raise ParseError(f"{path}:1: header {header} does not match {list(SCORE_COLUMNS)}")
        for values in reader:
            if not values:
                continue
            location = f"{path}:{reader.line_num}"
            if len(values) != len(SCORE_COLUMNS):
                raise ParseError(
                    f"{location}: expected {len(SCORE_COLUMNS)} fields, got {len(values)}"
                )
            try:
                row = ScoreRow(
                    video_id=values[0],
                    entity_id=values[1],
                    frame_timestamp=float(values[2]),
                    probability=float(values[3]),
                    label=int(values[4]),
                    category=values[5],
                )
            except ValueError as e:
                raise ParseError(f"{location}: {e}") from None
            if not 0.0 <= row.probability <= 1.0:
                raise ValidationError(f"{location}: probability {row.probability} not in [0, 1]")
            if row.label not in (0, 1):
                raise ValidationError(f"{location}: label must be 0 or 1, got {row.label}")
            rows.append(row)
    return ScoreTrack(rows)
