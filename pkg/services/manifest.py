"""
Dataset manifest: one CSV row per (video, entity, frame).

Columns (header mandatory, UTF-8):

    video_id, entity_id, frame_timestamp,
    face_x1, face_y1, face_x2, face_y2,
    body_x1, body_y1, body_x2, body_y2,
    label, category, fps

Bounding boxes are normalised against the decoded frame size, so every
coordinate lies in [0, 1] with x1 < x2 and y1 < y2.
"""

import csv
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Tuple, Union

from core.errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

CATEGORIES = ("OC", "SI", "FO", "HVN", "SS", "synthetic")

COLUMNS = (
    "video_id",
    "entity_id",
    "frame_timestamp",
    "face_x1",
    "face_y1",
    "face_x2",
    "face_y2",
    "body_x1",
    "body_y1",
    "body_x2",
    "body_y2",
    "label",
    "category",
    "fps",
)

BBox = Tuple[float, float, float, float]
EntityKey = Tuple[str, str]


@dataclass(frozen=True)
class ManifestRow:
    video_id: str
    entity_id: str
    frame_timestamp: float
    face_bbox: BBox
    body_bbox: BBox
    label: int
    category: str
    fps: float
    line: int = 0

    @property
    def key(self) -> EntityKey:
        return (self.video_id, self.entity_id)

    def as_record(self) -> Dict[str, object]:
        record: Dict[str, object] = {
            "video_id": self.video_id,
            "entity_id": self.entity_id,
            "frame_timestamp": _fmt(self.frame_timestamp),
        }
        for prefix, box in (("face", self.face_bbox), ("body", self.body_bbox)):
            for name, value in zip(("x1", "y1", "x2", "y2"), box):
                record[f"{prefix}_{name}"] = _fmt(value)
        record.update(label=self.label, category=self.category, fps=_fmt(self.fps))
        return record


def _fmt(value: float) -> str:
    return repr(float(value))


class Manifest:
    """Validated manifest rows in file order."""

    def __init__(self, rows: Iterable[ManifestRow], source: str = "<memory>"):
        self.rows: List[ManifestRow] = list(rows)
        self.source = source

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def entities(self) -> "OrderedDict[EntityKey, List[ManifestRow]]":
        """Rows grouped per (video_id, entity_id), in order of first appearance."""
        groups: "OrderedDict[EntityKey, List[ManifestRow]]" = OrderedDict()
        for row in self.rows:
            groups.setdefault(row.key, []).append(row)
        return groups

    def videos(self) -> List[str]:
        return list(OrderedDict.fromkeys(row.video_id for row in self.rows))

    def validate(self) -> List[str]:
        """Every invariant violation, each naming its row."""
        errors = []
        fps_per_video: Dict[str, Tuple[float, int]] = {}
        last_timestamp: Dict[EntityKey, Tuple[float, int]] = {}
        seen: Dict[Tuple[str, str, float], int] = {}

        for index, row in enumerate(self.rows, start=1):
            where = f"row {index} (line {row.line})" if row.line else f"row {index}"
            for name, box in (("face", row.face_bbox), ("body", row.body_bbox)):
                x1, y1, x2, y2 = box
                if not (0.0 <= x1 < x2 <= 1.0 and 0.0 <= y1 < y2 <= 1.0):
                    errors.append(
                        f"{where}: {name} bbox {box} must satisfy 0 <= x1 < x2 <= 1 "
                        f"and 0 <= y1 < y2 <= 1"
                    )
            if row.label not in (0, 1):
                errors.append(f"{where}: label must be 0 or 1, got {row.label}")
            if row.category not in CATEGORIES:
                errors.append(f"{where}: unknown category '{row.category}'")
            if not (math.isfinite(row.fps) and row.fps > 0):
                errors.append(f"{where}: fps must be positive and finite, got {row.fps}")
            elif row.video_id in fps_per_video and fps_per_video[row.video_id][0] != row.fps:
                first_fps, first_row = fps_per_video[row.video_id]
                errors.append(
                    f"{where}: fps {row.fps} differs from {first_fps} (row {first_row}) "
                    f"for video '{row.video_id}'"
                )
            else:
                fps_per_video.setdefault(row.video_id, (row.fps, index))

            triple = (row.video_id, row.entity_id, row.frame_timestamp)
            if not math.isfinite(row.frame_timestamp):
                errors.append(f"{where}: timestamp must be finite, got {row.frame_timestamp}")
            elif triple in seen:
                errors.append(f"{where}: duplicate of row {seen[triple]} for {triple}")
            else:
                seen[triple] = index
                previous = last_timestamp.get(row.key)
                if previous is not None and row.frame_timestamp <= previous[0]:
                    errors.append(
                        f"{where}: timestamp {row.frame_timestamp} not after "
                        f"{previous[0]} (row {previous[1]}) for entity {row.key}"
                    )
                last_timestamp[row.key] = (row.frame_timestamp, index)
        return errors


def _parse_float(value: str, column: str, location: str) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ParseError(f"{location}: column '{column}' is not a number: {value!r}") from None
    if not math.isfinite(number):
        raise ParseError(f"{location}: column '{column}' is not finite: {value!r}")
    return number


def _parse_row(record: Dict[str, str], location: str, line: int) -> ManifestRow:
    missing = [c for c in COLUMNS if record.get(c) in (None, "")]
    if missing:
        raise ParseError(f"{location}: missing values for {missing}")
    numbers = {
        c: _parse_float(record[c], c, location)
        for c in COLUMNS
        if c not in ("video_id", "entity_id", "category", "label")
    }
    label_text = record["label"].strip()
    try:
        label = int(label_text)
    except ValueError:
        raise ParseError(f"{location}: label is not an integer: {label_text!r}") from None
    return ManifestRow(
        video_id=record["video_id"].strip(),
        entity_id=record["entity_id"].strip(),
        frame_timestamp=numbers["frame_timestamp"],
        face_bbox=tuple(numbers[f"face_{k}"] for k in ("x1", "y1", "x2", "y2")),
        body_bbox=tuple(numbers[f"body_{k}"] for k in ("x1", "y1", "x2", "y2")),
        label=label,
        category=record["category"].strip(),
        fps=numbers["fps"],
        line=line,
    )


def load_manifest(path: Union[str, Path]) -> Manifest:
    """Parse and validate a manifest CSV.

    Raises:
        ParseError: a row is malformed (the message names file and line)
        ValidationError: rows parse but break an invariant (all violations listed)
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Manifest not found: {path}")

    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        if tuple(header) != COLUMNS:
            raise ParseError(f"{path}:1: header {header} does not match {list(COLUMNS)}")
        for values in reader:
            line = reader.line_num
            if not values or all(not v.strip() for v in values):
                continue
            location = f"{path}:{line}"
            if len(values) != len(COLUMNS):
                raise ParseError(f"{location}: expected {len(COLUMNS)} fields, got {len(values)}")
            rows.append(_parse_row(dict(zip(COLUMNS, values)), location, line))

    manifest = Manifest(rows, source=str(path))
    errors = manifest.validate()
    if errors:
        for error in errors:
            logger.error(f"{path}: {error}")
        raise ValidationError(f"{path}: {len(errors)} invalid row(s):\n" + "\n".join(errors))
    logger.info(f"Loaded manifest {path}: {len(rows)} rows, {len(manifest.entities())} entities")
    return manifest


def write_manifest(
    manifest: Union[Manifest, Iterable[ManifestRow]], path: Union[str, Path]
) -> None:
    rows = manifest.rows if isinstance(manifest, Manifest) else list(manifest)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_record())


__all__ = [
    "CATEGORIES",
    "COLUMNS",
    "Manifest",
    "ManifestRow",
    "load_manifest",
    "write_manifest",
]
