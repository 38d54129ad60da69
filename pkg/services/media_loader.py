"""
Assemble one entity's aligned model inputs from pre-extracted media.

Media layout below the media root (directory names configurable):

    faces/<video_id>/<entity_id>/<index:06d>.pgm   one 8-bit greyscale crop per manifest row
    poses/<video_id>/<entity_id>.txt              T lines of N_b * 3 values (x y confidence)
    audio/<video_id>.wav                          16 kHz mono 16-bit PCM

Pose coordinates in the files are normalised to the frame like the manifest
bounding boxes; the loader re-expresses them relative to the body box.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from config.config import Config
from core.errors import DataError, MediaError
from graph.skeleton import BodyVariant
from services.audio_frontend import (
    AudioClip,
    MfccSettings,
    align_to_frames,
    compute_mfcc,
    read_wav,
)
from services.manifest import EntityKey, ManifestRow

logger = logging.getLogger(__name__)


@dataclass
class SampleClip:
    """One entity's inputs; every temporal extent equals ``frames``."""

    key: EntityKey
    faces: np.ndarray  # (1, S, S, T) in [0, 1]
    mfcc: np.ndarray  # (1, 13, 4T)
    poses: np.ndarray  # (3, N_b, T)
    labels: np.ndarray  # (T,)
    category: str
    timestamps: Tuple[float, ...] = ()

    def __post_init__(self):
        t = self.labels.shape[0]
        if self.faces.shape[-1] != t or self.poses.shape[-1] != t or self.mfcc.shape[-1] != 4 * t:
            raise DataError(
                f"Clip {self.key}: temporal extents disagree (faces {self.faces.shape}, "
                f"mfcc {self.mfcc.shape}, poses {self.poses.shape}, labels {self.labels.shape})"
            )
        confidence = self.poses[2]
        if np.any(confidence < 0) or np.any(confidence > 1):
            raise DataError(f"Clip {self.key}: pose confidence outside [0, 1]")

    @property
    def frames(self) -> int:
        return int(self.labels.shape[0])

    @property
    def name(self) -> str:
        return f"{self.key[0]}/{self.key[1]}"


def load_face(path: Path, face_size: int) -> np.ndarray:
    """Greyscale crop resized bilinearly to face_size² and scaled to [0, 1]."""
    if not path.exists():
        raise MediaError(f"Face crop not found: {path}")
    try:
        with Image.open(path) as image:
            grey = image.convert("L").resize((face_size, face_size), Image.Resampling.BILINEAR)
            return np.asarray(grey, dtype=np.float64) / 255.0
    except OSError as e:
        raise MediaError(f"Cannot decode face crop {path}: {e}") from e


def save_face(path: Path, pixels: np.ndarray) -> None:
    """Write a [0, 1] greyscale array as an 8-bit PGM."""
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.clip(np.round(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path, format="PPM")


def load_pose_file(path: Path, frames: int, variant: BodyVariant) -> np.ndarray:
    """Raw joint triples (T, N_b, 3) restricted to ``variant``."""
    if not path.exists():
        raise MediaError(f"Pose file not found: {path}")
    try:
        values = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise DataError(f"{path}: malformed pose values: {e}") from e
    if values.shape[0] != frames:
        raise DataError(f"{path}: {values.shape[0]} pose lines for {frames} manifest rows")
    if values.shape[1] % 3:
        raise DataError(f"{path}: {values.shape[1]} values per line is not a multiple of 3")
    joints = values.shape[1] // 3
    needed = variant.n_joints
    if joints < needed or joints not in (11, 17):
        raise DataError(
            f"{path}: {joints} joints per frame, the {variant.value} skeleton needs {needed}"
        )
    return values.reshape(frames, joints, 3)[:, :needed, :]


def normalize_pose(joints: np.ndarray, body_bbox: Sequence[float]) -> np.ndarray:
    """(N_b, 3) frame-normalised triples -> body-box-relative (x, y) in [0, 1].

    Joints with zero confidence become (0, 0, 0).
    """
    x1, y1, x2, y2 = body_bbox
    out = np.empty_like(joints)
    out[:, 0] = np.clip((joints[:, 0] - x1) / (x2 - x1), 0.0, 1.0)
    out[:, 1] = np.clip((joints[:, 1] - y1) / (y2 - y1), 0.0, 1.0)
    out[:, 2] = np.clip(joints[:, 2], 0.0, 1.0)
    out[joints[:, 2] <= 0] = 0.0
    return out


class MediaLoader:
    """Loads SampleClips for manifest entities from one media root."""

    def __init__(
        self,
        media_root: Union[str, Path],
        body_variant: Union[BodyVariant, str] = BodyVariant.WHOLE,
        face_size: int = 112,
        config: Config = None,
    ):
        self.logger = logging.getLogger(__name__)
        config = config or Config.get_current_config()
        self.media_root = Path(media_root)
        self.body_variant = BodyVariant(body_variant)
        self.face_size = face_size
        self.settings = MfccSettings.from_config(config)
        self.faces_dir = self.media_root / config.faces_dir
        self.poses_dir = self.media_root / config.poses_dir
        self.audio_dir = self.media_root / config.audio_dir
        self._read_audio = lru_cache(maxsize=8)(self._read_audio_uncached)

    def _read_audio_uncached(self, video_id: str) -> AudioClip:
        return read_wav(self.audio_dir / f"{video_id}.wav", self.settings.sample_rate)

    def face_path(self, video_id: str, entity_id: str, index: int) -> Path:
        return self.faces_dir / video_id / entity_id / f"{index:06d}.pgm"

    def pose_path(self, video_id: str, entity_id: str) -> Path:
        return self.poses_dir / video_id / f"{entity_id}.txt"

    def load_clip(self, rows: List[ManifestRow]) -> SampleClip:
        if not rows:
            raise DataError("Cannot build a clip from zero manifest rows")
        video_id, entity_id = rows[0].key
        frames = len(rows)

        faces = np.stack(
            [
                load_face(self.face_path(video_id, entity_id, i), self.face_size)
                for i in range(frames)
            ],
            axis=-1,
        )[None]

        audio = self._read_audio(video_id)
        fps = rows[0].fps
        hop = self.settings.hop_length
        n_samples = int(round(frames / fps * self.settings.sample_rate)) + (
            self.settings.window_length - hop
        )
        segment = audio.segment(rows[0].frame_timestamp, n_samples)
        mfcc = align_to_frames(compute_mfcc(segment, self.settings), frames).coeffs[None]

        raw = load_pose_file(self.pose_path(video_id, entity_id), frames, self.body_variant)
        poses = np.stack(
            [normalize_pose(raw[t], row.body_bbox) for t, row in enumerate(rows)], axis=-1
        )
        poses = np.transpose(poses, (1, 0, 2))  # (3, N_b, T)

        labels = np.array([row.label for row in rows], dtype=np.int64)
        self.logger.debug(f"Loaded clip {video_id}/{entity_id}: {frames} frames")
        return SampleClip(
            key=(video_id, entity_id),
            faces=faces,
            mfcc=mfcc,
            poses=np.ascontiguousarray(poses),
            labels=labels,
            category=rows[0].category,
            timestamps=tuple(row.frame_timestamp for row in rows),
        )


def load_clip(
    rows: List[ManifestRow],
    media_root: Union[str, Path],
    body_variant: Union[BodyVariant, str] = BodyVariant.WHOLE,
    face_size: int = 112,
) -> SampleClip:
    return MediaLoader(media_root, body_variant, face_size).load_clip(rows)
