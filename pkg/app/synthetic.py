"""
Seeded synthetic dataset in the on-disk media layout.

Every entity lives in its own video. Speaking frames carry three correlated
cues: a pure tone burst in the audio track, a flickering bright patch in the
lower third of the face crop and a periodic oscillation of both wrist joints.
Silent frames carry broadband noise with the same mean energy as the tone,
so the audio cue lies in the spectrum rather than the loudness.

The output directory receives ``manifest.csv`` (all entities) plus a
``train.csv`` / ``test.csv`` split by entity.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from config.config import Config
from core.errors import ConfigurationError
from graph.skeleton import COCO_JOINTS
from services.audio_frontend import AudioClip, write_wav
from services.manifest import Manifest, ManifestRow, write_manifest
from services.media_loader import save_face

logger = logging.getLogger(__name__)

CATEGORY = "synthetic"
CROP_SIZE = 48
TONE_HZ = 440.0
TONE_AMPLITUDE = 6000.0
NOISE_AMPLITUDE = 300.0
MIN_RUN, MAX_RUN = 3, 8
TEST_FRACTION = 0.2
FACE_BBOX = (0.42, 0.08, 0.58, 0.3)
BODY_BBOX = (0.3, 0.05, 0.7, 0.95)
WRISTS = (COCO_JOINTS.index("left_wrist"), COCO_JOINTS.index("right_wrist"))

# Resting joint positions relative to the body box (x, y), COCO order.
POSE_TEMPLATE = np.array(
    [
        (0.50, 0.08),
        (0.47, 0.06),
        (0.53, 0.06),
        (0.44, 0.08),
        (0.56, 0.08),
        (0.38, 0.22),
        (0.62, 0.22),
        (0.33, 0.38),
        (0.67, 0.38),
        (0.31, 0.52),
        (0.69, 0.52),
        (0.42, 0.55),
        (0.58, 0.55),
        (0.41, 0.75),
        (0.59, 0.75),
        (0.40, 0.95),
        (0.60, 0.95),
    ]
)


@dataclass
class SyntheticDataset:
    root: Path
    manifest: Manifest
    train: Manifest
    test: Manifest

    @property
    def positive_fraction(self) -> float:
        labels = [row.label for row in self.manifest]
        return float(np.mean(labels)) if labels else 0.0


def _runs(rng: np.random.Generator, frames: int, start: int) -> np.ndarray:
    labels = np.empty(frames, dtype=np.int64)
    position, state = 0, start
    while position < frames:
        length = int(rng.integers(MIN_RUN, MAX_RUN + 1))
        labels[position : position + length] = state
        position += length
        state = 1 - state
    return labels


def _labels(rng: np.random.Generator, lengths: List[int]) -> List[np.ndarray]:
    """Alternating speaking runs; each entity's opening state keeps the global balance near 50%."""
    result = []
    positives, total = 0, 0
    for frames in lengths:
        candidates = [_runs(rng, frames, start) for start in (0, 1)]
        target = (total + frames) / 2.0
        best = min(candidates, key=lambda c: abs(positives + int(c.sum()) - target))
        positives += int(best.sum())
        total += frames
        result.append(best)
    return result


def _face_frames(
    rng: np.random.Generator, labels: np.ndarray, corrupt: bool
) -> List[np.ndarray]:
    size = CROP_SIZE
    if corrupt:
        return [rng.uniform(0.0, 1.0, (size, size)) for _ in labels]
    base = np.clip(0.45 + 0.08 * rng.standard_normal((size, size)), 0.0, 1.0)
    lower = slice(2 * size // 3, size - 4)
    mouth = slice(size // 4, 3 * size // 4)
    frames = []
    for t, label in enumerate(labels):
        face = base + 0.03 * rng.standard_normal((size, size))
        if label:
            face[lower, mouth] = 0.95 if t % 2 == 0 else 0.7
        frames.append(np.clip(face, 0.0, 1.0))
    return frames


def _pose_track(rng: np.random.Generator, labels: np.ndarray) -> np.ndarray:
    """(T, 17 * 3) frame-normalised joint triples."""
    frames = labels.shape[0]
    x1, y1, x2, y2 = BODY_BBOX
    rel = np.repeat(POSE_TEMPLATE[None], frames, axis=0)
    rel = rel + 0.004 * rng.standard_normal(rel.shape)
    phase = np.arange(frames) * (2.0 * np.pi / 5.0)
    for wrist in WRISTS:
        rel[:, wrist, 1] -= labels * 0.08 * (1.0 + np.sin(phase))
    rel = np.clip(rel, 0.0, 1.0)
    track = np.empty((frames, rel.shape[1], 3))
    track[..., 0] = x1 + rel[..., 0] * (x2 - x1)
    track[..., 1] = y1 + rel[..., 1] * (y2 - y1)
    track[..., 2] = rng.uniform(0.8, 1.0, size=(frames, rel.shape[1]))
    return track.reshape(frames, -1)


def _audio_track(
    rng: np.random.Generator, labels: np.ndarray, fps: float, sample_rate: int, tail: int
) -> AudioClip:
    per_frame = int(round(sample_rate / fps))
    n = labels.shape[0] * per_frame + tail
    samples = NOISE_AMPLITUDE * rng.standard_normal(n)
    tone = TONE_AMPLITUDE * np.sin(2.0 * np.pi * TONE_HZ * np.arange(per_frame) / sample_rate)
    for t in np.flatnonzero(labels):
        samples[t * per_frame : (t + 1) * per_frame] += tone
    # white noise at the tone's RMS
    chatter = TONE_AMPLITUDE / np.sqrt(2.0)
    for t in np.flatnonzero(labels == 0):
        samples[t * per_frame : (t + 1) * per_frame] += chatter * rng.standard_normal(per_frame)
    return AudioClip(samples, sample_rate)


def generate_synthetic(
    out_dir: Union[str, Path],
    n_entities: int = 60,
    frame_range: Tuple[int, int] = (20, 60),
    seed: int = 0,
    corrupt_faces: bool = False,
    config: Config = None,
) -> SyntheticDataset:
    """Write a dataset under ``out_dir``; a pure function of the arguments."""
    if n_entities < 1:
        raise ConfigurationError(f"Need at least one entity, got {n_entities}")
    low, high = frame_range
    if not 1 <= low <= high:
        raise ConfigurationError(f"Invalid frame range {frame_range}")
    config = config or Config.get_current_config()
    root = Path(out_dir)
    fps = config.default_fps
    sample_rate = config.sample_rate
    tail = config.window_length

    rng = np.random.default_rng(seed)
    lengths = [int(rng.integers(low, high + 1)) for _ in range(n_entities)]
    all_labels = _labels(rng, lengths)

    rows: List[ManifestRow] = []
    video_ids = []
    for e, labels in enumerate(all_labels):
        video_id, entity_id = f"syn{e:04d}", "p0"
        video_ids.append(video_id)
        for t, face in enumerate(_face_frames(rng, labels, corrupt_faces)):
            save_face(root / config.faces_dir / video_id / entity_id / f"{t:06d}.pgm", face)
        pose_path = root / config.poses_dir / video_id / f"{entity_id}.txt"
        pose_path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(pose_path, _pose_track(rng, labels), fmt="%.6f")
        audio_path = root / config.audio_dir / f"{video_id}.wav"
        audio_path.parent.mkdir(parents=True, exist_ok=True)
        write_wav(audio_path, _audio_track(rng, labels, fps, sample_rate, tail))

        for t, label in enumerate(labels):
            rows.append(
                ManifestRow(
                    video_id=video_id,
                    entity_id=entity_id,
                    frame_timestamp=round(t / fps, 6),
                    face_bbox=FACE_BBOX,
                    body_bbox=BODY_BBOX,
                    label=int(label),
                    category=CATEGORY,
                    fps=fps,
                )
            )

    order = rng.permutation(n_entities)
    n_test = int(round(n_entities * TEST_FRACTION)) if n_entities > 1 else 0
    test_videos = {video_ids[i] for i in order[:n_test]}
    manifest = Manifest(rows, source=str(root / "manifest.csv"))
    train = Manifest([r for r in rows if r.video_id not in test_videos], str(root / "train.csv"))
    test = Manifest([r for r in rows if r.video_id in test_videos], str(root / "test.csv"))
    for part in (manifest, train, test):
        write_manifest(part, part.source)

    dataset = SyntheticDataset(root, manifest, train, test)
    logger.info(
        f"Generated {n_entities} synthetic entities ({len(rows)} frames, "
        f"{dataset.positive_fraction:.1%} speaking) in {root}"
    )
    return dataset
