"""
Same-length batch assembly and a bounded clip prefetcher.

Clips are only ever batched with clips of identical frame count; within each
length group they are packed greedily, in seeded shuffled order, up to the
frame cap.
"""

import logging
import queue
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import DataError, EmptyInputError
from services.media_loader import SampleClip
from services.manifest import EntityKey

logger = logging.getLogger(__name__)


@dataclass
class ClipBatch:
    """Clips of one frame count stacked on a leading N axis."""

    faces: np.ndarray  # (N, 1, S, S, T)
    mfcc: np.ndarray  # (N, 1, 13, 4T)
    poses: np.ndarray  # (N, 3, N_b, T)
    labels: np.ndarray  # (N, T)
    keys: Tuple[EntityKey, ...]
    categories: Tuple[str, ...]
    timestamps: Tuple[Tuple[float, ...], ...]

    @classmethod
    def from_clips(cls, clips: Sequence[SampleClip]) -> "ClipBatch":
        if not clips:
            raise EmptyInputError("Cannot batch zero clips")
        frames = {clip.frames for clip in clips}
        if len(frames) != 1:
            raise DataError(f"Batch mixes frame counts {sorted(frames)}")
        return cls(
            faces=np.stack([clip.faces for clip in clips]),
            mfcc=np.stack([clip.mfcc for clip in clips]),
            poses=np.stack([clip.poses for clip in clips]),
            labels=np.stack([clip.labels for clip in clips]),
            keys=tuple(clip.key for clip in clips),
            categories=tuple(clip.category for clip in clips),
            timestamps=tuple(clip.timestamps for clip in clips),
        )

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])

    @property
    def frames(self) -> int:
        return int(self.labels.shape[1])


def assemble_batches(
    clips: Sequence[SampleClip],
    frame_cap: int,
    rng: Optional[np.random.Generator] = None,
    seed: int = 0,
) -> List[List[SampleClip]]:
    """Partition ``clips`` into same-length batches of at most ``frame_cap`` summed frames.

    Length groups are visited in ascending frame count; the order inside a
    group comes from ``rng`` (or a generator seeded with ``seed``).
    """
    if frame_cap < 1:
        raise DataError(f"frame_cap must be at least 1, got {frame_cap}")
    for clip in clips:
        if clip.frames > frame_cap:
            raise DataError(
                f"Clip {clip.name} has {clip.frames} frames, more than the frame cap {frame_cap}"
            )

    rng = rng if rng is not None else np.random.default_rng(seed)
    groups: Dict[int, List[SampleClip]] = OrderedDict()
    for clip in clips:
        groups.setdefault(clip.frames, []).append(clip)

    batches: List[List[SampleClip]] = []
    for frames in sorted(groups):
        group = groups[frames]
        order = rng.permutation(len(group))
        per_batch = frame_cap // frames
        current: List[SampleClip] = []
        for index in order:
            current.append(group[index])
            if len(current) == per_batch:
                batches.append(current)
                current = []
        if current:
            batches.append(current)

    logger.debug(f"Assembled {len(clips)} clips into {len(batches)} batches (cap {frame_cap})")
    return batches


_DONE = object()


class ClipPrefetcher:
    """
    Loads clips on a background thread ahead of the consumer.

    Items are handed over through a bounded queue in submission order, so a
    training loop sees exactly the sequence it would see loading inline. A load
    failure is re-raised in the consuming thread.
    """

    def __init__(
        self,
        load: Callable[[object], SampleClip],
        items: Sequence[object],
        queue_size: int = 4,
    ):
        self.logger = logging.getLogger(__name__)
        self.load = load
        self.items = list(items)
        self.queue: "queue.Queue" = queue.Queue(maxsize=max(1, queue_size))
        self.running = False
        self.worker_thread: Optional[threading.Thread] = None

    def start(self):
        if self.running:
            self.logger.warning("Clip prefetcher already running")
            return
        self.running = True
        self.worker_thread = threading.Thread(target=self._worker_loop, daemon=True)
        self.worker_thread.start()
        self.logger.debug(f"Clip prefetcher started for {len(self.items)} items")

    def stop(self):
        if not self.running:
            return
        self.running = False
        # unblock a producer waiting on a full queue
        while True:
            try:
                self.queue.get_nowait()
            except queue.Empty:
                break
        if self.worker_thread and self.worker_thread.is_alive():
            self.worker_thread.join(timeout=5)
        self.logger.debug("Clip prefetcher stopped")

    def _put(self, value) -> bool:
        while self.running:
            try:
                self.queue.put(value, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _worker_loop(self):
        try:
            for item in self.items:
                if not self.running:
                    return
                try:
                    value = self.load(item)
                except Exception as e:
                    self._put(e)
                    return
                if not self._put(value):
                    return
        finally:
            self._put(_DONE)

    def __iter__(self) -> Iterator[SampleClip]:
        self.start()
        try:
            while True:
                value = self.queue.get()
                if value is _DONE:
                    return
                if isinstance(value, Exception):
                    self.logger.error(f"Clip loading failed: {value}")
                    raise value
                yield value
        finally:
            self.stop()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.stop()
