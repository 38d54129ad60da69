"""
Training loop: same-length batches, ADAM with per-epoch learning-rate decay,
temperature annealing, per-epoch checkpoints and metrics.

Outputs below ``out_dir``:

    metrics.jsonl               one JSON object per epoch
    checkpoints/epoch_XX.fblw   weights after every epoch
    best.fblw                   best validation mAP (only with validation clips)
    final.fblw                  weights after the last epoch
    runs.db                     run history (SQLite)
"""

import json
import logging
import math
import uuid
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from filelock import FileLock, Timeout
from tqdm import tqdm

from app.batching import ClipBatch, assemble_batches
from app.evaluation import average_precision
from app.heads import TemperatureSchedule
from app.local_storage import RunStorage
from app.model import ArchitectureSpec, ModelMode, WeightStore, initialize_weights
from app.network import ActiveSpeakerModel
from app.optim import AdamState, adam_step
from config.config import Config
from core.errors import (
    ConfigurationError,
    DataError,
    EmptyInputError,
    NumericError,
    ScheduleError,
    StateError,
    UndefinedMetricError,
)
from graph.skeleton import BodyVariant
from services.media_loader import SampleClip
from services.score_file import ScoreRow, ScoreTrack
from services.weight_file import save_weights


PRECISIONS = ("float32", "float64")


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 30
    lr0: float = 1e-3
    lr_decay: float = 0.05
    frame_cap: int = 2000
    seed: int = 0
    mode: ModelMode = ModelMode.FABULIGHT
    body_variant: BodyVariant = BodyVariant.WHOLE
    face_size: int = 112
    precision: str = "float32"
    show_progress: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", ModelMode(self.mode))
        object.__setattr__(self, "body_variant", BodyVariant(self.body_variant))
        errors = self.validate()
        if errors:
            raise ConfigurationError("; ".join(errors))

    @classmethod
    def from_config(cls, config: Config, **overrides) -> "TrainConfig":
        values = dict(
            max_epochs=config.max_epochs,
            lr0=config.lr0,
            lr_decay=config.lr_decay,
            frame_cap=config.frame_cap,
            seed=config.seed,
            mode=config.mode,
            body_variant=config.body_variant,
            face_size=config.face_size,
            precision=config.precision,
            show_progress=config.show_progress,
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def validate(self) -> List[str]:
        errors = []
        if not 1 <= self.max_epochs <= TemperatureSchedule().max_epoch:
            errors.append(f"max_epochs must lie in [1, 30], got {self.max_epochs}")
        if not self.lr0 > 0:
            errors.append(f"lr0 must be positive, got {self.lr0}")
        if not 0 <= self.lr_decay < 1:
            errors.append(f"lr_decay must lie in [0, 1), got {self.lr_decay}")
        if self.frame_cap < 1:
            errors.append(f"frame_cap must be at least 1, got {self.frame_cap}")
        if self.precision not in PRECISIONS:
            errors.append(f"precision must be one of {PRECISIONS}, got '{self.precision}'")
        return errors

    @property
    def spec(self) -> ArchitectureSpec:
        return ArchitectureSpec(self.mode, self.body_variant, self.face_size)

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.precision)

    def to_json(self) -> str:
        values = asdict(self)
        values.update(mode=self.mode.value, body_variant=self.body_variant.value)
        return json.dumps(values, sort_keys=True)


def learning_rate(epoch: int, config: TrainConfig) -> float:
    """lr0 · (1 - decay)^(epoch - 1) for epochs 1..max_epochs."""
    if not 1 <= epoch <= config.max_epochs:
        raise ScheduleError(f"Epoch {epoch} outside 1..{config.max_epochs}")
    return config.lr0 * (1.0 - config.lr_decay) ** (epoch - 1)


@dataclass
class EpochMetrics:
    epoch: int
    losses: Dict[str, float]
    total: float
    lr: float
    tau: float
    batches: int
    val_map: Optional[float] = None

    def as_record(self) -> Dict[str, object]:
        return asdict(self)


@dataclass
class TrainResult:
    store: WeightStore
    metrics: List[EpochMetrics] = field(default_factory=list)
    best_epoch: Optional[int] = None
    run_id: str = ""


def _check_finite(value: float, epoch: int, batch: int, head: str, keys) -> None:
    if not math.isfinite(value):
        raise NumericError(
            f"Non-finite loss {value} at epoch {epoch}, batch {batch}, head '{head}' "
            f"(clips {', '.join(f'{v}/{e}' for v, e in keys)})"
        )


def score_clips(
    model: ActiveSpeakerModel,
    clips: Sequence[SampleClip],
    frame_cap: int,
    show_progress: bool = False,
) -> ScoreTrack:
    """Main-head probabilities at τ = 1 for every frame of ``clips``, in clip order."""
    rows: List[ScoreRow] = []
    per_clip: Dict[int, np.ndarray] = {}
    index = {id(clip): i for i, clip in enumerate(clips)}
    cap = max([frame_cap] + [clip.frames for clip in clips])
    groups = assemble_batches(clips, cap, seed=0)
    for group in tqdm(groups, desc="Scoring", ncols=100, disable=not show_progress, leave=False):
        batch = ClipBatch.from_clips(group)
        probs = model.probabilities(batch)["main"].numpy()
        for clip, p in zip(group, probs):
            per_clip[index[id(clip)]] = p
    for i, clip in enumerate(clips):
        video_id, entity_id = clip.key
        timestamps = clip.timestamps or tuple(range(clip.frames))
        for t in range(clip.frames):
            rows.append(
                ScoreRow(
                    video_id=video_id,
                    entity_id=entity_id,
                    frame_timestamp=float(timestamps[t]),
                    probability=float(np.clip(per_clip[i][t], 0.0, 1.0)),
                    label=int(clip.labels[t]),
                    category=clip.category,
                )
            )
    return ScoreTrack(rows)


class Trainer:
    """Runs one training job and writes its artefacts."""

    def __init__(
        self,
        config: TrainConfig,
        out_dir: Optional[Union[str, Path]] = None,
        run_id: Optional[str] = None,
    ):
        self.logger = logging.getLogger(__name__)
        self.config = config
        self.out_dir = Path(out_dir) if out_dir else None
        self.run_id = run_id or uuid.uuid4().hex[:12]
        self.schedule = TemperatureSchedule()
        self.storage: Optional[RunStorage] = None

    # Artefacts
    def _open_outputs(self):
        if self.out_dir is None:
            return
        (self.out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        (self.out_dir / "metrics.jsonl").write_text("", encoding="utf-8")
        self.storage = RunStorage(self.out_dir / "runs.db")
        if not self.storage.migrate_database():
            raise StateError(f"Cannot initialise run history in {self.out_dir}")
        self.storage.runs.start_run(
            self.run_id,
            self.config.mode.value,
            self.config.body_variant.value,
            self.config.seed,
            self.config.to_json(),
        )

    def _write_epoch(self, store: WeightStore, metrics: EpochMetrics) -> Optional[Path]:
        if self.out_dir is None:
            return None
        checkpoint = self.out_dir / "checkpoints" / f"epoch_{metrics.epoch:02d}.fblw"
        save_weights(store, checkpoint)
        with open(self.out_dir / "metrics.jsonl", "a", encoding="utf-8") as f:
            f.write(json.dumps(metrics.as_record(), sort_keys=True) + "\n")
        self.storage.runs.record_epoch(
            self.run_id,
            metrics.epoch,
            metrics.losses,
            metrics.lr,
            metrics.tau,
            metrics.val_map,
            str(checkpoint),
        )
        return checkpoint

    # Loop
    def _run_epoch(
        self,
        epoch: int,
        model: ActiveSpeakerModel,
        params,
        state: AdamState,
        clips: Sequence[SampleClip],
        rng: np.random.Generator,
    ) -> EpochMetrics:
        tau = self.schedule(epoch)
        lr = learning_rate(epoch, self.config)
        batches = assemble_batches(clips, self.config.frame_cap, rng=rng)

        sums: Dict[str, float] = defaultdict(float)
        total_sum, n_clips = 0.0, 0
        progress = tqdm(
            enumerate(batches),
            total=len(batches),
            desc=f"Epoch {epoch}",
            ncols=100,
            disable=not self.config.show_progress,
            leave=False,
        )
        for b, group in progress:
            batch = ClipBatch.from_clips(group)
            total, losses = model.loss(batch, tau)
            for head, loss in losses.items():
                _check_finite(loss.item(), epoch, b, head, batch.keys)
            _check_finite(total.item(), epoch, b, "total", batch.keys)
            total.backward()
            adam_step(params, state, lr)

            for head, loss in losses.items():
                sums[head] += loss.item() * batch.size
            total_sum += total.item() * batch.size
            n_clips += batch.size
            progress.set_postfix(loss=f"{total.item():.4f}")

        return EpochMetrics(
            epoch=epoch,
            losses={head: value / n_clips for head, value in sums.items()},
            total=total_sum / n_clips,
            lr=lr,
            tau=tau,
            batches=len(batches),
        )

    def _validate(self, model: ActiveSpeakerModel, clips: Sequence[SampleClip]) -> float:
        track = score_clips(model, clips, self.config.frame_cap)
        return average_precision(track.probabilities, track.labels)

    def train(
        self,
        clips: Sequence[SampleClip],
        validation: Sequence[SampleClip] = (),
        store: Optional[WeightStore] = None,
    ) -> TrainResult:
        if not clips:
            raise EmptyInputError("Training needs at least one clip")
        longest = max(clips, key=lambda c: c.frames)
        if longest.frames > self.config.frame_cap:
            raise DataError(
                f"Clip {longest.name} has {longest.frames} frames, "
                f"more than the frame cap {self.config.frame_cap}"
            )

        spec = self.config.spec
        store = store or initialize_weights(spec, self.config.seed, self.config.dtype)
        model = ActiveSpeakerModel(store, self.config.mode)
        params = model.parameters()
        state = AdamState()
        rng = np.random.default_rng(self.config.seed)
        result = TrainResult(store=store, run_id=self.run_id)
        best_map = -1.0

        self._open_outputs()
        self.logger.info(
            f"Training {spec.name} ({len(params)} parameter arrays) on {len(clips)} clips, "
            f"{self.config.max_epochs} epochs, seed {self.config.seed}"
        )
        store.set_training(True)
        try:
            for epoch in range(1, self.config.max_epochs + 1):
                metrics = self._run_epoch(epoch, model, params, state, clips, rng)
                if validation:
                    try:
                        metrics.val_map = self._validate(model, validation)
                    except UndefinedMetricError as e:
                        self.logger.warning(f"Validation mAP undefined at epoch {epoch}: {e}")
                self._write_epoch(store, metrics)
                result.metrics.append(metrics)

                heads = ", ".join(f"{h}={v:.4f}" for h, v in metrics.losses.items())
                val = f", val mAP {metrics.val_map:.4f}" if metrics.val_map is not None else ""
                self.logger.info(
                    f"Epoch {epoch}: total {metrics.total:.4f} ({heads}), "
                    f"lr {metrics.lr:.3e}, tau {metrics.tau:.2f}{val}"
                )
                if metrics.val_map is not None and metrics.val_map > best_map:
                    best_map = metrics.val_map
                    result.best_epoch = epoch
                    if self.out_dir is not None:
                        save_weights(store, self.out_dir / "best.fblw")
        except Exception as e:
            self.logger.error(f"Training aborted: {e}")
            if self.storage:
                self.storage.runs.finish_run(self.run_id, "failed", result.best_epoch, str(e))
                self.storage.close()
            raise
        finally:
            store.set_training(False)

        if self.out_dir is not None:
            save_weights(store, self.out_dir / "final.fblw")
            self.storage.runs.finish_run(self.run_id, "completed", result.best_epoch)
            self.storage.close()
        return result


def train(
    clips: Sequence[SampleClip],
    config: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
    validation: Sequence[SampleClip] = (),
) -> TrainResult:
    """Train from scratch; with ``out_dir`` the directory is locked for the run."""
    trainer = Trainer(config, out_dir)
    if out_dir is None:
        return trainer.train(clips, validation)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    try:
        with FileLock(str(Path(out_dir) / "train.lock"), timeout=1):
            return trainer.train(clips, validation)
    except Timeout:
        raise StateError(f"Another training run is writing to {out_dir}") from None
