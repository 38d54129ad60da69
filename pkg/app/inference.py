"""
Score every frame of a manifest with a trained model (main head, τ = 1).
"""

import logging
from pathlib import Path
from typing import List, Optional, Union

from app.batching import ClipPrefetcher
from app.network import ActiveSpeakerModel
from app.trainer import score_clips
from config.config import Config
from services.manifest import Manifest
from services.media_loader import MediaLoader, SampleClip
from services.score_file import ScoreTrack, write_scores
from services.weight_file import load_weights

logger = logging.getLogger(__name__)


def load_clips(
    manifest: Manifest,
    media_root: Union[str, Path],
    body_variant,
    face_size: int,
    config: Config = None,
) -> List[SampleClip]:
    """Every entity of ``manifest`` as a SampleClip, loaded on a prefetch thread."""
    config = config or Config.get_current_config()
    loader = MediaLoader(media_root, body_variant, face_size, config)
    groups = list(manifest.entities().values())
    prefetcher = ClipPrefetcher(loader.load_clip, groups, config.prefetch_queue_size)
    clips = list(prefetcher)
    logger.info(f"Loaded {len(clips)} clips ({sum(c.frames for c in clips)} frames)")
    return clips


def run_inference(
    weights: Union[str, Path],
    manifest: Manifest,
    media_root: Union[str, Path],
    out_path: Optional[Union[str, Path]] = None,
    config: Config = None,
) -> ScoreTrack:
    config = config or Config.get_current_config()
    store = load_weights(weights)
    spec = store.spec
    clips = load_clips(manifest, media_root, spec.body_variant, spec.face_size, config)
    model = ActiveSpeakerModel(store)
    track = score_clips(model, clips, config.frame_cap, config.show_progress)
    if out_path is not None:
        write_scores(track, out_path)
    return track
