"""
FabuLight-ASD application object.

One method per command-line subcommand; each returns the text it would print
so callers (and tests) can use it without a terminal.

Commands:
    train          train a model from a manifest and media root
    infer          write per-frame speaking probabilities for a manifest
    analyze        parameter and MAC counts of a configuration
    eval           mAP of a score file, optionally per category
    synth          generate the seeded synthetic dataset
    inspect-graph  print a skeleton and its partitioned adjacency
"""

import json
import logging
from pathlib import Path
from typing import Optional

from app.efficiency import analyze, render_report
from app.evaluation import evaluate, render_evaluation
from app.inference import load_clips, run_inference
from app.model import ArchitectureSpec, ModelMode
from app.synthetic import generate_synthetic
from app.trainer import TrainConfig, train
from config.config import Config
from core.errors import ConfigurationError
from graph.skeleton import build_partition, build_topology, render_graph_report
from services.manifest import load_manifest
from services.score_file import read_scores


class FabuLightApp:
    """Coordinates configuration, logging and the command implementations."""

    def __init__(self, config: Optional[Config] = None):
        self.config = config or Config.get_current_config()
        Config.set_current_config(self.config)
        self.setup_logging()

        config_errors = self.config.validate_config()
        if config_errors:
            raise ConfigurationError(
                "Configuration errors found:\n" + "\n".join(f"  - {e}" for e in config_errors)
            )

    def setup_logging(self):
        """Console logging plus a file handler when ``logging.file`` is configured."""
        log_format = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
        handlers = [logging.StreamHandler()]
        if self.config.log_file:
            Path(self.config.log_file).parent.mkdir(parents=True, exist_ok=True)
            handlers.append(logging.FileHandler(self.config.log_file))
        logging.basicConfig(
            level=getattr(logging, str(self.config.log_level).upper()),
            format=log_format,
            handlers=handlers,
        )
        self.logger = logging.getLogger(__name__)

    def train(
        self,
        manifest: str,
        media_root: str,
        out_dir: str,
        mode: Optional[str] = None,
        body: Optional[str] = None,
        seed: Optional[int] = None,
        epochs: Optional[int] = None,
        val_manifest: Optional[str] = None,
    ) -> str:
        train_config = TrainConfig.from_config(
            self.config, mode=mode, body_variant=body, seed=seed, max_epochs=epochs
        )
        clips = load_clips(
            load_manifest(manifest),
            media_root,
            train_config.body_variant,
            train_config.face_size,
            self.config,
        )
        validation = []
        if val_manifest:
            validation = load_clips(
                load_manifest(val_manifest),
                media_root,
                train_config.body_variant,
                train_config.face_size,
                self.config,
            )
        result = train(clips, train_config, out_dir, validation)
        last = result.metrics[-1]
        summary = (
            f"Trained {train_config.spec.name} for {last.epoch} epochs, "
            f"final loss {last.total:.4f}"
        )
        if result.best_epoch is not None:
            summary += f", best validation epoch {result.best_epoch}"
        return summary + f"\nOutputs in {out_dir}"

    def infer(self, weights: str, manifest: str, media_root: str, out: str) -> str:
        track = run_inference(weights, load_manifest(manifest), media_root, out, self.config)
        return f"Wrote {len(track)} frame scores to {out}"

    def analyze(
        self, mode: str = "fabulight", body: str = "whole", frames: Optional[int] = None
    ) -> str:
        spec = ArchitectureSpec(ModelMode(mode), body, self.config.face_size)
        reports = analyze(spec, frames or self.config.reference_frames)
        return render_report(reports["report"], reports["baseline"])

    def evaluate(self, scores: str, by_category: bool = False) -> str:
        report = evaluate(read_scores(scores), self.config.categories)
        return render_evaluation(report, by_category)

    def synth(
        self,
        out_dir: str,
        entities: int = 60,
        seed: int = 0,
        min_frames: int = 20,
        max_frames: int = 60,
        corrupt_faces: bool = False,
    ) -> str:
        dataset = generate_synthetic(
            out_dir, entities, (min_frames, max_frames), seed, corrupt_faces, self.config
        )
        return json.dumps(
            {
                "root": str(dataset.root),
                "entities": entities,
                "frames": len(dataset.manifest),
                "speaking_fraction": round(dataset.positive_fraction, 4),
                "train_entities": len(dataset.train.entities()),
                "test_entities": len(dataset.test.entities()),
            },
            indent=2,
        )

    def inspect_graph(self, body: str = "whole", radius: int = 1) -> str:
        topology = build_topology(body)
        return render_graph_report(topology, build_partition(topology, radius))
