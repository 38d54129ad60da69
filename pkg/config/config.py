"""
Configuration Management for the FabuLight-ASD toolkit

This module keeps every tunable of the repository in one YAML-backed object:

Singleton Pattern:
    - Single configuration instance across the process
    - Lazy initialization on first access
    - Replaceable for tests and for the ``--config`` command-line flag

Configuration Sources:
    - Explicit file passed to ``Config(config_file)``
    - ``$FABULIGHT_CONFIG`` environment variable
    - ``~/.fabulight-asd/config.yaml``
    - Built-in defaults when no file exists

Configuration Sections:
    - model: architecture choices (mode, body variant, face size, precision)
    - audio: MFCC front-end parameters
    - training: optimiser schedule, batching, seeding, progress display
    - data: media layout defaults
    - evaluation: category list and profiler reference length
    - logging: level and optional log file

Usage:
    from config.config import Config
    config = Config.get_current_config()
    frame_cap = config.frame_cap
"""

import copy
import logging
import os
from functools import wraps
from pathlib import Path
from typing import Any, List, Optional

import yaml

ENV_VAR = "FABULIGHT_CONFIG"
APP_NAME = "fabulight-asd"

DEFAULT_CONFIG = {
    "model": {
        "mode": "fabulight",
        "body_variant": "whole",
        "face_size": 112,
        "precision": "float32",
    },
    "audio": {
        "sample_rate": 16000,
        "window_length": 400,
        "hop_length": 160,
        "n_fft": 512,
        "n_filters": 26,
        "n_coefficients": 13,
        "preemphasis": 0.97,
        "ceplifter": 22,
        "fps": 25.0,
    },
    "training": {
        "max_epochs": 30,
        "lr0": 1e-3,
        "lr_decay": 0.05,
        "frame_cap": 2000,
        "seed": 0,
        "prefetch_queue_size": 4,
        "show_progress": True,
    },
    "data": {
        "faces_dir": "faces",
        "poses_dir": "poses",
        "audio_dir": "audio",
    },
    "evaluation": {
        "categories": ["OC", "SI", "FO", "HVN", "SS", "synthetic"],
        "reference_frames": 100,
    },
    "logging": {
        "level": "INFO",
        "file": None,
    },
}


def safe_config_get(default_value: Any):
    """Decorator for config properties that falls back to ``default_value``.

    Older or hand-written config files may lack a key; the property then
    returns the default instead of raising.
    """

    def decorator(func):
        @wraps(func)
        def wrapper(self):
            try:
                return func(self)
            except (KeyError, TypeError):
                return default_value

        return wrapper

    return decorator


class Config:
    """
    Singleton configuration manager.

    Properties are read-only views over ``config_data``; callers that need
    different values (tests, command-line overrides) construct a new Config
    and install it with ``set_current_config``.
    """

    def __init__(self, config_file=None, overrides: Optional[dict] = None):
        """Initialize configuration.

        Args:
            config_file (str): Path to configuration file. If None, the
                environment variable or the per-user default is used.
            overrides (dict): Section-keyed values merged over the file.
        """
        if config_file is None:
            config_file = os.environ.get(ENV_VAR) or self.get_app_config_folder() / "config.yaml"

        self.config_file = Path(config_file)
        self.config_data = self.load_config()
        if overrides:
            for section, values in overrides.items():
                self.config_data.setdefault(section, {}).update(values)

    def get_app_config_folder(self) -> Path:
        """Get the per-user configuration folder."""
        return Path.home() / f".{APP_NAME}"

    def load_config(self) -> dict:
        """Load configuration from file, layered over the defaults."""
        data = self.get_default_config()
        if self.config_file.exists():
            with open(self.config_file, "r", encoding="utf-8") as f:
                loaded = yaml.safe_load(f) or {}
            for section, values in loaded.items():
                if isinstance(values, dict):
                    data.setdefault(section, {}).update(values)
                else:
                    data[section] = values
        return data

    def save_config(self):
        """Save current configuration to file."""
        self.config_file.parent.mkdir(parents=True, exist_ok=True)

        with open(self.config_file, "w", encoding="utf-8") as f:
            yaml.dump(self.config_data, f, default_flow_style=False, indent=2)

    def get_default_config(self) -> dict:
        return copy.deepcopy(DEFAULT_CONFIG)

    # Model
    @property
    def mode(self) -> str:
        return self.config_data["model"]["mode"]

    @property
    def body_variant(self) -> str:
        return self.config_data["model"]["body_variant"]

    @property
    def face_size(self) -> int:
        """Edge length of the square greyscale face crops fed to the face encoder."""
        return int(self.config_data["model"]["face_size"])

    @property
    @safe_config_get("float32")
    def precision(self) -> str:
        return self.config_data["model"]["precision"]

    # Audio
    @property
    def sample_rate(self) -> int:
        return int(self.config_data["audio"]["sample_rate"])

    @property
    def window_length(self) -> int:
        return int(self.config_data["audio"]["window_length"])

    @property
    def hop_length(self) -> int:
        return int(self.config_data["audio"]["hop_length"])

    @property
    def n_fft(self) -> int:
        return int(self.config_data["audio"]["n_fft"])

    @property
    def n_filters(self) -> int:
        return int(self.config_data["audio"]["n_filters"])

    @property
    def n_coefficients(self) -> int:
        return int(self.config_data["audio"]["n_coefficients"])

    @property
    def preemphasis(self) -> float:
        return float(self.config_data["audio"]["preemphasis"])

    @property
    @safe_config_get(22)
    def ceplifter(self) -> int:
        return int(self.config_data["audio"]["ceplifter"])

    @property
    @safe_config_get(25.0)
    def default_fps(self) -> float:
        """Video frame rate assumed by the synthetic generator."""
        return float(self.config_data["audio"]["fps"])

    # Training
    @property
    def max_epochs(self) -> int:
        return int(self.config_data["training"]["max_epochs"])

    @property
    def lr0(self) -> float:
        return float(self.config_data["training"]["lr0"])

    @property
    def lr_decay(self) -> float:
        return float(self.config_data["training"]["lr_decay"])

    @property
    def frame_cap(self) -> int:
        return int(self.config_data["training"]["frame_cap"])

    @property
    def seed(self) -> int:
        return int(self.config_data["training"]["seed"])

    @property
    @safe_config_get(4)
    def prefetch_queue_size(self) -> int:
        """Capacity of the bounded queue between the clip loader thread and the trainer."""
        return int(self.config_data["training"]["prefetch_queue_size"])

    @property
    @safe_config_get(True)
    def show_progress(self) -> bool:
        return bool(self.config_data["training"]["show_progress"])

    # Data
    @property
    @safe_config_get("faces")
    def faces_dir(self) -> str:
        return self.config_data["data"]["faces_dir"]

    @property
    @safe_config_get("poses")
    def poses_dir(self) -> str:
        return self.config_data["data"]["poses_dir"]

    @property
    @safe_config_get("audio")
    def audio_dir(self) -> str:
        return self.config_data["data"]["audio_dir"]

    # Evaluation
    @property
    @safe_config_get(["OC", "SI", "FO", "HVN", "SS", "synthetic"])
    def categories(self) -> List[str]:
        return list(self.config_data["evaluation"]["categories"])

    @property
    @safe_config_get(100)
    def reference_frames(self) -> int:
        return int(self.config_data["evaluation"]["reference_frames"])

    # Logging
    @property
    @safe_config_get("INFO")
    def log_level(self) -> str:
        return self.config_data["logging"]["level"]

    @property
    @safe_config_get(None)
    def log_file(self) -> Optional[Path]:
        value = self.config_data["logging"]["file"]
        return Path(value) if value else None

    def validate_config(self) -> List[str]:
        """
        Check every value against its allowed domain.

        Returns:
            list: Validation error messages. Empty list if all validations pass.

        Usage:
            errors = config.validate_config()
            if errors:
                for error in errors:
                    print(f"Config error: {error}")
        """
        errors = []

        if self.mode not in ("fabulight", "lightasd"):
            errors.append(f"Model mode must be 'fabulight' or 'lightasd', got '{self.mode}'")
        if self.body_variant not in ("whole", "upper"):
            errors.append(f"Body variant must be 'whole' or 'upper', got '{self.body_variant}'")
        if self.face_size < 16 or self.face_size % 8:
            errors.append("Face size must be at least 16 and divisible by 8")
        if self.precision not in ("float32", "float64"):
            errors.append("Precision must be 'float32' or 'float64'")

        if self.sample_rate != 16000:
            errors.append("Audio sample rate must be 16000 Hz")
        if self.n_coefficients != 13:
            errors.append("The audio encoder expects exactly 13 MFCC coefficients")
        if self.hop_length <= 0 or self.window_length < self.hop_length:
            errors.append("Audio window must be at least one hop long and the hop positive")

        if self.lr0 <= 0:
            errors.append("Initial learning rate must be positive")
        if not 0 <= self.lr_decay < 1:
            errors.append("Learning-rate decay must lie in [0, 1)")
        if not 1 <= self.max_epochs <= 30:
            errors.append("Maximum epochs must lie in [1, 30] for the temperature schedule")
        if self.frame_cap < 1:
            errors.append("Frame cap must be at least 1")
        if self.prefetch_queue_size < 1:
            errors.append("Prefetch queue size must be at least 1")

        if not isinstance(logging.getLevelName(str(self.log_level).upper()), int):
            errors.append(f"Unknown log level '{self.log_level}'")

        return errors

    @staticmethod
    def get_current_config() -> "Config":
        """
        Get the current configuration instance.

        The configuration is a singleton instance of the Config class.
        """
        if not hasattr(Config, "_instance"):
            setattr(Config, "_instance", Config())

        return getattr(Config, "_instance")

    @staticmethod
    def set_current_config(config: "Config") -> None:
        setattr(Config, "_instance", config)
