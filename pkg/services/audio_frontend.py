"""
MFCC front end for the audio encoder.

Mono 16 kHz PCM is turned into 13 cepstral coefficients per 10 ms hop and then
padded or truncated to exactly four vectors per video frame. Sample values are
kept in PCM units; coefficient 0 holds the log energy of each frame.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy.fftpack import dct
from scipy.io import wavfile

from config.config import Config
from core.errors import DataError, MediaError

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-30
VECTORS_PER_FRAME = 4


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise DataError(f"Sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("Audio samples must be finite")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def segment(self, start: float, n_samples: int) -> "AudioClip":
        """``n_samples`` samples from ``start`` seconds on, zero-padded past the end."""
        first = max(int(round(start * self.sample_rate)), 0)
        piece = self.samples[first : first + n_samples]
        if piece.size < n_samples:
            piece = np.pad(piece, (0, n_samples - piece.size))
        return AudioClip(piece, self.sample_rate)


@dataclass
class MfccSettings:
    sample_rate: int = 16000
    window_length: int = 400
    hop_length: int = 160
    n_fft: int = 512
    n_filters: int = 26
    n_coefficients: int = 13
    preemphasis: float = 0.97
    ceplifter: int = 22

    @classmethod
    def from_config(cls, config: Config) -> "MfccSettings":
        return cls(
            sample_rate=config.sample_rate,
            window_length=config.window_length,
            hop_length=config.hop_length,
            n_fft=config.n_fft,
            n_filters=config.n_filters,
            n_coefficients=config.n_coefficients,
            preemphasis=config.preemphasis,
            ceplifter=config.ceplifter,
        )

    def samples_for_frames(self, t_f: int) -> int:
        """Audio length that yields exactly ``4 * t_f`` MFCC vectors."""
        return self.window_length + self.hop_length * (VECTORS_PER_FRAME * t_f - 1)


@dataclass
class MfccMatrix:
    """Coefficients laid out (13, T_a)."""

    coeffs: np.ndarray
    frames_per_video_frame: int = field(default=VECTORS_PER_FRAME)

    @property
    def n_vectors(self) -> int:
        return self.coeffs.shape[1]


def read_wav(path: Union[str, Path], expected_rate: int = 16000) -> AudioClip:
    """Read a mono 16-bit PCM WAV file."""
    path = Path(path)
    if not path.exists():
        raise MediaError(f"Audio file not found: {path}")
    try:
        rate, data = wavfile.read(path)
    except ValueError as e:
        raise MediaError(f"Cannot decode WAV file {path}: {e}") from e
    if rate != expected_rate:
        raise MediaError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if data.ndim != 1:
        raise MediaError(f"{path}: expected mono audio, found {data.shape[1]} channels")
    if data.dtype != np.int16:
        raise MediaError(f"{path}: expected 16-bit PCM samples, found {data.dtype}")
    return AudioClip(data.astype(np.float64), rate)


def write_wav(path: Union[str, Path], clip: AudioClip) -> None:
    samples = np.clip(np.round(clip.samples), -32768, 32767).astype("<i2")
    wavfile.write(path, clip.sample_rate, samples)


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters evenly spaced on the mel scale, (n_filters, n_fft // 2 + 1)."""
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_filters + 2)
    bins = np.floor((n_fft + 1) * mel_to_hz(mel_points) / sample_rate).astype(int)

    bank = np.zeros((n_filters, n_fft // 2 + 1))
    for j in range(n_filters):
        left, centre, right = bins[j], bins[j + 1], bins[j + 2]
        for i in range(left, centre):
            bank[j, i] = (i - left) / (centre - left)
        for i in range(centre, right):
            bank[j, i] = (right - i) / (right - centre)
    return bank


def frame_count(n_samples: int, settings: MfccSettings) -> int:
    if n_samples < settings.window_length:
        return 0
    return 1 + (n_samples - settings.window_length) // settings.hop_length


def compute_mfcc(clip: AudioClip, settings: MfccSettings = None) -> MfccMatrix:
    """Unaligned MFCCs, one 13-vector per hop."""
    settings = settings or MfccSettings()
    if clip.sample_rate != settings.sample_rate:
        raise DataError(
            f"Audio sampled at {clip.sample_rate} Hz, expected {settings.sample_rate} Hz"
        )
    n_frames = frame_count(clip.samples.size, settings)
    if n_frames == 0:
        raise DataError(
            f"Audio of {clip.samples.size} samples is shorter than one "
            f"{settings.window_length}-sample analysis window"
        )

    signal = clip.samples
    emphasized = np.append(signal[0], signal[1:] - settings.preemphasis * signal[:-1])

    starts = np.arange(n_frames) * settings.hop_length
    frames = emphasized[starts[:, None] + np.arange(settings.window_length)[None, :]]
    frames = frames * np.hamming(settings.window_length)

    power = np.abs(np.fft.rfft(frames, settings.n_fft)) ** 2 / settings.n_fft
    energy = np.maximum(power.sum(axis=1), LOG_FLOOR)
    bank = mel_filterbank(settings.n_filters, settings.n_fft, settings.sample_rate)
    filtered = np.maximum(power @ bank.T, LOG_FLOOR)

    ceps = dct(np.log(filtered), type=2, axis=1, norm="ortho")[:, : settings.n_coefficients]
    if settings.ceplifter > 0:
        n = np.arange(ceps.shape[1])
        ceps = ceps * (1 + (settings.ceplifter / 2.0) * np.sin(np.pi * n / settings.ceplifter))
    ceps[:, 0] = np.log(energy)

    return MfccMatrix(coeffs=ceps.T.copy())


def align_to_frames(mfcc: MfccMatrix, t_f: int) -> MfccMatrix:
    """Truncate or zero-pad at the end so the matrix holds exactly 4·t_f vectors."""
    if t_f < 1:
        raise DataError(f"Frame count must be at least 1, got {t_f}")
    target = VECTORS_PER_FRAME * t_f
    coeffs = mfcc.coeffs[:, :target]
    if coeffs.shape[1] < target:
        logger.debug(f"Padding MFCCs from {coeffs.shape[1]} to {target} vectors")
        coeffs = np.pad(coeffs, ((0, 0), (0, target - coeffs.shape[1])))
    return MfccMatrix(coeffs=np.array(coeffs), frames_per_video_frame=VECTORS_PER_FRAME)
