"""Feature extraction: radix-2 FFT, STFT power, HTK mel filterbank, log-mel, MFCC.

All arithmetic is float64. Functions take and return plain numpy arrays;
the transformer classes at the bottom wrap them in the scikit-learn
estimator protocol so they can sit inside a ``Pipeline``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .audio_io import AudioClip
from .errors import ClipTooShort, DegenerateFilter

DEFAULT_N_MFCC = 20


@dataclass(frozen=True)
class StftConfig:
    frame_len: int = 1024
    hop_len: int = 256
    window: str = "hann"
    pad_mode: str = "reflect"

    def __post_init__(self):
        if self.frame_len < 2 or self.frame_len & (self.frame_len - 1):
            raise ValueError("frame_len must be a power of two >= 2")
        if not 0 < self.hop_len <= self.frame_len:
            raise ValueError("hop_len must satisfy 0 < hop_len <= frame_len")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")
        if self.pad_mode != "reflect":
            raise ValueError(f"unsupported pad mode {self.pad_mode!r}")

    @property
    def n_fft_bins(self) -> int:
        return self.frame_len // 2 + 1


@dataclass(frozen=True)
class MelConfig:
    n_mels: int = 128
    f_min_hz: float = 0.0
    f_max_hz: float | None = None  # None -> Nyquist
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.n_mels < 2:
            raise ValueError("n_mels must be >= 2")
        if self.f_min_hz < 0:
            raise ValueError("f_min_hz must be >= 0")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be > 0")

    def resolve_fmax(self, sample_rate_hz) -> float:
        nyquist = sample_rate_hz / 2.0
        f_max = nyquist if self.f_max_hz is None else float(self.f_max_hz)
        if not self.f_min_hz < f_max <= nyquist:
            raise ValueError(f"need f_min < f_max <= {nyquist} Hz, got [{self.f_min_hz}, {f_max}]")
        return f_max


def hz_to_mel(f):
    """HTK mel scale, 2595 * log10(1 + f / 700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


# -- FFT -------------------------------------------------------------------

_BITREV_CACHE: dict[int, np.ndarray] = {}


def _bit_reverse_indices(n: int) -> np.ndarray:
    idx = _BITREV_CACHE.get(n)
    if idx is None:
        bits = n.bit_length() - 1
        idx = np.zeros(n, dtype=np.intp)
        ar = np.arange(n)
        for b in range(bits):
            idx |= ((ar >> b) & 1) << (bits - 1 - b)
        _BITREV_CACHE[n] = idx
    return idx


def fft(x) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT over the last axis.

    Leading axes are treated as a batch. Length must be a power of two.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValueError("FFT length must be a power of two")
    batch = x.shape[:-1]
    out = x[..., _bit_reverse_indices(n)].reshape(-1, n)
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(out.shape[0], n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(-1, n)
        size *= 2
    return out.reshape(*batch, n)


def rfft(x) -> np.ndarray:
    """Non-negative-frequency half of :func:`fft` for real input."""
    x = np.asarray(x, dtype=np.float64)
    return fft(x)[..., : x.shape[-1] // 2 + 1]


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window (DFT-even), the usual choice for STFT analysis."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


# -- spectrograms ----------------------------------------------------------

def _samples_of(clip):
    return clip.samples if isinstance(clip, AudioClip) else np.asarray(clip, dtype=np.float64)


def frame_signal(samples, cfg: StftConfig) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] < 2:
        raise ClipTooShort(f"need at least 2 samples, got {samples.shape[0]}")
    pad = cfg.frame_len // 2
    padded = np.pad(samples, (pad, pad), mode="reflect")
    n_frames = 1 + samples.shape[0] // cfg.hop_len
    starts = np.arange(n_frames) * cfg.hop_len
    return padded[starts[:, None] + np.arange(cfg.frame_len)[None, :]]


def stft_power(clip, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """|STFT|^2 of a clip, shape (frames, frame_len // 2 + 1).

    Frames are centred by reflect-padding frame_len/2 samples at each end,
    giving ``1 + len // hop`` frames.
    """
    frames = frame_signal(_samples_of(clip), cfg) * hann_window(cfg.frame_len)
    spec = rfft(frames)
    return spec.real ** 2 + spec.imag ** 2


def build_mel_filterbank(cfg: MelConfig, sample_rate_hz, n_fft_bins) -> np.ndarray:
    """Triangular HTK-mel filters, shape (n_mels, n_fft_bins), unnormalised."""
    f_max = cfg.resolve_fmax(sample_rate_hz)
    frame_len = 2 * (n_fft_bins - 1)
    bin_hz = np.arange(n_fft_bins) * (sample_rate_hz / frame_len)
    mel_pts = np.linspace(hz_to_mel(cfg.f_min_hz), hz_to_mel(f_max), cfg.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    left, center, right = hz_pts[:-2, None], hz_pts[1:-1, None], hz_pts[2:, None]
    rising = (bin_hz[None, :] - left) / (center - left)
    falling = (right - bin_hz[None, :]) / (right - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(weights.sum(axis=1) <= 0.0)
    if empty.size:
        raise DegenerateFilter(
            f"{empty.size} of {cfg.n_mels} mel filters cover no FFT bin "
            f"(first: filter {empty[0]}); reduce n_mels or increase frame_len")
    return weights


def mel_center_frequencies(cfg: MelConfig, sample_rate_hz) -> np.ndarray:
    f_max = cfg.resolve_fmax(sample_rate_hz)
    mel_pts = np.linspace(hz_to_mel(cfg.f_min_hz), hz_to_mel(f_max), cfg.n_mels + 2)
    return mel_to_hz(mel_pts[1:-1])


def _sample_rate_of(clip, sample_rate_hz):
    if isinstance(clip, AudioClip):
        return clip.sample_rate_hz
    if sample_rate_hz is None:
        raise ValueError("sample_rate_hz is required for raw sample arrays")
    return sample_rate_hz


def log_mel_spectrogram(clip, stft_cfg: StftConfig = StftConfig(), mel_cfg: MelConfig = MelConfig(),
                        sample_rate_hz=None) -> np.ndarray:
    """Natural-log mel energies, shape (frames, n_mels), floored at ``log_floor``."""
    sr = _sample_rate_of(clip, sample_rate_hz)
    power = stft_power(clip, stft_cfg)
    fb = build_mel_filterbank(mel_cfg, sr, stft_cfg.n_fft_bins)
    return np.log(np.maximum(power @ fb.T, mel_cfg.log_floor))


def dct2_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Orthonormal DCT-II basis, shape (n_out, n_in)."""
    if not 1 <= n_out <= n_in:
        raise ValueError("need 1 <= n_out <= n_in")
    k = np.arange(n_out)[:, None]
    j = np.arange(n_in)[None, :]
    basis = np.cos(np.pi * k * (2 * j + 1) / (2 * n_in))
    basis[0] *= np.sqrt(1.0 / n_in)
    basis[1:] *= np.sqrt(2.0 / n_in)
    return basis


def mfcc(clip, stft_cfg: StftConfig = StftConfig(), mel_cfg: MelConfig = MelConfig(),
         n_mfcc: int = DEFAULT_N_MFCC, sample_rate_hz=None) -> np.ndarray:
    if n_mfcc > mel_cfg.n_mels:
        raise ValueError("n_mfcc must not exceed n_mels")
    logmel = log_mel_spectrogram(clip, stft_cfg, mel_cfg, sample_rate_hz)
    return logmel @ dct2_matrix(mel_cfg.n_mels, n_mfcc).T


def mean_pool_time(features) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ValueError("expected a (frames, dims) array with at least one frame")
    return features.mean(axis=0)


# -- estimator wrappers ----------------------------------------------------

class LogMelSpectrogram(TransformerMixin, BaseEstimator):
    """Map a sequence of :class:`AudioClip` to a list of (frames, n_mels) arrays."""

    def __init__(self, n_mels=128, frame_len=1024, hop_len=256, f_min_hz=0.0,
                 f_max_hz=None, log_floor=1e-10):
        self.n_mels = n_mels
        self.frame_len = frame_len
        self.hop_len = hop_len
        self.f_min_hz = f_min_hz
        self.f_max_hz = f_max_hz
        self.log_floor = log_floor

    def _configs(self):
        return (StftConfig(self.frame_len, self.hop_len),
                MelConfig(self.n_mels, self.f_min_hz, self.f_max_hz, self.log_floor))

    def fit(self, X=None, y=None):
        self._configs()
        return self

    def transform(self, X):
        stft_cfg, mel_cfg = self._configs()
        return [log_mel_spectrogram(clip, stft_cfg, mel_cfg) for clip in X]


class MFCC(LogMelSpectrogram):
    """Per-frame MFCCs, (frames, n_mfcc) per clip."""

    def __init__(self, n_mfcc=DEFAULT_N_MFCC, n_mels=128, frame_len=1024, hop_len=256,
                 f_min_hz=0.0, f_max_hz=None, log_floor=1e-10):
        super().__init__(n_mels=n_mels, frame_len=frame_len, hop_len=hop_len,
                         f_min_hz=f_min_hz, f_max_hz=f_max_hz, log_floor=log_floor)
        self.n_mfcc = n_mfcc

    def transform(self, X):
        stft_cfg, mel_cfg = self._configs()
        return [mfcc(clip, stft_cfg, mel_cfg, self.n_mfcc) for clip in X]


class TimeMeanPool(TransformerMixin, BaseEstimator):
    """Average variable-length (frames, d) arrays into one (n, d) matrix."""

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return np.stack([mean_pool_time(f) for f in X])
