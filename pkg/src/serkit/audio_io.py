"""WAV decoding/encoding and linear-interpolation resampling."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyAudio, MalformedContainer, UnsupportedEncoding

DEFAULT_SAMPLE_RATE = 16000

WAVE_FORMAT_PCM = 1
WAVE_FORMAT_IEEE_FLOAT = 3
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int
    source_path: str | None = field(default=None, compare=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample_rate_hz must be positive")
        samples = samples.copy()
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = pos + 8
        if body + size > len(data):
            # Some writers leave a bogus size on the final data chunk; truncate it.
            if cid == b"data":
                yield cid, data[body:]
                return
            raise MalformedContainer(f"chunk {cid!r} overruns file ({size} bytes declared)")
        yield cid, data[body:body + size]
        pos = body + size + (size & 1)


def decode_wav_bytes(data: bytes, source_path: str | None = None) -> AudioClip:
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedContainer("missing RIFF/WAVE header")

    fmt = None
    payload = None
    for cid, body in _iter_chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise MalformedContainer("fmt chunk too short")
            fmt = body
        elif cid == b"data":
            payload = body
            break
    if fmt is None:
        raise MalformedContainer("no fmt chunk")
    if payload is None:
        raise MalformedContainer("no data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", fmt[:16])
    if tag == WAVE_FORMAT_EXTENSIBLE and len(fmt) >= 26:
        (tag,) = struct.unpack("<H", fmt[24:26])

    if channels not in (1, 2):
        raise UnsupportedEncoding(f"{channels} channels (only mono/stereo)")
    if rate <= 0:
        raise MalformedContainer("sample rate is zero")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedEncoding(f"format tag {tag} with {bits} bits per sample")
    if block_align != channels * dtype.itemsize:
        raise MalformedContainer(f"block align {block_align} inconsistent with format")

    n_frames = len(payload) // block_align
    if n_frames == 0:
        raise EmptyAudio("data chunk holds zero sample frames")
    raw = np.frombuffer(payload[:n_frames * block_align], dtype=dtype)
    samples = raw.astype(np.float64).reshape(n_frames, channels) * scale
    samples = samples.mean(axis=1) if channels == 2 else samples[:, 0]
    if not np.all(np.isfinite(samples)):
        raise MalformedContainer("non-finite float samples")
    np.clip(samples, -1.0, 1.0, out=samples)
    return AudioClip(samples, rate, source_path)


def decode_wav(path) -> AudioClip:
    """Read a 16-bit PCM or 32-bit float WAV file as a mono clip.

    Stereo input is averaged to mono and 16-bit integers are scaled by
    1/32768, so -32768 decodes to exactly -1.0.
    """
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_wav_bytes(data, source_path=path)


def encode_wav_bytes(clip: AudioClip, float32: bool = False) -> bytes:
    if float32:
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        payload = np.asarray(clip.samples, dtype="<f4").tobytes()
    else:
        tag, bits = WAVE_FORMAT_PCM, 16
        ints = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
        payload = ints.tobytes()
    block_align = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, clip.sample_rate_hz,
                      clip.sample_rate_hz * block_align, block_align, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def write_wav(path, clip: AudioClip, float32: bool = False) -> None:
    """Write a mono clip; 16-bit PCM by default, IEEE float32 on request."""
    with open(os.fspath(path), "wb") as fh:
        fh.write(encode_wav_bytes(clip, float32=float32))


def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """Linear-interpolation resampler.

    Adequate for classification features only: there is no anti-alias
    filter, so content above the new Nyquist folds back.
    """
    target_rate_hz = int(target_rate_hz)
    if target_rate_hz <= 0:
        raise ValueError("target_rate_hz must be positive")
    src = clip.sample_rate_hz
    if target_rate_hz == src:
        return clip
    n_out = max(1, int(np.floor(len(clip) * target_rate_hz / src + 0.5)))
    positions = np.arange(n_out, dtype=np.float64) * (src / target_rate_hz)
    out = np.interp(positions, np.arange(len(clip), dtype=np.float64), clip.samples)
    return AudioClip(out, target_rate_hz, clip.source_path)
