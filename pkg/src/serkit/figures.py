"""Plot-data emission: spectrograms as PGM images, waveforms as CSV."""

from __future__ import annotations

import csv

import numpy as np


def write_pgm(path, image, maxval: int = 65535) -> None:
    """Binary (P5) greyscale image, min-max normalised. Row 0 is the top row."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a non-empty 2-D array, got shape {img.shape}")
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros_like(img) if hi == lo else (img - lo) / (hi - lo)
    levels = np.rint(scaled * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(levels.astype(dtype).tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode("ascii"))
        pos = end
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != "P5":
        raise ValueError(f"unsupported PGM magic {magic!r}")
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(data[pos + 1:], dtype=dtype, count=width * height).reshape(height, width)


def spectrogram_image(features) -> np.ndarray:
    """(frames, bands) -> image with low frequencies at the bottom and time left to right."""
    return np.asarray(features)[:, ::-1].T


def write_waveform_csv(path, clip) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "amplitude"])
        for i, v in enumerate(clip.samples):
            w.writerow([repr(i / clip.sample_rate_hz), repr(float(v))])


def write_matrix_csv(path, matrix) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(matrix):
            w.writerow([repr(float(v)) for v in row])
