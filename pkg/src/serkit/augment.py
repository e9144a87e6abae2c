"""Training-time augmentation for spectrogram "images".

Mixup forms convex combinations of example pairs and their label
distributions. The image-style transforms (small rotation, zoom-in,
brightness) act on 2-D log-mel arrays, and :func:`resize_bilinear` drives
progressive resizing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch

DEFAULT_MIXUP_ALPHA = 0.4


@dataclass(frozen=True)
class MixupSample:
    x_tilde: np.ndarray
    y_tilde: np.ndarray
    lam: float
    parent_ids: tuple = (None, None)


@dataclass(frozen=True)
class ImageAugConfig:
    max_rotate_deg: float = 4.0
    zoom_range: tuple = (1.0, 1.15)
    brightness_delta: float = 0.4

    def __post_init__(self):
        lo, hi = self.zoom_range
        if not 1.0 <= lo <= hi:
            raise ValueError("zoom_range must satisfy 1 <= lo <= hi (zoom-in only)")
        if self.max_rotate_deg < 0 or self.brightness_delta < 0:
            raise ValueError("rotation and brightness magnitudes must be >= 0")


@dataclass(frozen=True)
class ResizePolicy:
    stage_sizes: tuple = (128, 256)
    interpolation: str = "bilinear"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.stage_sizes)
        if not sizes or any(s < 8 for s in sizes):
            raise ValueError("stage sizes must be >= 8")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("stage sizes must be strictly increasing")
        if self.interpolation != "bilinear":
            raise ValueError("only bilinear interpolation is supported")
        object.__setattr__(self, "stage_sizes", sizes)


# -- mixup -----------------------------------------------------------------

def mixup(x_a, y_a, x_b, y_b, lam: float, parent_ids=(None, None)) -> MixupSample:
    """x~ = lam*x_a + (1-lam)*x_b and the same blend of the label vectors."""
    x_a, x_b = np.asarray(x_a, dtype=np.float64), np.asarray(x_b, dtype=np.float64)
    y_a, y_b = np.asarray(y_a, dtype=np.float64), np.asarray(y_b, dtype=np.float64)
    if x_a.shape != x_b.shape:
        raise ShapeMismatch(f"feature shapes differ: {x_a.shape} vs {x_b.shape}")
    if y_a.shape != y_b.shape:
        raise ShapeMismatch(f"label shapes differ: {y_a.shape} vs {y_b.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    x = lam * x_a + (1.0 - lam) * x_b
    y = lam * y_a + (1.0 - lam) * y_b
    return MixupSample(x, y, float(lam), tuple(parent_ids))


def mixup_batch(x, y, lam: float, partner):
    """Batch form: row i is mixed with row ``partner[i]``."""
    x = np.asarray(x)
    y = np.asarray(y)
    return lam * x + (1.0 - lam) * x[partner], lam * y + (1.0 - lam) * y[partner]


def sample_lambda(alpha: float, rng: np.random.Generator) -> float:
    """Draw from Beta(alpha, alpha) as G1 / (G1 + G2) with G ~ Gamma(alpha)."""
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    g1 = rng.standard_gamma(alpha)
    g2 = rng.standard_gamma(alpha)
    total = g1 + g2
    if total == 0.0:
        return 0.5
    return float(g1 / total)


# -- geometric transforms --------------------------------------------------

_EDGE_EPS = 1e-9


def _bilinear_sample(img, rows, cols, fill):
    """Sample ``img`` at fractional coordinates; outside the grid -> ``fill``."""
    h, w = img.shape
    inside = ((rows >= -_EDGE_EPS) & (rows <= h - 1 + _EDGE_EPS)
              & (cols >= -_EDGE_EPS) & (cols <= w - 1 + _EDGE_EPS))
    r = np.clip(rows, 0.0, h - 1)
    c = np.clip(cols, 0.0, w - 1)
    r0 = np.minimum(np.floor(r).astype(np.intp), h - 2)
    c0 = np.minimum(np.floor(c).astype(np.intp), w - 2)
    fr = r - r0
    fc = c - c0
    top = img[r0, c0] * (1.0 - fc) + img[r0, c0 + 1] * fc
    bot = img[r0 + 1, c0] * (1.0 - fc) + img[r0 + 1, c0 + 1] * fc
    out = top * (1.0 - fr) + bot * fr
    return np.where(inside, out, fill)


def affine_transform(spec, angle_deg: float, zoom: float, fill=None) -> np.ndarray:
    """Rotate by ``angle_deg`` (counter-clockwise) and zoom in by ``zoom`` about the centre.

    Each output pixel is mapped back to the source by undoing the zoom and
    the rotation, then read with bilinear interpolation. ``fill`` defaults
    to the tensor minimum, which is the silence floor for log-mel input.
    """
    img = np.asarray(spec, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 2:
        raise ValueError("expected a 2-D array with both sides >= 2")
    if angle_deg == 0.0 and zoom == 1.0:
        return img.copy()
    fill = img.min() if fill is None else fill
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # Work in (x right, y up) coordinates so positive angles turn counter-clockwise on screen.
    dx = (xx - cx) / zoom
    dy = (cy - yy) / zoom
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    src_x = cos_t * dx + sin_t * dy
    src_y = -sin_t * dx + cos_t * dy
    return _bilinear_sample(img, cy - src_y, cx + src_x, fill)


def random_affine(spec, cfg: ImageAugConfig, rng: np.random.Generator) -> np.ndarray:
    angle = rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg)
    zoom = rng.uniform(*cfg.zoom_range)
    return affine_transform(spec, angle, zoom)


def brightness_shift(spec, delta: float) -> np.ndarray:
    """Add ``delta`` to every cell (a gain of exp(delta) in power)."""
    return np.asarray(spec, dtype=np.float64) + delta


def random_brightness(spec, cfg: ImageAugConfig, rng: np.random.Generator) -> np.ndarray:
    return brightness_shift(spec, rng.uniform(-cfg.brightness_delta, cfg.brightness_delta))


def augment_image(spec, cfg: ImageAugConfig, rng: np.random.Generator) -> np.ndarray:
    """Affine first, then brightness."""
    return random_brightness(random_affine(spec, cfg, rng), cfg, rng)


# -- resizing --------------------------------------------------------------

def _axis_weights(n_in: int, n_out: int):
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(spec, size) -> np.ndarray:
    """Bilinear resize with half-pixel centres (align_corners=False), edges clamped."""
    img = np.asarray(spec, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 2:
        raise ValueError("expected a 2-D array with both sides >= 2")
    out_h, out_w = int(size[0]), int(size[1])
    r0, r1, fr = _axis_weights(img.shape[0], out_h)
    c0, c1, fc = _axis_weights(img.shape[1], out_w)
    rows = img[r0] * (1.0 - fr)[:, None] + img[r1] * fr[:, None]
    return rows[:, c0] * (1.0 - fc)[None, :] + rows[:, c1] * fc[None, :]


def to_model_square(spec, size: int) -> np.ndarray:
    """(frames, n_mels) log-mel -> (size, size) image with mel bands as rows."""
    return resize_bilinear(np.asarray(spec, dtype=np.float64).T, (size, size))
