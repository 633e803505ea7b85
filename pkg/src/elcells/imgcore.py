"""Image containers, raster I/O and the basic pixel operators.

Gray images are plain 2-D ``float64`` numpy arrays indexed ``img[y, x]``
(0-based, row-major). Binary images are boolean arrays of the same shape.
The paper-style 1-based domain {1..W} x {1..H} maps to index ``i - 1``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

SUPPORTED_SUFFIXES = {".pgm", ".pnm", ".png", ".jpg", ".jpeg", ".pbm"}


class ImageIOError(ValueError):
    pass


@dataclass(frozen=True)
class Projections:
    rows: np.ndarray  # length H, sum over each row's W pixels
    cols: np.ndarray  # length W, sum over each column's H pixels


def as_gray(data) -> np.ndarray:
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D image, got shape {img.shape}")
    return img


def load(path) -> np.ndarray:
    """Read a PGM/PNG/JPEG raster as a float image.

    8-bit data lands in [0, 255], 16-bit data in [0, 65535]. Colour input is
    converted to luma.
    """
    path = Path(path)
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise ImageIOError(f"unsupported image format: {path.suffix or path.name}")
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.array(im, dtype=np.float64)
            elif im.mode in ("L", "1"):
                arr = np.array(im.convert("L"), dtype=np.float64)
            else:
                arr = np.array(im.convert("L"), dtype=np.float64)
    except (OSError, SyntaxError) as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    if arr.ndim != 2 or arr.size == 0:
        raise ImageIOError(f"{path}: zero-dimension image")
    return arr


def to_uint8(img: np.ndarray, rescale: bool | None = None) -> np.ndarray:
    """Quantize to 8 bits.

    With ``rescale=None`` the image is affinely mapped min->0, max->255 only
    when it leaves the [0, 255] range (e.g. standardized data); otherwise it
    is rounded and clamped.
    """
    img = as_gray(img)
    if rescale is None:
        rescale = bool(img.min() < 0 or img.max() > 255)
    if rescale:
        img = rescale_to(img, 0.0, 255.0)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def save(img: np.ndarray, path, bits: int = 8, rescale: bool | None = None) -> None:
    if not path or str(path).strip() == "":
        raise ImageIOError("empty output path")
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in {".png", ".pgm", ".pnm"}:
        raise ImageIOError(f"unsupported output format: {suffix or path.name} (use PNG or PGM)")
    if path.parent and not path.parent.exists():
        os.makedirs(path.parent, exist_ok=True)
    if bits == 8:
        im = Image.fromarray(to_uint8(img, rescale), mode="L")
    elif bits == 16:
        data = as_gray(img)
        if rescale or (rescale is None and (data.min() < 0 or data.max() > 65535)):
            data = rescale_to(data, 0.0, 65535.0)
        im = Image.fromarray(np.clip(np.rint(data), 0, 65535).astype(np.uint16))
    else:
        raise ValueError("bits must be 8 or 16")
    im.save(path)


def save_binary(mask: np.ndarray, path) -> None:
    save(np.where(mask, 255.0, 0.0), path, rescale=False)


def rescale_to(img: np.ndarray, lo: float, hi: float) -> np.ndarray:
    img = as_gray(img)
    mn, mx = img.min(), img.max()
    if mx == mn:
        return np.full_like(img, lo)
    return lo + (img - mn) * ((hi - lo) / (mx - mn))


def standardize(img: np.ndarray) -> np.ndarray:
    """Zero mean, unit population standard deviation; constant -> zeros."""
    img = as_gray(img)
    mean = img.mean()
    centered = img - mean
    sd = np.sqrt(np.mean(centered**2))
    if sd == 0 or not np.isfinite(sd) or sd < 1e-12 * max(1.0, abs(mean)):
        return np.zeros_like(img)
    out = centered / sd
    # a second pass removes the residual rounding in mean/sd
    out -= out.mean()
    return out / np.sqrt(np.mean(out**2))


def projections(img: np.ndarray) -> Projections:
    img = as_gray(img)
    return Projections(rows=img.sum(axis=1), cols=img.sum(axis=0))


def rotation_matrix(alpha: float) -> np.ndarray:
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s], [s, c]])


def rotate_points(points, alpha: float, shape) -> np.ndarray:
    """Map (x, y) points through the same rotation ``rotate`` applies.

    Positive ``alpha`` turns x towards y, i.e. clockwise on screen since
    the y axis points down.
    """
    h, w = shape[:2]
    centre = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return (pts - centre) @ rotation_matrix(alpha).T + centre


def rotate(img: np.ndarray, alpha: float, fill: float = 0.0, order: int = 1) -> np.ndarray:
    """Rotate about the image centre by ``alpha`` radians.

    Inverse-mapped sampling (bilinear unless ``order`` says otherwise), same
    canvas, out-of-source pixels set to ``fill``.
    """
    img = as_gray(img)
    if alpha == 0.0:
        return img.copy()
    h, w = img.shape
    centre = np.array([(h - 1) / 2.0, (w - 1) / 2.0])  # (row, col)
    c, s = np.cos(alpha), np.sin(alpha)
    # output (x, y) = R (src - c) + c  =>  src = R^T (out - c) + c ; in (row, col) order
    inv = np.array([[c, -s], [s, c]])  # R^T expressed on (y, x)
    offset = centre - inv @ centre
    return ndimage.affine_transform(img, inv, offset=offset, order=order, mode="grid-constant", cval=fill,
                                   prefilter=order > 1)


def downsample(img: np.ndarray, factor: int) -> np.ndarray:
    """Block-mean downsampling by an integer factor (trailing remainder cropped)."""
    img = as_gray(img)
    if factor <= 1:
        return img
    h, w = (img.shape[0] // factor) * factor, (img.shape[1] // factor) * factor
    if h == 0 or w == 0:
        return img
    return img[:h, :w].reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
