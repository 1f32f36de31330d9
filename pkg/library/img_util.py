import logging
from pathlib import Path

import numpy as np
from PIL import Image

# Image suffixes read through Pillow.
IMAGE_SUFFIXES = {".pgm", ".ppm", ".pnm", ".png"}

# Largest gray level of an 8-bit label map; larger label counts use 16-bit levels.
MAXVAL_8BIT = 255
MAXVAL_16BIT = 65535

# Preview palette: label colors cycle through this list.
PREVIEW_COLORS = [
    (230, 25, 75),
    (60, 180, 75),
    (0, 130, 200),
    (255, 225, 25),
    (145, 30, 180),
    (70, 240, 240),
    (245, 130, 48),
    (240, 50, 230),
    (128, 128, 128),
    (0, 0, 0),
]


class ImageReadError(ValueError):
    """Raised when an image file cannot be decoded."""

    pass


def is_image_path(path: str | Path) -> bool:
    return Path(path).suffix.lower() in IMAGE_SUFFIXES


def read_image(path: str | Path) -> np.ndarray:
    """Read a PGM/PPM (plain or raw) or PNG image as floats in ``[0, 1]``.

    Returns:
        ``(N, M)`` for grayscale, ``(N, M, 3)`` for color images.
    """
    try:
        img = Image.open(path)
        img.load()
    except Exception as e:
        raise ImageReadError(f"{path}: {e}") from e

    logging.debug(f"read_image: {path} mode={img.mode} size={img.size}")
    match img.mode:
        case "1" | "L":
            return np.asarray(img.convert("L"), dtype=float) / MAXVAL_8BIT
        case "I;16" | "I;16B" | "I":
            return np.asarray(img, dtype=float) / MAXVAL_16BIT
        case "RGB":
            return np.asarray(img, dtype=float) / MAXVAL_8BIT
        case _:
            return np.asarray(img.convert("RGB"), dtype=float) / MAXVAL_8BIT


def read_mask(path: str | Path, shape: tuple[int, int]) -> np.ndarray:
    """Validity mask from an image (nonzero = valid) or a 0/1 CSV, flattened row-major."""
    if is_image_path(path):
        values = read_image(path)
        if values.ndim == 3:
            values = values.max(axis=2)
    else:
        values = np.loadtxt(path, delimiter=",", ndmin=2)
    if values.shape != shape:
        raise ImageReadError(f"{path}: mask shape {values.shape} does not match grid {shape}")
    return (values != 0).ravel()


def label_gray_levels(K: int) -> tuple[np.ndarray, int]:
    """Evenly spaced gray level per label (index 0 is label 1) and the maxval used."""
    maxval = MAXVAL_8BIT if K <= MAXVAL_8BIT + 1 else MAXVAL_16BIT
    if K == 1:
        return np.array([0]), maxval
    levels = np.rint(np.arange(K) * maxval / (K - 1)).astype(int)
    return levels, maxval


def write_label_map(labels: np.ndarray, shape: tuple[int, int], K: int, path: str | Path) -> Path:
    """Write 1-based labels as a plain (P2) PGM plus a ``gray label`` sidecar.

    Returns:
        Path of the sidecar file.
    """
    path = Path(path)
    levels, maxval = label_gray_levels(K)
    gray = levels[np.asarray(labels).reshape(shape) - 1]
    lines = ["P2", f"{shape[1]} {shape[0]}", str(maxval)]
    lines += [" ".join(str(v) for v in row) for row in gray]
    path.write_text("\n".join(lines) + "\n")

    sidecar = path.with_name(path.stem + ".labels.txt")
    sidecar.write_text("".join(f"{levels[k]} {k + 1}\n" for k in range(K)))
    logging.info(f"Wrote label map: {path} (sidecar {sidecar.name})")
    return sidecar


def write_label_preview(labels: np.ndarray, shape: tuple[int, int], path: str | Path) -> None:
    """Palette PNG of a label map; colors repeat after ``len(PREVIEW_COLORS)`` labels."""
    index = (np.asarray(labels).reshape(shape) - 1) % len(PREVIEW_COLORS)
    img = Image.fromarray(index.astype(np.uint8))
    # putpalette turns the L image into a P image.
    img.putpalette([c for color in PREVIEW_COLORS for c in color])
    img.save(path, format="PNG")
    logging.info(f"Wrote label preview: {path}")


def grayscale(values: np.ndarray) -> np.ndarray:
    """Channel mean of a color image; grayscale input is returned unchanged."""
    values = np.asarray(values, dtype=float)
    return values.mean(axis=2) if values.ndim == 3 else values
