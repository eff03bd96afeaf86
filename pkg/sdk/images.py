"""Display helpers: 8-bit quantisation, spectrum views and PGM/PPM output."""
from pathlib import Path

import numpy as np
from PIL import Image


def quantize(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def _min_max(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(), x.max()
    return np.zeros_like(x) if hi - lo <= 0 else (x - lo) / (hi - lo)


def amplitude_view(amplitude: np.ndarray) -> np.ndarray:
    """(H, W, Ch) amplitude -> log1p, min-max scaled, DC moved to the centre."""
    return _min_max(np.log1p(np.fft.fftshift(amplitude, axes=(0, 1))))


def phase_view(phase: np.ndarray) -> np.ndarray:
    return _min_max(np.fft.fftshift(phase, axes=(0, 1)))


def to_pil(image: np.ndarray) -> Image.Image:
    """Single channel -> grayscale; two channels get a zero third channel; three stay RGB."""
    pixels = quantize(np.asarray(image, dtype=np.float64))
    if pixels.ndim == 3 and pixels.shape[-1] == 1:
        pixels = pixels[..., 0]
    if pixels.ndim == 2:
        return Image.fromarray(pixels)
    if pixels.shape[-1] == 2:
        pixels = np.concatenate([pixels, np.zeros_like(pixels[..., :1])], axis=-1)
    if pixels.shape[-1] != 3:
        raise ValueError(f"cannot display an image with {pixels.shape[-1]} channels")
    return Image.fromarray(pixels)


def write_pnm(path: str | Path, image: np.ndarray) -> Path:
    """Binary PGM (P5) for grayscale, PPM (P6) otherwise."""
    img = to_pil(image)
    path = Path(path).with_suffix(".pgm" if img.mode == "L" else ".ppm")
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PPM")
    return path
