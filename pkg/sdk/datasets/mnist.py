"""Rotated- and Colored-MNIST domain builders (DomainBed recipes)."""
import numpy as np
from loguru import logger
from scipy import ndimage

from sdk.datasets.base import DomainDataset

LABEL_NOISE = 0.25


def _as_nhwc(images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    return images[..., None] if images.ndim == 3 else images


def _partition(n: int, parts: int, split_base: bool) -> list[np.ndarray]:
    everything = np.arange(n)
    if not split_base:
        return [everything] * parts
    return [everything[i::parts] for i in range(parts)]


def rotate_images(images: np.ndarray, angle: float) -> np.ndarray:
    """Bilinear rotation about the image centre, zeros outside."""
    images = _as_nhwc(images)
    if angle % 360 == 0:
        return images.copy()
    out = ndimage.rotate(images, angle, axes=(1, 2), reshape=False, order=1, mode="constant", cval=0.0)
    return np.clip(out, 0.0, 1.0)


def make_rotated_domains(base_images, base_labels, angles, split_base: bool = False) -> list[DomainDataset]:
    """
    One domain per angle.

    split_base=True gives each angle the disjoint slice base[i::len(angles)]
    as DomainBed does; otherwise every domain rotates the full base set.
    """
    images = _as_nhwc(base_images)
    labels = np.asarray(base_labels, dtype=np.int64)
    domains = []
    for i, (angle, idx) in enumerate(zip(angles, _partition(len(labels), len(angles), split_base))):
        domains.append(DomainDataset(f"rot{angle:g}", i, rotate_images(images[idx], angle), labels[idx], 10))
    logger.info(f"Rotated-MNIST: {len(domains)} domains of {[len(d) for d in domains]} samples")
    return domains


def color_images(images: np.ndarray, digits: np.ndarray, flip_color: float,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """
    Binary label (digit < 5) flipped with prob 0.25; the color equals the
    label, flipped with prob `flip_color`. Color c keeps channel c and zeroes
    the other.
    """
    gray = _as_nhwc(images)[..., 0]
    labels = (np.asarray(digits) < 5).astype(np.int64)
    labels ^= (rng.random(len(labels)) < LABEL_NOISE).astype(np.int64)
    colors = labels ^ (rng.random(len(labels)) < flip_color).astype(np.int64)
    out = np.zeros(gray.shape + (2,))
    for c in (0, 1):
        out[..., c] = gray * (colors == c)[:, None, None]
    return out, labels


def make_colored_domains(base_images, base_labels, correlations, seed: int = 0,
                         split_base: bool = False) -> list[DomainDataset]:
    images = _as_nhwc(base_images)
    digits = np.asarray(base_labels, dtype=np.int64)
    domains = []
    for i, (env, idx) in enumerate(zip(correlations, _partition(len(digits), len(correlations), split_base))):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        colored, labels = color_images(images[idx], digits[idx], env, rng)
        domains.append(DomainDataset(f"env{env:g}", i, colored, labels, 2))
    logger.info(f"Colored-MNIST: {len(domains)} domains of {[len(d) for d in domains]} samples")
    return domains
