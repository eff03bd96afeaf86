"""Procedural glyph domains: the same glyphs drawn in different styles."""
from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from scipy import ndimage

from sdk.datasets.base import DomainDataset

GLYPH_NAMES = ("hbar", "vbar", "plus", "xcross", "ring", "disk", "square", "block", "equals", "tee")


@dataclass(frozen=True)
class GlyphStyle:
    name: str
    background_freq: float = 0.0  # cycles per image width
    background_amp: float = 0.0
    stroke: float = 1.0
    blur: float = 0.0  # gaussian sigma in pixels


STYLE_PRESETS = (
    GlyphStyle("clean"),
    GlyphStyle("waves", background_freq=6.0, background_amp=0.35, stroke=0.8),
    GlyphStyle("soft", stroke=0.7, blur=1.2),
    GlyphStyle("dim", background_freq=2.0, background_amp=0.2, stroke=0.5, blur=0.6),
)


@dataclass(frozen=True)
class GlyphSpec:
    classes: int = 10
    styles: tuple[GlyphStyle, ...] = field(default_factory=lambda: STYLE_PRESETS[:3])
    samples_per_domain: int = 500
    size: int = 32
    seed: int = 0


@dataclass(frozen=True)
class _Geometry:
    dx: np.ndarray
    dy: np.ndarray
    scale: np.ndarray
    thickness: np.ndarray


def glyph_mask(glyph: int, size: int, dx: float = 0.0, dy: float = 0.0, scale: float = 1.0,
               thickness: float = 0.25) -> np.ndarray:
    """Binary {0, 1} mask of one glyph in a size x size frame."""
    grid = np.arange(size) + 0.5 - size / 2.0
    yy, xx = np.meshgrid(grid, grid, indexing="ij")
    half = 0.35 * size * scale
    u, v = (xx - dx) / half, (yy - dy) / half
    t = thickness
    inside = (np.abs(u) < 1) & (np.abs(v) < 1)
    r = np.hypot(u, v)
    box = np.maximum(np.abs(u), np.abs(v))
    match GLYPH_NAMES[glyph]:
        case "hbar":
            mask = (np.abs(v) < t) & (np.abs(u) < 1)
        case "vbar":
            mask = (np.abs(u) < t) & (np.abs(v) < 1)
        case "plus":
            mask = ((np.abs(v) < t) | (np.abs(u) < t)) & inside
        case "xcross":
            mask = ((np.abs(u - v) < 1.4 * t) | (np.abs(u + v) < 1.4 * t)) & inside
        case "ring":
            mask = np.abs(r - 0.75) < t
        case "disk":
            mask = r < 0.8
        case "square":
            mask = inside & (box > 1 - 2 * t)
        case "block":
            mask = box < 0.8
        case "equals":
            mask = ((np.abs(v - 0.45) < t) | (np.abs(v + 0.45) < t)) & (np.abs(u) < 1)
        case "tee":
            mask = ((np.abs(v + 0.8) < t) & (np.abs(u) < 1)) | ((np.abs(u) < t) & (v > -0.8) & (v < 1))
    return mask.astype(np.float64)


def _geometry(spec: GlyphSpec) -> _Geometry:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0]))
    n = spec.samples_per_domain
    shift = spec.size / 10.0
    return _Geometry(
        dx=rng.uniform(-shift, shift, n),
        dy=rng.uniform(-shift, shift, n),
        scale=rng.uniform(0.8, 1.1, n),
        thickness=rng.uniform(0.2, 0.3, n),
    )


def render(mask: np.ndarray, style: GlyphStyle, rng: np.random.Generator) -> np.ndarray:
    size = mask.shape[0]
    background = np.zeros_like(mask)
    if style.background_amp > 0:
        theta, offset = rng.uniform(0.0, np.pi), rng.uniform(0.0, 2 * np.pi)
        yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        wave = np.sin(2 * np.pi * style.background_freq * (xx * np.cos(theta) + yy * np.sin(theta)) / size + offset)
        background = style.background_amp * (0.5 + 0.5 * wave)
    img = (1.0 - mask) * background + mask * style.stroke
    if style.blur > 0:
        img = ndimage.gaussian_filter(img, style.blur, mode="constant")
    return np.clip(img, 0.0, 1.0)


def make_glyph_domains(spec: GlyphSpec = GlyphSpec()) -> list[DomainDataset]:
    """Deterministic per seed; labels cycle through the classes so every domain is balanced."""
    geometry = _geometry(spec)
    labels = np.arange(spec.samples_per_domain) % spec.classes
    masks = np.stack([
        glyph_mask(int(c), spec.size, geometry.dx[i], geometry.dy[i], geometry.scale[i], geometry.thickness[i])
        for i, c in enumerate(labels)
    ])
    domains = []
    for d, style in enumerate(spec.styles):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1, d]))
        images = np.stack([render(m, style, rng) for m in masks])[..., None]
        domains.append(DomainDataset(style.name, d, images, labels.copy(), spec.classes))
    logger.info(f"Glyphs: {len(domains)} domains x {spec.samples_per_domain} samples, {spec.classes} classes")
    return domains
