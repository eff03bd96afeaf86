import numpy as np

from sdk.config import DataConfig, settings
from sdk.datasets.base import DomainDataset, Split, pad_images, split_leave_one_out, split_single_source
from sdk.datasets.cache import cached
from sdk.datasets.glyphs import STYLE_PRESETS, GlyphSpec, make_glyph_domains
from sdk.datasets.idx import load_idx, load_mnist
from sdk.datasets.mnist import make_colored_domains, make_rotated_domains
from sdk.errors import ConfigError, DataError

__all__ = [
    "DomainDataset",
    "Split",
    "get_domains",
    "get_split",
    "load_idx",
    "make_colored_domains",
    "make_glyph_domains",
    "make_rotated_domains",
    "split_leave_one_out",
    "split_single_source",
]


def _mnist_base(cfg: DataConfig, n_domains: int, image_size: int) -> tuple[np.ndarray, np.ndarray]:
    directory = cfg.mnist_dir or settings.data_dir / "mnist"
    images, labels = load_mnist(directory)
    needed = cfg.samples_per_domain * n_domains
    if len(images) < needed:
        raise DataError(f"MNIST has {len(images)} samples, {needed} requested")
    order = np.random.default_rng(cfg.seed).permutation(len(images))[:needed]
    return pad_images(images[order], image_size), labels[order]


def _build(cfg: DataConfig, image_size: int) -> list[DomainDataset]:
    match cfg.dataset:
        case "glyphs":
            if cfg.glyph_domains > len(STYLE_PRESETS):
                raise ConfigError(f"at most {len(STYLE_PRESETS)} glyph domains, got {cfg.glyph_domains}")
            spec = GlyphSpec(
                classes=cfg.glyph_classes,
                styles=STYLE_PRESETS[:cfg.glyph_domains],
                samples_per_domain=cfg.samples_per_domain,
                size=image_size,
                seed=cfg.seed,
            )
            return make_glyph_domains(spec)
        case "rotated_mnist":
            images, labels = _mnist_base(cfg, len(cfg.angles), image_size)
            return make_rotated_domains(images, labels, cfg.angles, split_base=True)
        case "colored_mnist":
            images, labels = _mnist_base(cfg, len(cfg.correlations), image_size)
            return make_colored_domains(images, labels, cfg.correlations, seed=cfg.seed, split_base=True)
    raise ConfigError(f"Unknown dataset: {cfg.dataset}")


def get_domains(cfg: DataConfig, image_size: int = 32, channels: int | None = None) -> list[DomainDataset]:
    if cfg.cache:
        params = cfg.model_dump(mode="json") | {"image_size": image_size}
        domains = cached(settings.data_dir / "cache", cfg.dataset, params, lambda: _build(cfg, image_size))
    else:
        domains = _build(cfg, image_size)
    if channels is not None:
        domains = [d.with_channels(channels) for d in domains]
    return domains


def get_split(cfg: DataConfig, domains: list[DomainDataset]) -> Split:
    if cfg.protocol == "single_source":
        return split_single_source(domains, cfg.target, cfg.val_frac, cfg.seed)
    return split_leave_one_out(domains, cfg.target, cfg.val_frac, cfg.seed)
