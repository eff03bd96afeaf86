"""
Panel dump of the amplitude generator. For each source sample i writes
`<i>_<view>.pgm` (or .ppm for colour) with the views in PANEL order.
"""
import json
from pathlib import Path

import numpy as np
from loguru import logger

from sdk.checkpoint import load_checkpoint
from sdk.datasets import get_domains, get_split
from sdk.errors import ConfigError
from sdk.fourier import half_to_full
from sdk.generator import SynthDraws, synthesize_target
from sdk.images import amplitude_view, phase_view, write_pnm
from sdk.rng import RngStreams
from services.experiments.runs import with_overrides

PANEL = (
    "original",
    "phase",
    "amplitude",
    "generated_amplitude",
    "mixed_amplitude",
    "recon_generated",
    "recon_mixed",
)


def add_parser(subparsers, common):
    parser = subparsers.add_parser("synth", parents=[common], help="dump generated amplitudes and images")
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("-n", type=int, default=4, help="number of source samples")
    parser.set_defaults(handler=run)


def source_images(cfg, n: int) -> np.ndarray:
    domains = get_domains(cfg.data, cfg.model.image_size, cfg.model.channels)
    train = get_split(cfg.data, domains).train
    images = np.concatenate([d.images for d in train])
    if n > len(images):
        raise ConfigError(f"asked for {n} samples, the source domains hold {len(images)}")
    return images[:n].astype(np.float64)


def panel(images: np.ndarray, generator, alpha_mix: float, draws: SynthDraws) -> dict[str, np.ndarray]:
    labels = np.zeros(len(images), dtype=np.intp)
    mixed = synthesize_target(images, labels, generator, alpha_mix, draws=draws, mixup=True)
    plain = synthesize_target(images, labels, generator, alpha_mix, draws=draws, mixup=False)
    return {
        "original": images,
        "phase": np.asarray(mixed.source.phase),
        "amplitude": np.asarray(mixed.source.amplitude),
        "generated_amplitude": half_to_full(mixed.generated).data,
        "mixed_amplitude": half_to_full(mixed.mixed).data,
        "recon_generated": plain.images.data,
        "recon_mixed": mixed.images.data,
    }


def _view(name: str, image: np.ndarray) -> np.ndarray:
    if name == "phase":
        return phase_view(image)
    if name.endswith("amplitude"):
        return amplitude_view(image)
    return image


def run(args) -> int:
    model = load_checkpoint(args.checkpoint)
    overrides = list(args.overrides) + ([f"seed={args.seed}"] if args.seed is not None else [])
    cfg = with_overrides(model.config, overrides)
    if model.generator is None or cfg.method == "agfa_pixel_gen":
        raise ConfigError(f"checkpoint {args.checkpoint} has no amplitude generator (method {cfg.method})")
    if args.n < 1:
        raise ConfigError(f"-n must be positive, got {args.n}")

    images = source_images(cfg, args.n)
    streams = RngStreams(cfg.seed)
    draws = SynthDraws.sample(args.n, cfg.alpha_mix, streams["generator"], streams["mixup"],
                              noise_dim=model.generator.noise_dim)
    views = panel(images, model.generator, cfg.alpha_mix, draws)

    out = Path(args.out or "runs/synth")
    written = []
    for i in range(args.n):
        for name in PANEL:
            written.append(str(write_pnm(out / f"{i:03d}_{name}", _view(name, views[name][i]))))
    logger.info(f"Wrote {len(written)} images to {out}")
    if args.json:
        print(json.dumps({"files": written}, indent=2))
    else:
        print(f"{len(written)} files in {out}")
    return 0
