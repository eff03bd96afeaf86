"""Desk-scale experiments; run with `pytest -m slow`."""
from pathlib import Path

import numpy as np
import pytest

from sdk.config import load_config, settings
from sdk.datasets import get_domains, get_split
from sdk.trainer import evaluate, train

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SEEDS = (0, 1, 2)

pytestmark = pytest.mark.slow


def target_accuracy(name: str, *overrides: str) -> float:
    cfg = load_config(CONFIGS / name, list(overrides))
    split = get_split(cfg.data, get_domains(cfg.data, cfg.model.image_size, cfg.model.channels))
    model = train(cfg, split)
    return float(np.mean([evaluate(model, t).accuracy for t in split.targets]))


def mean_accuracy(name: str, *overrides: str) -> float:
    return float(np.mean([target_accuracy(name, *overrides, f"seed={s}") for s in SEEDS]))


def needs_mnist():
    if not any((settings.data_dir / "mnist").glob("train-images-idx3-ubyte*")):
        pytest.skip("MNIST IDX files not present under AGFA_DATA_DIR/mnist")


@pytest.fixture(autouse=True)
def real_data_dir(monkeypatch):
    monkeypatch.setattr(settings, "data_dir", Path("data").resolve())


def test_glyphs_agfa_keeps_up_with_erm():
    assert mean_accuracy("glyphs.toml") >= mean_accuracy("glyphs.toml", "method=erm") - 0.01


@pytest.mark.parametrize("ablation", ["method=agfa_unsup_mcd", "method=agfa_no_mixup"])
def test_glyphs_agfa_is_not_worse_than_its_ablations(ablation):
    assert mean_accuracy("glyphs.toml") >= mean_accuracy("glyphs.toml", ablation)


@pytest.mark.parametrize("switched_off", [("eta=0",), ("eta=0", "alpha_mix=0")])
def test_glyphs_agfa_without_target_loss_matches_erm_swad(switched_off):
    agfa = mean_accuracy("glyphs.toml", *switched_off)
    assert abs(agfa - mean_accuracy("glyphs.toml", "method=erm_swad")) <= 0.005


def test_glyphs_target_discrepancy_shrinks():
    cfg = load_config(CONFIGS / "glyphs.toml")
    model = train(cfg, get_split(cfg.data, get_domains(cfg.data, cfg.model.image_size)))
    discrepancy = [r.target_discrepancy for r in model.history]
    assert np.mean(discrepancy[-100:]) < np.mean(discrepancy[:100])


def test_colored_mnist_pattern():
    needs_mnist()
    per_target = [target_accuracy("colored_mnist.toml", f"data.target={t}") for t in range(3)]
    assert per_target[0] >= 0.65
    assert per_target[1] >= 0.65
    assert per_target[2] <= 0.25


def test_rotated_mnist_average():
    needs_mnist()
    agfa = np.mean([target_accuracy("rotated_mnist.toml", f"data.target={t}") for t in range(3)])
    erm = np.mean([target_accuracy("rotated_mnist.toml", "method=erm", f"data.target={t}") for t in range(3)])
    assert agfa >= 0.90
    assert abs(agfa - erm) <= 0.02
