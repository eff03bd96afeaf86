import numpy as np
import pytest
from loguru import logger

from sdk.config import TrainConfig, build_config, settings

TINY_OVERRIDES = [
    "max_iters=6",
    "val_every=2",
    "batch_per_domain=4",
    "n_mc=4",
    "learning_rate=1e-3",
    "data.samples_per_domain=40",
    "data.glyph_classes=4",
    "model.image_size=16",
    "model.hidden=[16]",
    "model.feature_dim=8",
    "generator.noise_dim=6",
]


def numeric_grad(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        orig = x[i]
        x[i] = orig + eps
        plus = fn(x)
        x[i] = orig - eps
        minus = fn(x)
        x[i] = orig
        grad[i] = (plus - minus) / (2 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def numgrad():
    return numeric_grad


@pytest.fixture
def rel_err():
    return relative_error


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "log_file", tmp_path / "logs" / "agfa.log")
    monkeypatch.setattr(settings, "data_dir", tmp_path / "data")


@pytest.fixture
def log_messages():
    messages: list[str] = []
    sink = logger.add(lambda m: messages.append(str(m)), level="DEBUG")
    yield messages
    logger.remove(sink)


@pytest.fixture
def tiny_overrides():
    return list(TINY_OVERRIDES)


@pytest.fixture
def tiny_config():
    def make(*extra: str) -> TrainConfig:
        return build_config({}, TINY_OVERRIDES + list(extra))
    return make
