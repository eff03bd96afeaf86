"""Feature extractors phi_theta: images (B, H, W, Ch) -> features (B, d)."""
from dataclasses import dataclass

import numpy as np

from sdk.config import ModelConfig
from sdk.errors import ShapeError
from sdk.tensor import Tensor, as_tensor, conv2d, matmul, no_grad, relu

CONV_KERNEL = 3


def _conv_stride(layer: int) -> int:
    return 2 if layer == 1 else 1


@dataclass
class FeatureExtractor:
    kind: str
    layers: list[tuple[Tensor, Tensor]]  # 4-d weight: conv kernel (kh, kw, Cin, Cout); 2-d: dense (out, in)

    @property
    def feature_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    def parameters(self) -> dict[str, Tensor]:
        params = {}
        for i, (weight, bias) in enumerate(self.layers):
            params[f"layers.{i}.weight"] = weight
            params[f"layers.{i}.bias"] = bias
        return params

    def detached(self) -> "FeatureExtractor":
        return FeatureExtractor(self.kind, [(w.detach(), b.detach()) for w, b in self.layers])

    @classmethod
    def from_arrays(cls, kind: str, arrays: dict[str, np.ndarray]) -> "FeatureExtractor":
        count = len(arrays) // 2
        layers = []
        for i in range(count):
            try:
                weight, bias = arrays[f"layers.{i}.weight"], arrays[f"layers.{i}.bias"]
            except KeyError as e:
                raise ShapeError(f"extractor arrays are missing {e}") from None
            layers.append((Tensor(weight, requires_grad=True), Tensor(bias, requires_grad=True)))
        return cls(kind, layers)

    def __call__(self, images) -> Tensor:
        x = as_tensor(images)
        if x.ndim != 4:
            raise ShapeError(f"extractor expects (B, H, W, Ch) images, got {x.shape}")
        if self.kind == "mlp":
            x = x.reshape(x.shape[0], -1)
        for i, (weight, bias) in enumerate(self.layers):
            if weight.ndim == 4:
                x = relu(conv2d(x, weight, stride=_conv_stride(i), padding=CONV_KERNEL // 2) + bias)
                continue
            if x.ndim == 4:
                x = x.mean(axis=(1, 2))
            if x.shape[1] != weight.shape[1]:
                raise ShapeError(f"layer {i} expects {weight.shape[1]} inputs, got {x.shape[1]}")
            x = relu(matmul(x, weight.T) + bias)
        return x

    def features(self, images, chunk: int = 512) -> np.ndarray:
        """Gradient-free forward pass in chunks; returns a plain array."""
        images = np.asarray(images, dtype=np.float64)
        with no_grad():
            parts = [self(images[i:i + chunk]).data for i in range(0, len(images), chunk)]
        if not parts:
            return np.zeros((0, self.feature_dim))
        return np.concatenate(parts, axis=0)


def _dense(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[Tensor, Tensor]:
    weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
    return Tensor(weight, requires_grad=True), Tensor(np.zeros(fan_out), requires_grad=True)


def _conv(rng: np.random.Generator, c_in: int, c_out: int) -> tuple[Tensor, Tensor]:
    fan_in = CONV_KERNEL * CONV_KERNEL * c_in
    weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(CONV_KERNEL, CONV_KERNEL, c_in, c_out))
    return Tensor(weight, requires_grad=True), Tensor(np.zeros(c_out), requires_grad=True)


def build_mlp(image_shape: tuple[int, int, int], hidden: list[int], feature_dim: int,
              rng: np.random.Generator) -> FeatureExtractor:
    widths = [int(np.prod(image_shape)), *hidden, feature_dim]
    return FeatureExtractor("mlp", [_dense(rng, a, b) for a, b in zip(widths[:-1], widths[1:])])


def build_convnet(image_shape: tuple[int, int, int], channels: list[int], feature_dim: int,
                  rng: np.random.Generator) -> FeatureExtractor:
    if not channels:
        raise ValueError("convnet needs at least one convolution layer")
    widths = [image_shape[-1], *channels]
    layers = [_conv(rng, a, b) for a, b in zip(widths[:-1], widths[1:])]
    layers.append(_dense(rng, channels[-1], feature_dim))
    return FeatureExtractor("convnet", layers)


def get_extractor(cfg: ModelConfig, image_shape: tuple[int, int, int], rng: np.random.Generator) -> FeatureExtractor:
    if cfg.extractor == "mlp":
        return build_mlp(image_shape, cfg.hidden, cfg.feature_dim, rng)
    if cfg.extractor == "convnet":
        return build_convnet(image_shape, cfg.conv_channels, cfg.feature_dim, rng)
    raise ValueError(f"Unknown extractor: {cfg.extractor}")
