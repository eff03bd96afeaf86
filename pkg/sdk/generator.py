"""Adversarial target-domain synthesis in Fourier-amplitude space."""
from dataclasses import dataclass

import numpy as np

from sdk.fourier import HalfAmplitude, Spectrum, dft2, full_to_half, half_length, half_to_full, idft2
from sdk.tensor import Tensor, as_tensor, matmul, relu, softplus

NOISE_DIM = 100
INIT_WEIGHT_STD = 0.01


@dataclass
class GeneratorParams:
    weight: Tensor  # (out_dim, in_dim)
    bias: Tensor  # (out_dim,)
    hidden_weight: Tensor | None = None  # (hidden, noise_dim)
    hidden_bias: Tensor | None = None

    @classmethod
    def init(
        cls,
        out_dim: int,
        rng: np.random.Generator,
        noise_dim: int = NOISE_DIM,
        hidden_units: int = 0,
    ) -> "GeneratorParams":
        if hidden_units > 0:
            hidden_weight = rng.normal(0.0, np.sqrt(2.0 / noise_dim), size=(hidden_units, noise_dim))
            return cls(
                weight=Tensor(rng.normal(0.0, INIT_WEIGHT_STD, size=(out_dim, hidden_units)), requires_grad=True),
                bias=Tensor(np.zeros(out_dim), requires_grad=True),
                hidden_weight=Tensor(hidden_weight, requires_grad=True),
                hidden_bias=Tensor(np.zeros(hidden_units), requires_grad=True),
            )
        return cls(
            weight=Tensor(rng.normal(0.0, INIT_WEIGHT_STD, size=(out_dim, noise_dim)), requires_grad=True),
            bias=Tensor(np.zeros(out_dim), requires_grad=True),
        )

    @property
    def noise_dim(self) -> int:
        source = self.hidden_weight if self.hidden_weight is not None else self.weight
        return source.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def parameters(self) -> dict[str, Tensor]:
        params = {"weight": self.weight, "bias": self.bias}
        if self.hidden_weight is not None:
            params["hidden_weight"] = self.hidden_weight
            params["hidden_bias"] = self.hidden_bias
        return params

    def detached(self) -> "GeneratorParams":
        return GeneratorParams(**{k: v.detach() for k, v in self.parameters().items()})

    def affine(self, eps) -> Tensor:
        x = as_tensor(eps)
        if self.hidden_weight is not None:
            x = relu(matmul(x, self.hidden_weight.T) + self.hidden_bias)
        return matmul(x, self.weight.T) + self.bias


def amplitude_output_dim(height: int, width: int, channels: int) -> int:
    return half_length(height, width) * channels


@dataclass(frozen=True)
class SynthDraws:
    eps: np.ndarray  # (B, noise_dim)
    lam: np.ndarray  # (B,)

    @classmethod
    def sample(
        cls,
        batch: int,
        alpha_mix: float,
        noise_rng: np.random.Generator,
        mix_rng: np.random.Generator,
        noise_dim: int = NOISE_DIM,
    ) -> "SynthDraws":
        _check_alpha_mix(alpha_mix)
        return cls(eps=noise_rng.standard_normal((batch, noise_dim)), lam=mix_rng.uniform(0.0, alpha_mix, size=batch))


@dataclass
class SynthBatch:
    images: Tensor  # (B, H, W, Ch)
    labels: np.ndarray | None  # None when labels are dropped (pixel-space variant)
    imag_residual: float
    source: Spectrum | None = None
    generated: HalfAmplitude | None = None
    mixed: HalfAmplitude | None = None


def _check_alpha_mix(alpha_mix: float):
    if not 0.0 <= alpha_mix <= 1.0:
        raise ValueError(f"alpha_mix must lie in [0, 1], got {alpha_mix}")


def generate_amplitude(nu: GeneratorParams, eps, height: int, width: int, channels: int) -> HalfAmplitude:
    values = softplus(nu.affine(eps))
    batch = values.shape[0]
    return HalfAmplitude(values.reshape(batch, half_length(height, width), channels), height, width)


def generate_pixels(nu: GeneratorParams, eps, height: int, width: int, channels: int) -> Tensor:
    out = nu.affine(eps)
    return out.reshape(out.shape[0], height, width, channels)


def _mix_weights(lam: np.ndarray, ndim: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=np.float64)
    return lam.reshape(lam.shape + (1,) * (ndim - lam.ndim))


def post_mixup(a_gen: HalfAmplitude, a_src: HalfAmplitude, alpha_mix: float, lam: np.ndarray) -> HalfAmplitude:
    _check_alpha_mix(alpha_mix)
    w = _mix_weights(lam, a_gen.values.ndim)
    values = a_gen.values * w + as_tensor(a_src.values) * (1.0 - w)
    return HalfAmplitude(values, a_gen.height, a_gen.width)


def synthesize_target(
    images,
    labels: np.ndarray,
    nu: GeneratorParams,
    alpha_mix: float,
    rng: np.random.Generator | None = None,
    draws: SynthDraws | None = None,
    mixup: bool = True,
) -> SynthBatch:
    """
    Build a target batch from source images; differentiable w.r.t. nu.

    Pass `draws` to fix the noise and mixup coefficients (e.g. to replay the
    same batch in the generator step); otherwise they are drawn from `rng`.
    mixup=False uses the generated amplitude as is.
    """
    images = np.asarray(images, dtype=np.float64)
    batch, height, width, channels = images.shape
    if draws is None:
        rng = rng if rng is not None else np.random.default_rng()
        draws = SynthDraws.sample(batch, alpha_mix, rng, rng, noise_dim=nu.noise_dim)

    source = dft2(images)
    a_src = full_to_half(source.amplitude)
    a_gen = generate_amplitude(nu, draws.eps, height, width, channels)
    mixed = post_mixup(a_gen, a_src, alpha_mix, draws.lam) if mixup else a_gen
    target, residual = idft2(Spectrum(half_to_full(mixed), source.phase), assert_symmetric=True)
    return SynthBatch(
        images=target,
        labels=np.asarray(labels).copy(),
        imag_residual=residual,
        source=source,
        generated=a_gen,
        mixed=mixed,
    )


def synthesize_pixels(
    images,
    nu: GeneratorParams,
    alpha_mix: float,
    draws: SynthDraws,
    mixup: bool = True,
) -> SynthBatch:
    """Pixel-space ablation: generated images mixed with the source pixels, labels dropped."""
    _check_alpha_mix(alpha_mix)
    images = np.asarray(images, dtype=np.float64)
    _, height, width, channels = images.shape
    generated = generate_pixels(nu, draws.eps, height, width, channels)
    if mixup:
        w = _mix_weights(draws.lam, 4)
        generated = generated * w + images * (1.0 - w)
    return SynthBatch(images=generated, labels=None, imag_residual=0.0)
