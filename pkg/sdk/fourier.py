"""
2D Fourier transforms over the spatial axes of (..., H, W, Ch) images.

Unnormalised forward, 1/(H*W) inverse. The half spectrum keeps one bin per
conjugate orbit (u, v) ~ (-u mod H, -v mod W), scanned row-major.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from sdk.errors import NonFiniteError, ShapeError, SymmetryError
from sdk.tensor import Tensor, as_tensor, from_op

AXES = (-3, -2)
SYMMETRY_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Spectrum:
    amplitude: np.ndarray | Tensor
    phase: np.ndarray

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return tuple(self.phase.shape[-3:-1])


@dataclass(frozen=True)
class HalfSpectrumIndex:
    height: int
    width: int
    representatives: np.ndarray  # flat (u*W + v) position of each orbit's canonical bin
    orbit_of: np.ndarray  # orbit id of every flat grid position
    self_paired: np.ndarray  # per orbit: bin equals its own conjugate partner

    @property
    def length(self) -> int:
        return len(self.representatives)


@dataclass(frozen=True)
class HalfAmplitude:
    values: Tensor  # (..., L, Ch)
    height: int
    width: int

    @property
    def channels(self) -> int:
        return self.values.shape[-1]


@lru_cache(maxsize=None)
def half_index(height: int, width: int) -> HalfSpectrumIndex:
    representatives = []
    self_paired = []
    orbit_of = np.full(height * width, -1, dtype=np.intp)
    for u in range(height):
        for v in range(width):
            pu, pv = (-u) % height, (-v) % width
            if (u, v) > (pu, pv):
                continue
            orbit = len(representatives)
            representatives.append(u * width + v)
            self_paired.append((u, v) == (pu, pv))
            orbit_of[u * width + v] = orbit
            orbit_of[pu * width + pv] = orbit
    return HalfSpectrumIndex(
        height=height,
        width=width,
        representatives=np.asarray(representatives, dtype=np.intp),
        orbit_of=orbit_of,
        self_paired=np.asarray(self_paired, dtype=bool),
    )


def half_length(height: int, width: int) -> int:
    return half_index(height, width).length


def _check_image(arr: np.ndarray):
    if arr.ndim < 3:
        raise ShapeError(f"dft2: expected (..., H, W, Ch) image, got shape {arr.shape}")
    if arr.shape[-3] < 2 or arr.shape[-2] < 2:
        raise ShapeError(f"dft2: spatial extent must be at least 2x2, got {arr.shape[-3:-1]}")
    if not np.isfinite(arr).all():
        raise NonFiniteError("dft2: image contains non-finite pixels")


def dft2(image) -> Spectrum:
    arr = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    _check_image(arr)
    z = np.fft.fft2(arr, axes=AXES)
    phase = np.angle(z)
    # np.angle can return -pi for (-x, -0.0); keep phases in (-pi, pi].
    phase = np.where(phase <= -np.pi, phase + 2 * np.pi, phase)
    return Spectrum(amplitude=np.abs(z), phase=phase)


def idft2(spec: Spectrum, assert_symmetric: bool = False) -> tuple[Tensor, float]:
    """
    Inverse transform of amplitude∠phase, returning (real image, max |imag| discarded).

    The amplitude may be a Tensor; gradients flow into it, the phase is constant.
    """
    amplitude = as_tensor(spec.amplitude)
    phase = np.asarray(spec.phase, dtype=np.float64)
    if amplitude.shape != phase.shape:
        raise ShapeError(f"idft2: amplitude {amplitude.shape} and phase {phase.shape} differ")
    rotor = np.exp(1j * phase)
    z = np.fft.ifft2(amplitude.data * rotor, axes=AXES)
    residual = float(np.abs(z.imag).max()) if z.size else 0.0
    if assert_symmetric:
        scale = float(np.abs(amplitude.data).max()) if amplitude.size else 0.0
        if residual > SYMMETRY_TOLERANCE * scale:
            raise SymmetryError(
                f"idft2: imaginary residual {residual:.3e} exceeds {SYMMETRY_TOLERANCE:g} x amplitude scale {scale:.3e}"
            )

    def backward(g):
        return (np.real(rotor * np.fft.ifft2(g, axes=AXES)),)

    return from_op(z.real, (amplitude,), "idft2", backward), residual


def half_to_full(half: HalfAmplitude) -> Tensor:
    values = half.values
    if values.size and values.data.min() < 0:
        raise ValueError("half_to_full: half-spectrum amplitudes must be non-negative")
    index = half_index(half.height, half.width)
    if values.shape[-2] != index.length:
        raise ShapeError(
            f"half_to_full: expected {index.length} bins for {half.height}x{half.width}, got {values.shape[-2]}"
        )
    lead = values.shape[:-2]
    return values.take(index.orbit_of, axis=-2).reshape(lead + (half.height, half.width, half.channels))


def full_to_half(amplitude) -> HalfAmplitude:
    amplitude = as_tensor(amplitude)
    if amplitude.ndim < 3:
        raise ShapeError(f"full_to_half: expected (..., H, W, Ch), got {amplitude.shape}")
    height, width, channels = amplitude.shape[-3:]
    index = half_index(height, width)
    flat = amplitude.reshape(amplitude.shape[:-3] + (height * width, channels))
    return HalfAmplitude(flat.take(index.representatives, axis=-2), height, width)
