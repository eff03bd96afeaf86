import numpy as np
import pytest

from sdk.errors import NonFiniteError, ShapeError, SymmetryError
from sdk.fourier import HalfAmplitude, Spectrum, dft2, full_to_half, half_index, half_length, half_to_full, idft2
from sdk.tensor import Tensor


def brute_force_dft(image: np.ndarray) -> np.ndarray:
    h, w = image.shape[:2]
    u = np.arange(h)[:, None, None, None]
    v = np.arange(w)[None, :, None, None]
    y = np.arange(h)[None, None, :, None]
    x = np.arange(w)[None, None, None, :]
    basis = np.exp(-2j * np.pi * (u * y / h + v * x / w))  # (H, W, H, W)
    return np.einsum("uvyx,yxc->uvc", basis, image)


@pytest.mark.parametrize("shape", [(4, 6, 1), (8, 8, 3), (5, 3, 2)])
def test_dft2_matches_brute_force(rng, shape):
    image = rng.uniform(size=shape)
    spec = dft2(image)
    z = spec.amplitude * np.exp(1j * spec.phase)
    assert np.abs(z - brute_force_dft(image)).max() < 1e-9


def test_round_trip_32x32(rng):
    image = rng.uniform(size=(2, 32, 32, 3))
    recon, residual = idft2(dft2(image), assert_symmetric=True)
    assert np.abs(recon.data - image).max() < 1e-9
    assert residual < 1e-9


def test_constant_image_has_all_energy_at_dc():
    spec = dft2(np.full((4, 4, 1), 0.5))
    assert spec.amplitude[0, 0, 0] == pytest.approx(8.0)
    assert np.abs(spec.amplitude).sum() == pytest.approx(8.0)


def test_phase_range(rng):
    spec = dft2(rng.normal(size=(8, 8, 1)))
    assert (spec.phase > -np.pi).all() and (spec.phase <= np.pi).all()


def test_half_spectrum_lengths():
    assert half_length(32, 32) == 514
    assert half_length(4, 4) == 10
    index = half_index(4, 4)
    assert index.self_paired.sum() == 4
    assert (index.orbit_of >= 0).all()


def test_half_full_round_trip(rng):
    amplitude = dft2(rng.uniform(size=(3, 8, 6, 2))).amplitude
    half = full_to_half(amplitude)
    assert half.values.shape == (3, half_length(8, 6), 2)
    np.testing.assert_allclose(half_to_full(half).data, amplitude, atol=1e-12)


def test_half_to_full_rejects_negative_amplitudes():
    values = Tensor(-np.ones((half_length(4, 4), 1)))
    with pytest.raises(ValueError):
        half_to_full(HalfAmplitude(values, 4, 4))


def test_asymmetric_amplitude_raises_symmetry_error(rng):
    amplitude = rng.uniform(1.0, 2.0, size=(4, 4, 1))
    with pytest.raises(SymmetryError):
        idft2(Spectrum(amplitude, np.zeros((4, 4, 1))), assert_symmetric=True)
    _, residual = idft2(Spectrum(amplitude, np.zeros((4, 4, 1))))
    assert residual > 0


def test_idft2_gradient(rng, numgrad, rel_err):
    phase = dft2(rng.uniform(size=(4, 4, 1))).phase
    weights = rng.normal(size=(4, 4, 1))
    a0 = rng.uniform(0.5, 1.5, size=(4, 4, 1))

    def f(a):
        image, _ = idft2(Spectrum(a, phase))
        return (image * weights).sum()

    a = Tensor(a0, requires_grad=True)
    f(a).backward()
    assert rel_err(a.grad, numgrad(lambda x: f(Tensor(x)).item(), a0)) < 1e-6


def test_half_spectrum_gradient(rng, numgrad, rel_err):
    phase = dft2(rng.uniform(size=(4, 4, 2))).phase
    weights = rng.normal(size=(4, 4, 2))
    h0 = rng.uniform(0.5, 1.5, size=(half_length(4, 4), 2))

    def f(h):
        image, _ = idft2(Spectrum(half_to_full(HalfAmplitude(h, 4, 4)), phase))
        return (image * weights).sum()

    h = Tensor(h0, requires_grad=True)
    f(h).backward()
    assert rel_err(h.grad, numgrad(lambda x: f(Tensor(x)).item(), h0)) < 1e-6


def test_dft2_input_errors():
    with pytest.raises(ShapeError):
        dft2(np.ones((4, 4)))
    with pytest.raises(ShapeError):
        dft2(np.ones((1, 4, 1)))
    bad = np.ones((4, 4, 1))
    bad[0, 0, 0] = np.nan
    with pytest.raises(NonFiniteError):
        dft2(bad)


def test_impulse_has_flat_amplitude_and_zero_phase():
    image = np.zeros((4, 4, 1))
    image[0, 0, 0] = 1.0
    spec = dft2(image)
    np.testing.assert_allclose(spec.amplitude, 1.0, atol=1e-12)
    np.testing.assert_allclose(spec.phase, 0.0, atol=1e-12)


def test_parseval_8x8(rng):
    image = rng.normal(size=(8, 8, 1))
    assert (image ** 2).sum() == pytest.approx((dft2(image).amplitude ** 2).sum() / 64, rel=1e-12)


def test_zero_amplitude_gives_a_zero_image(rng):
    phase = dft2(rng.uniform(size=(4, 4, 1))).phase
    image, residual = idft2(Spectrum(np.zeros((4, 4, 1)), phase), assert_symmetric=True)
    np.testing.assert_array_equal(image.data, 0.0)
    assert residual == 0.0


def test_half_entries_fill_their_orbits():
    index = half_index(4, 4)
    np.testing.assert_array_equal(half_to_full(HalfAmplitude(Tensor(np.ones((10, 1))), 4, 4)).data, 1.0)

    paired, single = np.flatnonzero(~index.self_paired)[0], np.flatnonzero(index.self_paired)[1]
    for entry, cells in ((paired, 2), (single, 1)):
        values = np.zeros((10, 1))
        values[entry] = 5.0
        full = half_to_full(HalfAmplitude(Tensor(values), 4, 4)).data
        assert (full == 5.0).sum() == cells
        assert (full == 0.0).sum() == 16 - cells


def test_half_round_trip_32x32(rng):
    values = rng.uniform(size=(2, 514, 3))
    half = full_to_half(half_to_full(HalfAmplitude(Tensor(values), 32, 32)))
    assert (half.height, half.width) == (32, 32)
    np.testing.assert_array_equal(half.values.data, values)
