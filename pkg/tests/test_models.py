import numpy as np
import pytest

from sdk.config import ModelConfig
from sdk.errors import ShapeError
from sdk.models import FeatureExtractor, build_convnet, build_mlp, get_extractor
from sdk.tensor import Tensor


def test_mlp_features(rng):
    extractor = build_mlp((4, 4, 1), [8], 5, rng)
    out = extractor(rng.uniform(size=(3, 4, 4, 1)))
    assert out.shape == (3, 5)
    assert (out.data >= 0).all()
    assert extractor.feature_dim == 5
    assert list(extractor.parameters()) == ["layers.0.weight", "layers.0.bias", "layers.1.weight", "layers.1.bias"]


def test_convnet_features(rng):
    extractor = get_extractor(ModelConfig(extractor="convnet", conv_channels=[4, 6], feature_dim=3), (8, 8, 2), rng)
    assert extractor.kind == "convnet"
    assert extractor(rng.uniform(size=(2, 8, 8, 2))).shape == (2, 3)
    with pytest.raises(ValueError):
        build_convnet((8, 8, 2), [], 3, rng)


def test_chunked_features_match_forward(rng):
    extractor = build_mlp((4, 4, 2), [6], 3, rng)
    images = rng.uniform(size=(5, 4, 4, 2))
    np.testing.assert_allclose(extractor.features(images, chunk=2), extractor(images).data)
    assert extractor.features(images[:0]).shape == (0, 3)


def test_from_arrays_rebuilds_the_same_network(rng):
    extractor = build_convnet((6, 6, 1), [3], 4, rng)
    arrays = {k: v.data for k, v in extractor.parameters().items()}
    rebuilt = FeatureExtractor.from_arrays("convnet", arrays)
    images = rng.uniform(size=(2, 6, 6, 1))
    np.testing.assert_array_equal(rebuilt(images).data, extractor(images).data)

    del arrays["layers.0.bias"]
    with pytest.raises(ShapeError):
        FeatureExtractor.from_arrays("convnet", arrays)


def test_detached_extractor_records_nothing(rng):
    extractor = build_mlp((2, 2, 1), [3], 2, rng).detached()
    assert not extractor(np.ones((1, 2, 2, 1))).requires_grad


def test_input_validation(rng):
    extractor = build_mlp((4, 4, 1), [8], 5, rng)
    with pytest.raises(ShapeError):
        extractor(np.ones((4, 4, 1)))
    with pytest.raises(ShapeError):
        extractor(np.ones((1, 3, 3, 1)))
    with pytest.raises(ValueError):
        get_extractor(ModelConfig.model_construct(extractor="resnet"), (4, 4, 1), rng)


def test_mlp_gradient(rng, numgrad, rel_err):
    extractor = build_mlp((3, 3, 1), [4], 2, rng)
    images = rng.uniform(size=(2, 3, 3, 1))
    w0 = extractor.layers[0][0].data.copy()
    b1 = extractor.layers[1]

    def f(w):
        net = FeatureExtractor("mlp", [(w, extractor.layers[0][1].detach()), (b1[0].detach(), b1[1].detach())])
        return net(images).sum()

    w = Tensor(w0, requires_grad=True)
    f(w).backward()
    assert rel_err(w.grad, numgrad(lambda x: f(Tensor(x)).item(), w0)) < 1e-6
