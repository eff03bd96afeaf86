import math

import numpy as np
import pytest

from sdk.bayes import VariationalHead, elbo, logit_stats
from sdk.config import METHODS, AugmentConfig
from sdk.datasets import get_domains, get_split
from sdk.datasets.base import DomainDataset, Split
from sdk.errors import DataError, NonFiniteError
from sdk.generator import GeneratorParams, SynthDraws, amplitude_output_dim, synthesize_target
from sdk.losses import smcd
from sdk.models import build_mlp
from sdk.optim import AdamState
from sdk.rng import RngStreams
from sdk.tensor import Tensor
from sdk.trainer import (
    METHOD_TRAITS,
    Batch,
    Learner,
    MetricsRow,
    amplitude_mix,
    assign_flat,
    augment,
    evaluate,
    flatten_parameters,
    generator_step,
    init_learner,
    model_step,
    sample_batch,
    train,
    validation_loss,
)


def make_split(cfg) -> Split:
    return get_split(cfg.data, get_domains(cfg.data, cfg.model.image_size, cfg.model.channels))


def model_vector(model) -> np.ndarray:
    return flatten_parameters({**model.extractor.parameters(), **model.head.parameters()})


def snapshot(params) -> dict[str, np.ndarray]:
    return {k: v.data.copy() for k, v in params.items()}


def setup_learner(cfg):
    split = make_split(cfg)
    streams = RngStreams(cfg.seed)
    learner = init_learner(cfg, split.train[0].image_shape, split.class_count, streams)
    batch = sample_batch(split.train, cfg.batch_per_domain, streams["data"])
    return learner, batch, streams, 1.0 / split.train_size


def toy_learner(cfg, rng, classes: int = 3, dim: int = 8) -> Learner:
    """MLP on 4x4 grey images with a d=8 feature space."""
    extractor = build_mlp((4, 4, 1), [6], dim, rng)
    head = VariationalHead.init(classes, dim, rng)
    generator = GeneratorParams.init(amplitude_output_dim(4, 4, 1), rng, noise_dim=cfg.generator.noise_dim)
    return Learner(extractor, head, generator, AdamState(cfg.learning_rate), AdamState(cfg.learning_rate))


def toy_batch(rng) -> tuple[Batch, SynthDraws]:
    batch = Batch(rng.uniform(size=(4, 4, 4, 1)), np.array([0, 1, 2, 0]))
    return batch, SynthDraws.sample(4, 0.5, rng, rng, noise_dim=6)


@pytest.mark.parametrize("method", METHODS)
def test_every_method_trains(tiny_config, method):
    cfg = tiny_config(f"method={method}")
    model = train(cfg, make_split(cfg))
    assert len(model.history) == 6
    assert [row.iter for row in model.metrics] == [2, 4, 6]
    assert all(math.isfinite(row.val_loss) for row in model.metrics)
    uses_generator = METHOD_TRAITS[method].uses_generator
    assert (model.generator is not None) == uses_generator
    assert all((row.smcd is not None) == uses_generator for row in model.metrics)
    if uses_generator:
        assert all(0.0 <= row.target_discrepancy <= 1.0 for row in model.metrics)
    if not cfg.swad_enabled:
        assert model.swad_events == {}
        assert {row.swad_phase for row in model.metrics} == {"off"}


def test_agfa_without_target_loss_equals_erm_swad(tiny_config):
    agfa_cfg = tiny_config("method=agfa", "eta=0")
    erm_cfg = tiny_config("method=erm_swad")
    agfa = train(agfa_cfg, make_split(agfa_cfg))
    erm = train(erm_cfg, make_split(erm_cfg))
    np.testing.assert_array_equal(model_vector(agfa), model_vector(erm))
    assert [r.val_loss for r in agfa.metrics] == [r.val_loss for r in erm.metrics]


def test_training_is_deterministic_per_seed(tiny_config):
    cfg = tiny_config()
    first, second = train(cfg, make_split(cfg)), train(cfg, make_split(cfg))
    np.testing.assert_array_equal(model_vector(first), model_vector(second))
    assert [r.as_row() for r in first.metrics] == [r.as_row() for r in second.metrics]

    other = tiny_config("seed=1")
    assert not np.array_equal(model_vector(train(other, make_split(other))), model_vector(first))


def test_model_step_lowers_the_training_loss(tiny_config):
    cfg = tiny_config("method=erm", "learning_rate=1e-2", "augment.hflip=false")
    learner, batch, streams, kl_scale = setup_learner(cfg)
    before = validation_loss(learner.extractor, learner.head, batch.images, batch.labels)
    for i in range(40):
        report = model_step(learner, batch, cfg, streams, kl_scale, iteration=i + 1)
    after = validation_loss(learner.extractor, learner.head, batch.images, batch.labels)
    assert after < before
    assert report.elbo == pytest.approx(-report.nll - kl_scale * report.kl)
    assert report.target_loss is None


def test_steps_touch_only_their_own_parameters(tiny_config):
    cfg = tiny_config("method=agfa")
    learner, batch, streams, kl_scale = setup_learner(cfg)
    draws = SynthDraws.sample(len(batch), cfg.alpha_mix, streams["generator"], streams["mixup"],
                              noise_dim=cfg.generator.noise_dim)

    nu_before = snapshot(learner.generator.parameters())
    report = model_step(learner, batch, cfg, streams, kl_scale, draws, iteration=1)
    assert report.target_loss is not None and report.target_loss >= 0.0
    assert report.imag_residual < 1e-9
    for name, value in learner.generator.parameters().items():
        np.testing.assert_array_equal(value.data, nu_before[name])

    model_before = snapshot(learner.model_parameters())
    term = generator_step(learner, batch, cfg, draws)
    assert term >= 0.0
    for name, value in learner.model_parameters().items():
        np.testing.assert_array_equal(value.data, model_before[name])
    assert any(not np.array_equal(v.data, nu_before[k]) for k, v in learner.generator.parameters().items())


def test_generator_is_frozen_without_mixing(tiny_config):
    cfg = tiny_config("method=agfa", "alpha_mix=0")
    learner, batch, streams, _ = setup_learner(cfg)
    draws = SynthDraws.sample(len(batch), 0.0, streams["generator"], streams["mixup"], noise_dim=cfg.generator.noise_dim)
    before = snapshot(learner.generator.parameters())
    generator_step(learner, batch, cfg, draws)
    for name, value in learner.generator.parameters().items():
        np.testing.assert_array_equal(value.data, before[name])


def test_generator_methods_need_draws(tiny_config):
    cfg = tiny_config("method=agfa")
    learner, batch, streams, kl_scale = setup_learner(cfg)
    with pytest.raises(ValueError):
        model_step(learner, batch, cfg, streams, kl_scale)


def test_amplitude_mix(rng):
    batch = Batch(rng.uniform(size=(4, 8, 8, 1)), np.array([0, 1, 2, 3]))
    same = amplitude_mix(batch, 0.0, rng)
    np.testing.assert_allclose(same.images.data, batch.images, atol=1e-9)
    mixed = amplitude_mix(batch, 1.0, rng)
    assert mixed.images.shape == batch.images.shape
    np.testing.assert_array_equal(mixed.labels, batch.labels)
    assert mixed.imag_residual < 1e-9


def test_sample_batch_takes_equal_quotas(rng):
    big = DomainDataset("big", 0, np.zeros((10, 2, 2, 1)), np.zeros(10, dtype=np.int64), 2)
    small = DomainDataset("small", 1, np.ones((2, 2, 2, 1)), np.ones(2, dtype=np.int64), 2)
    batch = sample_batch([big, small], 4, rng)
    assert len(batch) == 8
    np.testing.assert_array_equal(batch.labels, [0, 0, 0, 0, 1, 1, 1, 1])


def test_augment(rng):
    images = rng.uniform(size=(16, 4, 4, 1))
    batch = Batch(images, np.zeros(16, dtype=np.intp))
    np.testing.assert_array_equal(augment(batch, AugmentConfig(hflip=False), rng).images, images)
    flipped = augment(batch, AugmentConfig(hflip=True), rng).images
    for original, out in zip(images, flipped):
        assert np.array_equal(out, original) or np.array_equal(out, original[:, ::-1])
    jittered = augment(batch, AugmentConfig(hflip=False, color_jitter=0.5), rng).images
    assert jittered.min() >= 0.0 and jittered.max() <= 1.0


def test_evaluate(tiny_config):
    cfg = tiny_config("method=erm")
    split = make_split(cfg)
    model = train(cfg, split)
    report = evaluate(model, split.target)
    assert report.count == len(split.target)
    assert report.accuracy == pytest.approx(np.mean(model.predict(split.target.images) == split.target.labels))
    assert set(report.per_class) == {0, 1, 2, 3}
    assert 0.0 <= report.discrepancy <= 1.0
    assert set(report.to_dict()) == {"name", "count", "accuracy", "per_class", "discrepancy"}


def test_training_rejects_an_empty_validation_split(tiny_config):
    cfg = tiny_config()
    split = make_split(cfg)
    empty = [d.subset([]) for d in split.val]
    with pytest.raises(DataError):
        train(cfg, Split(split.train, empty, split.targets, split.val_frac, split.seed))


def test_non_finite_failure_is_logged_and_raised(tiny_config, monkeypatch, log_messages):
    def explode(*args, **kwargs):
        raise NonFiniteError("gradient of 'head/mean' contains NaN/Inf")

    monkeypatch.setattr("sdk.trainer.model_step", explode)
    cfg = tiny_config()
    with pytest.raises(NonFiniteError):
        train(cfg, make_split(cfg))
    assert any("Non-finite value at iteration 1" in m for m in log_messages)


def test_metrics_row_rendering():
    row = MetricsRow(iter=2, elbo=-1.5, nll=1.0, kl=0.5, smcd=None, val_loss=0.25, swad_phase="searching",
                     t_s=None, t_e=None, swad_ref_loss=None, target_discrepancy=0.1)
    rendered = row.as_row()
    assert rendered["iter"] == "2"
    assert rendered["elbo"] == "-1.5"
    assert rendered["smcd"] == "" and rendered["t_s"] == ""
    assert rendered["target_discrepancy"] == "0.1"


def test_assign_flat_checks_sizes(rng):
    params = {"a": Tensor(np.zeros((2, 2))), "b": Tensor(np.zeros(3))}
    assign_flat(params, np.arange(7.0))
    np.testing.assert_array_equal(params["b"].data, [4.0, 5.0, 6.0])
    with pytest.raises(ValueError):
        assign_flat(params, np.arange(8.0))


def test_model_step_gradient_matches_finite_differences(tiny_config, rng, numgrad, rel_err):
    cfg = tiny_config("method=agfa", "eta=0.5", "alpha_mix=0.5")
    learner = toy_learner(cfg, rng)
    batch, draws = toy_batch(rng)
    kl_scale = 0.1
    start = snapshot(learner.model_parameters())

    report = model_step(learner, batch, cfg, RngStreams(7), kl_scale, draws)
    assert report.target_loss > 0.0
    theta = learner.extractor.parameters()
    grads = {name: p.grad.copy() for name, p in theta.items()}
    assign_flat(learner.model_parameters(), np.concatenate([v.ravel() for v in start.values()]))
    head_noise = RngStreams(7)["head_mc"].standard_normal((cfg.n_mc,) + learner.head.mean.shape)

    def combined_loss() -> float:
        value, _, _ = elbo(learner.head, learner.extractor(batch.images), batch.labels, kl_scale=kl_scale,
                           noise=head_noise)
        target = synthesize_target(batch.images, batch.labels, learner.generator, cfg.alpha_mix, draws=draws)
        stats = logit_stats(learner.head, learner.extractor(target.images.data))
        return (-value + smcd(stats, target.labels, cfg.alpha_conf) * cfg.eta).item()

    assert combined_loss() == pytest.approx(report.loss, rel=1e-12)
    for name, p in theta.items():
        original = p.data.copy()

        def at(x, p=p):
            p.data = x
            return combined_loss()

        numeric = numgrad(at, original)
        p.data = original
        assert rel_err(grads[name], numeric) < 1e-4, name


def test_single_model_step_decreases_negative_elbo(tiny_config):
    cfg = tiny_config("method=erm", "learning_rate=1e-4")
    rng = np.random.default_rng(3)
    labels = np.repeat([0, 1], 8)
    images = rng.uniform(0.0, 0.1, size=(16, 4, 4, 1))
    images[labels == 0, :, :2] += 0.9
    images[labels == 1, :, 2:] += 0.9
    learner = Learner(build_mlp((4, 4, 1), [6], 8, rng), VariationalHead.init(2, 8, rng), None,
                      AdamState(cfg.learning_rate), None)

    report = model_step(learner, Batch(images, labels), cfg, RngStreams(5), kl_scale=1 / 16)
    noise = RngStreams(5)["head_mc"].standard_normal((cfg.n_mc, 2, 8))
    after, _, _ = elbo(learner.head, learner.extractor(images), labels, kl_scale=1 / 16, noise=noise)
    assert -after.item() < -report.elbo


def test_generator_step_ascends_the_target_loss(tiny_config, rng):
    cfg = tiny_config("method=agfa", "alpha_mix=0.5", "learning_rate=1e-7")
    learner = toy_learner(cfg, rng)
    batch, draws = toy_batch(rng)
    nu = learner.generator.parameters()
    start = snapshot(nu)

    before = generator_step(learner, batch, cfg, draws)
    ascent = {name: -p.grad for name, p in nu.items()}
    moved = sum(float(np.sum((p.data - start[name]) * ascent[name])) for name, p in nu.items())
    assert moved > 0.0
    assert generator_step(learner, batch, cfg, draws) >= before


def test_target_loss_gradient_reaches_the_generator(tiny_config, rng, numgrad, rel_err):
    cfg = tiny_config("method=agfa", "alpha_mix=0.5")
    learner = toy_learner(cfg, rng)
    batch, draws = toy_batch(rng)
    extractor, head = learner.extractor.detached(), learner.head.detached()
    w0 = rng.normal(0.0, 0.3, size=learner.generator.weight.shape)
    b0 = rng.normal(0.0, 0.3, size=learner.generator.bias.shape)

    def f(w, b):
        target = synthesize_target(batch.images, batch.labels, GeneratorParams(w, b), cfg.alpha_mix, draws=draws)
        assert target.imag_residual < 1e-9
        return smcd(logit_stats(head, extractor(target.images)), target.labels, cfg.alpha_conf)

    w, b = Tensor(w0, requires_grad=True), Tensor(b0, requires_grad=True)
    loss = f(w, b)
    assert loss.item() > 0.0
    loss.backward()
    assert rel_err(w.grad, numgrad(lambda x: f(Tensor(x), Tensor(b0)).item(), w0)) < 1e-4
    assert rel_err(b.grad, numgrad(lambda x: f(Tensor(w0), Tensor(x)).item(), b0)) < 1e-4
