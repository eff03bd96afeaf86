"""Alternating min/max training of the classifier and the amplitude generator."""
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from loguru import logger
from scipy.special import log_softmax as np_log_softmax

from sdk.bayes import VariationalHead, elbo, expected_nll, logit_stats, predict, predict_sampled
from sdk.config import AugmentConfig, TrainConfig
from sdk.datasets.base import DomainDataset, Split
from sdk.datasets.mnist import rotate_images
from sdk.errors import DataError, NonFiniteError
from sdk.fourier import Spectrum, dft2, idft2
from sdk.generator import GeneratorParams, SynthBatch, SynthDraws, amplitude_output_dim, synthesize_pixels, synthesize_target
from sdk.losses import disagreement_rate, mcd, smcd
from sdk.models import FeatureExtractor, get_extractor
from sdk.optim import AdamState, adam_step, zero_grad
from sdk.rng import RngStreams
from sdk.swad import Phase, SwadState
from sdk.tensor import Tensor

EVAL_HEAD_PAIRS = 10

METRICS_COLUMNS = (
    "iter", "elbo", "nll", "kl", "smcd", "val_loss",
    "swad_phase", "t_s", "t_e", "swad_ref_loss", "target_discrepancy",
)
METRICS_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MethodTraits:
    synthesis: Literal["amplitude", "pixel", "amp_mix"] | None
    target_loss: Literal["smcd", "mcd"] | None
    mixup: bool = True

    @property
    def uses_generator(self) -> bool:
        return self.synthesis in ("amplitude", "pixel")


METHOD_TRAITS = {
    "agfa": MethodTraits("amplitude", "smcd"),
    "erm": MethodTraits(None, None),
    "erm_swad": MethodTraits(None, None),
    "amp_mixup": MethodTraits("amp_mix", None),
    "agfa_unsup_mcd": MethodTraits("amplitude", "mcd"),
    "agfa_no_mixup": MethodTraits("amplitude", "smcd", mixup=False),
    "agfa_no_swad": MethodTraits("amplitude", "smcd"),
    "agfa_pixel_gen": MethodTraits("pixel", "mcd"),
}


@dataclass
class Batch:
    images: np.ndarray  # (B, H, W, Ch)
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class StepReport:
    iteration: int
    elbo: float
    nll: float
    kl: float
    loss: float = math.nan
    target_loss: float | None = None
    generator_loss: float | None = None
    target_discrepancy: float | None = None
    imag_residual: float = 0.0


@dataclass
class MetricsRow:
    iter: int
    elbo: float
    nll: float
    kl: float
    smcd: float | None
    val_loss: float
    swad_phase: str
    t_s: int | None
    t_e: int | None
    swad_ref_loss: float | None
    target_discrepancy: float | None

    def as_row(self) -> dict[str, str]:
        return {col: "" if (v := getattr(self, col)) is None else (repr(v) if isinstance(v, float) else str(v))
                for col in METRICS_COLUMNS}


@dataclass
class Learner:
    extractor: FeatureExtractor
    head: VariationalHead
    generator: GeneratorParams | None
    model_adam: AdamState
    generator_adam: AdamState | None

    def model_parameters(self) -> dict[str, Tensor]:
        params = {f"theta/{k}": v for k, v in self.extractor.parameters().items()}
        params.update({f"head/{k}": v for k, v in self.head.parameters().items()})
        return params


@dataclass
class TrainedModel:
    extractor: FeatureExtractor
    head: VariationalHead
    generator: GeneratorParams | None
    config: TrainConfig
    swad_events: dict = field(default_factory=dict)
    history: list[StepReport] = field(default_factory=list)
    metrics: list[MetricsRow] = field(default_factory=list)

    def predict(self, images) -> np.ndarray:
        return predict(self.head, self.extractor.features(images))


@dataclass
class EvalReport:
    name: str
    count: int
    accuracy: float
    per_class: dict[int, float]
    discrepancy: float

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "count": self.count,
            "accuracy": self.accuracy,
            "per_class": {str(k): v for k, v in self.per_class.items()},
            "discrepancy": self.discrepancy,
        }


# --- parameters ---

def flatten_parameters(params: dict[str, Tensor]) -> np.ndarray:
    return np.concatenate([p.data.ravel() for p in params.values()])


def assign_flat(params: dict[str, Tensor], flat: np.ndarray):
    offset = 0
    for p in params.values():
        p.data = flat[offset:offset + p.size].reshape(p.shape).copy()
        offset += p.size
    if offset != flat.size:
        raise ValueError(f"flat vector has {flat.size} values, parameters need {offset}")


def init_learner(cfg: TrainConfig, image_shape: tuple[int, int, int], num_classes: int,
                 streams: RngStreams) -> Learner:
    traits = METHOD_TRAITS[cfg.method]
    extractor = get_extractor(cfg.model, image_shape, streams["init"])
    head = VariationalHead.init(num_classes, extractor.feature_dim, streams["init"])
    model_adam = AdamState(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    generator, generator_adam = None, None
    if traits.uses_generator:
        height, width, channels = image_shape
        out_dim = (amplitude_output_dim(height, width, channels) if traits.synthesis == "amplitude"
                   else height * width * channels)
        generator = GeneratorParams.init(out_dim, streams["generator_init"], cfg.generator.noise_dim,
                                         cfg.generator.hidden_units)
        generator_adam = AdamState(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    return Learner(extractor, head, generator, model_adam, generator_adam)


# --- batches ---

def sample_batch(domains: list[DomainDataset], per_domain: int, rng: np.random.Generator) -> Batch:
    """Equal quotas from every domain, concatenated; domain identity is not kept."""
    images, labels = [], []
    for d in domains:
        idx = rng.choice(len(d), size=per_domain, replace=len(d) < per_domain)
        images.append(d.images[idx])
        labels.append(d.labels[idx])
    return Batch(np.concatenate(images).astype(np.float64), np.concatenate(labels).astype(np.intp))


def augment(batch: Batch, cfg: AugmentConfig, rng: np.random.Generator) -> Batch:
    images = batch.images.copy()
    if cfg.hflip:
        flip = rng.random(len(images)) < 0.5
        images[flip] = images[flip][:, :, ::-1]
    if cfg.rotate_deg > 0:
        angles = rng.uniform(-cfg.rotate_deg, cfg.rotate_deg, len(images))
        images = np.stack([rotate_images(img[None], a)[0] for img, a in zip(images, angles)])
    if cfg.color_jitter > 0:
        gain = 1.0 + rng.uniform(-cfg.color_jitter, cfg.color_jitter, (len(images), 1, 1, images.shape[-1]))
        images = np.clip(images * gain, 0.0, 1.0)
    return Batch(images, batch.labels)


def amplitude_mix(batch: Batch, alpha_mix: float, rng: np.random.Generator) -> SynthBatch:
    """
    Amplitude mixup between source images: each image keeps its phase and label
    and takes lam * A_partner + (1 - lam) * A_own with lam ~ U(0, alpha_mix).
    """
    partner = rng.permutation(len(batch))
    lam = rng.uniform(0.0, alpha_mix, size=len(batch))[:, None, None, None]
    spec = dft2(batch.images)
    amplitude = np.asarray(spec.amplitude)
    mixed = lam * amplitude[partner] + (1.0 - lam) * amplitude
    images, residual = idft2(Spectrum(Tensor(mixed), spec.phase), assert_symmetric=True)
    return SynthBatch(images=images, labels=batch.labels.copy(), imag_residual=residual)


def synthesize(nu: GeneratorParams, batch: Batch, cfg: TrainConfig, draws: SynthDraws) -> SynthBatch:
    traits = METHOD_TRAITS[cfg.method]
    if traits.synthesis == "pixel":
        return synthesize_pixels(batch.images, nu, cfg.alpha_mix, draws, mixup=traits.mixup)
    return synthesize_target(batch.images, batch.labels, nu, cfg.alpha_mix, draws=draws, mixup=traits.mixup)


def _target_term(head: VariationalHead, features: Tensor, target: SynthBatch, cfg: TrainConfig) -> Tensor:
    # The head is a constant here; it only follows the ELBO.
    stats = logit_stats(head.detached(), features)
    if METHOD_TRAITS[cfg.method].target_loss == "smcd":
        return smcd(stats, target.labels, cfg.alpha_conf)
    return mcd(stats, cfg.alpha_conf, cfg.mcd_ranking)


def head_discrepancy(head: VariationalHead, features: np.ndarray, rng: np.random.Generator,
                     n_pairs: int = 1) -> float:
    """Mean disagreement rate between pairs of heads drawn from the posterior."""
    noise = rng.standard_normal((2 * n_pairs,) + head.mean.shape)
    preds = predict_sampled(head, features, noise)
    return float(np.mean([disagreement_rate(preds[2 * k], preds[2 * k + 1]) for k in range(n_pairs)]))


# --- steps ---

def model_step(learner: Learner, batch: Batch, cfg: TrainConfig, streams: RngStreams, kl_scale: float,
               draws: SynthDraws | None = None, iteration: int = 0) -> StepReport:
    """One Adam step on (theta, head); the generator is read but never updated."""
    traits = METHOD_TRAITS[cfg.method]
    params = learner.model_parameters()
    zero_grad(params)

    head_noise = streams["head_mc"].standard_normal((cfg.n_mc,) + learner.head.mean.shape)
    features = learner.extractor(batch.images)
    value, nll, kl = elbo(learner.head, features, batch.labels, kl_scale=kl_scale, noise=head_noise)
    loss = -value
    report = StepReport(iteration, elbo=value.item(), nll=nll.item(), kl=kl.item())

    if traits.synthesis == "amp_mix":
        mixed = amplitude_mix(batch, cfg.alpha_mix, streams["mixup"])
        loss = loss + expected_nll(learner.head, learner.extractor(mixed.images.data), mixed.labels, noise=head_noise)
        report.imag_residual = mixed.imag_residual
    elif traits.uses_generator:
        if draws is None:
            raise ValueError(f"method {cfg.method} needs synthesis draws")
        target = synthesize(learner.generator.detached(), batch, cfg, draws)
        target_features = learner.extractor(target.images.data)
        term = _target_term(learner.head, target_features, target, cfg)
        report.target_loss = term.item()
        report.imag_residual = target.imag_residual
        report.target_discrepancy = head_discrepancy(learner.head, target_features.data, streams["monitor"])
        if cfg.eta > 0:
            loss = loss + term * cfg.eta

    loss.backward()
    adam_step(params, learner.model_adam)
    report.loss = loss.item()
    return report


def generator_step(learner: Learner, batch: Batch, cfg: TrainConfig, draws: SynthDraws) -> float:
    """One Adam ascent step on the target loss w.r.t. the generator; returns the loss before the step."""
    params = learner.generator.parameters()
    zero_grad(params)
    target = synthesize(learner.generator, batch, cfg, draws)
    features = learner.extractor.detached()(target.images)
    term = _target_term(learner.head, features, target, cfg)
    (-term).backward()
    adam_step(params, learner.generator_adam)
    return term.item()


# --- loop ---

def validation_loss(extractor: FeatureExtractor, head: VariationalHead, images: np.ndarray,
                    labels: np.ndarray) -> float:
    """Mean NLL of the posterior-mean classifier."""
    scores = extractor.features(images) @ head.mean.data.T
    logp = np_log_softmax(scores, axis=1)
    return float(-logp[np.arange(len(labels)), labels].mean())


def _stack(domains: list[DomainDataset]) -> tuple[np.ndarray, np.ndarray]:
    return (np.concatenate([d.images for d in domains]).astype(np.float64),
            np.concatenate([d.labels for d in domains]).astype(np.intp))


def _check_split(split: Split):
    if not split.train:
        raise DataError("no training domains")
    for d in split.train:
        if len(d) == 0:
            raise DataError(f"training domain '{d.name}' is empty")
    if sum(len(d) for d in split.val) == 0:
        raise DataError("validation split is empty")


def train(cfg: TrainConfig, split: Split) -> TrainedModel:
    _check_split(split)
    traits = METHOD_TRAITS[cfg.method]
    streams = RngStreams(cfg.seed)
    learner = init_learner(cfg, split.train[0].image_shape, split.class_count, streams)
    theta = learner.model_parameters()
    kl_scale = 1.0 / split.train_size
    val_images, val_labels = _stack(split.val)
    swad = SwadState(cfg.swad.n_s, cfg.swad.n_e, cfg.swad.r, period=cfg.val_every) if cfg.swad_enabled else None

    logger.info(
        f"Training {cfg.method} on {[d.name for d in split.train]} "
        f"({split.train_size} samples), targets {[d.name for d in split.targets]}, swad={swad is not None}"
    )
    history: list[StepReport] = []
    metrics: list[MetricsRow] = []
    iteration = 0
    for iteration in range(1, cfg.max_iters + 1):
        batch = augment(sample_batch(split.train, cfg.batch_per_domain, streams["data"]), cfg.augment,
                        streams["augment"])
        draws = None
        if traits.uses_generator:
            draws = SynthDraws.sample(len(batch), cfg.alpha_mix, streams["generator"], streams["mixup"],
                                      noise_dim=cfg.generator.noise_dim)
        try:
            report = model_step(learner, batch, cfg, streams, kl_scale, draws, iteration)
            if traits.uses_generator:
                report.generator_loss = generator_step(learner, batch, cfg, draws)
        except NonFiniteError as e:
            logger.error(f"Non-finite value at iteration {iteration} ({cfg.method}): {e}")
            raise
        history.append(report)

        val_loss = None
        if iteration % cfg.val_every == 0:
            val_loss = validation_loss(learner.extractor, learner.head, val_images, val_labels)
        if swad is not None:
            swad.observe(iteration, flatten_parameters(theta), val_loss)
        if val_loss is not None:
            events = swad.events if swad is not None else {}
            metrics.append(MetricsRow(
                iter=iteration,
                elbo=report.elbo,
                nll=report.nll,
                kl=report.kl,
                smcd=report.target_loss,
                val_loss=val_loss,
                swad_phase=events.get("phase", "off"),
                t_s=events.get("t_s"),
                t_e=events.get("t_e"),
                swad_ref_loss=events.get("reference_loss"),
                target_discrepancy=report.target_discrepancy,
            ))
            logger.info(f"[{cfg.method}] iter {iteration}: -elbo={-report.elbo:.4f} val={val_loss:.4f}"
                        + (f" smcd={report.target_loss:.4f}" if report.target_loss is not None else ""))
        if swad is not None and swad.phase is Phase.FINISHED:
            logger.info(f"Stopping at iteration {iteration}: averaging regime closed")
            break

    if swad is not None:
        assign_flat(theta, swad.finalize(t_max=iteration))
    return TrainedModel(
        extractor=learner.extractor,
        head=learner.head,
        generator=learner.generator,
        config=cfg,
        swad_events=swad.events if swad is not None else {},
        history=history,
        metrics=metrics,
    )


def evaluate(model: TrainedModel, dataset: DomainDataset, n_pairs: int = EVAL_HEAD_PAIRS,
             rng: np.random.Generator | None = None) -> EvalReport:
    rng = rng if rng is not None else np.random.default_rng(model.config.seed)
    features = model.extractor.features(dataset.images)
    labels = np.asarray(dataset.labels)
    preds = predict(model.head, features)
    per_class = {int(c): float(np.mean(preds[labels == c] == c)) for c in np.unique(labels)}
    accuracy = float(np.mean(preds == labels)) if len(labels) else math.nan
    discrepancy = head_discrepancy(model.head, features, rng, n_pairs) if len(labels) else math.nan
    return EvalReport(dataset.name, len(labels), accuracy, per_class, discrepancy)
