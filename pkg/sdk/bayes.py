"""
Bayesian linear classification head with a diagonal Gaussian posterior.

Each class j has weights w_j ~ N(m_j, diag(v_j)) and the prior is N(0, I).
Variances are stored as log v so every update keeps them positive. Under the
posterior the logit w_j . phi is Gaussian with mean m_j . phi and variance
sum_k v_jk phi_k^2.
"""
from dataclasses import dataclass

import numpy as np

from sdk.errors import ShapeError
from sdk.tensor import Tensor, as_tensor, exp, log_softmax, matmul, no_grad, sqrt

DEFAULT_MC_SAMPLES = 50
INIT_VARIANCE = 1e-2


@dataclass
class VariationalHead:
    mean: Tensor  # (C, d)
    log_var: Tensor  # (C, d)

    def __post_init__(self):
        if self.mean.shape != self.log_var.shape or self.mean.ndim != 2:
            raise ShapeError(f"VariationalHead: mean {self.mean.shape} and log_var {self.log_var.shape} must be equal (C, d)")
        if self.num_classes < 2:
            raise ValueError(f"VariationalHead: need at least 2 classes, got {self.num_classes}")

    @classmethod
    def init(cls, num_classes: int, dim: int, rng: np.random.Generator) -> "VariationalHead":
        mean = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(num_classes, dim))
        log_var = np.full((num_classes, dim), np.log(INIT_VARIANCE))
        return cls(Tensor(mean, requires_grad=True), Tensor(log_var, requires_grad=True))

    @property
    def num_classes(self) -> int:
        return self.mean.shape[0]

    @property
    def dim(self) -> int:
        return self.mean.shape[1]

    @property
    def variance(self) -> Tensor:
        return exp(self.log_var)

    def parameters(self) -> dict[str, Tensor]:
        return {"mean": self.mean, "log_var": self.log_var}

    def detached(self) -> "VariationalHead":
        return VariationalHead(self.mean.detach(), self.log_var.detach())


@dataclass
class LogitStats:
    mu: Tensor  # (B, C)
    sigma: Tensor  # (B, C)


def _check_features(head: VariationalHead, features: Tensor):
    if features.ndim != 2 or features.shape[1] != head.dim:
        raise ShapeError(f"features of shape {features.shape} do not match head dimension {head.dim}")


def logit_stats(head: VariationalHead, features) -> LogitStats:
    features = as_tensor(features)
    _check_features(head, features)
    mu = matmul(features, head.mean.T)
    sigma = sqrt(matmul(features * features, head.variance.T))
    return LogitStats(mu=mu, sigma=sigma)


def sample_heads(head: VariationalHead, noise: np.ndarray) -> Tensor:
    """Reparameterised draws w = m + sqrt(v) * eps for noise of shape (n, C, d)."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.ndim == 2:
        noise = noise[None]
    if noise.shape[1:] != head.mean.shape:
        raise ShapeError(f"sample_heads: noise {noise.shape} does not match head {head.mean.shape}")
    return head.mean + exp(head.log_var * 0.5) * noise


def kl_to_prior(head: VariationalHead) -> Tensor:
    m, lv = head.mean, head.log_var
    return ((exp(lv) + m * m - 1.0 - lv) * 0.5).sum()


def _check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes}), got range [{labels.min()}, {labels.max()}]")
    return labels


def expected_nll(
    head: VariationalHead,
    features,
    labels: np.ndarray,
    n_mc: int = DEFAULT_MC_SAMPLES,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> Tensor:
    """
    Monte Carlo estimate of E_Q[-log softmax(W phi)_y], averaged over the batch.

    One noise draw of shape (n_mc, C, d) is shared by every example in the batch.
    """
    features = as_tensor(features)
    _check_features(head, features)
    labels = _check_labels(labels, head.num_classes)
    if noise is None:
        if n_mc < 1:
            raise ValueError(f"n_mc must be >= 1, got {n_mc}")
        rng = rng if rng is not None else np.random.default_rng()
        noise = rng.standard_normal((n_mc,) + head.mean.shape)
    weights = sample_heads(head, noise)  # (n, C, d)
    logits = matmul(features, weights.swapaxes(-1, -2))  # (n, B, C)
    logp = log_softmax(logits, axis=-1)
    picked = logp[:, np.arange(len(labels)), labels]  # (n, B)
    return -picked.mean()


def elbo(
    head: VariationalHead,
    features,
    labels: np.ndarray,
    n_mc: int = DEFAULT_MC_SAMPLES,
    kl_scale: float = 1.0,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """
    Per-example ELBO, -E[NLL] - kl_scale * KL; a value to maximise.

    kl_scale = 1/|S| makes the minibatch objective an unbiased rescaling of the
    full-data bound. Returns (elbo, nll, kl) so callers can log the parts.
    """
    if kl_scale <= 0:
        raise ValueError(f"kl_scale must be positive, got {kl_scale}")
    nll = expected_nll(head, features, labels, n_mc=n_mc, rng=rng, noise=noise)
    kl = kl_to_prior(head)
    return -nll - kl * kl_scale, nll, kl


def predict(head: VariationalHead, features) -> np.ndarray:
    """Posterior-mean prediction; np.argmax breaks ties toward the lowest class."""
    features = as_tensor(features)
    _check_features(head, features)
    with no_grad():
        scores = features.data @ head.mean.data.T
    return np.argmax(scores, axis=1)


def predict_sampled(head: VariationalHead, features, noise: np.ndarray) -> np.ndarray:
    """Predictions of each sampled head; returns (n, B) class indices."""
    features = as_tensor(features)
    _check_features(head, features)
    with no_grad():
        weights = sample_heads(head, noise).data
    scores = np.matmul(features.data, np.swapaxes(weights, -1, -2))
    return np.argmax(scores, axis=-1)
