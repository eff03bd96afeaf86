from typing import Literal

import numpy as np

from sdk.bayes import LogitStats
from sdk.tensor import Tensor, relu

DEFAULT_ALPHA_CONF = 1.96

Ranking = Literal["anchor", "literal"]


def _check_alpha(alpha_conf: float):
    if alpha_conf < 0:
        raise ValueError(f"alpha_conf must be non-negative, got {alpha_conf}")


def _bounds(stats: LogitStats, alpha_conf: float) -> tuple[Tensor, Tensor]:
    spread = stats.sigma * alpha_conf
    return stats.mu - spread, stats.mu + spread


def _margin_hinge(lower: Tensor, upper: Tensor, anchor: np.ndarray) -> Tensor:
    rows = np.arange(len(anchor))
    masked = upper.data.copy()
    masked[rows, anchor] = -np.inf
    challenger = np.argmax(masked, axis=1)
    return relu(upper[rows, challenger] - lower[rows, anchor] + 1.0).mean()


def smcd(stats: LogitStats, labels: np.ndarray, alpha_conf: float = DEFAULT_ALPHA_CONF) -> Tensor:
    """Hinge on the label: mu_y - a*sigma_y must beat every other mu_j + a*sigma_j by a unit margin."""
    _check_alpha(alpha_conf)
    labels = np.asarray(labels, dtype=np.intp)
    num_classes = stats.mu.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"smcd: labels must lie in [0, {num_classes})")
    lower, upper = _bounds(stats, alpha_conf)
    return _margin_hinge(lower, upper, labels)


def mcd(stats: LogitStats, alpha_conf: float = DEFAULT_ALPHA_CONF, ranking: Ranking = "anchor") -> Tensor:
    """
    Unsupervised margin loss.

    ranking="anchor" uses j* = argmax mu and the largest upper bound among the
    other classes. ranking="literal" takes the top element of the lower-bound
    vector and the second-largest element of the upper-bound vector.
    """
    _check_alpha(alpha_conf)
    lower, upper = _bounds(stats, alpha_conf)
    if ranking == "anchor":
        return _margin_hinge(lower, upper, np.argmax(stats.mu.data, axis=1))
    if ranking == "literal":
        rows = np.arange(lower.shape[0])
        top = np.argmax(lower.data, axis=1)
        second = np.argsort(-upper.data, axis=1, kind="stable")[:, 1]
        return relu(upper[rows, second] - lower[rows, top] + 1.0).mean()
    raise ValueError(f"Unknown MCD ranking: {ranking}")


def disagreement_rate(predictions_a: np.ndarray, predictions_b: np.ndarray) -> float:
    """The 0/1 classifier discrepancy; an evaluation metric, never a training loss."""
    return float(np.mean(np.asarray(predictions_a) != np.asarray(predictions_b)))
