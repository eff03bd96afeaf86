from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from sdk.errors import NonFiniteError
from sdk.tensor import Tensor


@dataclass
class AdamState:
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0 or self.eps <= 0:
            raise ValueError(f"Adam lr and eps must be positive (lr={self.lr}, eps={self.eps})")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"Adam betas must lie in [0, 1) (beta1={self.beta1}, beta2={self.beta2})")


def adam_step(params: dict[str, Tensor], state: AdamState, lr: float | None = None) -> AdamState:
    """
    One bias-corrected Adam update using each parameter's accumulated .grad.

    Parameters without a gradient are treated as having a zero gradient.
    """
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p.data) if p.grad is None else p.grad
        if not np.isfinite(g).all():
            logger.error(f"Adam: non-finite gradient for {name} at step {state.step + 1}")
            raise NonFiniteError(f"adam_step: gradient of '{name}' contains NaN/Inf")
        if g.shape != p.shape:
            raise ValueError(f"adam_step: gradient {g.shape} does not match parameter '{name}' {p.shape}")
        grads[name] = g

    state.step += 1
    lr = state.lr if lr is None else lr
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step

    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state


def zero_grad(params: dict[str, Tensor]):
    for p in params.values():
        p.zero_grad()
