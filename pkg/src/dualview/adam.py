"""Adam with bias correction, the one optimizer the trainer uses.

Update rule per parameter p with gradient g at step t:
    m <- b1*m + (1-b1)*g
    v <- b2*v + (1-b2)*g^2
    p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)

No weight decay anywhere: training is run without regularization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Collection, Mapping

import numpy as np

from .errors import DimensionError, NumericError, ValidationError
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValidationError(f"adam: lr {self.lr} must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValidationError("adam: betas must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValidationError("adam: epsilon must be positive")


def adam_step(
    params: Mapping[str, Tensor],
    state: AdamState,
    frozen: Collection[str] = (),
) -> AdamState:
    """One in-place Adam update over ``params``; frozen names are untouched.

    Parameters whose gradient slot is unset are skipped (they did not take
    part in the forward pass).  A non-finite gradient aborts with the
    offending parameter named.
    """
    frozen = set(frozen)
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        if name in frozen:
            continue
        g = p.grad
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise DimensionError(
                f"adam: gradient shape {g.shape} != parameter shape {p.data.shape} for '{name}'"
            )
        if not np.all(np.isfinite(g)):
            raise NumericError(f"adam: non-finite gradient for parameter '{name}'")
        m = state.first_moment.get(name)
        if m is None:
            m = state.first_moment[name] = np.zeros_like(p.data)
        v = state.second_moment.get(name)
        if v is None:
            v = state.second_moment[name] = np.zeros_like(p.data)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return state
