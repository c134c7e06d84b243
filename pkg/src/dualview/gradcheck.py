"""Finite-difference audit of the analytic gradients.

Perturbs every parameter element of a model by +-h around a fixed forward
pass and compares the central difference of the loss against the gradient
the tape produced.  Dropout stays active (train mode) but its mask is
pinned by reseeding the dropout stream before every evaluation, so the
function being differenced is the same deterministic function the tape saw.

The error metric is |analytic - numeric| / max(|analytic|, |numeric|, floor)
with floor 1e-3: for gradients above the floor this is plain relative error,
below it the test degrades into an absolute bound of tol*floor, which keeps
legitimately-zero gradients (dead ReLU units, dropped activations,
non-selected pool cells) from dividing by rounding noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .model import DESK_ARCH, ArchConfig, MatchModel
from .rng import stream
from .tensor import no_grad

REL_FLOOR = 1e-3


@dataclass
class ParamCheck:
    name: str
    count: int
    max_rel_err: float
    passed: bool


@dataclass
class GradCheckReport:
    checks: list[ParamCheck]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_rel_err(self) -> float:
        return max(c.max_rel_err for c in self.checks)

    def by_layer(self) -> list[tuple[str, float, bool]]:
        """(layer, worst error, pass) rows, aggregating weight+bias."""
        layers: dict[str, float] = {}
        for c in self.checks:
            layer = c.name.split(".")[0]
            layers[layer] = max(layers.get(layer, 0.0), c.max_rel_err)
        return [(layer, err, err < self.tolerance) for layer, err in layers.items()]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def check_model_gradients(
    arch: ArchConfig = DESK_ARCH,
    seed: int = 0,
    h: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Full per-parameter central-difference audit on one random pair."""
    model = MatchModel.build(arch, seed=seed)
    data_rng = stream(seed, "gradcheck-data")
    c, height, width = arch.input_shape
    patch_a = data_rng.normal(size=(1, c, height, width))
    patch_b = data_rng.normal(size=(1, c, height, width))
    labels = np.array([1])
    dropout_seed = int(data_rng.integers(0, 2**63 - 1))

    def forward_loss() -> ops.Tensor:
        rng = np.random.default_rng(dropout_seed)
        probs = model.forward_batch(patch_a, patch_b, mode="train", rng=rng)
        return ops.cross_entropy(probs, labels)

    model.zero_grads()
    loss = forward_loss()
    loss.backward()
    analytic = {name: p.grad.copy() for name, p in model.params.items()}

    def loss_value() -> float:
        with no_grad():
            return float(forward_loss().data)

    checks = []
    for name, p in model.params.items():
        flat = p.data.reshape(-1)
        numeric = np.empty_like(flat)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + h
            up = loss_value()
            flat[idx] = original - h
            down = loss_value()
            flat[idx] = original
            numeric[idx] = (up - down) / (2.0 * h)
        err = relative_error(analytic[name].reshape(-1), numeric)
        worst = float(err.max())
        checks.append(ParamCheck(name, flat.size, worst, worst < tolerance))
    return GradCheckReport(checks, tolerance)
