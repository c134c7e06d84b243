"""The two-tower patch matcher.

One convolutional feature tower is applied to both input patches — weight
sharing is structural: there is a single parameter store and both forward
paths read it.  The two feature vectors are concatenated (fixed order:
patch A = CC first, patch B = MLO second) and pushed through a three-layer
metric head ending in a two-way softmax; dropout 0.5 sits after FC1 and FC2.

Two presets ship:

* ``paper`` — the full-size architecture: five convolutions
  (24/64/96/96/64 channels), three 3x2 max-pools, FC 1024/1024/2.
* ``desk`` — a reduced stack (4/8/8 channels, FC 24/24/2) sized so that a
  complete per-parameter finite-difference audit of the gradients finishes
  in well under a minute.  Tests and the synthetic benchmark use it.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import ops
from .errors import ArchitectureError, DimensionError, ValidationError
from .rng import stream
from .tensor import Tensor, no_grad

LAYER_KINDS = ("conv2d", "maxpool2d", "fully-connected", "relu", "dropout", "softmax")


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the stack; only the fields its kind uses are set."""

    kind: str
    out_channels: int | None = None
    kernel: int | None = None
    stride: int = 1
    padding: int = 0
    window: int | None = None
    width: int | None = None
    rate: float | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValidationError(f"unknown layer kind {self.kind!r}")
        if self.stride < 1:
            raise ValidationError(f"{self.kind}: stride must be >= 1")
        if self.kind == "conv2d":
            if not self.out_channels or self.out_channels < 1:
                raise ValidationError("conv2d: out_channels must be >= 1")
            if not self.kernel or self.kernel < 1:
                raise ValidationError("conv2d: kernel must be >= 1")
            if self.padding < 0:
                raise ValidationError("conv2d: padding must be >= 0")
        elif self.kind == "maxpool2d":
            if not self.window or self.window < 1:
                raise ValidationError("maxpool2d: window must be >= 1")
        elif self.kind == "fully-connected":
            if not self.width or self.width < 1:
                raise ValidationError("fully-connected: width must be >= 1")
        elif self.kind == "dropout":
            if self.rate is None or not 0.0 <= self.rate < 1.0:
                raise ValidationError("dropout: rate must lie in [0, 1)")


@dataclass(frozen=True)
class ArchConfig:
    """Hyperparameters of the matcher; everything the fingerprint hashes."""

    conv_channels: tuple[int, ...] = (24, 64, 96, 96, 64)
    conv_kernels: tuple[int, ...] = (7, 5, 3, 3, 3)
    conv_paddings: tuple[int, ...] = (3, 2, 1, 1, 1)
    conv_strides: tuple[int, ...] = (1, 1, 1, 1, 1)
    # (window, stride) applied after conv i, or None for no pooling there.
    pools: tuple[tuple[int, int] | None, ...] = ((3, 2), (3, 2), None, None, (3, 2))
    fc_widths: tuple[int, int] = (1024, 1024)
    dropout_rate: float = 0.5
    input_shape: tuple[int, int, int] = (1, 64, 64)

    def __post_init__(self):
        n = len(self.conv_channels)
        aligned = (
            len(self.conv_kernels) == len(self.conv_paddings)
            == len(self.conv_strides) == len(self.pools) == n
        )
        if not aligned:
            raise ValidationError("arch: conv channel/kernel/padding/stride/pool lists must align")
        if n < 1:
            raise ValidationError("arch: need at least one convolution")

    def feature_layers(self) -> list[tuple[str, LayerSpec]]:
        """Named layer stack of the feature tower, pools and relus included."""
        layers: list[tuple[str, LayerSpec]] = []
        for i, (ch, k, p, s) in enumerate(
            zip(self.conv_channels, self.conv_kernels, self.conv_paddings, self.conv_strides)
        ):
            name = f"conv{i + 1}"
            layers.append(
                (name, LayerSpec("conv2d", out_channels=ch, kernel=k, padding=p, stride=s))
            )
            layers.append((f"{name}.relu", LayerSpec("relu")))
            pool = self.pools[i]
            if pool is not None:
                layers.append(
                    (f"pool{i + 1}", LayerSpec("maxpool2d", window=pool[0], stride=pool[1]))
                )
        return layers

    def to_json(self) -> str:
        payload = {
            "conv_channels": list(self.conv_channels),
            "conv_kernels": list(self.conv_kernels),
            "conv_paddings": list(self.conv_paddings),
            "conv_strides": list(self.conv_strides),
            "pools": [list(p) if p is not None else None for p in self.pools],
            "fc_widths": list(self.fc_widths),
            "dropout_rate": self.dropout_rate,
            "input_shape": list(self.input_shape),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ArchConfig":
        raw = json.loads(text)
        return cls(
            conv_channels=tuple(raw["conv_channels"]),
            conv_kernels=tuple(raw["conv_kernels"]),
            conv_paddings=tuple(raw["conv_paddings"]),
            conv_strides=tuple(raw["conv_strides"]),
            pools=tuple(tuple(p) if p is not None else None for p in raw["pools"]),
            fc_widths=tuple(raw["fc_widths"]),
            dropout_rate=raw["dropout_rate"],
            input_shape=tuple(raw["input_shape"]),
        )

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def feature_shape(self) -> tuple[int, int, int]:
        """(C,H,W) coming out of the tower; raises if any layer collapses."""
        c, h, w = self.input_shape
        for i, (ch, k, p, s) in enumerate(
            zip(self.conv_channels, self.conv_kernels, self.conv_paddings, self.conv_strides)
        ):
            h = (h + 2 * p - k) // s + 1
            w = (w + 2 * p - k) // s + 1
            c = ch
            if h < 1 or w < 1:
                raise ArchitectureError(f"layer conv{i + 1}: spatial dims {h}x{w} collapse")
            pool = self.pools[i]
            if pool is not None:
                win, ps = pool
                h = (h - win) // ps + 1
                w = (w - win) // ps + 1
                if h < 1 or w < 1:
                    raise ArchitectureError(f"layer pool{i + 1}: spatial dims {h}x{w} collapse")
        return c, h, w


PAPER_ARCH = ArchConfig()
DESK_ARCH = ArchConfig(
    conv_channels=(4, 8, 8),
    conv_kernels=(3, 3, 3),
    conv_paddings=(1, 1, 1),
    conv_strides=(2, 1, 1),
    pools=((2, 2), (2, 2), (2, 2)),
    fc_widths=(48, 48),
)
ARCH_PRESETS = {"paper": PAPER_ARCH, "desk": DESK_ARCH}

MATCH_CLASS = 1  # softmax column for "the two patches correspond"


class MatchModel:
    """Parameter store plus forward passes for the two-tower matcher."""

    def __init__(
        self,
        arch: ArchConfig,
        params: dict[str, Tensor],
        seed: int,
        freeze_flags: dict[str, bool] | None = None,
    ):
        self.arch = arch
        self.params = params
        self.seed = int(seed)
        self.freeze_flags = freeze_flags or {name: False for name in self.layer_names(arch)}

    # -- construction ---------------------------------------------------------

    @staticmethod
    def conv_layer_names(arch: ArchConfig) -> list[str]:
        return [f"conv{i + 1}" for i in range(len(arch.conv_channels))]

    @staticmethod
    def fc_layer_names() -> list[str]:
        return ["fc1", "fc2", "fc3"]

    @classmethod
    def layer_names(cls, arch: ArchConfig) -> list[str]:
        return cls.conv_layer_names(arch) + cls.fc_layer_names()

    @classmethod
    def parameter_shapes(cls, arch: ArchConfig) -> dict[str, tuple[int, ...]]:
        """Name -> shape for every parameter, in construction order."""
        c, h, w = arch.feature_shape()  # validates the stack
        shapes: dict[str, tuple[int, ...]] = {}
        cin = arch.input_shape[0]
        for i, (ch, k) in enumerate(zip(arch.conv_channels, arch.conv_kernels)):
            name = f"conv{i + 1}"
            shapes[f"{name}.weight"] = (ch, cin, k, k)
            shapes[f"{name}.bias"] = (ch,)
            cin = ch
        widths = [2 * c * h * w, arch.fc_widths[0], arch.fc_widths[1], 2]
        for i in range(3):
            name = f"fc{i + 1}"
            shapes[f"{name}.weight"] = (widths[i + 1], widths[i])
            shapes[f"{name}.bias"] = (widths[i + 1],)
        return shapes

    @classmethod
    def build(cls, arch: ArchConfig = PAPER_ARCH, seed: int = 0) -> "MatchModel":
        """Fresh model with fan-in-scaled uniform init from the seeded stream."""
        shapes = cls.parameter_shapes(arch)
        rng = stream(seed, "init")
        params: dict[str, Tensor] = {}
        for name, shape in shapes.items():
            if name.endswith(".bias"):
                params[name] = Tensor(np.zeros(shape), requires_grad=True, name=name)
            else:
                # unit-variance-preserving fan-in scale; hotter inits saturate
                # the softmax through this narrow unnormalized stack
                fan_in = int(np.prod(shape[1:]))
                limit = math.sqrt(3.0 / fan_in)
                params[name] = Tensor(
                    rng.uniform(-limit, limit, size=shape), requires_grad=True, name=name
                )
        return cls(arch, params, seed)

    # -- introspection ---------------------------------------------------------

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def frozen_parameter_names(self) -> set[str]:
        out = set()
        for layer, flag in self.freeze_flags.items():
            if flag:
                out.update({f"{layer}.weight", f"{layer}.bias"})
        return out

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def clone_data(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    # -- forward passes ---------------------------------------------------------

    def _check_mode(self, mode: str) -> None:
        if mode not in ("train", "eval"):
            raise ValidationError(f"mode {mode!r} not in {{train, eval}}")

    def _as_batch(self, patches) -> Tensor:
        data = patches.data if isinstance(patches, Tensor) else np.asarray(patches, dtype=np.float64)
        c, h, w = self.arch.input_shape
        if data.ndim == 2 and data.shape == (h, w):
            data = data[None]
        if data.ndim == 3:
            if data.shape != (c, h, w):
                raise DimensionError(
                    f"patch shape {data.shape} does not match expected {(c, h, w)}"
                )
            data = data[None]
        elif data.ndim != 4 or data.shape[1:] != (c, h, w):
            raise DimensionError(
                f"patch batch shape {data.shape} does not match expected (B,{c},{h},{w})"
            )
        if isinstance(patches, Tensor):
            return patches if patches.data.shape == data.shape else Tensor(data)
        return Tensor(data)

    def feature_batch(self, patches, mode: str = "eval", rng=None) -> Tensor:
        """Shared-tower features [B,F]; both forward paths call this."""
        self._check_mode(mode)
        x = self._as_batch(patches)
        for name, spec in self.arch.feature_layers():
            if spec.kind == "conv2d":
                x = ops.conv2d(
                    x,
                    self.params[f"{name}.weight"],
                    self.params[f"{name}.bias"],
                    stride=spec.stride,
                    padding=spec.padding,
                )
            elif spec.kind == "relu":
                x = ops.relu(x)
            elif spec.kind == "maxpool2d":
                x = ops.maxpool2d(x, spec.window, spec.stride)
        return ops.reshape(x, (x.shape[0], -1))

    def metric_batch(self, features: Tensor, mode: str = "eval", rng=None) -> Tensor:
        """Metric head over concatenated features: FC1-FC2-FC3 + softmax."""
        self._check_mode(mode)
        x = features
        rate = self.arch.dropout_rate
        for name in ("fc1", "fc2"):
            x = ops.linear(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"])
            x = ops.relu(x)
            x = ops.dropout(x, rate, mode, rng)
        x = ops.linear(x, self.params["fc3.weight"], self.params["fc3.bias"])
        return ops.softmax(x)

    def forward_batch(self, patches_a, patches_b, mode: str = "eval", rng=None) -> Tensor:
        """Class probabilities [B,2] for a batch of patch pairs."""
        fa = self.feature_batch(patches_a, mode, rng)
        fb = self.feature_batch(patches_b, mode, rng)
        return self.metric_batch(ops.concat([fa, fb], axis=1), mode, rng)

    def forward_pair(
        self,
        patch_a,
        patch_b,
        mode: str = "eval",
        rng=None,
        symmetrize: bool = False,
    ) -> Union[float, Tensor]:
        """Match probability of one pair.

        Eval mode returns a plain float and records no tape.  Train mode
        returns a scalar Tensor whose tape reaches both towers, ready for a
        loss.  ``symmetrize`` averages the probabilities of both input
        orders (off by default: concatenation order is CC-then-MLO).
        """
        self._check_mode(mode)
        if mode == "eval":
            with no_grad():
                p = float(self.forward_batch(patch_a, patch_b, mode, rng).data[0, MATCH_CLASS])
                if symmetrize:
                    p = 0.5 * (
                        p + float(self.forward_batch(patch_b, patch_a, mode, rng).data[0, MATCH_CLASS])
                    )
                return p
        pick = Tensor(np.array([[0.0, 1.0]]))
        prob = (self.forward_batch(patch_a, patch_b, mode, rng) * pick).sum()
        if symmetrize:
            other = (self.forward_batch(patch_b, patch_a, mode, rng) * pick).sum()
            prob = (prob + other) * 0.5
        return prob
