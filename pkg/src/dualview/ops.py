"""Network layer operations: forward passes plus their backward closures.

All ops accept either the single-sample shapes ([C,H,W] images, [N] vectors)
or the batched shapes with a leading batch axis, and return the same rank
they were given.  Convolution is cross-correlation (no kernel flip).

Convolution is computed as a sum over kernel offsets of strided-slice
contractions rather than a materialized im2col buffer: the working set stays
at one activation map instead of kH*kW of them, which is what lets batched
training fit comfortably in memory at 64-bit precision.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NumericError, ValidationError
from .tensor import Tensor


def _conv_out_dim(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0.0)

    def backward_fn(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * (x.data > 0.0))

    return Tensor._from_op(out_data, (x,), backward_fn)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out_data = x.data.reshape(shape)

    def backward_fn(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g.reshape(x.data.shape))

    return Tensor._from_op(out_data, (x,), backward_fn)


def concat(parts: list[Tensor], axis: int = -1) -> Tensor:
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g: np.ndarray) -> None:
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if part.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                part.accumulate_grad(g[tuple(idx)])

    return Tensor._from_op(out_data, tuple(parts), backward_fn)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map: weight [M,N] applied to x [N] or [B,N], plus bias [M]."""
    if weight.ndim != 2:
        raise DimensionError(f"linear: weight must be 2-D, got {weight.shape}")
    m, n = weight.shape
    if bias.shape != (m,):
        raise DimensionError(
            f"linear: bias shape {bias.shape} does not match output width {m}"
        )
    single = x.ndim == 1
    if single:
        if x.shape != (n,):
            raise DimensionError(
                f"linear: input width {x.shape[0]} does not match weight width {n}"
            )
    elif x.ndim != 2 or x.shape[1] != n:
        raise DimensionError(
            f"linear: input shape {x.shape} does not match weight width {n} (feature axis)"
        )

    x2 = x.data[None, :] if single else x.data
    out2 = x2 @ weight.data.T + bias.data
    out_data = out2[0] if single else out2

    def backward_fn(g: np.ndarray) -> None:
        g2 = g[None, :] if single else g
        if x.requires_grad:
            gx = g2 @ weight.data
            x.accumulate_grad(gx[0] if single else gx)
        if weight.requires_grad:
            weight.accumulate_grad(g2.T @ x2)
        if bias.requires_grad:
            bias.accumulate_grad(g2.sum(axis=0))

    return Tensor._from_op(out_data, (x, weight, bias), backward_fn)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """[B,C,Hp,Wp] -> [C*kh*kw, B*ho*wo] patch matrix (one contiguous copy)."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # [B,C,ho,wo,kh,kw] view
    batch = xp.shape[0]
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(xp.shape[1] * kh * kw, batch * ho * wo)
    return np.ascontiguousarray(cols)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of x [C,H,W] or [B,C,H,W] with weight [O,C,kh,kw].

    Forward and both backward contractions run as single large GEMMs over an
    im2col patch matrix; the patch matrix is rebuilt in backward rather than
    kept alive, trading one extra copy for a much smaller retained graph.
    """
    if stride < 1 or padding < 0:
        raise ValidationError(f"conv2d: stride {stride} / padding {padding} invalid")
    if weight.ndim != 4:
        raise DimensionError(f"conv2d: kernel must be 4-D, got {weight.shape}")
    single = x.ndim == 3
    if not single and x.ndim != 4:
        raise DimensionError(f"conv2d: input must be 3-D or 4-D, got {x.shape}")
    xb = x.data[None] if single else x.data
    batch, cin, h, w = xb.shape
    cout, ck, kh, kw = weight.shape
    if ck != cin:
        raise DimensionError(
            f"conv2d: input has {cin} channels but kernel expects {ck} (channel axis)"
        )
    if bias.shape != (cout,):
        raise DimensionError(
            f"conv2d: bias shape {bias.shape} does not match {cout} output channels"
        )
    if h + 2 * padding < kh:
        raise DimensionError(
            f"conv2d: padded height {h + 2 * padding} smaller than kernel {kh} (height axis)"
        )
    if w + 2 * padding < kw:
        raise DimensionError(
            f"conv2d: padded width {w + 2 * padding} smaller than kernel {kw} (width axis)"
        )

    ho = _conv_out_dim(h, kh, stride, padding)
    wo = _conv_out_dim(w, kw, stride, padding)
    if padding:
        xp = np.pad(xb, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = xb

    w2 = weight.data.reshape(cout, cin * kh * kw)
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    out = (w2 @ cols).reshape(cout, batch, ho, wo).transpose(1, 0, 2, 3)
    out = np.ascontiguousarray(out)
    out += bias.data[None, :, None, None]
    out_data = out[0] if single else out

    def backward_fn(g: np.ndarray) -> None:
        gb4 = g[None] if single else g
        if bias.requires_grad:
            bias.accumulate_grad(gb4.sum(axis=(0, 2, 3)))
        need_x = x.requires_grad
        need_w = weight.requires_grad
        if not (need_x or need_w):
            return
        g2 = np.ascontiguousarray(gb4.transpose(1, 0, 2, 3)).reshape(cout, batch * ho * wo)
        if need_w:
            cols_again = _im2col(xp, kh, kw, stride, ho, wo)
            weight.accumulate_grad((g2 @ cols_again.T).reshape(weight.data.shape))
        if need_x:
            gcols = (w2.T @ g2).reshape(cin, kh, kw, batch, ho, wo)
            gxp = np.zeros_like(xp)
            hi_base = stride * (ho - 1) + 1
            wi_base = stride * (wo - 1) + 1
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + hi_base : stride, j : j + wi_base : stride] += (
                        gcols[:, i, j].transpose(1, 0, 2, 3)
                    )
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
            x.accumulate_grad(gx[0] if single else gx)

    return Tensor._from_op(out_data, (x, weight, bias), backward_fn)


def maxpool2d(x: Tensor, window: int, stride: int, return_indices: bool = False):
    """Max pooling over [C,H,W] or [B,C,H,W]; ties go to the lowest flat index.

    With ``return_indices`` the flat row-major input index (per channel plane)
    of each selected maximum is returned alongside the output; backward routes
    each output gradient to exactly that cell.
    """
    if window < 1 or stride < 1:
        raise ValidationError(f"maxpool2d: window {window} / stride {stride} invalid")
    single = x.ndim == 3
    if not single and x.ndim != 4:
        raise DimensionError(f"maxpool2d: input must be 3-D or 4-D, got {x.shape}")
    xb = x.data[None] if single else x.data
    batch, ch, h, w = xb.shape
    if window > h:
        raise DimensionError(f"maxpool2d: window {window} larger than height {h}")
    if window > w:
        raise DimensionError(f"maxpool2d: window {window} larger than width {w}")

    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(xb, (window, window), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]  # [B,C,Ho,Wo,win,win]
    flat = windows.reshape(batch, ch, ho, wo, window * window)
    # np.argmax returns the first maximum, i.e. the lowest flat window index,
    # which within a window is also the lowest flat input index.
    local = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]

    rows = (np.arange(ho) * stride)[None, None, :, None] + local // window
    cols = (np.arange(wo) * stride)[None, None, None, :] + local % window
    input_flat_index = rows * w + cols  # [B,C,Ho,Wo]

    out_data = out[0] if single else out

    def backward_fn(g: np.ndarray) -> None:
        if not x.requires_grad:
            return
        g4 = g[None] if single else g
        plane = np.arange(batch * ch)[:, None] * (h * w)
        idx = input_flat_index.reshape(batch * ch, -1) + plane
        gx = np.bincount(
            idx.ravel(), weights=g4.reshape(batch * ch, -1).ravel(), minlength=batch * ch * h * w
        ).reshape(batch, ch, h, w)
        x.accumulate_grad(gx[0] if single else gx)

    result = Tensor._from_op(out_data, (x,), backward_fn)
    if return_indices:
        return result, (input_flat_index[0] if single else input_flat_index)
    return result


def dropout(x: Tensor, rate: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: train mode zeroes with probability ``rate`` and
    rescales survivors by 1/(1-rate); eval mode is the identity."""
    if not 0.0 <= rate < 1.0:
        raise ValidationError(f"dropout rate {rate} outside [0, 1)")
    if mode not in ("train", "eval"):
        raise ValidationError(f"dropout mode {mode!r} not in {{train, eval}}")
    if mode == "eval" or rate == 0.0:
        return x
    if rng is None:
        raise ValidationError("train-mode dropout requires an rng")
    scale = 1.0 / (1.0 - rate)
    mask = (rng.random(x.data.shape) >= rate) * scale
    out_data = x.data * mask

    def backward_fn(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * mask)

    return Tensor._from_op(out_data, (x,), backward_fn)


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, max-subtracted for stability."""
    if x.shape[-1] < 2:
        raise DimensionError(f"softmax: needs at least 2 classes, got {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax: non-finite logit")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward_fn(g: np.ndarray) -> None:
        if x.requires_grad:
            dot = np.sum(g * out_data, axis=-1, keepdims=True)
            x.accumulate_grad(out_data * (g - dot))

    return Tensor._from_op(out_data, (x,), backward_fn)


PROB_CLAMP = 1e-12


def cross_entropy(probs: Tensor, labels) -> Tensor:
    """Mean negative log-probability of the true class over a [B,K] batch.

    Probabilities are clamped to >= 1e-12 before the log so a saturated
    softmax cannot produce -Inf.
    """
    labels = np.asarray(labels)
    if probs.ndim != 2:
        raise DimensionError(f"cross_entropy: probs must be [B,K], got {probs.shape}")
    batch, k = probs.shape
    if labels.shape != (batch,):
        raise DimensionError(
            f"cross_entropy: {labels.shape[0] if labels.ndim else 0} labels for batch {batch}"
        )
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= k:
        raise ValidationError(f"cross_entropy: labels must be integers in [0, {k})")
    row_sums = probs.data.sum(axis=-1)
    if not np.allclose(row_sums, 1.0, atol=1e-6):
        raise ValidationError("cross_entropy: probability rows must sum to 1")

    picked = probs.data[np.arange(batch), labels]
    clamped = np.maximum(picked, PROB_CLAMP)
    out_data = np.array(-np.log(clamped).mean())

    def backward_fn(g: np.ndarray) -> None:
        if probs.requires_grad:
            gp = np.zeros_like(probs.data)
            live = picked >= PROB_CLAMP
            gp[np.arange(batch), labels] = np.where(live, -1.0 / (batch * clamped), 0.0)
            probs.accumulate_grad(gp * float(g))

    return Tensor._from_op(out_data, (probs,), backward_fn)
