"""Layer primitives: dilated conv, pooling, upsampling, activations, batchnorm.

All ops are pure functions from Tensors to a new Tensor and register their
backward closure on the active tape.  Convolution materializes im2col
patches and runs a single float64 GEMM (fixed summation order inside BLAS),
so forward passes are bit-deterministic for fixed inputs within one
environment; results are cast back to the input dtype.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError
from .engine import Tensor, record_op


def _conv_out_size(size: int, k: int, stride: int, pad: int, dilation: int) -> int:
    return (size + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def _im2col(xp: np.ndarray, k: int, stride: int, dilation: int, h_out: int, w_out: int) -> np.ndarray:
    """(N,C,Hp,Wp) -> (N*h_out*w_out, C*k*k) patch matrix, c-major then u,v."""
    n, c = xp.shape[:2]
    span = dilation * (k - 1) + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (span, span), axis=(2, 3))
    win = win[:, :, ::stride, ::stride, ::dilation, ::dilation]
    win = win[:, :, :h_out, :w_out]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h_out * w_out, c * k * k)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 0, dilation: int = 1) -> Tensor:
    """2-D convolution (cross-correlation) with square kernel and zero padding.

    x: (N, Cin, H, W); w: (Cout, Cin, k, k); b: (Cout,) ->
    (N, Cout, H', W') with H' = floor((H + 2 pad - dilation (k-1) - 1)/stride) + 1.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d needs x (N,Cin,H,W) and w (Cout,Cin,k,k), got {x.shape} and {w.shape}")
    n, cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    if kh != kw:
        raise ShapeError(f"conv2d supports square kernels only, got {kh}x{kw}")
    if cin_w != cin:
        raise ShapeError(f"conv2d channel mismatch: input has {cin}, kernel expects {cin_w}")
    if b.data.shape != (cout,):
        raise ShapeError(f"conv2d bias must have shape ({cout},), got {b.data.shape}")
    k = kh
    h_out = _conv_out_size(h, k, stride, pad, dilation)
    w_out = _conv_out_size(wd, k, stride, pad, dilation)
    if h_out < 1 or w_out < 1:
        raise ShapeError(
            f"conv2d output would be {h_out}x{w_out} for input {h}x{wd}, "
            f"k={k}, stride={stride}, pad={pad}, dilation={dilation}"
        )
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = _im2col(xp, k, stride, dilation, h_out, w_out).astype(np.float64)
    w_flat = w.data.reshape(cout, -1).astype(np.float64)
    y = cols @ w_flat.T + b.data.astype(np.float64)
    y = y.reshape(n, h_out, w_out, cout).transpose(0, 3, 1, 2)
    out = Tensor(y.astype(x.dtype), requires_grad=x.requires_grad or w.requires_grad or b.requires_grad)

    def backward_fn(dy: np.ndarray) -> None:
        dy64 = dy.astype(np.float64)
        dy_flat = dy64.transpose(0, 2, 3, 1).reshape(-1, cout)
        if w.requires_grad:
            dw = dy_flat.T @ _im2col(xp, k, stride, dilation, h_out, w_out).astype(np.float64)
            w.accumulate_grad(dw.reshape(w.shape).astype(w.dtype))
        if b.requires_grad:
            b.accumulate_grad(dy64.sum(axis=(0, 2, 3)).astype(b.dtype))
        if x.requires_grad:
            dxp = np.zeros(xp.shape, dtype=np.float64)
            w64 = w.data.astype(np.float64)
            for u in range(k):
                for v in range(k):
                    g = np.tensordot(dy64, w64[:, :, u, v], axes=([1], [0]))  # (N,H',W',Cin)
                    dxp[
                        :,
                        :,
                        u * dilation : u * dilation + h_out * stride : stride,
                        v * dilation : v * dilation + w_out * stride : stride,
                    ] += g.transpose(0, 3, 1, 2)
            dx = dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp
            x.accumulate_grad(dx.astype(x.dtype))

    record_op(out, backward_fn)
    return out


def maxpool2x(x: Tensor) -> tuple[Tensor, np.ndarray]:
    """2x2 non-overlapping max pool; returns (pooled, argmax indices in 0..3).

    Ties pick the first window position in (0,0),(0,1),(1,0),(1,1) order.
    """
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x needs even spatial dims, got {h}x{w}")
    win = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    out = Tensor(y, requires_grad=x.requires_grad)

    def backward_fn(dy: np.ndarray) -> None:
        if x.requires_grad:
            dwin = np.zeros(win.shape, dtype=np.float64)
            np.put_along_axis(dwin, idx[..., None], dy[..., None].astype(np.float64), axis=-1)
            dx = dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
            x.accumulate_grad(dx.astype(x.dtype))

    record_op(out, backward_fn)
    return out, idx


def upsample_nearest2x(x: Tensor) -> Tensor:
    """Repeat every pixel 2x2."""
    n, c, h, w = x.shape
    y = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    out = Tensor(y, requires_grad=x.requires_grad)

    def backward_fn(dy: np.ndarray) -> None:
        if x.requires_grad:
            dx = dy.astype(np.float64).reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))
            x.accumulate_grad(dx.astype(x.dtype))

    record_op(out, backward_fn)
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0), requires_grad=x.requires_grad)

    def backward_fn(dy: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(dy * (x.data > 0))

    record_op(out, backward_fn)
    return out


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic function."""
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    s = s.astype(x.dtype)
    out = Tensor(s, requires_grad=x.requires_grad)

    def backward_fn(dy: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(dy * s * (1.0 - s))

    record_op(out, backward_fn)
    return out


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack b's channels after a's; N, H, W must match."""
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ShapeError("concat_channels needs (N,C,H,W) tensors")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat_channels N/H/W mismatch: {a.shape} vs {b.shape}")
    ca = a.shape[1]
    out = Tensor(np.concatenate([a.data, b.data], axis=1), requires_grad=a.requires_grad or b.requires_grad)

    def backward_fn(dy: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(dy[:, :ca])
        if b.requires_grad:
            b.accumulate_grad(dy[:, ca:])

    record_op(out, backward_fn)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data, requires_grad=a.requires_grad or b.requires_grad)

    def backward_fn(dy: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(dy)
        if b.requires_grad:
            b.accumulate_grad(dy)

    record_op(out, backward_fn)
    return out


def tensor_sum(x: Tensor) -> Tensor:
    """Sum of all elements to a scalar (float64 accumulation)."""
    out = Tensor(
        np.asarray(x.data.sum(dtype=np.float64), dtype=x.dtype), requires_grad=x.requires_grad
    )

    def backward_fn(dy: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(dy, x.data.shape).astype(x.dtype))

    record_op(out, backward_fn)
    return out


class RunningStats:
    """Per-channel running mean/variance buffers for batchnorm eval mode."""

    def __init__(self, channels: int, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)

    def state(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.mean, "running_var": self.var}


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running: RunningStats,
    eps: float = 1e-5,
    mode: str = "train",
    momentum: float = 0.1,
) -> Tensor:
    """Per-channel normalization with affine scale/shift.

    Train mode normalizes by biased batch statistics and folds them into the
    running buffers (``running = (1-momentum) running + momentum batch``,
    unbiased variance for the buffer); eval mode normalizes by the buffers.
    """
    if eps <= 0:
        raise ConfigError(f"batchnorm eps must be positive, got {eps}")
    if mode not in ("train", "eval"):
        raise ConfigError(f"batchnorm mode must be 'train' or 'eval', got {mode!r}")
    if x.data.ndim != 4:
        raise ShapeError("batchnorm2d needs (N,C,H,W)")
    n, c, h, w = x.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"batchnorm gamma/beta must have shape ({c},)")
    x64 = x.data.astype(np.float64)
    if mode == "train":
        m = n * h * w
        mean = x64.mean(axis=(0, 2, 3))
        var = x64.var(axis=(0, 2, 3))
        if m > 1:
            unbiased = var * m / (m - 1)
        else:
            unbiased = var
        running.mean = ((1 - momentum) * running.mean + momentum * mean).astype(running.mean.dtype)
        running.var = ((1 - momentum) * running.var + momentum * unbiased).astype(running.var.dtype)
    else:
        mean = running.mean.astype(np.float64)
        var = running.var.astype(np.float64)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x64 - mean[None, :, None, None]) * inv_std[None, :, None, None]
    y = gamma.data.astype(np.float64)[None, :, None, None] * xhat + beta.data.astype(np.float64)[None, :, None, None]
    out = Tensor(
        y.astype(x.dtype),
        requires_grad=x.requires_grad or gamma.requires_grad or beta.requires_grad,
    )

    def backward_fn(dy: np.ndarray) -> None:
        dy64 = dy.astype(np.float64)
        if gamma.requires_grad:
            gamma.accumulate_grad((dy64 * xhat).sum(axis=(0, 2, 3)).astype(gamma.dtype))
        if beta.requires_grad:
            beta.accumulate_grad(dy64.sum(axis=(0, 2, 3)).astype(beta.dtype))
        if x.requires_grad:
            g = gamma.data.astype(np.float64)[None, :, None, None]
            dxhat = dy64 * g
            if mode == "train":
                m = n * h * w
                sum_dxhat = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
                sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
                dx = (inv_std[None, :, None, None] / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
            else:
                dx = dxhat * inv_std[None, :, None, None]
            x.accumulate_grad(dx.astype(x.dtype))

    record_op(out, backward_fn)
    return out
