"""Batched 2-D convolutions via im2col, with exact adjoint backward passes.

Layouts follow the usual convention: activations are (B, C, H, W),
convolution weights are (out_channels, in_channels, kh, kw) and transposed
convolution weights are (in_channels, out_channels, kh, kw).
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError
from .tensor import Tensor, as_tensor


def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _cols(xp: np.ndarray, kh: int, kw: int, stride: int,
          out_h: int, out_w: int) -> np.ndarray:
    """Extract sliding patches: (B, C, Hp, Wp) -> (B, C*kh*kw, out_h*out_w)."""
    B, C = xp.shape[:2]
    sB, sC, sH, sW = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(B, C, kh, kw, out_h, out_w),
        strides=(sB, sC, sH, sW, sH * stride, sW * stride),
        writeable=False,
    )
    return view.reshape(B, C * kh * kw, out_h * out_w)


def _cols_adjoint(gcols: np.ndarray, spatial: tuple[int, int], channels: int,
                  kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add patches back: exact adjoint of _cols (a.k.a. col2im)."""
    H, W = spatial
    out_h = (H + 2 * pad - kh) // stride + 1
    out_w = (W + 2 * pad - kw) // stride + 1
    B = gcols.shape[0]
    g = gcols.reshape(B, channels, kh, kw, out_h, out_w)
    buf = np.zeros((B, channels, H + 2 * pad, W + 2 * pad), dtype=gcols.dtype)
    for i in range(kh):
        for j in range(kw):
            buf[:, :, i:i + stride * out_h:stride,
                j:j + stride * out_w:stride] += g[:, :, i, j]
    if pad == 0:
        return buf
    return buf[:, :, pad:pad + H, pad:pad + W]


def _out_size(size: int, k: int, stride: int, pad: int) -> int:
    span = size + 2 * pad - k
    if span < 0:
        raise ShapeMismatchError(f"kernel {k} larger than padded input {size + 2 * pad}")
    return span // stride + 1


def conv2d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of (B, C, H, W) with weights (O, C, kh, kw)."""
    x, w = as_tensor(x), as_tensor(w)
    B, C, H, W = x.data.shape
    O, Cw, kh, kw = w.data.shape
    if C != Cw:
        raise ShapeMismatchError(f"conv2d channels: input {C} vs weight {Cw}")
    out_h = _out_size(H, kh, stride, padding)
    out_w = _out_size(W, kw, stride, padding)

    cols = np.ascontiguousarray(_cols(_pad_hw(x.data, padding), kh, kw, stride, out_h, out_w))
    wmat = w.data.reshape(O, -1)
    out = np.matmul(wmat, cols).reshape(B, O, out_h, out_w)

    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data.reshape(1, O, 1, 1)
        parents.append(b)

    def backward(g):
        g2 = g.reshape(B, O, out_h * out_w)
        w._accumulate(np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape))
        gcols = np.matmul(wmat.T, g2)
        x._accumulate(_cols_adjoint(gcols, (H, W), C, kh, kw, stride, padding))
        if b is not None:
            b._accumulate(g.sum(axis=(0, 2, 3)))

    return Tensor._result(out, tuple(parents), backward)


def conv2d_transpose(x, w, b=None, stride: int = 1, padding: int = 0,
                     output_padding: int = 0) -> Tensor:
    """Adjoint of conv2d: upsamples (B, Cin, H, W) with weights (Cin, Cout, kh, kw)."""
    x, w = as_tensor(x), as_tensor(w)
    B, Cin, H, W = x.data.shape
    Cw, Cout, kh, kw = w.data.shape
    if Cin != Cw:
        raise ShapeMismatchError(f"conv2d_transpose channels: input {Cin} vs weight {Cw}")
    if not 0 <= output_padding < stride:
        raise ShapeMismatchError("output_padding must be in [0, stride)")
    out_h = (H - 1) * stride + kh - 2 * padding + output_padding
    out_w = (W - 1) * stride + kw - 2 * padding + output_padding

    wmat = w.data.reshape(Cin, -1)
    x2 = x.data.reshape(B, Cin, H * W)
    out = _cols_adjoint(np.matmul(wmat.T, x2), (out_h, out_w), Cout, kh, kw,
                        stride, padding)

    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data.reshape(1, Cout, 1, 1)
        parents.append(b)

    def backward(g):
        gcols = np.ascontiguousarray(_cols(_pad_hw(g, padding), kh, kw, stride, H, W))
        x._accumulate(np.matmul(wmat, gcols).reshape(B, Cin, H, W))
        w._accumulate(np.matmul(x2, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape))
        if b is not None:
            b._accumulate(g.sum(axis=(0, 2, 3)))

    return Tensor._result(out, tuple(parents), backward)
