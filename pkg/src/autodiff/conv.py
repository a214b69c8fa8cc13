"""
Convolution, transposed convolution and max pooling over [N, C, H, W] tensors.

Windows are gathered with a strided view (im2col without a copy) and contracted with
`np.tensordot`; the scatter back to image layout loops over the kernel taps only.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from autodiff.tensor import Tensor, make_node
from utils.errors import ShapeError


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _windows(x_pad: np.ndarray, kh: int, kw: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """ View of shape (N, C, out_h, out_w, kh, kw). """
    view = sliding_window_view(x_pad, (kh, kw), axis=(2, 3))
    return view[:, :, ::stride, ::stride][:, :, :out_h, :out_w]


def _scatter_windows(cols: np.ndarray, canvas_shape: tuple[int, ...], stride: int) -> np.ndarray:
    """ Adjoint of `_windows`: accumulate (N, C, oh, ow, kh, kw) patches onto a canvas. """
    _, _, out_h, out_w, kh, kw = cols.shape
    canvas = np.zeros(canvas_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            canvas[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += cols[..., i, j]
    return canvas


def _check_rank(name: str, x: Tensor, kernel: Tensor):
    if x.ndim != 4:
        raise ShapeError(f"{name}: input must be [N, C, H, W], got rank {x.ndim}")
    if kernel.ndim != 4:
        raise ShapeError(f"{name}: kernel must be rank 4, got rank {kernel.ndim}")


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """
    Cross-correlation of x [N, C, H, W] with kernel [K, C, kh, kw].

    Output extents are floor((H + 2p - kh) / stride) + 1 (same for W).
    """
    _check_rank('conv2d', x, kernel)
    n, c, h, w = x.shape
    k, kc, kh, kw = kernel.shape
    if c != kc:
        raise ShapeError(f"conv2d: input channels (dim 1) = {c} but kernel expects {kc}")
    if kh > h + 2 * padding:
        raise ShapeError(f"conv2d: kernel height {kh} exceeds padded input height (dim 2) {h + 2 * padding}")
    if kw > w + 2 * padding:
        raise ShapeError(f"conv2d: kernel width {kw} exceeds padded input width (dim 3) {w + 2 * padding}")
    if bias is not None and bias.shape != (k,):
        raise ShapeError(f"conv2d: bias must have shape ({k},), got {bias.shape}")
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (w + 2 * padding - kw) // stride + 1

    x_pad = _pad(x.data, padding)
    cols = _windows(x_pad, kh, kw, stride, out_h, out_w)
    out = np.tensordot(cols, kernel.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward(g):
        g_kernel = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
        g_cols = np.tensordot(g, kernel.data, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
        g_pad = _scatter_windows(g_cols, x_pad.shape, stride)
        g_x = g_pad[:, :, padding:padding + h, padding:padding + w]
        g_bias = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return g_x, g_kernel, g_bias

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return make_node(np.ascontiguousarray(out), parents, backward, 'conv2d')


def conv_transpose2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
                     stride: int = 1, padding: int = 0) -> Tensor:
    """
    Transposed convolution of x [N, K, H, W] with kernel [K, C, kh, kw].

    This is the input-adjoint of `conv2d` with the same kernel; output extents are
    (H - 1) * stride - 2p + kh.
    """
    _check_rank('conv_transpose2d', x, kernel)
    n, k, h, w = x.shape
    kk, c, kh, kw = kernel.shape
    if k != kk:
        raise ShapeError(f"conv_transpose2d: input channels (dim 1) = {k} but kernel expects {kk}")
    out_h = (h - 1) * stride - 2 * padding + kh
    out_w = (w - 1) * stride - 2 * padding + kw
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"conv_transpose2d: empty output ({out_h}x{out_w}) for input dims 2, 3 = {h}x{w}")
    if bias is not None and bias.shape != (c,):
        raise ShapeError(f"conv_transpose2d: bias must have shape ({c},), got {bias.shape}")

    cols = np.tensordot(x.data, kernel.data, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
    canvas = _scatter_windows(cols, (n, c, out_h + 2 * padding, out_w + 2 * padding), stride)
    out = canvas[:, :, padding:padding + out_h, padding:padding + out_w]
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward(g):
        g_cols = _windows(_pad(g, padding), kh, kw, stride, h, w)
        g_x = np.tensordot(g_cols, kernel.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        g_kernel = np.tensordot(x.data, g_cols, axes=([0, 2, 3], [0, 2, 3]))
        g_bias = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return np.ascontiguousarray(g_x), g_kernel, g_bias

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return make_node(np.ascontiguousarray(out), parents, backward, 'conv_transpose2d')


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """ Non-overlapping max pooling; ties route the gradient to the first element of the window. """
    if x.ndim != 4:
        raise ShapeError(f"max_pool2d: input must be [N, C, H, W], got rank {x.ndim}")
    n, c, h, w = x.shape
    if h % size or w % size:
        raise ShapeError(f"max_pool2d: spatial dims 2, 3 ({h}x{w}) not divisible by {size}")
    oh, ow = h // size, w // size
    windows = (x.data.reshape(n, c, oh, size, ow, size)
               .transpose(0, 1, 2, 4, 3, 5)
               .reshape(n, c, oh, ow, size * size))
    winner = windows.argmax(axis=-1)[..., None]
    out = np.take_along_axis(windows, winner, axis=-1)[..., 0]

    def backward(g):
        g_windows = np.zeros_like(windows)
        np.put_along_axis(g_windows, winner, g[..., None], axis=-1)
        g_x = (g_windows.reshape(n, c, oh, ow, size, size)
               .transpose(0, 1, 2, 4, 3, 5)
               .reshape(n, c, h, w))
        return (g_x,)

    return make_node(out, (x,), backward, 'max_pool2d')
