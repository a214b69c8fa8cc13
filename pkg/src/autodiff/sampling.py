"""
Bilinear resampling ops: backward-warp sampling through a dense coordinate field and
align-corners upsampling.

Normalized coordinates follow the align-corners convention: -1 is the centre of the
first pixel and +1 the centre of the last one.
"""
import numpy as np

from autodiff.tensor import Tensor, make_node
from utils.errors import ShapeError


def _corner_indices(coords: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Map normalized coordinates to pixel space with clamp-to-border.

    Returns:
        (low index, high index, fractional weight of the high index, in-range mask)
    """
    pixel = (coords + 1.0) * 0.5 * (size - 1)
    inside = (pixel >= 0) & (pixel <= size - 1)
    clamped = np.clip(pixel, 0, size - 1)
    low = np.minimum(np.floor(clamped).astype(np.intp), max(size - 2, 0))
    high = np.minimum(low + 1, size - 1)
    return low, high, clamped - low, inside


def grid_sample(image: Tensor, field: Tensor) -> Tensor:
    """
    Backward-warp bilinear sampling: output pixel p reads `image` at `field[:, :, p]`.

    Args:
        image: [N, C, H, W] source.
        field: [N, 2, Ho, Wo] absolute sampling coordinates in [-1, 1]; channel 0 is x
            (width), channel 1 is y (height). Out-of-range coordinates clamp to the border.

    Returns:
        [N, C, Ho, Wo] sampled image.
    """
    if image.ndim != 4 or field.ndim != 4:
        raise ShapeError(f"grid_sample expects rank-4 image and field, got {image.shape} and {field.shape}")
    n, c, h, w = image.shape
    if field.shape[0] != n:
        raise ShapeError(f"grid_sample: batch (dim 0) differs, image {n} vs field {field.shape[0]}")
    if field.shape[1] != 2:
        raise ShapeError(f"grid_sample: field must have 2 coordinate channels (dim 1), got {field.shape[1]}")
    out_h, out_w = field.shape[2], field.shape[3]

    x0, x1, wx, inside_x = _corner_indices(field.data[:, 0], w)
    y0, y1, wy, inside_y = _corner_indices(field.data[:, 1], h)
    flat = image.data.reshape(n, c, h * w)

    def gather(yy, xx):
        idx = np.broadcast_to((yy * w + xx).reshape(n, 1, out_h * out_w), (n, c, out_h * out_w))
        return np.take_along_axis(flat, idx, axis=2).reshape(n, c, out_h, out_w)

    v00, v01, v10, v11 = gather(y0, x0), gather(y0, x1), gather(y1, x0), gather(y1, x1)
    ax, ay = wx[:, None], wy[:, None]
    out = (v00 * (1 - ax) * (1 - ay) + v01 * ax * (1 - ay)
           + v10 * (1 - ax) * ay + v11 * ax * ay)

    def backward(g):
        g_image = np.zeros(n * c * h * w, dtype=g.dtype)
        base = (np.arange(n)[:, None] * c + np.arange(c)[None, :]) * (h * w)
        for yy, xx, weight in ((y0, x0, (1 - ax) * (1 - ay)), (y0, x1, ax * (1 - ay)),
                               (y1, x0, (1 - ax) * ay), (y1, x1, ax * ay)):
            idx = base[:, :, None] + (yy * w + xx).reshape(n, 1, out_h * out_w)
            g_image += np.bincount(idx.ravel(), weights=(g * weight).ravel(), minlength=g_image.size)
        d_wx = ((v01 - v00) * (1 - ay) + (v11 - v10) * ay) * g
        d_wy = ((v10 - v00) * (1 - ax) + (v11 - v01) * ax) * g
        g_fx = d_wx.sum(axis=1) * inside_x * (0.5 * (w - 1))
        g_fy = d_wy.sum(axis=1) * inside_y * (0.5 * (h - 1))
        return g_image.reshape(n, c, h, w), np.stack([g_fx, g_fy], axis=1)

    return make_node(out, (image, field), backward, 'grid_sample')


def interpolation_matrix(size_in: int, size_out: int, dtype=np.float64) -> np.ndarray:
    """ Align-corners linear interpolation weights of shape (size_out, size_in). """
    matrix = np.zeros((size_out, size_in), dtype=dtype)
    if size_in == 1 or size_out == 1:
        matrix[:, 0] = 1.0
        return matrix
    position = np.arange(size_out, dtype=np.float64) * (size_in - 1) / (size_out - 1)
    low = np.minimum(np.floor(position).astype(np.intp), size_in - 2)
    frac = position - low
    rows = np.arange(size_out)
    matrix[rows, low] = 1.0 - frac
    matrix[rows, low + 1] += frac
    return matrix


def bilinear_upsample(x: Tensor, height: int, width: int) -> Tensor:
    """ Align-corners bilinear resize of [N, C, h, w] to [N, C, height, width]. """
    if x.ndim != 4:
        raise ShapeError(f"bilinear_upsample expects [N, C, h, w], got rank {x.ndim}")
    rows = interpolation_matrix(x.shape[2], height, x.data.dtype)
    cols = interpolation_matrix(x.shape[3], width, x.data.dtype)
    out = rows @ x.data @ cols.T

    def backward(g):
        return (rows.T @ g @ cols,)

    return make_node(out, (x,), backward, 'bilinear_upsample')
