"""
Grid-based freeform-deformation spatial transformer.

A control grid stores, for each of g x g control points, the absolute normalized
coordinate to sample from (backward warping). Grids are densified with align-corners
bilinear upsampling and applied with `grid_sample`.
"""
import logging
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from autodiff import ops
from autodiff.sampling import bilinear_upsample, grid_sample
from autodiff.tensor import Tensor
from models.base_module import BaseModule
from models.layers import Conv2d, Linear
from utils.errors import ShapeError

logger = logging.getLogger(__name__)

Direction = Literal['AB', 'BA']


class ControlGrid(BaseModel):
    """ Control lattice of shape [N, 2, g, g]; channel 0 holds x coordinates, channel 1 y. """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: Tensor

    @property
    def g(self) -> int:
        return self.values.shape[-1]

    @property
    def batch(self) -> int:
        return self.values.shape[0]


def identity_mesh(g: int) -> np.ndarray:
    coords = np.linspace(-1.0, 1.0, g)
    ys, xs = np.meshgrid(coords, coords, indexing='ij')
    return np.stack([xs, ys])[None]


def identity_grid(g: int = 5) -> ControlGrid:
    """ Uniform mesh over [-1, 1]^2 with batch size 1. """
    if g < 2:
        raise ValueError(f"grid side must be >= 2, got {g}")
    return ControlGrid(values=Tensor(identity_mesh(g)))


class StnHead(BaseModule):
    """
    Two stride-2 conv blocks and a fully-connected block predicting a bounded residual
    on top of the identity mesh from the channel-concatenated pair (a, b).
    """

    def __init__(self, resolution: int, rng: np.random.Generator, grid_size: int = 5,
                 channels: Sequence[int] = (32, 64), hidden: int = 256, residual_scale: float = 0.5):
        if resolution % 4:
            raise ShapeError(f"STN input resolution {resolution} must be divisible by 4")
        c1, c2 = channels
        self.conv1 = Conv2d(6, c1, 4, rng, stride=2, padding=1)
        self.conv2 = Conv2d(c1, c2, 4, rng, stride=2, padding=1)
        self.fc = Linear(c2 * (resolution // 4) ** 2, hidden, rng)
        self.head = Linear(hidden, 2 * grid_size * grid_size)
        self.grid_size = grid_size
        self.residual_scale = residual_scale
        self.resolution = resolution

    def forward(self, a: Tensor, b: Tensor) -> ControlGrid:
        n = a.shape[0]
        x = ops.concat_channels([a, b])
        x = ops.relu(self.conv1(x))
        x = ops.relu(self.conv2(x))
        x = ops.relu(self.fc(x.reshape(n, -1)))
        residual = ops.tanh(self.head(x)) * self.residual_scale
        g = self.grid_size
        identity = Tensor(identity_mesh(g), dtype=residual.data.dtype)
        return ControlGrid(values=residual.reshape(n, 2, g, g) + identity)


def predict(stn: StnHead, a: Tensor, b: Tensor) -> ControlGrid:
    """ W_AB: the warp aligning a to b. Call with swapped arguments for W_BA. """
    if a.shape != b.shape:
        raise ShapeError(f"predict: image shapes differ ({a.shape} vs {b.shape})")
    if a.shape[2] != stn.resolution or a.shape[3] != stn.resolution:
        raise ShapeError(f"predict: STN built for {stn.resolution}px, got {a.shape[2]}x{a.shape[3]} (dims 2, 3)")
    return stn(a, b)


def partial_warp(grid: ControlGrid, t: float, direction: Direction = 'AB') -> ControlGrid:
    """
    Partial deformation at time t: (1 - s) * I + s * W with s = t for AB and s = 1 - t for BA.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    match direction:
        case 'AB':
            s = t
        case 'BA':
            s = 1.0 - t
        case _:
            raise ValueError(f"Invalid direction: {direction}. Use 'AB' or 'BA'.")
    identity = Tensor(identity_mesh(grid.g), dtype=grid.values.data.dtype)
    return ControlGrid(values=identity * (1.0 - s) + grid.values * s)


def _expand_batch(x: Tensor, n: int) -> Tensor:
    if x.shape[0] == n:
        return x
    return x + Tensor(np.zeros((n, *x.shape[1:])), dtype=x.data.dtype)


def dense_field(grid: ControlGrid, height: int, width: int) -> Tensor:
    return bilinear_upsample(grid.values, height, width)


def apply(grid: ControlGrid, image: Tensor) -> Tensor:
    """ Upsample the control grid to the image size and backward-warp the image with it. """
    n, _, h, w = image.shape
    field = _expand_batch(dense_field(grid, h, w), n)
    return grid_sample(image, field)


def warp_sequence(stn: StnHead | None, a: Tensor, b: Tensor, times: Sequence[float],
                  grids: tuple[ControlGrid, ControlGrid] | None = None) -> tuple[list[Tensor], list[Tensor]]:
    """
    Partially warped inputs for each sample time.

    Args:
        stn: Trained head, or None for identity warps (the configuration without alignment).
        a, b: Input batches.
        times: Sample times t_1..t_k (the content axis in content/style mode).
        grids: Precomputed (W_AB, W_BA); predicted from `stn` when omitted.

    Returns:
        ({I_A^t}, {I_B^t}), each a list of k batches.
    """
    if stn is None and grids is None:
        return [a for _ in times], [b for _ in times]
    if grids is None:
        grids = (predict(stn, a, b), predict(stn, b, a))
    grid_ab, grid_ba = grids
    seq_a = [apply(partial_warp(grid_ab, t, 'AB'), a) for t in times]
    seq_b = [apply(partial_warp(grid_ba, t, 'BA'), b) for t in times]
    return seq_a, seq_b
