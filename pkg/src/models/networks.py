"""
Generator (encoder -> time-blended AdaIN -> late-fusion decoder) and the local/global discriminators.
"""
import logging
import math
from typing import NamedTuple, Sequence

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from models.base_module import BaseModule
from models.layers import Conv2d, ConvTranspose2d
from models.warp import ControlGrid, StnHead, predict, warp_sequence
from training.schedules import TimeSchedule
from utils.errors import ShapeError

logger = logging.getLogger(__name__)

MAX_CHANNELS = 512

TimeValue = float | np.ndarray


def depth_for_resolution(resolution: int) -> int:
    """ Encoder blocks per resolution: 32 -> 3, 64 -> 4, 128 -> 5 (4x4 bottleneck). """
    depth = int(math.log2(resolution)) - 2
    if depth < 1 or 2 ** (depth + 2) != resolution:
        raise ShapeError(f"resolution {resolution} must be a power of two >= 8")
    return depth


def encoder_channels(base: int, depth: int) -> list[int]:
    return [min(base * 2 ** i, MAX_CHANNELS) for i in range(depth)]


class Encoder(BaseModule):
    def __init__(self, depth: int, rng: np.random.Generator, base_channels: int = 64):
        self.blocks = []
        in_channels = 3
        for out_channels in encoder_channels(base_channels, depth):
            self.blocks.append(Conv2d(in_channels, out_channels, 4, rng, stride=2, padding=1))
            in_channels = out_channels
        self.out_channels = in_channels

    def forward(self, image: Tensor) -> Tensor:
        x = image
        for block in self.blocks:
            x = ops.relu(block(x))
        return x


class Decoder(BaseModule):
    """ Transposed-conv blocks mirroring the encoder; no skip connections; tanh output in [-1, 1]. """

    def __init__(self, depth: int, rng: np.random.Generator, base_channels: int = 64, time_channels: int = 1):
        widths = encoder_channels(base_channels, depth)
        in_channels = 2 * widths[-1] + time_channels
        outputs = list(reversed(widths[:-1])) + [3]
        self.blocks = []
        for out_channels in outputs:
            self.blocks.append(ConvTranspose2d(in_channels, out_channels, 4, rng, stride=2, padding=1))
            in_channels = out_channels
        self.in_channels = 2 * widths[-1] + time_channels

    def forward(self, stack: Tensor) -> Tensor:
        if stack.shape[1] != self.in_channels:
            raise ShapeError(f"decoder expects {self.in_channels} input channels (dim 1), got {stack.shape[1]}")
        x = stack
        for block in self.blocks[:-1]:
            x = ops.relu(block(x))
        return ops.tanh(self.blocks[-1](x))


def _time_tensor(t: TimeValue, like: Tensor) -> Tensor | float:
    if np.ndim(t) == 0:
        return float(t)
    return Tensor(np.asarray(t).reshape(-1, 1), dtype=like.data.dtype)


def blend_statistics(mu_a, sigma_a, mu_b, sigma_b, t: TimeValue):
    """
    mu_t = (1 - t) mu_A + t mu_B, sigma_t = sqrt((1 - t) sigma_A^2 + t sigma_B^2).
    Accepts Tensors of shape [N, C] (t scalar or per-sample) or plain floats.
    """
    if not isinstance(mu_a, Tensor):
        mu_a, sigma_a, mu_b, sigma_b = (Tensor(np.asarray(v)) for v in (mu_a, sigma_a, mu_b, sigma_b))
    weight = _time_tensor(t, mu_a)
    keep = 1.0 - weight
    mu_t = mu_a * keep + mu_b * weight
    sigma_t = ops.sqrt(sigma_a * sigma_a * keep + sigma_b * sigma_b * weight)
    return mu_t, sigma_t


def adain_blend(features_a: Tensor, features_b: Tensor, t: TimeValue) -> tuple[Tensor, Tensor]:
    """ Re-normalize both feature maps to the time-blended per-channel statistics. """
    if features_a.shape != features_b.shape:
        raise ShapeError(f"adain_blend: feature shapes differ ({features_a.shape} vs {features_b.shape})")
    n, c = features_a.shape[:2]
    mu_a, sigma_a = ops.instance_stats(features_a)
    mu_b, sigma_b = ops.instance_stats(features_b)
    mu_t, sigma_t = blend_statistics(mu_a, sigma_a, mu_b, sigma_b, t)

    def renormalize(features, mu, sigma):
        return (sigma_t.reshape(n, c, 1, 1) * (features - mu.reshape(n, c, 1, 1)) / sigma.reshape(n, c, 1, 1)
                + mu_t.reshape(n, c, 1, 1))

    return renormalize(features_a, mu_a, sigma_a), renormalize(features_b, mu_b, sigma_b)


def time_channel(t: TimeValue, n: int, height: int, width: int) -> Tensor:
    """ [N, 1, H, W] constant-per-sample map holding the time stamp. """
    values = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (n,))
    maps = [ops.fill_map(float(v), height, width).data for v in values]
    return Tensor(np.stack(maps))


def assemble(features_a: Tensor, features_b: Tensor, times: Sequence[TimeValue],
             height: int | None = None, width: int | None = None) -> Tensor:
    """ Channel stack (F_A*, F_B*, time maps...); one time map per entry of `times`. """
    n = features_a.shape[0]
    height = height or features_a.shape[2]
    width = width or features_a.shape[3]
    maps = [time_channel(t, n, height, width) for t in times]
    return ops.concat_channels([features_a, features_b, *maps])


class Generator(BaseModule):
    def __init__(self, resolution: int, rng: np.random.Generator, base_channels: int = 64,
                 time_channels: int = 1, use_adain: bool = True):
        depth = depth_for_resolution(resolution)
        self.encoder = Encoder(depth, rng, base_channels)
        self.decoder = Decoder(depth, rng, base_channels, time_channels)
        self.time_channels = time_channels
        self.use_adain = use_adain
        self.resolution = resolution

    def forward(self, warped_a: Tensor, warped_b: Tensor, times: Sequence[TimeValue]) -> Tensor:
        return generate_frame(self, warped_a, warped_b, times)


def encode(encoder: Encoder, image: Tensor) -> Tensor:
    return encoder(image)


def decode(decoder: Decoder, stack: Tensor) -> Tensor:
    return decoder(stack)


def generate_frame(generator: Generator, warped_a: Tensor, warped_b: Tensor, times: Sequence[TimeValue]) -> Tensor:
    """
    One frame (or a batch of frames) from a pair of warped inputs.

    Args:
        times: (t,) in single-axis mode, (t_c, t_s) in content/style mode; each a float or a
            per-sample array. AdaIN follows the last entry (the style axis when there are two).
    """
    if len(times) != generator.time_channels:
        raise ValueError(f"generator expects {generator.time_channels} time values, got {len(times)}")
    features_a = encode(generator.encoder, warped_a)
    features_b = encode(generator.encoder, warped_b)
    if generator.use_adain:
        features_a, features_b = adain_blend(features_a, features_b, times[-1])
    return decode(generator.decoder, assemble(features_a, features_b, times))


class SequenceForward(NamedTuple):
    frames: list[Tensor]
    warped_a: list[Tensor]
    warped_b: list[Tensor]
    grids: tuple[ControlGrid, ControlGrid] | None


def forward_sequence(generator: Generator, stn: StnHead | None, a: Tensor, b: Tensor,
                     schedule: TimeSchedule) -> SequenceForward:
    """
    Full pipeline for a batch of pairs: warp at every content time, encode, blend, decode.
    All k time samples run through the generator as one stacked batch.
    """
    n = a.shape[0]
    grids = (predict(stn, a, b), predict(stn, b, a)) if stn is not None else None
    warped_a, warped_b = warp_sequence(stn, a, b, schedule.content, grids=grids)
    times = [np.repeat(np.asarray(schedule.content), n)]
    if schedule.dual:
        times.append(np.repeat(np.asarray(schedule.style), n))
    if generator.time_channels != len(times):
        raise ValueError(f"schedule has {len(times)} axes but the generator was built for {generator.time_channels}")
    stacked = generate_frame(generator, ops.concat(warped_a, axis=0), ops.concat(warped_b, axis=0), times)
    frames = [stacked[i * n:(i + 1) * n] for i in range(schedule.k)]
    return SequenceForward(frames=frames, warped_a=warped_a, warped_b=warped_b, grids=grids)


def generate_sequence(generator: Generator, stn: StnHead | None, a: Tensor, b: Tensor,
                      schedule: TimeSchedule) -> list[Tensor]:
    return forward_sequence(generator, stn, a, b, schedule).frames


class LocalDiscriminator(BaseModule):
    """ PatchGAN: three stride-2 conv blocks and a 1x1 scoring conv; ~22px receptive field per score. """

    def __init__(self, rng: np.random.Generator, base_channels: int = 64, num_blocks: int = 3):
        self.blocks = []
        in_channels = 3
        for i in range(num_blocks):
            out_channels = min(base_channels * 2 ** i, MAX_CHANNELS)
            self.blocks.append(Conv2d(in_channels, out_channels, 4, rng, stride=2, padding=1))
            in_channels = out_channels
        self.score = Conv2d(in_channels, 1, 1, rng)

    def forward(self, image: Tensor) -> Tensor:
        x = image
        for block in self.blocks:
            x = ops.relu(block(x))
        return ops.sigmoid(self.score(x))


class GlobalDiscriminator(BaseModule):
    """ Stride-2 conv blocks down to 1x1, then a scalar score per image. """

    def __init__(self, resolution: int, rng: np.random.Generator, base_channels: int = 64):
        self.blocks = []
        in_channels = 3
        for i in range(int(math.log2(resolution))):
            out_channels = min(base_channels * 2 ** i, MAX_CHANNELS)
            self.blocks.append(Conv2d(in_channels, out_channels, 4, rng, stride=2, padding=1))
            in_channels = out_channels
        self.score = Conv2d(in_channels, 1, 1, rng)

    def forward(self, image: Tensor) -> Tensor:
        x = image
        for block in self.blocks:
            x = ops.relu(block(x))
        return ops.sigmoid(self.score(x)).reshape(image.shape[0])


def discriminate_local(discriminator: LocalDiscriminator, image: Tensor) -> Tensor:
    return discriminator(image)


def discriminate_global(discriminator: GlobalDiscriminator, image: Tensor) -> Tensor:
    return discriminator(image)
