"""
Inference-time renderers: morph sequences, content/style grids, STN-aligned linear blends
and partial warp strips, plus PNG output helpers.
"""
import logging
import os
from typing import Sequence

import numpy as np

from autodiff.tensor import Tensor, no_grad, precision
from models.networks import generate_frame
from models.warp import warp_sequence
from preprocessing.dataset import save_png
from training.schedules import TimeSchedule, grid_schedule, uniform_schedule
from training.trainer import MorphModels, generate_batch
from utils.dto import TrainConfig
from utils.errors import ModeError

logger = logging.getLogger(__name__)


def sequence_schedule(config: TrainConfig, n_frames: int) -> TimeSchedule:
    """ Evenly spaced schedule; content/style models move along the diagonal t_c = t_s. """
    schedule = uniform_schedule(n_frames)
    if config.mode == 'content_style':
        return TimeSchedule(content=schedule.content, style=schedule.content)
    return schedule


def morph_frames(config: TrainConfig, models: MorphModels, a: np.ndarray, b: np.ndarray,
                 n_frames: int = 11) -> list[np.ndarray]:
    """ n_frames generated images [3, H, W] from A (t = 0) to B (t = 1). """
    frames = generate_batch(models, config, a[None], b[None], sequence_schedule(config, n_frames))
    return [frame[0] for frame in frames]


def _warped(config: TrainConfig, models: MorphModels, a: np.ndarray, b: np.ndarray,
            times: Sequence[float]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    stn = models.stn if config.loss.stn else None
    with precision(config.precision), no_grad():
        seq_a, seq_b = warp_sequence(stn, Tensor(a[None]), Tensor(b[None]), times)
    return [x.numpy()[0] for x in seq_a], [x.numpy()[0] for x in seq_b]


def csgrid_cells(config: TrainConfig, models: MorphModels, a: np.ndarray, b: np.ndarray,
                 size: int = 6) -> np.ndarray:
    """
    Content/style grid as [size, size, 3, H, W]: entry [j, i] is generated at content
    coordinate i / (size - 1) and style coordinate j / (size - 1), so each row holds style fixed.
    """
    if config.mode != 'content_style':
        raise ModeError(f"csgrid needs a content_style checkpoint, this one was trained in '{config.mode}' mode")
    steps = [i / (size - 1) for i in range(size)]
    seq_a, seq_b = _warped(config, models, a, b, steps)
    content, style, inputs_a, inputs_b = [], [], [], []
    for t_c, t_s in grid_schedule(size):
        i = steps.index(t_c)
        content.append(t_c)
        style.append(t_s)
        inputs_a.append(seq_a[i])
        inputs_b.append(seq_b[i])
    with precision(config.precision), no_grad():
        cells = generate_frame(models.generator, Tensor(np.stack(inputs_a)), Tensor(np.stack(inputs_b)),
                               (np.asarray(content), np.asarray(style))).numpy()
    # grid_schedule enumerates content-major; transpose to rows of constant style
    return cells.reshape(size, size, *cells.shape[1:]).transpose(1, 0, 2, 3, 4)


def blend_frames(config: TrainConfig, models: MorphModels, a: np.ndarray, b: np.ndarray,
                 n_frames: int = 11) -> list[np.ndarray]:
    """ Linear blend baseline: (1 - t) I_A^t + t I_B^t over the STN-warped inputs, no generator. """
    times = uniform_schedule(n_frames).content
    seq_a, seq_b = _warped(config, models, a, b, times)
    return [(1.0 - t) * wa + t * wb for t, wa, wb in zip(times, seq_a, seq_b)]


def warp_strips(config: TrainConfig, models: MorphModels, a: np.ndarray, b: np.ndarray,
                n_frames: int = 5) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """ Partial warps of A (towards B) and of B (towards A) at evenly spaced times. """
    return _warped(config, models, a, b, uniform_schedule(n_frames).content)


def montage(frames: Sequence[np.ndarray]) -> np.ndarray:
    """ Horizontal strip [3, H, n * W]. """
    return np.concatenate(list(frames), axis=2)


def grid_image(cells: np.ndarray) -> np.ndarray:
    """ [rows, cols, 3, H, W] -> [3, rows * H, cols * W]. """
    return np.concatenate([montage(row) for row in cells], axis=1)


def write_frames(frames: Sequence[np.ndarray], out_dir: str, prefix: str = 'frame') -> list[str]:
    paths = []
    for i, frame in enumerate(frames):
        path = os.path.join(out_dir, f'{prefix}_{i:03d}.png')
        save_png(frame, path)
        paths.append(path)
    logger.info(f'wrote {len(paths)} frames to {out_dir}')
    return paths
