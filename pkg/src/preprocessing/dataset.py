import glob
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Literal, Sequence

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field, model_validator

from utils.errors import DatasetError

logger = logging.getLogger(__name__)

Split = Literal['train', 'test', 'all']


class Dataset(BaseModel):
    """ Immutable stack of same-shape RGB images with values in [-1, 1], stored [N, 3, H, W]. """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    images: np.ndarray = Field(..., description="Image stack [N, 3, H, W]")
    split: Split = Field(default='all', description="Which split the items belong to")
    names: tuple[str, ...] = Field(default=(), description="Source file names, when loaded from disk")

    @model_validator(mode='after')
    def check_images(self) -> 'Dataset':
        if self.images.ndim != 4 or self.images.shape[1] != 3:
            raise DatasetError(f"images must be [N, 3, H, W], got shape {self.images.shape}")
        if len(self.images) == 0:
            raise DatasetError("dataset is empty")
        if self.images.min() < -1.0 or self.images.max() > 1.0:
            raise DatasetError(f"values outside [-1, 1]: [{self.images.min():.4f}, {self.images.max():.4f}]")
        self.images.setflags(write=False)
        return self

    def __len__(self):
        return len(self.images)

    @property
    def resolution(self) -> int:
        return self.images.shape[-1]

    def subset(self, indices: Sequence[int], split: Split | None = None) -> 'Dataset':
        indices = list(indices)
        names = tuple(self.names[i] for i in indices) if self.names else ()
        return Dataset(images=self.images[indices].copy(), split=split or self.split, names=names)


def to_unit(pixels: np.ndarray) -> np.ndarray:
    """ uint8 HWC -> float CHW in [-1, 1]. """
    return (pixels.astype(np.float64) / 255.0 * 2.0 - 1.0).transpose(2, 0, 1)


def to_pixels(image: np.ndarray) -> np.ndarray:
    """ float CHW in [-1, 1] -> uint8 HWC, rounding to the nearest level. """
    scaled = np.round((np.clip(image, -1.0, 1.0) + 1.0) / 2.0 * 255.0)
    return scaled.astype(np.uint8).transpose(1, 2, 0)


def decode_png(path: str, resolution: int) -> np.ndarray | None:
    try:
        with Image.open(path) as img:
            rgb = img.convert('RGB')
            if rgb.size != (resolution, resolution):
                rgb = rgb.resize((resolution, resolution), Image.Resampling.BILINEAR)
            return to_unit(np.asarray(rgb))
    except (OSError, ValueError) as exc:
        logger.warning(f'skipping unreadable image {path}: {exc}')
        return None


def load_folder(path: str, resolution: int, workers: int = 4) -> Dataset:
    """
    Decode every `*.png` under `path` (sorted by name), resized to resolution x resolution.

    Args:
        path: Folder holding the images.
        resolution: Target side in pixels.
        workers: Decoder threads; output order follows the sorted file names.
    """
    files = sorted(glob.glob(os.path.join(path, '*.png')))
    logger.debug(f'found {len(files)} png files in {path}')
    with ThreadPoolExecutor(max_workers=workers) as pool:
        decoded = list(pool.map(lambda f: decode_png(f, resolution), files))
    kept = [(os.path.basename(f), image) for f, image in zip(files, decoded) if image is not None]
    if not kept:
        raise DatasetError(f"no usable PNG images in {path}")
    logger.info(f'loaded {len(kept)} images from {path} at {resolution}px')
    return Dataset(images=np.stack([image for _, image in kept]), names=tuple(name for name, _ in kept))


def load_image(path: str, resolution: int) -> np.ndarray:
    """ Single image [3, H, W]; unlike folder loading, an unreadable file is an error. """
    image = decode_png(path, resolution)
    if image is None:
        raise DatasetError(f"cannot read image {path}")
    return image


def save_png(image: np.ndarray, path: str):
    """ Write a [3, H, W] image in [-1, 1] as 8-bit RGB PNG. """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Image.fromarray(to_pixels(image)).save(path)


def split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset | None]:
    """
    Seeded shuffle into disjoint train/test parts covering the input.
    The train part always keeps at least one item; the test part is None when it would be empty.
    """
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in [0, 1), got {test_fraction}")
    order = np.random.default_rng(seed).permutation(len(dataset))
    n_test = min(int(round(len(dataset) * test_fraction)), len(dataset) - 1)
    train = dataset.subset(sorted(order[n_test:]), split='train')
    test = dataset.subset(sorted(order[:n_test]), split='test') if n_test > 0 else None
    return train, test
