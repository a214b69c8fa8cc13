import logging
from typing import Iterable, Literal, Sequence

import numpy as np

from autodiff import ops
from autodiff.conv import max_pool2d
from autodiff.tensor import Tensor
from models.base_module import BaseModule
from models.layers import Conv2d
from utils.errors import ShapeError

logger = logging.getLogger(__name__)

VGG_WIDTHS = (64, 128, 256, 512, 512)
GROUP_PRESETS = {
    'desk': (1, 1, 1, 1, 1),
    'vgg16': (2, 2, 3, 3, 3),
}
NUM_GROUPS = 5


def layer_groups(groups: Iterable[int]) -> tuple[int, ...]:
    """ Validate a layer-group set: nonempty subset of {1..5}, returned in ascending order. """
    result = tuple(sorted(set(int(g) for g in groups)))
    if not result:
        raise ValueError("layer group set must be nonempty")
    if result[0] < 1 or result[-1] > NUM_GROUPS:
        raise ValueError(f"layer groups must lie in 1..{NUM_GROUPS}, got {result}")
    return result


class LayerGroup(BaseModule):
    """ 3x3 conv + ReLU blocks followed by a 2x2 max-pool. """

    def __init__(self, in_channels: int, width: int, num_convs: int, rng: np.random.Generator):
        self.convs = []
        channels = in_channels
        for _ in range(num_convs):
            he_std = float(np.sqrt(2.0 / (9 * channels)))
            self.convs.append(Conv2d(channels, width, 3, rng, padding=1, std=he_std))
            channels = width

    def forward(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = ops.relu(conv(x))
        return max_pool2d(x, 2)


class FeatureExtractor(BaseModule):
    """
    Five-group convolutional hierarchy shaped like VGG-16 (widths 64, 128, 256, 512, 512).

    Weights are frozen: gradients flow through the extractor into its input image but
    never into its own parameters.
    """

    def __init__(self, rng: np.random.Generator, widths: Sequence[int] = VGG_WIDTHS,
                 convs_per_group: Sequence[int] = GROUP_PRESETS['desk']):
        if len(widths) != NUM_GROUPS or len(convs_per_group) != NUM_GROUPS:
            raise ValueError(f"extractor needs {NUM_GROUPS} widths and conv counts")
        self.groups = []
        channels = 3
        for width, num_convs in zip(widths, convs_per_group):
            self.groups.append(LayerGroup(channels, width, num_convs, rng))
            channels = width
        self.widths = tuple(widths)
        self.convs_per_group = tuple(convs_per_group)
        self.requires_grad_(False)

    def forward(self, image: Tensor, groups: Iterable[int] = (4, 5)) -> list[Tensor]:
        return self.extract(image, groups)

    def extract(self, image: Tensor, groups: Iterable[int] = (4, 5)) -> list[Tensor]:
        """
        Feature maps of the requested layer groups, in ascending group order.

        Args:
            image: [N, 3, H, W] batch in [-1, 1].
            groups: Layer groups to return; group g has spatial size H / 2^g.
        """
        wanted = layer_groups(groups)
        if image.ndim != 4 or image.shape[1] != 3:
            raise ShapeError(f"extract expects [N, 3, H, W], got {image.shape}")
        factor = 2 ** wanted[-1]
        if image.shape[2] % factor or image.shape[3] % factor:
            raise ShapeError(f"spatial size {image.shape[2]}x{image.shape[3]} (dims 2, 3) "
                             f"is not divisible by 2^{wanted[-1]}")
        features = []
        x = image
        for g, group in enumerate(self.groups[:wanted[-1]], start=1):
            x = group(x)
            if g in wanted:
                features.append(x)
        return features

    def ps(self, a: Tensor, b: Tensor, groups: Iterable[int] = (4, 5), flat: bool = False) -> Tensor:
        return ps(self, a, b, groups, flat=flat)


def ps_from_features(features_a: Sequence[Tensor], features_b: Sequence[Tensor], flat: bool = False) -> Tensor:
    """
    Perceptual similarity from already extracted feature lists.

    By default the unweighted mean of per-group MSEs; with `flat` the MSE over all
    features concatenated, which lets larger groups dominate.
    """
    per_group = [ops.mse(fa, fb) for fa, fb in zip(features_a, features_b)]
    if not flat:
        total = per_group[0]
        for term in per_group[1:]:
            total = total + term
        return total / float(len(per_group))
    sizes = [fa.data.size for fa in features_a]
    total = per_group[0] * float(sizes[0])
    for term, size in zip(per_group[1:], sizes[1:]):
        total = total + term * float(size)
    return total / float(sum(sizes))


def ps(extractor: FeatureExtractor, a: Tensor, b: Tensor, groups: Iterable[int] = (4, 5),
       flat: bool = False) -> Tensor:
    """ PS_groups(a, b) = MSE(VGG_groups(a), VGG_groups(b)). Nonnegative, symmetric, zero on identical inputs. """
    if a.shape != b.shape:
        raise ShapeError(f"ps operands differ in shape: {a.shape} vs {b.shape}")
    return ps_from_features(extractor.extract(a, groups), extractor.extract(b, groups), flat=flat)


def ps_per_sample(extractor: FeatureExtractor, a: Tensor, b: Tensor, groups: Iterable[int] = (4, 5),
                  flat: bool = False) -> Tensor:
    """ PS of each batch item on its own, shape [N]; `ps` is the mean of this over the batch. """
    if a.shape != b.shape:
        raise ShapeError(f"ps operands differ in shape: {a.shape} vs {b.shape}")
    per_group = []
    sizes = []
    for fa, fb in zip(extractor.extract(a, groups), extractor.extract(b, groups)):
        diff = fa - fb
        per_group.append(ops.mean(diff * diff, axis=(1, 2, 3)))
        sizes.append(fa.data[0].size)
    weights = sizes if flat else [1] * len(sizes)
    total = per_group[0] * float(weights[0])
    for term, weight in zip(per_group[1:], weights[1:]):
        total = total + term * float(weight)
    return total / float(sum(weights))


def random_extractor(seed: int, widths: Sequence[int] = VGG_WIDTHS,
                     preset: Literal['desk', 'vgg16'] = 'desk') -> FeatureExtractor:
    """ Seeded He-initialized extractor; a deterministic stand-in for pretrained weights. """
    return FeatureExtractor(np.random.default_rng(seed), widths=widths, convs_per_group=GROUP_PRESETS[preset])


def load_weights(archive_path: str) -> FeatureExtractor:
    """
    Build an extractor from a named-tensor archive holding `groups.<g>.convs.<j>.weight|bias`
    entries (g counted from 0). Widths and conv counts are inferred from the entries.
    """
    from training.checkpoint import CheckpointArchive

    archive = CheckpointArchive.load(archive_path)
    entries = {name.removeprefix('extractor.'): array for name, array in archive.entries.items()}
    widths, counts = [], []
    for g in range(NUM_GROUPS):
        weights = sorted((name for name in entries if name.startswith(f'groups.{g}.convs.') and name.endswith('.weight')),
                         key=lambda name: int(name.split('.')[3]))
        if not weights:
            raise ShapeError(f"archive {archive_path} has no convolutions for layer group {g + 1}")
        counts.append(len(weights))
        widths.append(int(entries[weights[-1]].shape[0]))
    extractor = FeatureExtractor(np.random.default_rng(0), widths=widths, convs_per_group=counts)
    extractor.load_state_dict(entries)
    logger.info(f'loaded perceptual extractor from {archive_path}: widths {widths}, convs {counts}')
    return extractor
