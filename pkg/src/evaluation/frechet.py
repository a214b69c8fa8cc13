"""
Fréchet distance between Gaussians fitted to embedded image sets.

The embedding is the spatially averaged activation of one perceptual layer group, taken
on images bilinearly resized to 96 x 96. Values are only comparable within one extractor.
"""
import logging
from typing import NamedTuple

import numpy as np
import scipy.linalg

from autodiff.sampling import bilinear_upsample
from autodiff.tensor import Tensor, no_grad, precision
from models.perceptual import FeatureExtractor

logger = logging.getLogger(__name__)

EMBED_SIZE = 96


class GaussianFit(NamedTuple):
    mean: np.ndarray
    covariance: np.ndarray  # [D] variances when diagonal, [D, D] otherwise
    diagonal: bool


def embed(extractor: FeatureExtractor, images: np.ndarray, group: int = 4, size: int = EMBED_SIZE,
          batch_size: int = 32) -> np.ndarray:
    """
    Args:
        extractor: Frozen perceptual extractor.
        images: [N, 3, H, W] in [-1, 1].
        group: Layer group whose activations are averaged over space.
        size: Side the images are resized to before embedding.

    Returns:
        [N, C_group] embedding matrix (float64).
    """
    rows = []
    with precision('float64'), no_grad():
        for start in range(0, len(images), batch_size):
            chunk = Tensor(images[start:start + batch_size])
            if chunk.shape[2] != size or chunk.shape[3] != size:
                chunk = bilinear_upsample(chunk, size, size)
            (features,) = extractor.extract(chunk, groups=(group,))
            rows.append(features.numpy().mean(axis=(2, 3)))
    return np.concatenate(rows).astype(np.float64)


def fit_gaussian(embeddings: np.ndarray, full: bool = False) -> GaussianFit:
    """ Sample mean and (unbiased) covariance, or per-dimension variances by default. """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim == 1:
        embeddings = embeddings[:, None]
    if len(embeddings) < 2:
        raise ValueError(f"need at least 2 embeddings to fit a Gaussian, got {len(embeddings)}")
    mean = embeddings.mean(axis=0)
    if full:
        return GaussianFit(mean, np.atleast_2d(np.cov(embeddings, rowvar=False)), False)
    return GaussianFit(mean, embeddings.var(axis=0, ddof=1), True)


def diagonal_frechet(mean_x: np.ndarray, std_x: np.ndarray, mean_y: np.ndarray, std_y: np.ndarray) -> float:
    """ ||mu_x - mu_y||^2 + sum_c (sigma_x,c - sigma_y,c)^2. """
    return float(np.sum((np.asarray(mean_x) - mean_y) ** 2) + np.sum((np.asarray(std_x) - std_y) ** 2))


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = scipy.linalg.eigh(matrix)
    return (eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.T


def full_frechet(mean_x: np.ndarray, cov_x: np.ndarray, mean_y: np.ndarray, cov_y: np.ndarray) -> float:
    """
    ||mu_x - mu_y||^2 + Tr(C_x + C_y - 2 (C_x C_y)^1/2), with the trace of the cross term
    taken from the symmetric matrix C_x^1/2 C_y C_x^1/2 so only eigh is needed.
    """
    root_x = _psd_sqrt(cov_x)
    cross = root_x @ cov_y @ root_x
    cross_eigenvalues = scipy.linalg.eigh((cross + cross.T) / 2.0, eigvals_only=True)
    trace_cross = float(np.sum(np.sqrt(np.clip(cross_eigenvalues, 0.0, None))))
    distance = float(np.sum((mean_x - mean_y) ** 2) + np.trace(cov_x) + np.trace(cov_y) - 2.0 * trace_cross)
    return max(distance, 0.0)


def frechet_from_fits(x: GaussianFit, y: GaussianFit) -> float:
    if x.diagonal != y.diagonal:
        raise ValueError("cannot compare a diagonal fit with a full-covariance fit")
    if x.diagonal:
        return diagonal_frechet(x.mean, np.sqrt(x.covariance), y.mean, np.sqrt(y.covariance))
    return full_frechet(x.mean, x.covariance, y.mean, y.covariance)


def frechet_from_embeddings(x: np.ndarray, y: np.ndarray, full: bool = False) -> float:
    return frechet_from_fits(fit_gaussian(x, full=full), fit_gaussian(y, full=full))


def frechet_distance(x: np.ndarray, y: np.ndarray, extractor: FeatureExtractor, group: int = 4,
                     full: bool = False) -> float:
    """
    Fréchet distance between two image sets ([N, 3, H, W] each, N >= 2) under the
    extractor embedding of `group`. Diagonal covariance unless `full`.
    """
    if len(x) < 2 or len(y) < 2:
        raise ValueError(f"frechet_distance needs at least 2 images per set, got {len(x)} and {len(y)}")
    distance = frechet_from_embeddings(embed(extractor, x, group), embed(extractor, y, group), full=full)
    logger.debug(f'frechet distance over {len(x)} vs {len(y)} images (group {group}, full={full}): {distance:.6f}')
    return distance
