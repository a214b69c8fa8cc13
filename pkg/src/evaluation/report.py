import csv
import logging
import os

import numpy as np

from autodiff.tensor import Tensor, no_grad, precision
from evaluation.frechet import embed, frechet_from_embeddings
from evaluation.morph import blend_frames, sequence_schedule
from models.perceptual import ps
from preprocessing.dataset import Dataset
from training.trainer import MorphModels, generate_batch, make_pairs
from utils.dto import EvalReport, TrainConfig

logger = logging.getLogger(__name__)


def sample_pairs(dataset: Dataset, pairs: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    batch = rng.choice(len(dataset), size=pairs, replace=len(dataset) < pairs)
    index_pairs = make_pairs(batch, len(dataset), rng)
    return dataset.images[[i for i, _ in index_pairs]], dataset.images[[j for _, j in index_pairs]]


def pacing_errors(models: MorphModels, frames: list[np.ndarray], a: np.ndarray, b: np.ndarray,
                  increments: list[float]) -> np.ndarray:
    """
    |PS(I_{i-1}, I_i) - dt_i PS(I_A, I_B)| per pair and step, shape [N, k - 1].
    """
    errors = np.zeros((len(a), len(increments)))
    with precision('float64'), no_grad():
        for n in range(len(a)):
            total = ps(models.extractor, Tensor(a[n:n + 1]), Tensor(b[n:n + 1])).item()
            for i, dt in enumerate(increments, start=1):
                step = ps(models.extractor, Tensor(frames[i - 1][n:n + 1]), Tensor(frames[i][n:n + 1])).item()
                errors[n, i - 1] = abs(step - dt * total)
    return errors


def interior(frames: list[np.ndarray]) -> np.ndarray:
    """ All frames except the two endpoints, flattened over pairs. """
    return np.concatenate(frames[1:-1])


def evaluate(config: TrainConfig, models: MorphModels, test: Dataset, train: Dataset, pairs: int = 100,
             frames: int = 11, seed: int = 0, batch_size: int = 16) -> EvalReport:
    """
    Generate `frames`-long sequences for `pairs` test pairs and score the interior frames
    against the training images, next to the STN-aligned linear blend baseline.
    """
    if frames < 3:
        raise ValueError(f"evaluation needs at least one interior frame, got frames={frames}")
    rng = np.random.default_rng(seed)
    a, b = sample_pairs(test, pairs, rng)
    schedule = sequence_schedule(config, frames)

    generated: list[list[np.ndarray]] = [[] for _ in range(frames)]
    for start in range(0, pairs, batch_size):
        chunk = generate_batch(models, config, a[start:start + batch_size], b[start:start + batch_size], schedule)
        for i, frame in enumerate(chunk):
            generated[i].append(frame)
    sequence = [np.concatenate(parts) for parts in generated]

    blended = [blend_frames(config, models, a[n], b[n], frames) for n in range(pairs)]
    blend_sequence = [np.stack([pair[i] for pair in blended]) for i in range(frames)]

    train_embedding = embed(models.extractor, train.images)
    frechet_generator = frechet_from_embeddings(embed(models.extractor, interior(sequence)), train_embedding)
    frechet_blend = frechet_from_embeddings(embed(models.extractor, interior(blend_sequence)), train_embedding)

    errors = pacing_errors(models, sequence, a, b, schedule.increments())
    recon = float(np.mean([np.mean((sequence[0] - a) ** 2), np.mean((sequence[-1] - b) ** 2)]))
    report = EvalReport(
        pairs=pairs,
        frames=frames,
        frechet_generator=frechet_generator,
        frechet_blend=frechet_blend,
        pacing_mean=float(errors.mean()),
        pacing_mean_of_max=float(errors.max(axis=1).mean()),
        pacing_max=float(errors.max()),
        recon_mse=recon,
    )
    logger.info(f'evaluation: {report.model_dump()}')
    return report


def write_report(report: EvalReport, out_dir: str) -> tuple[str, str]:
    """ Write `report.txt` (one `name: value` line per metric) and `report.csv` (header + one row). """
    os.makedirs(out_dir, exist_ok=True)
    values = report.model_dump()
    text_path = os.path.join(out_dir, 'report.txt')
    with open(text_path, 'w', encoding='utf-8') as f:
        for name, value in values.items():
            f.write(f'{name}: {value}\n')
    csv_path = os.path.join(out_dir, 'report.csv')
    with open(csv_path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=list(values))
        writer.writeheader()
        writer.writerow(values)
    logger.info(f'wrote evaluation report to {text_path} and {csv_path}')
    return text_path, csv_path
