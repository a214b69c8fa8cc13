"""
Training protocol: pair sampling, real pools, alternating discriminator / generator Adam steps,
metrics logging, periodic checkpoints and resume.
"""
import csv
import json
import logging
import os
from typing import NamedTuple, Sequence

import numpy as np

from autodiff import ops
from autodiff.optim import Adam
from autodiff.tensor import Tensor, backward, current_tape, no_grad, precision
from models.networks import (Generator, GlobalDiscriminator, LocalDiscriminator, discriminate_global,
                             discriminate_local, forward_sequence)
from models.perceptual import FeatureExtractor, load_weights, random_extractor
from models.warp import StnHead
from preprocessing.dataset import Dataset
from training.checkpoint import CheckpointArchive
from training.losses import (COMPONENTS, DiscriminatorScores, endpoint_blend_loss, guarded, identity_reg, lsgan_d,
                             lsgan_g, recon_loss, total_g, transition_loss, warp_loss)
from training.schedules import TimeSchedule, cs_schedule, uniform_schedule
from utils.dto import StepMetrics, TrainConfig

logger = logging.getLogger(__name__)

METRIC_FIELDS = ['step', 'd_loss', *COMPONENTS, 'total']
FINAL_CHECKPOINT = 'model.ckpt'
METRICS_FILE = 'metrics.csv'


class MorphModels(NamedTuple):
    generator: Generator
    stn: StnHead
    local_d: LocalDiscriminator
    global_d: GlobalDiscriminator
    extractor: FeatureExtractor


def build_extractor(config: TrainConfig) -> FeatureExtractor:
    if config.perceptual_weights:
        return load_weights(config.perceptual_weights)
    return random_extractor(config.perceptual_seed, widths=config.perceptual_widths, preset=config.perceptual_preset)


def build_models(config: TrainConfig) -> MorphModels:
    """ Fresh, seeded networks for a config. Must run under the config's precision. """
    rng = np.random.default_rng(config.seed)
    models = MorphModels(
        generator=Generator(config.resolution, rng, base_channels=config.base_channels,
                            time_channels=config.time_channels, use_adain=config.loss.adain),
        stn=StnHead(config.resolution, rng, grid_size=config.grid_size, channels=config.stn_channels,
                    hidden=config.stn_hidden),
        local_d=LocalDiscriminator(rng, base_channels=config.disc_channels),
        global_d=GlobalDiscriminator(config.resolution, rng, base_channels=config.disc_channels),
        extractor=build_extractor(config),
    )
    logger.debug(f'built models: G {models.generator.num_parameters()}, STN {models.stn.num_parameters()}, '
                 f'D {models.local_d.num_parameters() + models.global_d.num_parameters()} parameters')
    return models


def make_pairs(batch: Sequence[int], set_size: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """
    Pair every batch index with a partner drawn uniformly from the rest of the set.

    Args:
        batch: Dataset indices of the batch images.
        set_size: Number of images in the set partners are drawn from.
        rng: Source of randomness.

    Returns:
        (a, b) index pairs; a == b only when the set holds a single image.
    """
    pairs = []
    for i in batch:
        if set_size == 1:
            pairs.append((int(i), int(i)))
            continue
        j = int(rng.integers(set_size - 1))
        pairs.append((int(i), j + 1 if j >= i else j))
    return pairs


def draw_real_pool(dataset: Dataset, k: int, rng: np.random.Generator) -> np.ndarray:
    """ k images drawn uniformly at random (with replacement) from the dataset. """
    return dataset.images[rng.integers(len(dataset), size=k)]


def _scores(models: MorphModels, images: Tensor) -> DiscriminatorScores:
    return DiscriminatorScores(discriminate_local(models.local_d, images), discriminate_global(models.global_d, images))


def _value(x: Tensor | None) -> float:
    return 0.0 if x is None else x.item()


class MorphTrainer:
    """
    Holds models, optimizers and the sampling rng of one training run.
    The generator optimizer covers encoder, decoder and (unless disabled) the STN head.
    """

    def __init__(self, config: TrainConfig, models: MorphModels | None = None):
        self.config = config
        self.weights = config.loss
        self.models = models or build_models(config)
        self.rng = np.random.default_rng([config.seed, 1])
        self.step = 0

        g_params = dict(self.models.generator.named_parameters('generator.'))
        if self.weights.stn:
            g_params.update(self.models.stn.named_parameters('stn.'))
        d_params = dict(self.models.local_d.named_parameters('local_d.'))
        d_params.update(self.models.global_d.named_parameters('global_d.'))
        adam = dict(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps)
        self.g_optimizer = Adam(g_params, **adam)
        self.d_optimizer = Adam(d_params, **adam)

    @property
    def stn(self) -> StnHead | None:
        return self.models.stn if self.weights.stn else None

    def schedule(self) -> TimeSchedule:
        if self.config.mode == 'content_style':
            return cs_schedule(self.config.k, self.rng)
        return uniform_schedule(self.config.k)

    def sample_batch(self, dataset: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """ (A images, B images, real pool of k images per pair) for one step. """
        n = self.config.batch_size
        batch = self.rng.choice(len(dataset), size=n, replace=len(dataset) < n)
        pairs = make_pairs(batch, len(dataset), self.rng)
        pool = np.concatenate([draw_real_pool(dataset, self.config.k, self.rng) for _ in pairs])
        return (dataset.images[[a for a, _ in pairs]], dataset.images[[b for _, b in pairs]], pool)

    def train_step(self, a: np.ndarray, b: np.ndarray, real_pool: np.ndarray) -> StepMetrics:
        """
        One discriminator step followed by one generator step.

        Args:
            a, b: Paired input batches [N, 3, H, W].
            real_pool: k real images per pair, [k * N, 3, H, W].
        """
        current_tape().reset()
        a, b = Tensor(a), Tensor(b)
        schedule = self.schedule()
        sequence = forward_sequence(self.models.generator, self.stn, a, b, schedule)
        fake = ops.concat(sequence.frames, axis=0)

        d_loss = None
        if self.weights.gan:
            d_loss = guarded('discriminator', lambda: lsgan_d(_scores(self.models, Tensor(real_pool)),
                                                              _scores(self.models, fake.detach())))
            self.d_optimizer.zero_grad()
            backward(d_loss)
            self.d_optimizer.step()

        components = {}
        self.models.local_d.requires_grad_(False)
        self.models.global_d.requires_grad_(False)
        try:
            extractor, flat = self.models.extractor, self.weights.ps_flat
            if self.weights.gan:
                components['adv'] = guarded('adv', lambda: lsgan_g(_scores(self.models, fake)))
            if self.weights.local_ps:
                components['transition'] = guarded('transition', lambda: transition_loss(
                    extractor, sequence.frames, schedule, a, b, flat=flat))
            if self.weights.recon:
                components['recon'] = guarded('recon', lambda: recon_loss(sequence.frames[0], sequence.frames[-1], a, b))
            if self.weights.stn:
                grid_ab, grid_ba = sequence.grids
                components['warp'] = guarded('warp', lambda: warp_loss(extractor, sequence.warped_a[-1], b)
                                             + warp_loss(extractor, sequence.warped_b[0], a))
                components['identity'] = guarded('identity', lambda: identity_reg(grid_ab) + identity_reg(grid_ba))
            if self.weights.global_ps:
                components['blend'] = guarded('blend', lambda: endpoint_blend_loss(
                    extractor, sequence.frames, sequence.warped_a, sequence.warped_b, schedule))
            total = guarded('total', lambda: total_g(components, self.weights))
            self.g_optimizer.zero_grad()
            if total.requires_grad:
                backward(total)
            self.g_optimizer.step()
        finally:
            self.models.local_d.requires_grad_(True)
            self.models.global_d.requires_grad_(True)
            current_tape().reset()

        metrics = StepMetrics(step=self.step, d_loss=_value(d_loss), total=total.item(),
                              **{name: _value(value) for name, value in components.items()})
        self.step += 1
        return metrics

    def to_archive(self) -> CheckpointArchive:
        archive = CheckpointArchive(metadata={
            'config': self.config.model_dump_json(),
            'mode': self.config.mode,
            'step': str(self.step),
            'rng_state': json.dumps(self.rng.bit_generator.state),
        })
        archive.add('generator.', self.models.generator.state_dict())
        archive.add('stn.', self.models.stn.state_dict())
        archive.add('local_d.', self.models.local_d.state_dict())
        archive.add('global_d.', self.models.global_d.state_dict())
        archive.add('g_optim.', self.g_optimizer.state_dict())
        archive.add('d_optim.', self.d_optimizer.state_dict())
        return archive

    def restore(self, archive: CheckpointArchive):
        """ Load weights, optimizer moments, step counter and sampling rng from an archive. """
        self.models.generator.load_state_dict(archive.section('generator.'))
        self.models.stn.load_state_dict(archive.section('stn.'))
        self.models.local_d.load_state_dict(archive.section('local_d.'))
        self.models.global_d.load_state_dict(archive.section('global_d.'))
        self.g_optimizer.load_state_dict(archive.section('g_optim.'))
        self.d_optimizer.load_state_dict(archive.section('d_optim.'))
        self.step = int(archive.metadata.get('step', 0))
        if 'rng_state' in archive.metadata:
            self.rng.bit_generator.state = json.loads(archive.metadata['rng_state'])
        logger.info(f'resumed training at step {self.step}')


def load_models(archive: CheckpointArchive) -> tuple[TrainConfig, MorphModels]:
    """ Rebuild the networks stored in a checkpoint (inference use). """
    config = TrainConfig.model_validate_json(archive.metadata['config'])
    with precision(config.precision):
        models = build_models(config)
    models.generator.load_state_dict(archive.section('generator.'))
    models.stn.load_state_dict(archive.section('stn.'))
    models.local_d.load_state_dict(archive.section('local_d.'))
    models.global_d.load_state_dict(archive.section('global_d.'))
    return config, models


def total_steps(config: TrainConfig, dataset_size: int) -> int:
    if config.epochs is None:
        return config.steps
    return config.epochs * -(-dataset_size // config.batch_size)


def _open_metrics(path: str, append: bool):
    exists = append and os.path.exists(path)
    handle = open(path, 'a' if exists else 'w', newline='', encoding='utf-8')
    writer = csv.DictWriter(handle, fieldnames=METRIC_FIELDS)
    if not exists:
        writer.writeheader()
    return handle, writer


def fit(config: TrainConfig, dataset: Dataset, resume: str | None = None) -> CheckpointArchive:
    """
    Train for the configured number of steps, writing `metrics.csv`, periodic
    `checkpoint_<step>.ckpt` archives and the final `model.ckpt` under `config.output_dir`.

    Args:
        config: Run configuration.
        dataset: Training images at `config.resolution`.
        resume: Optional checkpoint to continue from (weights, optimizer state, step, rng).

    Returns:
        The final checkpoint archive.
    """
    if dataset.resolution != config.resolution:
        raise ValueError(f"dataset resolution {dataset.resolution} does not match config {config.resolution}")
    os.makedirs(config.output_dir, exist_ok=True)
    with precision(config.precision):
        trainer = MorphTrainer(config)
        if resume:
            trainer.restore(CheckpointArchive.load(resume))
        steps = total_steps(config, len(dataset))
        logger.info(f'training {config.mode} model for {steps} steps on {len(dataset)} images '
                    f'({config.resolution}px, k={config.k}, batch {config.batch_size})')
        handle, writer = _open_metrics(os.path.join(config.output_dir, METRICS_FILE), append=bool(resume))
        try:
            while trainer.step < steps:
                metrics = trainer.train_step(*trainer.sample_batch(dataset))
                writer.writerow(metrics.model_dump())
                if metrics.step % config.log_every == 0 or trainer.step == steps:
                    logger.info(f'step {metrics.step}: total G {metrics.total:.5f}, D {metrics.d_loss:.5f}, '
                                f'recon {metrics.recon:.5f}')
                if config.checkpoint_every and trainer.step % config.checkpoint_every == 0 and trainer.step < steps:
                    handle.flush()
                    trainer.to_archive().save(os.path.join(config.output_dir, f'checkpoint_{trainer.step:06d}.ckpt'))
        finally:
            handle.close()
        archive = trainer.to_archive()
        archive.save(os.path.join(config.output_dir, FINAL_CHECKPOINT))
    return archive


def generate_batch(models: MorphModels, config: TrainConfig, a: np.ndarray, b: np.ndarray,
                   schedule: TimeSchedule) -> list[np.ndarray]:
    """ Inference-time frames for paired batches, one [N, 3, H, W] array per schedule entry. """
    stn = models.stn if config.loss.stn else None
    with precision(config.precision), no_grad():
        sequence = forward_sequence(models.generator, stn, Tensor(a), Tensor(b), schedule)
    return [frame.numpy() for frame in sequence.frames]
