import logging
import os
import sys
from argparse import ArgumentParser

from dotenv import load_dotenv, find_dotenv

from evaluation.morph import (blend_frames, csgrid_cells, grid_image, montage, morph_frames, warp_strips,
                              write_frames)
from evaluation.report import evaluate, write_report
from preprocessing.dataset import Dataset, load_folder, load_image, save_png, split
from preprocessing.toy_shapes import gen_toy, write_toy
from training.checkpoint import CheckpointArchive
from training.losses import ABLATIONS, ablation_weights
from training.trainer import fit, load_models
from utils.config import load_config
from utils.dto import TrainConfig
from utils.logger import setup_logging

load_dotenv(find_dotenv())

logger = logging.getLogger(__name__)


def load_dataset(config: TrainConfig) -> Dataset:
    if config.dataset == 'toy':
        return gen_toy(config.toy_count, config.seed, config.resolution)
    return load_folder(config.dataset, config.resolution)


def run_training(config: TrainConfig, resume: str | None = None):
    train, test = split(load_dataset(config), config.test_fraction, config.seed)
    logger.info(f'{len(train)} training images, {0 if test is None else len(test)} held out')
    fit(config, train, resume=resume)


def cmd_train(args):
    run_training(load_config(args.config), resume=args.resume)


def cmd_ablate(args):
    config = load_config(args.config)
    config = config.model_copy(update={
        'loss': ablation_weights(config.loss, args.variant),
        'output_dir': os.path.join(config.output_dir, args.variant),
    })
    logger.info(f'ablation {args.variant}: {config.loss.model_dump()}')
    run_training(config)


def _load_pair(args):
    config, models = load_models(CheckpointArchive.load(args.ckpt))
    return config, models, load_image(args.a, config.resolution), load_image(args.b, config.resolution)


def cmd_morph(args):
    config, models, a, b = _load_pair(args)
    frames = morph_frames(config, models, a, b, args.frames)
    write_frames(frames, args.out, prefix='frame')
    save_png(montage(frames), os.path.join(args.out, 'montage.png'))


def cmd_csgrid(args):
    config, models, a, b = _load_pair(args)
    cells = csgrid_cells(config, models, a, b, args.size)
    save_png(grid_image(cells), os.path.join(args.out, 'grid.png'))
    logger.info(f'wrote {args.size}x{args.size} content/style grid to {args.out}')


def cmd_blend(args):
    config, models, a, b = _load_pair(args)
    frames = blend_frames(config, models, a, b, args.frames)
    write_frames(frames, args.out, prefix='blend')
    save_png(montage(frames), os.path.join(args.out, 'montage.png'))


def cmd_warps(args):
    config, models, a, b = _load_pair(args)
    row_a, row_b = warp_strips(config, models, a, b, args.frames)
    save_png(grid_image([row_a, row_b]), os.path.join(args.out, 'warps.png'))


def cmd_eval(args):
    config, models = load_models(CheckpointArchive.load(args.ckpt))
    test = load_folder(args.test, config.resolution)
    train = load_folder(args.train, config.resolution)
    report = evaluate(config, models, test, train, pairs=args.pairs, frames=args.frames, seed=args.seed)
    write_report(report, args.out)


def cmd_toy(args):
    write_toy(args.n, args.seed, args.resolution, args.out)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(description="""
Image morphing with a learned spatial transformer and a time-conditioned generator.

Commands:
  train   train a model from a key = value config file
  ablate  train one ablation variant of a config
  morph   render an in-between sequence and a montage strip
  csgrid  render a content/style grid (content_style checkpoints only)
  blend   render the STN-aligned linear blend baseline
  warps   render the partial STN warps of both inputs
  eval    Frechet and pacing report over held-out pairs
  toy     write a procedural toy dataset
""")
    parser.add_argument('--log-level', type=str, default=None, help="Overrides LOG_LEVEL")
    commands = parser.add_subparsers(dest='command', required=True)

    train = commands.add_parser('train', help="Train a model")
    train.add_argument('--config', required=True, help="Path to the config file")
    train.add_argument('--resume', default=None, help="Checkpoint to resume from")
    train.set_defaults(handler=cmd_train)

    ablate = commands.add_parser('ablate', help="Train an ablation variant")
    ablate.add_argument('--config', required=True)
    ablate.add_argument('--variant', required=True, choices=sorted(ABLATIONS))
    ablate.set_defaults(handler=cmd_ablate)

    for name, handler, frames in (('morph', cmd_morph, 11), ('blend', cmd_blend, 11), ('warps', cmd_warps, 5)):
        sub = commands.add_parser(name)
        sub.add_argument('--ckpt', required=True, help="Checkpoint archive")
        sub.add_argument('--a', required=True, help="First input image (PNG)")
        sub.add_argument('--b', required=True, help="Second input image (PNG)")
        sub.add_argument('--frames', type=int, default=frames)
        sub.add_argument('--out', default=os.path.join('out', name))
        sub.set_defaults(handler=handler)

    csgrid = commands.add_parser('csgrid', help="Content/style grid")
    csgrid.add_argument('--ckpt', required=True)
    csgrid.add_argument('--a', required=True)
    csgrid.add_argument('--b', required=True)
    csgrid.add_argument('--size', type=int, default=6)
    csgrid.add_argument('--out', default=os.path.join('out', 'csgrid'))
    csgrid.set_defaults(handler=cmd_csgrid)

    evaluation = commands.add_parser('eval', help="Evaluation report")
    evaluation.add_argument('--ckpt', required=True)
    evaluation.add_argument('--test', required=True, help="Folder of held-out images")
    evaluation.add_argument('--train', required=True, help="Folder of training images")
    evaluation.add_argument('--pairs', type=int, default=100)
    evaluation.add_argument('--frames', type=int, default=11)
    evaluation.add_argument('--seed', type=int, default=0)
    evaluation.add_argument('--out', default=os.path.join('out', 'eval'))
    evaluation.set_defaults(handler=cmd_eval)

    toy = commands.add_parser('toy', help="Write toy shapes")
    toy.add_argument('--n', type=int, default=256)
    toy.add_argument('--seed', type=int, default=0)
    toy.add_argument('--resolution', type=int, default=32)
    toy.add_argument('--out', default='data')
    toy.set_defaults(handler=cmd_toy)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        if args.command in ('morph', 'blend', 'warps') and args.frames < 2:
            raise ValueError(f"--frames must be >= 2, got {args.frames}")
        if args.command == 'csgrid' and args.size < 2:
            raise ValueError(f"--size must be >= 2, got {args.size}")
        args.handler(args)
    except (ValueError, KeyError, OSError, FloatingPointError) as exc:
        logger.error(f'{args.command} failed: {exc}')
        print(f'error: {exc}', file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
