import logging
from argparse import ArgumentParser

from preprocessing.dataset import split, save_png
from preprocessing.toy_shapes import gen_toy
from utils.logger import filter_loggers, LOG_CONFIG

filter_loggers({'PIL': 'WARNING'})

logging.basicConfig(**LOG_CONFIG)
logger = logging.getLogger(__name__)

parser = ArgumentParser(description="""
Toy dataset writer.

Steps:
1. Render n procedural shapes of one family (fixed by the seed)
2. Split them into train and test parts
3. Write <out>/train/img_%05d.png and <out>/test/img_%05d.png

Run with src on PYTHONPATH, e.g. PYTHONPATH=src python scripts/generate_toy_dataset.py --out data/toy
""")
parser.add_argument('--out', type=str, help="Output folder", required=True)
parser.add_argument('--n', type=int, help="Number of images", default=512)
parser.add_argument('--seed', type=int, help="Generator and split seed", default=0)
parser.add_argument('--resolution', type=int, help="Image side in pixels", default=32)
parser.add_argument('--test_fraction', type=float, help="Share of held-out images", default=0.2)

if __name__ == "__main__":
    args = parser.parse_args()

    logger.info("# 1. Render toy shapes")
    dataset = gen_toy(args.n, args.seed, args.resolution)

    logger.info("# 2. Split")
    train, test = split(dataset, args.test_fraction, args.seed)

    logger.info("# 3. Write PNG files")
    for part in (train, test):
        if part is None:
            continue
        for name, image in zip(part.names, part.images):
            save_png(image, f"{args.out}/{part.split}/{name}")
        logger.info(f"{len(part)} {part.split} images written to {args.out}/{part.split}")
