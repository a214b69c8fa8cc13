import numpy as np
import pytest

from autodiff.tensor import current_tape, precision
from helpers import TINY_MODEL
from models.perceptual import random_extractor
from utils.dto import TrainConfig


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def float64():
    with precision('float64'):
        yield


@pytest.fixture(autouse=True)
def clean_tape():
    current_tape().reset()
    yield
    current_tape().reset()


@pytest.fixture
def tiny_extractor():
    return random_extractor(7, widths=(4, 8, 8, 8, 8))


@pytest.fixture
def tiny_config(tmp_path):
    def build(**overrides) -> TrainConfig:
        values = dict(TINY_MODEL, output_dir=str(tmp_path / 'run'), dataset='toy', toy_count=8)
        values.update(overrides)
        return TrainConfig(**values)
    return build
