import logging

import numpy as np
import pytest
from PIL import Image

from preprocessing.dataset import Dataset, load_folder, load_image, save_png, split, to_pixels, to_unit
from preprocessing.toy_shapes import (FAMILIES, MARGIN, area_bounds, coverage, gen_toy, random_spec, toy_specs,
                                      write_toy)
from utils.errors import DatasetError


def write_png(path, pixels: np.ndarray):
    Image.fromarray(pixels.astype(np.uint8)).save(path)


class TestPixelMapping:
    def test_levels(self):
        pixels = np.array([[[255, 0, 128]]], dtype=np.uint8)
        np.testing.assert_allclose(to_unit(pixels)[:, 0, 0], [1.0, -1.0, 128 / 255 * 2 - 1])
        assert to_unit(pixels)[2, 0, 0] == pytest.approx(0.00392, abs=1e-5)

    def test_round_trip_within_one_level(self, rng):
        image = rng.uniform(-1, 1, size=(3, 8, 8))
        assert np.max(np.abs(to_unit(to_pixels(image)) - image)) <= 1.0 / 255.0 + 1e-12

    def test_pixels_to_unit_and_back_is_exact(self, rng):
        pixels = rng.integers(0, 256, size=(8, 8, 3)).astype(np.uint8)
        np.testing.assert_array_equal(to_pixels(to_unit(pixels)), pixels)


class TestFolder:
    def test_loads_sorted_pngs(self, tmp_path, rng):
        for name in ('b.png', 'a.png', 'c.png'):
            write_png(tmp_path / name, rng.integers(0, 256, size=(16, 16, 3)))
        dataset = load_folder(str(tmp_path), 16)
        assert len(dataset) == 3
        assert dataset.names == ('a.png', 'b.png', 'c.png')
        assert dataset.images.shape == (3, 3, 16, 16)
        assert dataset.images.min() >= -1.0 and dataset.images.max() <= 1.0

    def test_resizes(self, tmp_path, rng):
        write_png(tmp_path / 'big.png', rng.integers(0, 256, size=(64, 48, 3)))
        assert load_folder(str(tmp_path), 32).images.shape == (1, 3, 32, 32)

    def test_skips_unreadable_file(self, tmp_path, rng, caplog):
        write_png(tmp_path / 'good.png', rng.integers(0, 256, size=(8, 8, 3)))
        (tmp_path / 'bad.png').write_bytes(b'not a png')
        with caplog.at_level(logging.WARNING):
            dataset = load_folder(str(tmp_path), 8)
        assert dataset.names == ('good.png',)
        assert 'bad.png' in caplog.text

    def test_empty_folder(self, tmp_path):
        with pytest.raises(DatasetError):
            load_folder(str(tmp_path), 32)

    def test_single_image_errors_on_unreadable(self, tmp_path):
        (tmp_path / 'bad.png').write_bytes(b'nope')
        with pytest.raises(DatasetError):
            load_image(str(tmp_path / 'bad.png'), 32)

    def test_save_then_load(self, tmp_path, rng):
        image = rng.uniform(-1, 1, size=(3, 16, 16))
        save_png(image, str(tmp_path / 'out' / 'x.png'))
        loaded = load_image(str(tmp_path / 'out' / 'x.png'), 16)
        assert np.max(np.abs(loaded - image)) <= 1.0 / 255.0 + 1e-12


class TestDataset:
    def test_rejects_out_of_range_values(self):
        with pytest.raises(DatasetError):
            Dataset(images=np.full((1, 3, 4, 4), 1.5))

    def test_rejects_wrong_layout(self):
        with pytest.raises(DatasetError):
            Dataset(images=np.zeros((1, 4, 4, 3)))

    def test_images_are_read_only(self):
        dataset = Dataset(images=np.zeros((2, 3, 4, 4)))
        with pytest.raises(ValueError):
            dataset.images[0, 0, 0, 0] = 0.5

    def test_split_is_disjoint_and_exhaustive(self):
        dataset = gen_toy(20, 0, 32)
        train, test = split(dataset, 0.25, seed=3)
        assert len(train) == 15 and len(test) == 5
        combined = np.concatenate([train.images, test.images])
        assert len({image.tobytes() for image in combined}) == 20
        assert train.split == 'train' and test.split == 'test'

    def test_split_is_seeded(self):
        dataset = gen_toy(10, 0, 32)
        first, _ = split(dataset, 0.3, seed=1)
        second, _ = split(dataset, 0.3, seed=1)
        np.testing.assert_array_equal(first.images, second.images)

    def test_empty_test_split(self):
        train, test = split(gen_toy(3, 0, 32), 0.1, seed=0)
        assert len(train) == 3 and test is None


class TestToyShapes:
    def test_same_seed_same_bytes(self):
        assert gen_toy(4, 7, 32).images.tobytes() == gen_toy(4, 7, 32).images.tobytes()

    def test_different_seed_differs(self):
        assert gen_toy(4, 7, 32).images.tobytes() != gen_toy(4, 8, 32).images.tobytes()

    def test_range_and_two_tones(self):
        images = gen_toy(8, 0, 32).images
        assert images.min() >= -1.0 and images.max() <= 1.0
        for image in images:
            assert image[:, 0, 0].max() < 0 < image.max()

    def test_one_family_per_dataset(self):
        specs = toy_specs(30, 5, 32)
        assert len({spec.family for spec in specs}) == 1

    @pytest.mark.parametrize('family', FAMILIES)
    def test_margin_is_empty(self, family):
        rng = np.random.default_rng(2)
        for _ in range(50):
            cover = coverage(random_spec(rng, family, 32), 32)
            assert cover[:MARGIN].sum() == 0 and cover[-MARGIN:].sum() == 0
            assert cover[:, :MARGIN].sum() == 0 and cover[:, -MARGIN:].sum() == 0

    @pytest.mark.parametrize('family', FAMILIES)
    def test_rendered_area_matches_analytic(self, family):
        rng = np.random.default_rng(9)
        specs = [random_spec(rng, family, 32) for _ in range(1000)]
        rendered = np.mean([coverage(spec, 32).sum() for spec in specs])
        analytic = np.mean([spec.area() for spec in specs])
        assert rendered == pytest.approx(analytic, rel=0.1)
        low, high = area_bounds(family, 32)
        assert low <= analytic <= high

    def test_write_toy_layout(self, tmp_path):
        folder = write_toy(3, 4, 32, str(tmp_path))
        assert folder == str(tmp_path / 'toy' / '4')
        assert sorted(p.name for p in (tmp_path / 'toy' / '4').iterdir()) == \
            ['img_00000.png', 'img_00001.png', 'img_00002.png']
        reloaded = load_folder(folder, 32)
        assert np.max(np.abs(reloaded.images - gen_toy(3, 4, 32).images)) <= 1.0 / 255.0 + 1e-12
