"""PPM output and table-coded image rendering."""

import numpy as np
import pytest

from lookupvnet.data import make_synthetic
from lookupvnet.lookup import FullLookupTables, init_tables
from lookupvnet.recode import (
    normalize_to_bytes,
    read_ppm,
    recode_images,
    recode_values,
    write_ppm,
)


def identity_tables():
    ramp = np.arange(256, dtype=np.float64).reshape(256, 1)
    return FullLookupTables.from_channel_maps([ramp, ramp, ramp])


class TestPpm:
    def test_write_read_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        image = rng.integers(0, 256, size=(3, 5, 7)).astype(np.uint8)
        path = tmp_path / "img.ppm"
        write_ppm(path, image)
        assert np.array_equal(read_ppm(path), image)

    def test_header_is_binary_p6(self, tmp_path):
        path = tmp_path / "img.ppm"
        write_ppm(path, np.zeros((3, 2, 4), dtype=np.uint8))
        head = path.read_bytes()[:20]
        assert head.startswith(b"P6\n4 2\n255\n")

    def test_rejects_bad_shape(self, tmp_path):
        with pytest.raises(ValueError):
            write_ppm(tmp_path / "bad.ppm", np.zeros((1, 2, 2), dtype=np.uint8))


class TestNormalize:
    def test_full_range_identity(self):
        values = np.zeros((1, 3, 1, 2))
        values[0, :, 0, 0] = 0.0
        values[0, :, 0, 1] = 255.0
        out = normalize_to_bytes(values)
        assert out[0, :, 0, 1].tolist() == [255, 255, 255]

    def test_flat_channel_maps_to_zero(self):
        values = np.full((2, 3, 2, 2), 7.25)
        assert np.all(normalize_to_bytes(values) == 0)

    def test_per_channel_scaling_over_whole_set(self):
        values = np.zeros((2, 3, 1, 1))
        values[0, 0] = -1.0
        values[1, 0] = 3.0  # channel 0 range [-1, 3] across both images
        out = normalize_to_bytes(values)
        assert out[0, 0, 0, 0] == 0
        assert out[1, 0, 0, 0] == 255


class TestRecode:
    def test_identity_tables_round_trip_byte_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        images = rng.integers(0, 256, size=(4, 3, 8, 8)).astype(np.uint8)
        # min-max is an exact identity when the full byte range is present
        images[0, :, 0, 0] = 0
        images[0, :, 0, 1] = 255
        paths = recode_images(images, identity_tables(), tmp_path)
        for i, (orig_path, coded_path) in enumerate(paths):
            assert np.array_equal(read_ppm(orig_path), images[i])
            assert np.array_equal(read_ppm(coded_path), images[i])

    def test_rate_256_yields_constant_images(self, tmp_path):
        tables = init_tables("compressed", 256, seed=2)
        data = make_synthetic("separable", 2, 2, 6, 6, seed=2)
        paths = recode_images(data.images, tables, tmp_path)
        for _, coded_path in paths:
            coded = read_ppm(coded_path)
            for ch in range(3):
                assert len(np.unique(coded[ch])) == 1

    def test_multi_component_tables_use_first_component(self):
        tables = init_tables("full", 3, seed=3)
        rng = np.random.default_rng(3)
        images = rng.integers(0, 256, size=(2, 3, 4, 4)).astype(np.uint8)
        values = recode_values(images, tables)
        assert values.shape == (2, 3, 4, 4)
        direct = tables.tables[1].data[images[0, 1].astype(int), 0]
        assert np.array_equal(values[0, 1], direct)

    def test_compressed_posterizes_to_bucket_count(self, tmp_path):
        tables = init_tables("compressed", 64, seed=4)
        rng = np.random.default_rng(4)
        images = rng.integers(0, 256, size=(3, 3, 16, 16)).astype(np.uint8)
        paths = recode_images(images, tables, tmp_path)
        coded = np.stack([read_ppm(p) for _, p in paths])
        for ch in range(3):
            assert len(np.unique(coded[:, ch])) <= 4  # ceil(256/64) levels
