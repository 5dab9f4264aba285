import io

import numpy as np
import pytest
from PIL import Image

from harness.metrics import METRIC_COLUMNS, MASK_COLUMNS, MetricsWriter, emit_metrics, read_metrics, write_mask_rows
from harness.sampling import generate, interpolate_class, interpolate_z, make_grid, save_grid, to_uint8
from models import build_generator
from objectives import LossBundle
from pruning import MaskState
from tests.conftest import freeze


class TestMetricsStream:
    def test_header_written_once(self):
        stream = io.StringIO()
        writer = MetricsWriter(stream)
        bundle = LossBundle(l_pp=1.0, l_cd=0.5, l_adv_d=1.3, l_adv_g=0.7, total_g=1.21)
        emit_metrics(writer, 0, bundle, [0.0, 0.5], lr=2e-4)
        emit_metrics(writer, 1, bundle, [0.25, 0.25], lr=2e-4, epoch=1, frozen_masks=1)
        lines = stream.getvalue().splitlines()
        assert lines[0] == ",".join(METRIC_COLUMNS)
        assert len(lines) == 3
        assert writer.rows == 2

    def test_read_back(self, tmp_path):
        path = tmp_path / "metrics.csv"
        with MetricsWriter(path) as writer:
            emit_metrics(writer, 3, LossBundle(l_pp=2.0, total_g=0.02), [0.5, 1.0], lr=0.1, epoch=2,
                         frozen_masks=1)
        (row,) = read_metrics(path)
        assert row["step"] == 3 and row["epoch"] == 2
        assert row["l_pp"] == 2.0
        assert row["mean_zero_fraction"] == pytest.approx(0.75)
        assert row["frozen_masks"] == 1

    def test_mask_rows(self, tmp_path):
        path = tmp_path / "masks.csv"
        a = freeze(MaskState(4), [1, 0, 0, 1]).assign_paths()
        b = MaskState(2)
        write_mask_rows(path, 0, [a, b])
        write_mask_rows(path, 1, [a, b])
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(MASK_COLUMNS)
        assert len(lines) == 5
        assert lines[1].split(",")[3:] == ["0.5", "1", "2"]


class TestSampling:
    def test_generate_restores_mode(self, tiny_gen_cfg):
        gen = build_generator(tiny_gen_cfg, dtype=np.float64)
        generate(gen, np.zeros((2, tiny_gen_cfg.z_dim)), np.array([0, 1]))
        assert gen.training

    def test_interpolation_endpoints(self, tiny_gen_cfg):
        gen = build_generator(tiny_gen_cfg, dtype=np.float64)
        rng = np.random.default_rng(0)
        z0, z1 = rng.standard_normal((2, tiny_gen_cfg.z_dim))
        images = interpolate_z(gen, z0, z1, label=1, steps=4)
        assert images.shape == (4, 3, 16, 16)
        np.testing.assert_allclose(images[0], generate(gen, z0[None], np.array([1]))[0], atol=1e-12)

        mixed = interpolate_class(gen, z0, 0, 2, steps=3)
        np.testing.assert_allclose(mixed[-1], generate(gen, z0[None], np.array([2]))[0], atol=1e-12)

    def test_interpolation_arguments(self, tiny_gen_cfg):
        gen = build_generator(tiny_gen_cfg, dtype=np.float64)
        with pytest.raises(ValueError):
            interpolate_class(gen, np.zeros(tiny_gen_cfg.z_dim), 0, 7, steps=3)
        with pytest.raises(ValueError):
            interpolate_z(gen, np.zeros(tiny_gen_cfg.z_dim), np.ones(tiny_gen_cfg.z_dim), 0, steps=1)

    def test_grid(self, tmp_path):
        images = np.linspace(-1, 1, 5 * 3 * 4 * 4).reshape(5, 3, 4, 4)
        assert to_uint8(images).dtype == np.uint8
        assert make_grid(images, nrow=3).shape == (2 * 5 + 1, 3 * 5 + 1, 3)
        path = save_grid(images, tmp_path / "grid.png", nrow=3)
        with Image.open(path) as img:
            assert img.size == (16, 11)
