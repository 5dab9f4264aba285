import numpy as np
import pytest

from engine import ShapeError, Tensor
from layers import (
    BatchNorm2d,
    ClassEmbedding,
    CondBatchNorm2d,
    Conv2d,
    CostRecorder,
    Linear,
    SelfAttention,
    SpectralNormState,
    cond_batchnorm,
    projection_logit,
    spectral_normalize,
)

F64 = np.float64


class TestCondBatchNorm:
    def test_training_mode_standardizes(self, rng):
        bn = CondBatchNorm2d(3, 2, dtype=F64)
        x = Tensor(rng.standard_normal((4, 3, 2, 2)) * 3 + 1)
        out = cond_batchnorm(x, np.array([0, 1, 1, 0]), bn, training=True).data
        np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, atol=1e-3)

    def test_class_rows_change_output(self, rng):
        bn = CondBatchNorm2d(2, 2, dtype=F64)
        bn.gain.table.data = np.array([[1.0, 1.0], [2.0, -1.0]])
        sample = rng.standard_normal((1, 2, 2, 2))
        x = Tensor(np.concatenate([sample, sample]))
        out = bn(x, np.array([0, 1])).data
        assert not np.allclose(out[0], out[1])

    def test_constant_channel_gives_bias(self, rng):
        bn = CondBatchNorm2d(2, 3, dtype=F64)
        bn.bias.table.data = np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
        data = rng.standard_normal((2, 2, 3, 3))
        data[:, 0] = 5.0
        out = bn(Tensor(data), np.array([2, 1])).data
        np.testing.assert_allclose(out[0, 0], 0.5, atol=1e-9)
        np.testing.assert_allclose(out[1, 0], 0.3, atol=1e-9)

    def test_zero_batch(self):
        with pytest.raises(ShapeError):
            CondBatchNorm2d(2, 2, dtype=F64)(Tensor(np.zeros((0, 2, 2, 2))), np.zeros(0, dtype=np.int64))

    def test_eval_uses_running_statistics(self, rng):
        bn = BatchNorm2d(2, dtype=F64)
        x = Tensor(rng.standard_normal((3, 2, 2, 2)))
        bn(x)
        assert not np.allclose(bn.running_mean.data, 0.0)
        bn.eval()
        a = bn(x).data
        b = bn(x).data
        np.testing.assert_array_equal(a, b)


class TestSpectralNorm:
    def test_rank_one_is_unchanged(self, rng):
        u = np.array([0.6, 0.8])
        v = np.array([1.0, 0.0, 0.0])
        w = Tensor(np.outer(u, v))
        state = SpectralNormState(2, 3, rng, dtype=F64)
        out = spectral_normalize(w, state)
        assert state.sigma == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(out.data, w.data, atol=1e-9)

    def test_power_iteration_converges(self, rng):
        w = Tensor(np.diag([3.0, 1.0]))
        state = SpectralNormState(2, 2, rng, dtype=F64)
        for _ in range(20):
            spectral_normalize(w, state)
        assert state.sigma == pytest.approx(3.0, abs=1e-3)

    def test_known_spectrum_after_fifty_iterations(self, rng):
        left, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        right, _ = np.linalg.qr(rng.standard_normal((6, 4)))
        w = Tensor(left @ np.diag([4.0, 2.0, 1.0, 0.5]) @ right.T)
        state = SpectralNormState(4, 6, rng, dtype=F64)
        for _ in range(50):
            out = spectral_normalize(w, state)
        assert state.sigma == pytest.approx(np.linalg.svd(w.data, compute_uv=False)[0], rel=1e-6)
        assert np.linalg.norm(out.data, 2) == pytest.approx(1.0, rel=1e-6)

    def test_random_matrix_normalized_to_unit_norm(self, rng):
        w = Tensor(rng.standard_normal((8, 3, 2, 2)))
        state = SpectralNormState(8, 12, rng, dtype=F64)
        for _ in range(50):
            out = spectral_normalize(w, state)
        top = np.linalg.svd(w.data.reshape(8, 12), compute_uv=False)[0]
        assert state.sigma == pytest.approx(top, rel=1e-2)
        assert np.linalg.norm(out.data.reshape(8, 12), 2) == pytest.approx(1.0, abs=1e-2)

    def test_vectors_persist_between_calls(self, rng):
        state = SpectralNormState(3, 4, rng, dtype=F64)
        before = state.u.data.copy()
        spectral_normalize(Tensor(rng.standard_normal((3, 4))), state)
        assert not np.array_equal(before, state.u.data)

    def test_zero_matrix_gives_zeros(self, rng):
        state = SpectralNormState(2, 2, rng, dtype=F64)
        out = spectral_normalize(Tensor(np.zeros((2, 2))), state)
        assert np.all(np.isfinite(out.data))
        np.testing.assert_array_equal(out.data, 0.0)


class TestSelfAttention:
    def test_zero_gate_is_identity(self, rng):
        attn = SelfAttention(8, rng, reduction=8, dtype=F64)
        x = Tensor(rng.standard_normal((2, 8, 3, 3)))
        np.testing.assert_array_equal(attn(x).data, x.data)

    def test_single_location(self, rng):
        attn = SelfAttention(8, rng, reduction=4, dtype=F64)
        attn.gamma.data = np.array([0.5])
        x = Tensor(rng.standard_normal((2, 8, 1, 1)))
        out = attn(x).data
        np.testing.assert_allclose(attn.last_attention, 1.0)
        np.testing.assert_allclose(out, x.data + 0.5 * attn.h(x).data, atol=1e-12)

    def test_reduction_must_divide_channels(self, rng):
        with pytest.raises(ValueError):
            SelfAttention(6, rng, reduction=4)


class TestProjection:
    def _embed(self):
        embed = ClassEmbedding(2, 2, fill=0.0, dtype=F64)
        embed.table.data = np.array([[0.0, 3.0], [0.0, 0.0]])
        return embed

    def test_direct_dot_products(self):
        logit = projection_logit(Tensor(np.array([[1.0, 2.0]])), np.array([0]), Tensor(np.array([1.0, 0.0])),
                                 self._embed())
        assert logit.item() == pytest.approx(7.0)

    def test_zero_embedding_row(self):
        logit = projection_logit(Tensor(np.array([[1.0, 2.0]])), np.array([1]), Tensor(np.array([1.0, 0.0])),
                                 self._embed())
        assert logit.item() == pytest.approx(1.0)

    def test_orthogonal_features(self):
        embed = ClassEmbedding(2, 2, fill=0.0, dtype=F64)
        embed.table.data = np.array([[0.0, 1.0], [0.0, 1.0]])
        logit = projection_logit(Tensor(np.array([[3.0, 0.0]])), np.array([0]), Tensor(np.array([0.0, 1.0])),
                                 embed)
        assert logit.item() == 0.0

    def test_class_out_of_range(self):
        with pytest.raises(ValueError):
            projection_logit(Tensor(np.ones((1, 2))), np.array([5]), Tensor(np.ones(2)), self._embed())


class TestModuleTree:
    def test_state_dict_round_trip(self, rng):
        a = Conv2d(2, 3, 3, rng, spectral_norm=True, dtype=F64)
        b = Conv2d(2, 3, 3, np.random.default_rng(99), spectral_norm=True, dtype=F64)
        b.load_state_dict(a.state_dict())
        for name, value in a.state_dict().items():
            np.testing.assert_array_equal(b.state_dict()[name], value)
        assert "sn.u" in a.state_dict()

    def test_strict_load_reports_missing(self, rng):
        layer = Linear(3, 2, rng, dtype=F64)
        with pytest.raises(KeyError):
            layer.load_state_dict({"weight": np.zeros((2, 3))})

    def test_cost_recorder_labels_paths(self, rng):
        layer = Conv2d(4, 8, 3, rng, dtype=F64).assign_paths()
        with CostRecorder() as recorder:
            layer(Tensor(np.zeros((1, 4, 16, 16))))
        assert recorder.by_path() == {"": 73728}
