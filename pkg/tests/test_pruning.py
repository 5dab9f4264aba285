import math

import numpy as np
import pytest

from engine import Parameter, ShapeError, Tape, Tensor, backward, ops
from models import BlockSpec, PPResBlock
from pruning import (
    BinarizationIncompleteError,
    MaskState,
    TransitionLayer,
    active_channels,
    binarization_rule,
    binarize_check,
    mask_forward,
    mask_regularizer,
    mask_values,
)
from tests.conftest import freeze
from training import OptimState, adam_step

F64 = np.float64


def mask_with(weights, **kwargs):
    state = MaskState(len(weights), dtype=F64, **kwargs)
    state.weight.data = np.asarray(weights, dtype=F64)
    return state


class TestMaskValues:
    def test_zero_weight_is_one_half(self):
        assert mask_values(mask_with([0.0])).data[0] == pytest.approx(0.5)

    def test_sharp_sigmoid(self):
        values = mask_values(mask_with([-0.01, 0.01])).data
        assert values[0] == pytest.approx(4.5398e-5, rel=1e-4)
        assert values[1] == pytest.approx(0.9999546, rel=1e-7)

    def test_default_init_starts_active(self):
        state = MaskState(4, dtype=F64)
        assert np.all(state.soft_values() > 0.9999)

    def test_hyperparameter_ranges(self):
        with pytest.raises(ValueError):
            MaskState(3, alpha=1.0)
        with pytest.raises(ValueError):
            MaskState(3, delta=0.0)


class TestMaskForward:
    def test_all_ones_is_identity(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 2, 2)))
        np.testing.assert_array_equal(mask_forward(x, freeze(MaskState(3, dtype=F64), [1, 1, 1])).data, x.data)

    def test_all_zeros(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 2, 2)))
        np.testing.assert_array_equal(mask_forward(x, freeze(MaskState(3, dtype=F64), [0, 0, 0])).data, 0.0)

    def test_selects_channels(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 2, 2)))
        out = mask_forward(x, freeze(MaskState(2, dtype=F64), [1, 0])).data
        np.testing.assert_array_equal(out[:, 0], x.data[:, 0])
        np.testing.assert_array_equal(out[:, 1], 0.0)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            mask_forward(Tensor(np.ones((1, 4, 2, 2))), MaskState(3, dtype=F64))


class TestRegularizer:
    @pytest.mark.parametrize("weights,expected", [
        ([-1.0, -1.0, -1.0], 0.0),
        ([0.0], 1.0),
        ([0.5, -1.5, -1.0], 2.0),
    ])
    def test_values(self, weights, expected):
        assert mask_regularizer(mask_with(weights)).item() == pytest.approx(expected)

    @pytest.mark.parametrize("w0", [0.01, 0.5, -0.3, -2.0])
    def test_descent_reaches_minimizer(self, w0):
        lr = 1e-2
        state = MaskState(4, init_value=w0, dtype=F64)
        bound = math.ceil(round(abs(w0 + 1) / lr, 6)) + 10
        reached = None
        for step in range(1, bound + 1):
            with Tape() as tape:
                loss = mask_regularizer(state)
            grad = backward(tape, loss, {"w": state.weight})["w"]
            state.weight.data = state.weight.data - lr * grad
            if np.all(np.abs(state.weight.data + 1.0) <= 1e-3):
                reached = step
                break
        assert reached is not None and reached <= bound
        # sigmoid(-delta) evaluated without overflow
        oracle = math.exp(-state.delta) / (1.0 + math.exp(-state.delta))
        values = mask_values(state).data
        assert np.all(values <= 1e-9)
        np.testing.assert_allclose(values, oracle, atol=1e-9)
        assert binarize_check(state).frozen
        assert active_channels(state) == []


class TestBinarization:
    def test_ratio_above_alpha_freezes(self):
        state = MaskState(10, alpha=0.5, dtype=F64)
        state.set_soft_values([0.9] * 4 + [0.004] * 6)
        binarize_check(state)
        assert state.frozen
        np.testing.assert_array_equal(state.m_star.data, [1] * 4 + [0] * 6)

    def test_ratio_at_or_below_alpha_keeps_training(self):
        state = MaskState(10, alpha=0.7, dtype=F64)
        state.set_soft_values([0.9] * 4 + [0.004] * 6)
        binarize_check(state)
        assert not state.frozen
        np.testing.assert_array_equal(state.m_star.data, 1.0)

    def test_pivot_counts_as_pruned(self):
        ratio, binary = binarization_rule(np.full(4, 0.005), pivot=0.005, alpha=0.5)
        assert ratio == 1.0
        np.testing.assert_array_equal(binary, 0.0)

    def test_frozen_mask_is_left_alone(self):
        state = freeze(MaskState(3, dtype=F64), [1, 0, 1])
        state.set_soft_values([0.001] * 3)
        binarize_check(state)
        np.testing.assert_array_equal(state.m_star.data, [1, 0, 1])

    def test_frozen_mask_has_zero_gradient(self, rng):
        state = freeze(mask_with([0.3, -0.2, 0.1]), [1, 0, 1])
        x = Tensor(rng.standard_normal((2, 3, 2, 2)))
        with Tape() as tape:
            loss = ops.add(ops.sum(mask_forward(x, state)), mask_regularizer(state))
        np.testing.assert_array_equal(backward(tape, loss, {"w": state.weight})["w"], 0.0)
        assert state.is_trainable() is False

    def test_penalty_frozen_at_freeze_time(self):
        state = mask_with([-0.5, -0.5])
        state.set_soft_values([0.001, 0.001])
        penalty = mask_regularizer(state).item()
        binarize_check(state)
        state.weight.data = np.array([3.0, 3.0])
        assert mask_regularizer(state).item() == pytest.approx(penalty)

    def test_ratio_equal_to_alpha_keeps_training(self):
        ratio, binary = binarization_rule(np.array([0.004] * 7 + [0.9] * 3), pivot=0.005, alpha=0.7)
        assert ratio == 0.7
        assert binary is None

    def test_frozen_masks_survive_many_steps(self, rng):
        block = PPResBlock(BlockSpec(in_ch=4, out_ch=4, upsample=False), 3, np.random.default_rng(0), alpha=0.7,
                           delta=1e3, pivot=0.005, mask_init=0.01, dtype=F64).assign_paths()
        freeze(block.mask1, [1, 0, 1, 0])
        freeze(block.mask2, [0, 1, 1, 1])
        weights = [m.weight.data.copy() for m in block.masks()]
        survivors = [active_channels(m) for m in block.masks()]
        x = Tensor(rng.standard_normal((2, 4, 3, 3)))
        cls = np.array([0, 2])
        every = block.parameters()
        trainable = block.parameters(trainable_only=True)
        assert "mask1.weight" not in trainable and "mask2.weight" not in trainable
        conv_before = block.conv2.weight.data.copy()

        opt = OptimState()
        for _ in range(1000):
            with Tape() as tape:
                penalty = ops.add(mask_regularizer(block.mask1), mask_regularizer(block.mask2))
                loss = ops.add(ops.mean(ops.square(block(x, cls))), penalty)
            grads = backward(tape, loss, every)
            assert not grads["mask1.weight"].any() and not grads["mask2.weight"].any()
            adam_step(trainable, {name: grads[name] for name in trainable}, opt, lr=1e-2)
            for m in block.masks():
                binarize_check(m)

        assert opt.step == 1000
        assert not np.array_equal(block.conv2.weight.data, conv_before)
        for m, w, kept in zip(block.masks(), weights, survivors):
            assert m.frozen
            np.testing.assert_array_equal(m.weight.data, w)
            assert active_channels(m) == kept
        np.testing.assert_array_equal(block.mask1.m_star.data, [1, 0, 1, 0])
        np.testing.assert_array_equal(block.mask2.m_star.data, [0, 1, 1, 1])


class TestActiveChannels:
    def test_survivors(self):
        assert active_channels(freeze(MaskState(3, dtype=F64), [1, 0, 1])) == [0, 2]
        assert active_channels(freeze(MaskState(4, dtype=F64), [1, 1, 1, 1])) == [0, 1, 2, 3]
        assert active_channels(freeze(MaskState(2, dtype=F64), [0, 0])) == []

    def test_unfrozen_raises(self):
        with pytest.raises(BinarizationIncompleteError, match="before binarization"):
            active_channels(MaskState(3, dtype=F64))


class TestTransition:
    def test_identity_init(self, rng):
        layer = TransitionLayer(4, 4, rng, dtype=F64)
        x = Tensor(rng.standard_normal((2, 4, 3, 3)))
        np.testing.assert_array_equal(layer(x).data, x.data)

    def test_widens_channels(self, rng):
        out = TransitionLayer(3, 5, rng, dtype=F64)(Tensor(np.ones((2, 3, 4, 4))))
        assert out.shape == (2, 5, 4, 4)

    def test_zero_weights(self, rng):
        layer = TransitionLayer(3, 2, rng, init="normal", dtype=F64)
        layer.weight.data = np.zeros_like(layer.weight.data)
        np.testing.assert_array_equal(layer(Tensor(np.ones((1, 3, 2, 2)))).data, 0.0)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            TransitionLayer(3, 3, rng)(Tensor(np.ones((1, 4, 2, 2))))

    def test_trainable_parameter(self):
        layer = TransitionLayer(2, 2, np.random.default_rng(0))
        assert isinstance(layer.weight, Parameter)
