"""Model construction, forward contracts, standardization, and the
equivalence of frozen standardizing tables with the plain baseline."""

import numpy as np
import pytest

from lookupvnet.gradcore import ShapeMismatchError, Tensor
from lookupvnet.lookup import lookup
from lookupvnet.network import (
    ChannelStats,
    ConvSpec,
    ModelConfig,
    StandardizeStage,
    build_model,
    forward,
    standardize,
    standardizing_tables,
)


def small_config(input_channels=3, seed=0, filters=(4, 8), size=(12, 12)):
    blocks = tuple(ConvSpec(kernel=3, filters=j, pool=True) for j in filters)
    return ModelConfig(
        input_channels=input_channels,
        conv_blocks=blocks,
        head_width=16,
        class_count=5,
        input_size=size,
        seed=seed,
    )


class TestBuildModel:
    def test_first_kernel_shape_tracks_input_channels(self):
        model = build_model(small_config(input_channels=6))
        assert model.params["conv0.w"].data.shape == (4, 6, 3, 3)

    def test_same_seed_bit_identical(self):
        a = build_model(small_config(seed=3))
        b = build_model(small_config(seed=3))
        for name in a.params:
            assert np.array_equal(a.params[name].data, b.params[name].data)

    def test_different_seed_differs(self):
        a = build_model(small_config(seed=3))
        b = build_model(small_config(seed=4))
        assert not np.array_equal(a.params["conv0.w"].data, b.params["conv0.w"].data)

    def test_param_count_delta_for_wider_input(self):
        # first layer k=3, j=16: u=2 vs u=1 adds k*k*3*(u-1)*j = 432 weights
        def count(channels):
            cfg = ModelConfig(
                input_channels=channels,
                conv_blocks=(ConvSpec(kernel=3, filters=16, pool=True),),
                head_width=8,
                class_count=10,
                input_size=(12, 12),
                seed=0,
            )
            return build_model(cfg).param_count()

        assert count(6) - count(3) == 3 * 3 * 3 * 16

    def test_pooling_below_1x1_rejected(self):
        cfg = small_config(filters=(4, 4, 4, 4), size=(8, 8))
        with pytest.raises(ValueError, match="below 1x1"):
            build_model(cfg)

    def test_biases_start_at_zero(self):
        model = build_model(small_config())
        assert np.all(model.params["hidden.b"].data == 0.0)
        assert np.all(model.params["out.b"].data == 0.0)


class TestForward:
    def test_zero_parameters_give_zero_logits(self):
        model = build_model(small_config())
        for tensor in model.params.values():
            tensor.data = np.zeros_like(tensor.data)
        logits = forward(model, Tensor(np.random.default_rng(0).normal(size=(2, 3, 12, 12))))
        assert np.all(logits.data == 0.0)

    def test_duplicated_image_gives_identical_rows(self):
        model = build_model(small_config())
        image = np.random.default_rng(1).normal(size=(3, 12, 12))
        logits = forward(model, Tensor(np.stack([image, image])))
        assert np.array_equal(logits.data[0], logits.data[1])

    def test_channel_mismatch_rejected(self):
        model = build_model(small_config(input_channels=3))
        with pytest.raises(ShapeMismatchError, match="input"):
            forward(model, Tensor(np.zeros((1, 6, 12, 12))))

    def test_logit_shape(self):
        model = build_model(small_config())
        logits = forward(model, Tensor(np.zeros((7, 3, 12, 12))))
        assert logits.data.shape == (7, 5)


class TestStandardize:
    def test_constant_image_with_dataset_stats(self):
        stats = ChannelStats(mean=[10.0, 10.0, 10.0], std=[5.0, 5.0, 5.0])
        image = np.full((3, 2, 2), 20, dtype=np.uint8)
        out = standardize(image, stats).data
        assert np.all(out == 2.0)

    def test_image_equal_to_mean_with_guard_gives_zeros(self):
        image = np.full((3, 4, 4), 7, dtype=np.uint8)
        stats = ChannelStats.of_image(image, eps=1e-8)
        assert np.all(standardize(image, stats).data == 0.0)

    def test_zero_std_without_guard_rejected(self):
        image = np.full((3, 4, 4), 7, dtype=np.uint8)
        stats = ChannelStats.of_image(image, eps=0.0)
        with pytest.raises(ValueError, match="zero standard deviation"):
            standardize(image, stats)

    def test_per_image_mode_recenters_and_rescales(self):
        rng = np.random.default_rng(2)
        image = rng.integers(0, 256, size=(3, 16, 16)).astype(np.uint8)
        out = standardize(image, ChannelStats.of_image(image)).data
        for ch in range(3):
            assert abs(out[ch].mean()) < 1e-9
            assert abs(out[ch].std() - 1.0) < 1e-9

    def test_stage_batches_per_image(self):
        rng = np.random.default_rng(3)
        images = rng.integers(0, 256, size=(4, 3, 8, 8)).astype(np.uint8)
        stage = StandardizeStage(per_image=True)
        coded = stage.apply(images).data
        single = standardize(images[2], ChannelStats.of_image(images[2], eps=1e-8)).data
        assert np.allclose(coded[2], single)


class TestBaselineEquivalence:
    def test_frozen_standardizing_tables_match_baseline_logits(self):
        """u=1 tables at t[v]=(v-mean)/std equal the standard net exactly."""
        rng = np.random.default_rng(4)
        images = rng.integers(0, 256, size=(20, 3, 12, 12)).astype(np.uint8)
        stats = ChannelStats.from_images(images, eps=1e-8)

        model = build_model(small_config(seed=7))
        tables = standardizing_tables(stats)

        baseline_in = StandardizeStage(stats=stats).apply(images)
        table_in = lookup(images, tables).values
        baseline_logits = forward(model, baseline_in).data
        table_logits = forward(model, table_in).data
        assert np.max(np.abs(baseline_logits - table_logits)) <= 1e-9

    def test_architecture_parity_only_first_layer_changes(self):
        base = build_model(small_config(input_channels=3, seed=0))
        wide = build_model(small_config(input_channels=9, seed=0))
        for name in base.params:
            if name == "conv0.w":
                assert base.params[name].data.shape[1] == 3
                assert wide.params[name].data.shape[1] == 9
            else:
                assert base.params[name].data.shape == wide.params[name].data.shape


class TestClone:
    def test_clone_is_deep(self):
        model = build_model(small_config())
        twin = model.clone()
        twin.params["out.b"].data = twin.params["out.b"].data + 1.0
        assert np.all(model.params["out.b"].data == 0.0)
