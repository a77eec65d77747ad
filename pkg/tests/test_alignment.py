import numpy as np
import pytest

from tsalign.alignment import (
    AlignmentContext,
    CrossAttentionBlock,
    PrototypeBank,
    align_component,
    cross_attend,
    load_anchor_words,
    packaged_anchor_path,
    probe_prototypes,
    resolve_anchor_embeddings,
)
from tsalign.autodiff import Tensor, backward, tensor_sum
from tsalign.backbone import init_mini_backbone

DEFAULT_ANCHORS = [
    "increase", "decrease", "upward", "downward", "linear", "exponential",
    "drift", "stable", "volatile", "stationary", "persistent", "rapid",
]


@pytest.fixture(scope="module")
def backbone():
    return init_mini_backbone(seed=3, V=64, D=16, T_max=64, n_heads=2)


class TestAnchorResolution:
    def test_packaged_lists(self):
        assert load_anchor_words(packaged_anchor_path("default")) == DEFAULT_ANCHORS
        assert len(load_anchor_words(packaged_anchor_path("noise"))) == 12
        assert len(load_anchor_words(packaged_anchor_path("synonyms"))) == 12
        with pytest.raises(ValueError, match="no packaged anchor list"):
            packaged_anchor_path("missing")

    def test_default_set_shape(self, backbone):
        anchors = resolve_anchor_embeddings(DEFAULT_ANCHORS, backbone)
        assert anchors.A == 12
        assert anchors.embeddings.shape == (12, 16)

    def test_single_token_word_is_vocab_row(self, backbone):
        anchors = resolve_anchor_embeddings(["stable"], backbone)
        token = backbone.tokenizer.encode("stable")[0]
        assert np.array_equal(anchors.embeddings[0], backbone.tensors["vocab_table"][token])

    def test_multi_token_word_means(self, backbone):
        anchors = resolve_anchor_embeddings(["slow drift"], backbone)
        ids = backbone.tokenizer.encode("slow drift")
        assert len(ids) == 2
        expected = backbone.tensors["vocab_table"][ids].mean(axis=0)
        assert np.allclose(anchors.embeddings[0], expected)

    def test_unresolvable_word_named(self, backbone):
        with pytest.raises(ValueError, match="' '"):
            resolve_anchor_embeddings(["increase", " "], backbone)


class TestProbe:
    def test_selection_rows(self):
        rng = np.random.default_rng(0)
        E = rng.normal(size=(20, 8))
        bank = PrototypeBank(2, 20, "seasonal", seed=1)
        bank.probe.data[:] = 0.0
        bank.probe.data[0, 3] = 1.0
        bank.probe.data[1, 7] = 1.0
        out = probe_prototypes(bank, E)
        assert np.allclose(out.data[0], E[3])
        assert np.allclose(out.data[1], E[7])

    def test_shape(self):
        E = np.zeros((100, 8))
        bank = PrototypeBank(10, 100, "residual", seed=2)
        assert probe_prototypes(bank, E).data.shape == (10, 8)

    def test_zero_probe(self):
        bank = PrototypeBank(4, 30, "seasonal", seed=3)
        bank.probe.data[:] = 0.0
        assert np.allclose(probe_prototypes(bank, np.ones((30, 5))).data, 0.0)

    def test_shape_mismatch(self):
        bank = PrototypeBank(4, 30, "seasonal", seed=4)
        with pytest.raises(ValueError, match="vocabulary"):
            probe_prototypes(bank, np.zeros((29, 5)))

    def test_invalid_construction(self):
        with pytest.raises(ValueError, match="seasonal or residual"):
            PrototypeBank(4, 30, "trend")
        with pytest.raises(ValueError, match="prototype count"):
            PrototypeBank(30, 30, "seasonal")


class TestCrossAttend:
    def test_single_key(self):
        block = CrossAttentionBlock(8, 2, "trend", seed=5)
        rng = np.random.default_rng(6)
        q = rng.normal(size=(4, 8))
        kv = rng.normal(size=(1, 8))
        out, weights = cross_attend(block, q, kv)
        value_row = kv @ block.W_V.data
        assert np.allclose(weights.data, 1.0)
        for i in range(4):
            assert np.allclose(out.data[i], value_row[0])

    def test_duplicate_keys_split_evenly(self):
        block = CrossAttentionBlock(8, 2, "trend", seed=7)
        rng = np.random.default_rng(8)
        q = rng.normal(size=(3, 8))
        row = rng.normal(size=8)
        out, weights = cross_attend(block, q, np.stack([row, row]))
        assert np.allclose(weights.data, 0.5)
        assert np.allclose(out.data, np.tile(row @ block.W_V.data, (3, 1)))

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(9)
        for trial in range(10):
            block = CrossAttentionBlock(16, 4, "residual", seed=trial)
            q = rng.normal(size=(6, 16)) * rng.uniform(0.1, 5)
            kv = rng.normal(size=(11, 16)) * rng.uniform(0.1, 5)
            _, weights = cross_attend(block, q, kv)
            assert weights.data.shape == (4, 6, 11)
            assert np.max(np.abs(weights.data.sum(axis=-1) - 1.0)) < 1e-6

    def test_zero_query_projection_uniform(self):
        block = CrossAttentionBlock(8, 2, "seasonal", seed=10)
        block.W_Q.data[:] = 0.0
        rng = np.random.default_rng(11)
        _, weights = cross_attend(block, rng.normal(size=(3, 8)), rng.normal(size=(5, 8)))
        assert np.allclose(weights.data, 1.0 / 5.0)

    def test_empty_key_set(self):
        block = CrossAttentionBlock(8, 2, "trend", seed=12)
        with pytest.raises(ValueError, match="empty key set"):
            cross_attend(block, np.zeros((2, 8)), np.zeros((0, 8)))

    def test_batched_matches_single(self):
        block = CrossAttentionBlock(8, 2, "trend", seed=13)
        rng = np.random.default_rng(14)
        Q = rng.normal(size=(3, 5, 8))
        kv = rng.normal(size=(4, 8))
        out_b, w_b = cross_attend(block, Q, kv)
        assert out_b.data.shape == (3, 5, 8)
        assert w_b.data.shape == (3, 2, 5, 4)
        for i in range(3):
            out_i, w_i = cross_attend(block, Q[i], kv)
            assert np.allclose(out_b.data[i], out_i.data, atol=1e-12)
            assert np.allclose(w_b.data[i], w_i.data, atol=1e-12)


class TestAlignComponent:
    def _trend_ctx(self, backbone, seed=20):
        anchors = resolve_anchor_embeddings(DEFAULT_ANCHORS, backbone)
        block = CrossAttentionBlock(backbone.D, 4, "trend", seed=seed)
        return AlignmentContext(block=block, anchors=anchors)

    def test_trend_shapes(self, backbone):
        ctx = self._trend_ctx(backbone)
        rng = np.random.default_rng(21)
        Z, weights = align_component("trend", rng.normal(size=(5, 16)), ctx)
        assert Z.data.shape == (5, 16)
        assert weights.data.shape == (4, 5, 12)

    def test_seasonal_bank_dimension(self, backbone):
        bank = PrototypeBank(10, backbone.V, "seasonal", seed=22)
        ctx = AlignmentContext(
            block=CrossAttentionBlock(backbone.D, 4, "seasonal", seed=23),
            bank=bank,
            vocab_table=backbone.tensors["vocab_table"],
        )
        rng = np.random.default_rng(24)
        Z, weights = align_component("seasonal", rng.normal(size=(7, 16)), ctx)
        assert Z.data.shape == (7, 16)
        assert weights.data.shape == (4, 7, 10)

    def test_context_mismatches(self, backbone):
        trend_ctx = AlignmentContext(block=CrossAttentionBlock(16, 4, "trend", seed=25))
        with pytest.raises(ValueError, match="anchor set"):
            align_component("trend", np.zeros((2, 16)), trend_ctx)
        with pytest.raises(ValueError, match="not seasonal"):
            align_component("seasonal", np.zeros((2, 16)), trend_ctx)
        res_bank = PrototypeBank(5, backbone.V, "residual", seed=26)
        bad = AlignmentContext(
            block=CrossAttentionBlock(16, 4, "seasonal", seed=27),
            bank=res_bank,
            vocab_table=backbone.tensors["vocab_table"],
        )
        with pytest.raises(ValueError, match="residual bank"):
            align_component("seasonal", np.zeros((2, 16)), bad)
        with pytest.raises(ValueError, match="unknown component"):
            align_component("cycle", np.zeros((2, 16)), trend_ctx)

    def test_gradients_reach_trainables_not_anchors(self, backbone):
        ctx = self._trend_ctx(backbone, seed=28)
        frozen_before = ctx.anchors.embeddings.copy()
        x = Tensor(np.random.default_rng(29).normal(size=(4, 16)), requires_grad=True)
        Z, _ = align_component("trend", x, ctx)
        backward(tensor_sum(Z * Z))
        for W in ctx.block.parameters():
            assert W.grad is not None and np.any(W.grad != 0)
        assert x.grad is not None
        assert np.array_equal(ctx.anchors.embeddings, frozen_before)

    def test_probe_receives_gradient(self, backbone):
        bank = PrototypeBank(6, backbone.V, "residual", seed=30)
        ctx = AlignmentContext(
            block=CrossAttentionBlock(16, 2, "residual", seed=31),
            bank=bank,
            vocab_table=backbone.tensors["vocab_table"],
        )
        x = Tensor(np.random.default_rng(32).normal(size=(3, 16)), requires_grad=True)
        Z, _ = align_component("residual", x, ctx)
        backward(tensor_sum(Z * Z))
        assert bank.probe.grad is not None and np.any(bank.probe.grad != 0)
