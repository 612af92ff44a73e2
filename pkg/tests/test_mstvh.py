import numpy as np
import pytest

from src.core import Adam, Parameter, grad_check, sum_
from src.losses import recon_loss
from src.models import (
    FUSION_VARIANTS, FusionLayerParams, MstvhModel, ModelDims, SgatParams, TransformerBlockParams, g_mfat,
    graph_position_features, msf_layer, mstvh_forward, o_mfat, transformer_block,
)
from src.training.trainer import compute_losses
from src.utils.config import LossWeights
from src.utils.errors import ShapeError


def softmax_rows(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def ln_oracle(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + 1e-5) * gain + bias


def attend(rows, g, block, w_pos):
    visual = softmax_rows((rows @ block.w2.data) @ (rows @ block.w3.data).T / np.sqrt(rows.shape[-1]))
    return visual @ softmax_rows(g @ w_pos) @ (rows @ block.w1.data)


def mstvh_oracle(roi, g_t, g_s, params):
    """Прямой проход одной сцены по слоям и кадрам в цикле, без общих функций модели"""
    f = roi.reshape(roi.shape[0], roi.shape[1], -1) @ params.vectorizer.weight.data + params.vectorizer.bias.data
    n, t, _ = f.shape
    hashes, activities, first = [], [], None
    for layer, hash_head, activity_head in zip(params.layers, params.hash_heads, params.activity_heads):
        normed = ln_oracle(f, layer.norm.gain.data, layer.norm.bias.data)
        f_t = normed.copy()
        for obj in range(n):
            f_t[obj] = normed[obj] + attend(normed[obj], g_t[obj], layer.temporal, layer.temporal.w_pos.data)
        f_s = f_t.copy()
        w_pos = layer.spatial.pos_alpha.data[0, 0] * np.eye(n)
        for frame in range(t):
            f_s[:, frame] = f_t[:, frame] + attend(f_t[:, frame], g_s[frame], layer.spatial, w_pos)
        hidden = np.maximum(f_s @ layer.ffn.inner.weight.data + layer.ffn.inner.bias.data, 0.0)
        f = f_s + hidden @ layer.ffn.outer.weight.data + layer.ffn.outer.bias.data
        if first is None:
            first = f
        h = np.tanh((f @ hash_head.weight.data + hash_head.bias.data).mean(axis=(0, 1)))
        hashes.append(h)
        activities.append(h @ activity_head.weight.data + activity_head.bias.data)
    action = f.mean(axis=1) @ params.action_head.weight.data + params.action_head.bias.data
    recon = first @ params.decoder.weight.data + params.decoder.bias.data
    return hashes, activities, action, recon


def random_graphs(rng, dims, batch=None):
    lead = () if batch is None else (batch,)
    g_t = rng.uniform(size=lead + (dims.N, dims.T, dims.T))
    g_s = rng.uniform(-1, 1, size=lead + (dims.T, dims.N, dims.N))
    g_s = (g_s + np.swapaxes(g_s, -1, -2)) / 2
    return g_t, g_s


def with_fusion(dims, fusion):
    return ModelDims(**{**dims.__dict__, "fusion": fusion})


def test_o_mfat_zero_features(rng):
    params = SgatParams.init(rng, "o", 4, 3, exchangeable=False, value_name="w_o")
    out = o_mfat(np.zeros((2, 3, 4)), rng.uniform(size=(2, 3, 3)), params)
    assert np.array_equal(out.data, np.zeros((2, 3, 4)))


def test_o_mfat_single_frame(rng):
    params = SgatParams.init(rng, "o", 4, 1, exchangeable=False, value_name="w_o")
    f = rng.normal(size=(3, 1, 4))
    out = o_mfat(f, np.ones((3, 1, 1)), params)
    assert np.allclose(out.data, f @ params.w1.data, atol=1e-14)


def test_g_mfat_toy_hand_oracle(rng):
    d = 3
    params = SgatParams.init(rng, "g", d, 2, exchangeable=True, value_name="w_g")
    params.pos_alpha.data[...] = 1.3
    f = rng.normal(size=(2, 2, d))         # (N, T, d)
    g_s = rng.uniform(-1, 1, size=(2, 2, 2))  # (T, N, N)
    out = g_mfat(f, g_s, params).data

    w_pos = 1.3 * np.eye(2)
    for frame in range(2):
        rows = f[:, frame]
        visual = softmax_rows((rows @ params.w2.data) @ (rows @ params.w3.data).T / np.sqrt(d))
        positional = softmax_rows(g_s[frame] @ w_pos)
        expected = visual @ positional @ (rows @ params.w1.data)
        assert np.allclose(out[:, frame], expected, atol=1e-13)


def test_msf_without_group_value_reduces_to_object_path(rng, tiny_dims):
    model = MstvhModel(tiny_dims, seed=6)
    layer = model.params.layers[0]
    layer.spatial.w1 = Parameter("w_g", np.zeros((tiny_dims.d, tiny_dims.d)))
    f = rng.normal(size=(tiny_dims.N, tiny_dims.T, tiny_dims.d))
    g_t = rng.uniform(size=(tiny_dims.N, tiny_dims.T, tiny_dims.T))
    g_s = rng.uniform(size=(tiny_dims.T, tiny_dims.N, tiny_dims.N))

    normed = layer.norm(f)
    f_t = normed + o_mfat(normed, g_t, layer.temporal)
    expected = f_t + layer.ffn(f_t)
    assert np.allclose(msf_layer(f, g_t, g_s, layer).data, expected.data, atol=1e-14)


def test_mstvh_forward_shapes(tiny_dims, tiny_batch):
    model = MstvhModel(tiny_dims, seed=1)
    output = model.forward(tiny_batch, training=True)
    assert len(output.h_per_layer) == tiny_dims.layers
    assert output.b_per_layer.shape == (2, tiny_dims.layers, tiny_dims.K)
    assert len(output.activity_logits_per_layer) == tiny_dims.layers
    assert output.action_logits.shape == (2, tiny_dims.N, tiny_dims.C_act)
    assert output.recon.shape == tiny_batch.roi.shape
    assert output.recon_maps.shape == (2, tiny_dims.N, tiny_dims.T, tiny_dims.d_v, 5, 5)
    for i, h in enumerate(output.h_per_layer):
        assert np.array_equal(output.b_per_layer[:, i], np.where(h.data >= 0, 1, -1))
    assert np.array_equal(model.codes(output), output.b_per_layer)
    assert len(output.attention) == tiny_dims.layers
    assert set(output.attention[0]) == {"temporal", "spatial"}


def test_mstvh_inference_reads_binary_codes(tiny_dims, tiny_batch):
    model = MstvhModel(tiny_dims, seed=1)
    output = model.forward(tiny_batch, training=False)
    for i, head in enumerate(model.params.activity_heads):
        expected = output.b_per_layer[:, i].astype(float) @ head.weight.data + head.bias.data
        assert np.allclose(output.activity_logits_per_layer[i].data, expected)


def test_mstvh_requires_two_layers(tiny_dims):
    dims = ModelDims(**{**tiny_dims.__dict__, "layers": 1})
    with pytest.raises(ShapeError):
        MstvhModel(dims)


def test_mstvh_precomputed_features_have_no_decoder(tiny_dims):
    model = MstvhModel(tiny_dims, seed=1, use_vectorizer=False)
    assert model.params.decoder is None
    assert model.params.vectorizer is None
    names = [p.name for p in model.parameters()]
    assert not any(name.startswith(("decoder", "vectorizer")) for name in names)
    assert len(names) == len(set(names))


def test_mstvh_parameter_names_are_ordered(tiny_dims):
    names = [p.name for p in MstvhModel(tiny_dims, seed=1).parameters()]
    assert names[0] == "layers.0.norm.gain"
    assert "layers.1.o_mfat.w_o" in names
    assert "layers.1.g_mfat.w_g" in names
    assert "layers.0.g_mfat.pos_alpha" in names
    assert names[-1] == "vectorizer.bias"


def test_mstvh_loss_gradients(tiny_dims, tiny_batch):
    model = MstvhModel(tiny_dims, seed=8)
    weights = LossWeights().resolved("mstvh", tiny_dims.layers)
    error = grad_check(lambda: compute_losses(model, tiny_batch, weights)[0], model.parameters(),
                       eps=1e-6, max_entries=12, seed=1)
    assert error < 1e-4


def test_mstvh_forward_matches_straight_line_oracle(tiny_dims, tiny_batch):
    model = MstvhModel(tiny_dims, seed=9)
    for i, layer in enumerate(model.params.layers):
        layer.spatial.pos_alpha.data[...] = 1.9 - 0.4 * i
    output = model.forward(tiny_batch, training=True)
    for i in range(tiny_batch.size):
        hashes, activities, action, recon = mstvh_oracle(tiny_batch.roi[i], tiny_batch.g_t[i], tiny_batch.g_s[i],
                                                         model.params)
        for layer in range(tiny_dims.layers):
            assert np.max(np.abs(output.h_per_layer[layer].data[i] - hashes[layer])) < 1e-10
            assert np.max(np.abs(output.activity_logits_per_layer[layer].data[i] - activities[layer])) < 1e-10
        assert np.max(np.abs(output.action_logits.data[i] - action)) < 1e-10
        assert np.max(np.abs(output.recon.data[i] - recon)) < 1e-10


def test_mstvh_is_equivariant_to_object_permutation(tiny_dims, rng):
    model = MstvhModel(tiny_dims, seed=4)
    model.params.layers[1].spatial.pos_alpha.data[...] = 2.6
    f_v = rng.normal(size=(2, tiny_dims.N, tiny_dims.T, tiny_dims.d))
    g_t, g_s = random_graphs(rng, tiny_dims, batch=2)
    perm = np.array([2, 0, 1])
    base = mstvh_forward(f_v, g_t, g_s, model.params)
    permuted = mstvh_forward(f_v[:, perm], g_t[:, perm], g_s[:, :, perm][:, :, :, perm], model.params)
    for before, after in zip(base.h_per_layer, permuted.h_per_layer):
        assert np.allclose(before.data, after.data, atol=1e-12)
    assert np.array_equal(base.b_per_layer, permuted.b_per_layer)
    assert np.allclose(base.action_logits.data[:, perm], permuted.action_logits.data, atol=1e-12)
    assert np.allclose(base.recon.data[:, perm], permuted.recon.data, atol=1e-12)


def test_msf_layer_gradients(rng, tiny_dims):
    layer = FusionLayerParams.init(rng, "layer", tiny_dims, temporal_name="o_mfat", spatial_name="g_mfat",
                                   temporal_value="w_o", spatial_value="w_g")
    f = rng.normal(size=(tiny_dims.N, tiny_dims.T, tiny_dims.d))
    g_t, g_s = random_graphs(rng, tiny_dims)
    weights = rng.normal(size=f.shape)
    error = grad_check(lambda: sum_(msf_layer(f, g_t, g_s, layer) * weights), layer.parameters(), eps=1e-6)
    assert error < 1e-4


def test_reconstruction_loss_decreases_on_fixed_batch(tiny_dims, tiny_batch):
    model = MstvhModel(tiny_dims, seed=2)
    optimizer = Adam(model.parameters(), lr=1e-3)
    values = []
    for _ in range(11):
        optimizer.zero_grad()
        loss = recon_loss(tiny_batch.roi, model.forward(tiny_batch).recon)
        values.append(loss.item())
        loss.backward()
        optimizer.step()
    assert all(later < earlier for earlier, later in zip(values, values[1:]))


# === Блок трансформера вместо MSF ===

def test_graph_position_features(rng, tiny_dims):
    g_t, g_s = random_graphs(rng, tiny_dims)
    features = graph_position_features(g_t, g_s)
    assert features.shape == (tiny_dims.N, tiny_dims.T, tiny_dims.T + tiny_dims.N)
    assert np.array_equal(features[1, 2, :tiny_dims.T], g_t[1, 2])
    assert np.array_equal(features[1, 2, tiny_dims.T:], np.sort(g_s[2, 1])[::-1])

    perm = np.array([1, 2, 0])
    permuted = graph_position_features(g_t[perm], g_s[:, perm][:, :, perm])
    assert np.array_equal(permuted, features[perm])


def test_transformer_fusion_parameters(tiny_dims):
    for fusion in ("bd", "ed"):
        model = MstvhModel(with_fusion(tiny_dims, fusion), seed=1)
        assert all(isinstance(layer, TransformerBlockParams) for layer in model.params.layers)
        names = [p.name for p in model.parameters()]
        assert "layers.0.position.weight" in names and "layers.1.query" in names
        assert not any("o_mfat" in name or "g_mfat" in name for name in names)
    assert FUSION_VARIANTS == ("msf", "bd", "ed")


def test_transformer_fusion_forward(tiny_dims, tiny_batch):
    outputs = {}
    for fusion in ("bd", "ed"):
        model = MstvhModel(with_fusion(tiny_dims, fusion), seed=1)
        output = model.forward(tiny_batch, training=False)
        assert output.b_per_layer.shape == (2, tiny_dims.layers, tiny_dims.K)
        assert output.recon.shape == tiny_batch.roi.shape
        tokens = tiny_dims.N * tiny_dims.T
        assert output.attention[0]["tokens"].shape == (2, tokens, tokens)
        assert np.allclose(output.attention[0]["tokens"].sum(axis=-1), 1.0, atol=1e-12)
        outputs[fusion] = output
    # одинаковая инициализация, разное место позиционных признаков
    assert not np.allclose(outputs["bd"].h_per_layer[0].data, outputs["ed"].h_per_layer[0].data)


def test_transformer_block_placement(rng, tiny_dims):
    f = rng.normal(size=(tiny_dims.N, tiny_dims.T, tiny_dims.d))
    g_t, g_s = random_graphs(rng, tiny_dims)
    block = TransformerBlockParams.init(rng, "block", tiny_dims, "ed")
    position = block.position(graph_position_features(g_t, g_s)).data
    with_position = transformer_block(f, g_t, g_s, block).out.data
    block.position.weight.data[...] = 0.0
    block.position.bias.data[...] = 0.0
    # при выходном размещении позиционные признаки просто прибавляются к выходу блока
    assert np.allclose(with_position, transformer_block(f, g_t, g_s, block).out.data + position, atol=1e-13)
    with pytest.raises(ValueError):
        TransformerBlockParams.init(rng, "block", tiny_dims, "middle")


def test_transformer_block_is_equivariant_to_object_permutation(rng, tiny_dims):
    block = TransformerBlockParams.init(rng, "block", tiny_dims, "bd")
    f = rng.normal(size=(tiny_dims.N, tiny_dims.T, tiny_dims.d))
    g_t, g_s = random_graphs(rng, tiny_dims)
    perm = np.array([2, 0, 1])
    base = transformer_block(f, g_t, g_s, block).out.data
    permuted = transformer_block(f[perm], g_t[perm], g_s[:, perm][:, :, perm], block).out.data
    assert np.allclose(base[perm], permuted, atol=1e-12)


@pytest.mark.parametrize("placement", ["bd", "ed"])
def test_transformer_block_gradients(rng, tiny_dims, placement):
    block = TransformerBlockParams.init(rng, "block", tiny_dims, placement)
    f = rng.normal(size=(2, tiny_dims.N, tiny_dims.T, tiny_dims.d))
    g_t, g_s = random_graphs(rng, tiny_dims, batch=2)
    weights = rng.normal(size=f.shape)
    error = grad_check(lambda: sum_(transformer_block(f, g_t, g_s, block).out * weights), block.parameters(),
                       eps=1e-6)
    assert error < 1e-4


def test_transformer_block_rejects_mismatched_graphs(rng, tiny_dims):
    block = TransformerBlockParams.init(rng, "block", tiny_dims, "bd")
    g_t, g_s = random_graphs(rng, tiny_dims)
    with pytest.raises(ShapeError):
        transformer_block(np.zeros((tiny_dims.N, tiny_dims.T, tiny_dims.d + 1)), g_t, g_s, block)
    with pytest.raises(ShapeError):
        transformer_block(np.zeros((tiny_dims.N, tiny_dims.T, tiny_dims.d)), g_t[:, :2, :2], g_s, block)
