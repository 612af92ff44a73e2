import numpy as np
import pytest

from src.core import Parameter
from src.frontend import (
    ROI_SIZE, VectorizerParams, decode_array, encode_array, generate_dataset, generate_scene,
    iterate_batches, linear_probe_accuracy, load_dataset, pooled_roi_features, prepare_samples,
    roi_align, save_dataset, vectorize, write_precomputed_features,
)
from src.graphs import Box
from src.utils.config import ACTIVITY_TEMPLATES, GeneratorConfig
from src.utils.errors import ConfigError, FormatError, ShapeError


def small_generator(**overrides) -> GeneratorConfig:
    params = dict(N=3, T=5, A=3, P=2, C_act=2, d_v=4, map_size=8, train_samples=6, test_samples=2)
    params.update(overrides)
    return GeneratorConfig(**params)


def mean_pairwise_distance(centers: np.ndarray) -> float:
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    n = len(centers)
    return dist.sum() / (n * (n - 1))


def test_generate_scene_is_deterministic():
    config = small_generator()
    first = generate_scene(config, 42)
    second = generate_scene(config, 42)
    assert np.array_equal(first.traj.boxes, second.traj.boxes)
    assert np.array_equal(first.feature_maps, second.feature_maps)
    assert np.array_equal(first.action_labels, second.action_labels)
    assert first.labels == second.labels


def test_generate_scene_shapes():
    config = small_generator()
    scene = generate_scene(config, 3, appearance_label=1, activity_label=2, video_id=5)
    assert scene.feature_maps.shape == (config.T, config.d_v, config.map_size, config.map_size)
    assert scene.traj.boxes.shape == (config.N, config.T, 4)
    assert scene.action_labels.shape == (config.N,)
    assert scene.labels == {"activity": 2, "appearance": 1, "video-id": 5}


def test_generate_scene_rejects_bad_labels():
    with pytest.raises(ConfigError):
        generate_scene(small_generator(), 0, activity_label=7)


def test_converge_template_contracts():
    config = small_generator(N=4)
    converge = ACTIVITY_TEMPLATES.index("converge")
    for seed in range(10):
        centers = generate_scene(config, seed, activity_label=converge).traj.centers()
        assert mean_pairwise_distance(centers[:, -1]) < mean_pairwise_distance(centers[:, 0])


def test_queue_template_is_collinear_at_final_frame():
    config = small_generator(N=4)
    queue = ACTIVITY_TEMPLATES.index("queue")
    for seed in range(10):
        final = generate_scene(config, seed, activity_label=queue).traj.centers()[:, -1]
        centered = final - final.mean(axis=0)
        # остаток подгонки прямой - наименьшее сингулярное число
        residual = np.linalg.svd(centered, compute_uv=False)[-1] / np.sqrt(len(final))
        assert residual < 0.3


def test_roi_align_constant_map():
    fmap = np.full((2, 8, 8), 3.5)
    out = roi_align(fmap, Box(1.3, 0.7, 5.9, 6.2), 1.0)
    assert out.shape == (2,) + ROI_SIZE
    assert np.allclose(out, 3.5, atol=1e-14)


def test_roi_align_aligned_box_on_integer_ramp():
    """
    Бокс по границам пикселей возвращает значения ячеек точно только для карты, линейной
    между соседними центрами пикселей: билинейные выборки внутри ячейки усредняются в её центр.
    """
    x, y = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    fmap = (x + 10 * y).astype(float)[None]
    out = roi_align(fmap, Box(1.0, 1.0, 6.0, 6.0), 1.0)
    expected = fmap[0, 1:6, 1:6]
    assert np.allclose(out[0], expected, atol=1e-12)


def test_roi_align_linear_ramp_sample_averages():
    x = np.arange(8, dtype=float)
    fmap = np.repeat(x[:, None], 8, axis=1)[None]
    box = Box(2.0, 1.0, 4.5, 7.0)
    out = roi_align(fmap, box, 1.0)
    step = (box.x2 - box.x1) / 10
    samples = box.x1 + (np.arange(10) + 0.5) * step - 0.5
    expected = samples.reshape(5, 2).mean(axis=1)
    assert np.allclose(out[0], expected[:, None], atol=1e-12)


def test_roi_align_is_linear_in_the_map(rng):
    a = rng.normal(size=(3, 8, 8))
    b = rng.normal(size=(3, 8, 8))
    for _ in range(20):
        x1, y1 = rng.uniform(0.0, 5.0, size=2)
        box = Box(x1, y1, x1 + rng.uniform(0.5, 3.0), y1 + rng.uniform(0.5, 3.0))
        alpha, beta = rng.normal(size=2)
        combined = roi_align(alpha * a + beta * b, box, 1.0)
        expected = alpha * roi_align(a, box, 1.0) + beta * roi_align(b, box, 1.0)
        assert np.max(np.abs(combined - expected)) <= 1e-12


def test_roi_align_rejects_bad_map():
    with pytest.raises(ShapeError):
        roi_align(np.zeros((8, 8)), Box(0, 0, 1, 1), 1.0)


def test_vectorize_examples(rng):
    d_v, d = 2, 6
    params = VectorizerParams.init(rng, d_v, d)
    zero = vectorize(np.zeros((3, 4, d_v) + ROI_SIZE), params)
    assert np.allclose(zero.data, np.broadcast_to(params.bias.data, (3, 4, d)))

    roi = rng.normal(size=(3, 4, d_v) + ROI_SIZE)
    oracle = roi.reshape(3, 4, -1) @ params.weight.data + params.bias.data
    assert np.allclose(vectorize(roi, params).data, oracle, atol=1e-13)

    width = d_v * 25
    identity = VectorizerParams(weight=Parameter("w", np.eye(width)), bias=Parameter("b", np.zeros(width)))
    assert np.allclose(vectorize(roi, identity).data, roi.reshape(3, 4, -1))


def test_vectorize_shape_mismatch(rng):
    params = VectorizerParams.init(rng, 2, 4)
    with pytest.raises(ShapeError):
        vectorize(np.zeros((3, 4, 3) + ROI_SIZE), params)


def test_dataset_threads_do_not_change_content():
    config = small_generator()
    single = generate_dataset(config, 9, threads=1)
    pooled = generate_dataset(config, 9, threads=3)
    for a, b in zip(single.samples, pooled.samples):
        assert np.array_equal(a.feature_maps, b.feature_maps)
        assert np.array_equal(a.traj.boxes, b.traj.boxes)


def test_videos_share_appearance():
    config = small_generator(clips_per_video=2, train_samples=8, test_samples=0)
    dataset = generate_dataset(config, 5, threads=1)
    for first, second in zip(dataset.samples[::2], dataset.samples[1::2]):
        assert first.video_id == second.video_id
        assert first.appearance_label == second.appearance_label
    assert dataset.label_spaces["video-id"] == 4


def test_dataset_save_and_load(tmp_path):
    dataset = generate_dataset(small_generator(), 2, threads=1)
    save_dataset(tmp_path / "ds", dataset)
    loaded = load_dataset(tmp_path / "ds")
    assert loaded.ids == dataset.ids
    assert loaded.splits == dataset.splits
    for a, b in zip(dataset.samples, loaded.samples):
        assert np.array_equal(a.traj.boxes, b.traj.boxes)
        assert np.array_equal(a.feature_maps, b.feature_maps)
        assert a.labels == b.labels
        assert np.array_equal(a.action_labels, b.action_labels)


def test_load_dataset_without_manifest(tmp_path):
    with pytest.raises(FormatError):
        load_dataset(tmp_path)


def test_array_blob_errors():
    payload = encode_array(np.arange(6.0).reshape(2, 3))
    assert np.array_equal(decode_array(payload), np.arange(6.0).reshape(2, 3))
    with pytest.raises(FormatError):
        decode_array(b"NOPE" + payload[4:])
    with pytest.raises(FormatError):
        decode_array(payload[:-1])


def test_prepare_samples_shapes(tiny_samples, tiny_run):
    sample = tiny_samples[0]
    assert sample.roi.shape == (tiny_run.N, tiny_run.T, tiny_run.d_v * 25)
    assert sample.graphs.g_t.shape == (tiny_run.N, tiny_run.T, tiny_run.T)
    assert sample.graphs.g_s.shape == (tiny_run.T, tiny_run.N, tiny_run.N)
    assert sample.features is None


def test_iterate_batches_merges_single_tail(tiny_samples):
    sizes = [batch.size for batch in iterate_batches(tiny_samples[:7], 3)]
    assert sizes == [3, 4]
    sizes = [batch.size for batch in iterate_batches(tiny_samples, 3)]
    assert sizes == [3, 3, 2]


def test_iterate_batches_order_is_seeded(tiny_samples):
    first = [b.ids.tolist() for b in iterate_batches(tiny_samples, 4, np.random.default_rng(5))]
    second = [b.ids.tolist() for b in iterate_batches(tiny_samples, 4, np.random.default_rng(5))]
    assert first == second
    assert sorted(sum(first, [])) == sorted(s.sample_id for s in tiny_samples)


def test_precomputed_features(tmp_path, tiny_dataset, rng):
    pairs = tiny_dataset.split("train")[:2]
    features = {sample_id: rng.normal(size=(3, 4, 8)) for sample_id, _ in pairs}
    write_precomputed_features(tmp_path / "feat", features)
    prepared = prepare_samples(pairs, tmp_path / "feat")
    for sample in prepared:
        assert sample.roi is None
        assert np.array_equal(sample.features, features[sample.sample_id])

    write_precomputed_features(tmp_path / "bad", {sample_id: np.zeros((2, 4, 8)) for sample_id, _ in pairs})
    with pytest.raises(ShapeError):
        prepare_samples(pairs, tmp_path / "bad")


@pytest.fixture(scope="module")
def pooled_default_scenes():
    """Сцены с размерностями по умолчанию, RoI-признаки усреднены по объектам, кадрам и ячейкам"""
    config = GeneratorConfig(train_samples=256, test_samples=128)
    dataset = generate_dataset(config, 0, threads=1)
    train = prepare_samples(dataset.split("train"))
    test = prepare_samples(dataset.split("test"))
    return config, (pooled_roi_features(train, config.d_v), train), (pooled_roi_features(test, config.d_v), test)


def linear_accuracy(pooled, label_space: str) -> float:
    _, (train_x, train), (test_x, test) = pooled
    train_y = np.array([s.labels[label_space] for s in train])
    test_y = np.array([s.labels[label_space] for s in test])
    return linear_probe_accuracy(train_x, train_y, test_x, test_y)


def test_appearance_is_linearly_recoverable(pooled_default_scenes):
    assert linear_accuracy(pooled_default_scenes, "appearance") >= 0.95


def test_activity_is_not_recoverable_from_pooled_features(pooled_default_scenes):
    config = pooled_default_scenes[0]
    # без траекторий активность угадывается не больше чем на 25 п.п. лучше случайного
    assert linear_accuracy(pooled_default_scenes, "activity") < 1.0 / config.A + 0.25
