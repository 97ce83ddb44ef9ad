import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from agetrace.errors import InvalidArgument, InvalidModel
from agetrace.estimators import knn
from agetrace.estimators.knn import (
    PixelwiseKNNModel,
    block_votes,
    feature_map,
    lv_features,
    pixelwise_knn_classify,
    pixelwise_knn_train,
)
from agetrace.imaging import median_filter
from agetrace.sim import DatasetSpec, simulate


def test_lv_examples():
    f = lv_features(np.full((3, 3, 3), 100.0))
    assert f.shape == (33,)
    assert np.all(f[27:] == 0) and np.all(f[:27] == 100)
    w = np.zeros((3, 3, 3))
    w[1, 1, 0] = 255
    f = lv_features(w)
    assert f[27] == 255 and f[30] == 255
    assert f[28] == f[29] == f[31] == f[32] == 0
    assert f[(1 * 3 + 1) * 3 + 0] == 255
    with pytest.raises(InvalidArgument):
        lv_features(np.zeros((3, 3)))


@settings(max_examples=40)
@given(arrays(np.float64, (3, 3, 3), elements=st.floats(0, 255)), st.integers(0, 3), st.booleans())
def test_lv_rotation_reflection_invariance(w, turns, flip):
    t = np.rot90(w, turns, axes=(0, 1))
    if flip:
        t = t[:, ::-1]
    a, b = lv_features(w), lv_features(t)
    np.testing.assert_allclose(a[27:], b[27:], atol=1e-9)
    assert sorted(a[:27]) == sorted(b[:27])


def test_feature_map_matches_single_window():
    rng = np.random.default_rng(0)
    block = rng.uniform(0, 255, (6, 6, 3))
    fm = feature_map(block)
    assert fm.shape == (16, 33)
    np.testing.assert_allclose(fm[5], lv_features(block[1:4, 1:4]))
    gray = rng.uniform(0, 255, (5, 5))
    np.testing.assert_allclose(feature_map(gray), feature_map(np.repeat(gray[:, :, None], 3, axis=2)))


def corner_signal(seed, n, size=14, sep=30.0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    imgs = rng.normal(100, 20, (n, size, size))
    imgs[:, -1, -1] = np.where(y == 0, 100 - sep, 100 + sep) + rng.normal(0, 5, n)
    return list(imgs), list(y)


def test_single_informative_pixel_ranks_first():
    # only the last interior pixel's window contains the corner, so raster order cannot help it
    tr, ytr = corner_signal(0, 60)
    va, yva = corner_signal(1, 60)
    m = pixelwise_knn_train(tr, ytr, va, yva, block_size=14, n_blocks=1, k_select=5)
    assert m.selected_pixels()[0] == (0, 12, 12)
    assert m.blocks[0].validation_accuracy[0] == 1.0
    assert m.blocks[0].validation_accuracy[1] < 1.0


def noise_set(seed, n, size=12):
    rng = np.random.default_rng(seed)
    return list(rng.normal(100, 20, (n, size, size, 3))), list(rng.integers(0, 2, n))


def test_permuted_labels_give_chance_on_held_out():
    tr, ytr = noise_set(0, 40)
    va, yva = noise_set(1, 20)
    te, yte = noise_set(2, 200)
    m = pixelwise_knn_train(tr, ytr, va, yva, block_size=12, n_blocks=1, k_select=20)
    acc = np.mean([pixelwise_knn_classify(m, x) == y for x, y in zip(te, yte)])
    # held-out labels are independent of the images, so accuracy is Binomial(n, 1/2) / n
    assert abs(acc - 0.5) <= 3 * np.sqrt(0.25 / len(te))


def test_same_seed_same_selection():
    tr, ytr = noise_set(3, 20, size=24)
    va, yva = noise_set(4, 10, size=24)
    kw = dict(block_size=10, n_blocks=3, k_select=10, seed=7)
    a = pixelwise_knn_train(tr, ytr, va, yva, **kw)
    b = pixelwise_knn_train(tr, ytr, va, yva, **kw)
    assert a.selected_pixels() == b.selected_pixels()
    assert [blk.origin for blk in a.blocks] == [blk.origin for blk in b.blocks]


def test_classifier_permutation_invariance():
    tr, ytr = corner_signal(5, 40)
    va, yva = corner_signal(6, 20)
    m = pixelwise_knn_train(tr, ytr, va, yva, block_size=14, n_blocks=1, k_select=30)
    rng = np.random.default_rng(0)
    perm = rng.permutation(30)
    blk = m.blocks[0]
    shuffled = PixelwiseKNNModel(m.classes, m.block_size, m.k_neighbors, m.sub_labels, [
        knn.BlockClassifiers(blk.origin, blk.pixels[perm], blk.features[perm], blk.validation_accuracy[perm])])
    te, _ = noise_set(9, 20, size=14)
    for x in te + tr[:10]:
        assert pixelwise_knn_classify(m, x) == pixelwise_knn_classify(shuffled, x)
        assert sorted(block_votes(m, x)[0]) == sorted(block_votes(shuffled, x)[0])


def test_block_majority(monkeypatch):
    m = PixelwiseKNNModel(["early", "late"], 10, 5, np.array([0, 1]), [None] * 45)
    votes = np.array([[1] * 10] * 23 + [[0] * 10] * 22)
    monkeypatch.setattr(knn, "block_votes", lambda model, image: votes)
    assert pixelwise_knn_classify(m, None) == "late"
    monkeypatch.setattr(knn, "block_votes", lambda model, image: np.array([[0] * 5 + [1] * 5] * 2))
    assert pixelwise_knn_classify(m, None) == "early"


def test_virtual_subclasses():
    y = np.array([0, 0, 0, 0, 1, 1, 1])
    t = np.array([1.0, 2, 3, 4, 10, 20, 30])
    sub = knn._temporal_halves(y, t)
    assert sub.tolist() == [0, 0, 1, 1, 2, 2, 3]
    assert knn.PixelwiseKNNModel.sub_to_class(None, sub).tolist() == y.tolist()


def test_errors():
    tr, ytr = noise_set(0, 10)
    with pytest.raises(InvalidArgument):
        pixelwise_knn_train(tr, ytr, tr, ytr, block_size=11, n_blocks=1, k_select=100)
    with pytest.raises(InvalidArgument):
        pixelwise_knn_train(tr, ytr, [], [], block_size=12, n_blocks=1, k_select=5)
    with pytest.raises(InvalidArgument):
        pixelwise_knn_train(tr, [0] * 10, tr, ytr, block_size=12, n_blocks=1, k_select=5)
    m = pixelwise_knn_train(tr, ytr, tr, ytr, block_size=12, n_blocks=1, k_select=5)
    with pytest.raises(InvalidArgument):
        pixelwise_knn_classify(m, np.zeros((8, 8, 3)))
    with pytest.raises(InvalidArgument):
        pixelwise_knn_classify(m, np.zeros((12, 12, 4)))


def test_serialization_roundtrip():
    tr, ytr = corner_signal(1, 20)
    m = pixelwise_knn_train(tr, ytr, tr[:6], ytr[:6], block_size=14, n_blocks=1, k_select=8)
    back = PixelwiseKNNModel.from_dict(json.loads(json.dumps(m.as_dict())))
    assert back.as_dict() == m.as_dict()
    assert all(pixelwise_knn_classify(back, x) == pixelwise_knn_classify(m, x) for x in tr)
    with pytest.raises(InvalidModel):
        PixelwiseKNNModel.from_dict({**m.as_dict(), "kind": "ml"})


def test_palette_bias_survives_median_filter():
    spec = DatasetSpec.from_dict({
        "profile": {"width": 48, "height": 48, "read_noise_sigma": 2.0}, "session_times": [0, 30, 60, 90],
        "images_per_session": 20, "query_images_per_session": 8, "rng_seed": 3,
        "scene": {"kind": "biased", "level": 120, "amplitude": 20, "palette_radius": 30, "color_jitter": 5},
        "defects": {"mode": "none"}})
    frames, _ = simulate(spec)
    trusted = [f for f in frames if f.role == "trusted"]
    val = [f for k, f in enumerate(trusted) if k % 4 == 3]
    train = [f for k, f in enumerate(trusted) if k % 4 != 3]
    m = pixelwise_knn_train([f.image for f in train], [f.session_index for f in train],
                            [f.image for f in val], [f.session_index for f in val],
                            block_size=16, n_blocks=4, k_select=50)
    queries = [f for f in frames if f.role == "query"]
    raw = np.mean([pixelwise_knn_classify(m, f.image) == f.session_index for f in queries])
    filt = np.mean([pixelwise_knn_classify(m, median_filter(f.image)) == f.session_index for f in queries])
    assert raw > 0.9 and abs(raw - filt) <= 0.05
