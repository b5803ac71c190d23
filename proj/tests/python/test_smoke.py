"""Smoke tests for the fewshot_sed python module."""

import json
import math

import numpy as np
import pytest

import fewshot_sed as fsed


def test_distances_and_kernels():
    x = np.array([3.0, 0.0, 0.0])
    y = np.zeros(3)
    assert fsed.squared_distance(fsed.euclidean_kernel(), x, y) == pytest.approx(9.0)

    rbf = fsed.rbf_kernel(0.01)
    far = np.zeros(8)
    far[0] = 10.0
    assert fsed.squared_distance(rbf, far, np.zeros(8)) == pytest.approx(
        2.0 - 2.0 * math.exp(-1.0), abs=1e-12
    )

    L = np.eye(4)
    chol = fsed.cholesky_kernel(L)
    a, b = np.arange(4.0), np.ones(4)
    assert fsed.squared_distance(chol, a, b) == pytest.approx(
        fsed.squared_distance(fsed.euclidean_kernel(), a, b)
    )


def test_probabilities_and_losses():
    d = np.array([[1.0, 2.0, 3.0]])
    p = fsed.class_probabilities(d)
    assert p[0] == pytest.approx([0.665241, 0.244728, 0.090031], abs=1e-6)
    assert p.sum(axis=1) == pytest.approx(1.0, abs=1e-12)

    uniform = np.full((4, 10), 0.1)
    assert fsed.prototypical_loss(uniform, [0, 1, 2, 3]) == pytest.approx(
        math.log(10.0)
    )

    protos = np.zeros((2, 5))
    assert fsed.separation_penalty(protos, lambda_=0.1, delta_v=10.0) == pytest.approx(
        2.0
    )


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    model = fsed.init_model("logistic", 6, 9, seed=3)
    sx = rng.uniform(-1, 1, size=(6, 9))
    qx = rng.uniform(-1, 1, size=(6, 9))
    sy = [0, 0, 1, 1, 2, 2]
    qy = [0, 0, 1, 1, 2, 2]
    kernel = fsed.euclidean_kernel()

    loss, dA, dL = fsed.episode_gradients(model, kernel, sx, sy, qx, qy)
    assert dL is None
    assert math.isfinite(loss)
    fd_dA, _ = fsed.finite_diff_gradients(model, kernel, sx, sy, qx, qy, h=1e-5)
    rel = np.abs(dA - fd_dA) / np.maximum(1e-4, np.abs(dA) + np.abs(fd_dA))
    assert rel.max() <= 1e-4


def test_feature_pipeline_shapes():
    samples = np.zeros(22050)
    mel = fsed.mel_spectrogram(samples)
    assert mel.shape == (87, 128)  # 1 + floor(22050 / 256)
    gram = fsed.pcen(mel)
    assert gram.shape == (87, 128)
    assert gram.min() >= 0.0
    patches, starts = fsed.make_patches(gram)
    assert patches.shape[1] == 17 * 128
    assert starts[0] == 0 and starts[1] == 8


def test_matching_and_metrics():
    gts = np.array([[0.0, 1.0], [1.0, 2.0]])
    preds = np.array([[0.5, 1.5], [0.0, 1.0]])
    result = fsed.match_events(preds, gts, min_iou=0.3)
    assert result["tp"] == 2  # maximum matching beats greedy

    metrics = fsed.compute_metrics(33, 62, 197)
    assert 100 * metrics["precision"] == pytest.approx(34.73, abs=0.01)
    assert 100 * metrics["recall"] == pytest.approx(14.34, abs=0.01)
    assert 100 * metrics["fscore"] == pytest.approx(20.31, abs=0.01)


def test_score_csv_roundtrip():
    gt = "Audiofilename,Starttime,Endtime,Q\na.wav,1.0,2.0,POS\n"
    pred = "Audiofilename,Starttime,Endtime\na.wav,1.0,2.0\n"
    report = json.loads(fsed.score_csv(pred, gt))
    assert report["pooled"]["fscore"] == 1.0


def test_train_quickly_on_separable_blobs():
    rng = np.random.default_rng(1)
    dim, per_class = 16, 12
    xs, ys = [], []
    for c in range(2):
        block = 0.05 * rng.uniform(-1, 1, size=(per_class, dim))
        block[:, c] += 1.0
        xs.append(block)
        ys += [c] * per_class
    x = np.vstack(xs).astype(np.float32)

    model, kernel, report, val_acc = fsed.train(
        x, ys, x, ys,
        kind="linear", out_dim=4, epochs=2, episodes_per_epoch=3,
        n_way=2, k_shot=3, n_query=3, val_episodes=5, seed=1,
    )
    assert model.out_dim == 4
    assert kernel.variant == "euclidean"
    assert len(report.strip().splitlines()) == 2
    assert val_acc >= 0.9


def test_errors_are_translated():
    with pytest.raises(Exception):
        fsed.rbf_kernel(0.0)
    with pytest.raises(Exception):
        fsed.init_model("cubist", 4, 4)
