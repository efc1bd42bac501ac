import numpy as np
import pytest

import sbo


def test_dft_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    np.testing.assert_allclose(sbo.dft2(x), np.fft.fft2(x, norm="ortho"), atol=1e-12)
    np.testing.assert_allclose(sbo.idft2(sbo.dft2(x)), x, atol=1e-12)


def test_embeddings_preserve_norms():
    rng = np.random.default_rng(1)
    c = rng.standard_normal(2 * 3 * 3 * 3)
    img = sbo.fft_embed(c, "FFT_Full", 3, 3, 8)
    assert img.shape == (3, 8, 8)
    assert np.linalg.norm(img) == pytest.approx(np.linalg.norm(c), rel=1e-12)
    small = np.array([1.0, 2.0, 3.0, 4.0])
    up = sbo.nni_upsample(small, 2, 1, 4)
    np.testing.assert_array_equal(up[0, :2, :2], 1.0)
    np.testing.assert_array_equal(up[0, 2:, 2:], 4.0)


def test_projections():
    np.testing.assert_allclose(sbo.project_l2(np.array([3.0, 4.0]), 2.5), [1.5, 2.0])
    np.testing.assert_allclose(sbo.project_linf(np.array([0.5, -2.0]), 0.1), [0.1, -0.1])
    with pytest.raises(ValueError):
        sbo.project_l2(np.array([1.0]), 0.0)


def test_gp_and_ei():
    x = np.array([[0.0, 0.0], [0.5, 0.1]])
    gp = sbo.gp_fit(x, np.array([1.0, -0.5]), 1.0, np.array([0.5, 0.5]), noise_variance=1e-10)
    mean, var = gp.posterior(np.array([0.0, 0.0]))
    assert mean == pytest.approx(1.0, abs=1e-6)
    assert var < 1e-8
    assert sbo.matern52(np.ones(2), np.ones(2), 2.5, np.ones(2)) == pytest.approx(2.5)
    assert sbo.expected_improvement(0.0, 1.0, 0.0) == pytest.approx(0.3989422804)


def test_attack_on_ball_and_accounting():
    shape = (1, 8, 8)
    center = np.full(64, 0.5)
    margin = 0.05
    model = sbo.ball_classifier(shape, center, margin * 8.0)
    x0 = center.reshape(shape)
    assert model.predict(x0) == 0
    res = sbo.bayes_attack(x0, 0, model, eps=2 * margin, budget=50, rd_side=2, seed=3)
    assert res["success"]
    assert res["queries_used"] <= 50
    assert len(res["trace"]) == res["queries_used"]
    assert np.abs(res["final_delta"]).max() <= 2 * margin + 1e-12
    assert model.predict(np.clip(x0 + res["final_delta"], 0, 1)) == 1


def test_campaign_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    shape = (1, 6, 6)
    w = rng.uniform(-0.2, 0.2, (3, 36)).astype(np.float32).astype(np.float64)
    model = sbo.linear_classifier(shape, w, np.zeros(3))
    imgs = [rng.uniform(0, 1, shape).astype(np.float32).astype(np.float64) for _ in range(4)]
    labels = [model.predict(i) for i in imgs]
    sbo.save_model(str(tmp_path / "m.sbo"), model)
    sbo.save_dataset(str(tmp_path / "d.sbd"), imgs, labels, 3)
    back, back_labels, k = sbo.load_dataset(str(tmp_path / "d.sbd"))
    assert back_labels == labels and k == 3
    report = sbo.run_campaign(str(tmp_path / "d.sbd"), "file:" + str(tmp_path / "m.sbo"),
                              eps=0.1, budget=20, rd_side=2, seed=5)
    assert report["schema"] == 1
    assert len(report["images"]) == 4
    again = sbo.run_campaign(str(tmp_path / "d.sbd"), "file:" + str(tmp_path / "m.sbo"),
                             eps=0.1, budget=20, rd_side=2, seed=5)
    assert report["images"] == again["images"]


def test_errors_map_to_python():
    with pytest.raises(sbo.FormatError):
        sbo.load_model("/nonexistent/file.sbo")
    with pytest.raises(sbo.TransportError):
        sbo.connect("tcp:127.0.0.1:1", timeout=0.5)
