import json

import numpy as np
import pytest

import svae


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    run = tmp_path_factory.mktemp("toy")
    code, out, err = svae.run_cli(
        ["train", "--data", "toy", "--alpha", "50", "--epochs", "4", "--d1", "4", "--d2", "3", "--hidden", "32,16",
         "--cls-hidden", "16", "--batch", "32", "--seed", "7", "--quiet", "--run-dir", str(run)]
    )
    assert code == 0, err
    return run / "checkpoint.svae"


@pytest.fixture(scope="module")
def toy():
    images, labels, height, width = svae.synth_toy_dataset(12, 25)
    return images, labels


def test_toy_dataset_shape(toy):
    images, labels = toy
    assert images.shape == (100, 64)
    assert sorted(set(labels.tolist())) == [0, 1, 2, 3]
    assert images.min() >= 0.0 and images.max() <= 1.0


def test_cli_usage_error():
    code, out, err = svae.run_cli([])
    assert code == 2
    assert "Usage" in err


def test_model_metadata(checkpoint):
    m = svae.Model(checkpoint)
    assert m.config["split"] == {"d1": 4, "d2": 3}
    meta = m.metadata()
    assert meta["num_classes"] == 4


def test_encode_matches_classify(checkpoint, toy):
    m = svae.Model(checkpoint)
    images, labels = toy
    probs = m.classify(images[:5], n_samples=32, seed=3)
    assert probs.shape == (5, 4)
    assert np.allclose(probs.sum(axis=1), 1.0)
    for i in range(5):
        enc = m.encode(images[i], seed=3)
        assert len(enc["z1_mean"]) == 4 and len(enc["z2_mean"]) == 3
        assert enc["predicted_class"] == int(np.argmax(probs[i]))


def test_training_accuracy(checkpoint, toy):
    m = svae.Model(checkpoint)
    images, labels = toy
    acc = (m.classify(images).argmax(axis=1) == labels).mean()
    assert acc >= 0.9


def test_generate_is_reproducible(checkpoint, toy):
    m = svae.Model(checkpoint)
    x = toy[0][0]
    a = m.generate(x, sigma=1.0, seed=11)
    b = m.generate(x, sigma=1.0, seed=11)
    assert a == b
    assert len(a["image"]) == 64


def test_attribution_completeness(checkpoint, toy):
    m = svae.Model(checkpoint)
    x = toy[0][1]
    out = m.attribute(x, method="ig", target="classifier", class_index=1, ig_steps=256)
    attr = np.array(out["attributions"])
    assert attr.shape == (64,)
    assert np.isfinite(attr).all()


def test_divergence_is_zero_at_reference(checkpoint, toy):
    m = svae.Model(checkpoint)
    x = toy[0][2]
    out = m.attribute(x, method="saliency", target="divergence", k=2, ref_image=x)
    assert np.all(np.array(out["attributions"]) == 0.0)


def test_api_errors(checkpoint):
    m = svae.Model(checkpoint)
    with pytest.raises(svae.ApiError) as e:
        m.encode([0.5] * 3)
    assert e.value.status == 400
    status, body = m._m.request("GET", "/api/nope", "")
    assert status == 404


def test_decode_and_retention(checkpoint, toy):
    m = svae.Model(checkpoint)
    images, labels = toy
    out = m.decode(np.zeros((2, 7)))
    assert out.shape == (2, 64)
    curve = m.retention(images[:20], labels[:20], sigmas=[0.1, 1.0], per_sigma=2)
    assert curve["sigma"] == [0.1, 1.0]
    assert all(0.0 <= r <= 1.0 for r in curve["retention"])
    assert curve["mean_l2"][0] <= curve["mean_l2"][1]


def test_bad_checkpoint(tmp_path):
    p = tmp_path / "x.svae"
    p.write_bytes(b"nonsense")
    with pytest.raises(svae.SvaeError):
        svae.Model(p)
