import numpy as np
import pytest

import odmq


def test_complexity_preset():
    fp = odmq.complexity(bits=32)
    assert fp["storage_k"] == pytest.approx(1517.6, rel=0.01)
    assert fp["bitops_t"] == pytest.approx(527.1, rel=0.01)
    q = odmq.complexity(bits=2, offsets_p=0.3)
    assert q["csv"].startswith("layer,params_k,storage_k,macs,bitops_t\n")
    assert sum(layer["bitops"] for layer in q["layers"]) / 1e12 == pytest.approx(q["bitops_t"])


def test_fake_quantize_grid():
    x = np.linspace(-2.0, 2.0, 101, dtype=np.float32).reshape(1, 101)
    q = odmq.fake_quantize(x, -1.0, 1.0, 2)
    assert q.shape == x.shape
    np.testing.assert_allclose(np.unique(q), [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0], rtol=1e-6)


def test_quality_identity_and_noise():
    rng = np.random.default_rng(0)
    hr = rng.uniform(size=(2, 3, 24, 24)).astype(np.float32)
    scores = odmq.quality(hr, hr, shave=2)
    assert scores == [(100.0, pytest.approx(1.0))] * 2
    noisy = np.clip(hr + rng.normal(scale=0.05, size=hr.shape), 0, 1).astype(np.float32)
    psnr, ssim = odmq.quality(noisy, hr, shave=2)[0]
    assert 20.0 < psnr < 40.0
    assert 0.0 < ssim < 1.0


def test_config_errors():
    c = odmq.RunConfig(channels=4, epochs=1)
    assert c.get("channels") == "4"
    assert "channels" in dict(odmq.RunConfig.keys())
    with pytest.raises(odmq.ConfigError):
        c.set("chanels", "4")
    with pytest.raises(odmq.ConfigError):
        c.apply_text("channels four\n")


def test_small_pipeline(tmp_path):
    c = odmq.RunConfig(
        output_dir=tmp_path,
        train_patches=32,
        eval_patches=4,
        pretrain_steps=10,
        num_blocks=2,
        epochs=1,
        optimizer="adam",
        lr0=1e-3,
    )
    odmq.pretrain(c)
    plan = odmq.analyze(c)
    assert len(plan["reports"]) == 4
    rows = odmq.train(c)
    assert rows and set(rows[0]) == {"step", "loss_r", "loss_v", "conflict_ratio", "lr"}
    assert (tmp_path / "telemetry.csv").read_text().startswith("step,loss_r,loss_v,conflict_ratio,lr\n")
    result = odmq.evaluate(c)
    assert len(result["per_image"]) == 4
    assert result["psnr_db"] > 10.0


def test_corrupt_checkpoint(tmp_path):
    (tmp_path / "bad.odmq").write_bytes(b"XXXXXXXX")
    c = odmq.RunConfig(output_dir=tmp_path, checkpoint=tmp_path / "bad.odmq")
    with pytest.raises(odmq.FormatError):
        odmq.evaluate(c)
