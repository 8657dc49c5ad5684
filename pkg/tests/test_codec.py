import numpy as np
import pytest

import c2f.codec as codec
import c2f.weights as wts
from c2f.errors import ContractViolation, ModelIdMismatchError
from c2f.evaluation import bpp, psnr
from c2f.transforms import ArchConfig, CodecModel

ARCH = ArchConfig(n_main=8, c_y=8, c_z=4)


@pytest.fixture(scope="module")
def model():
    return CodecModel(ARCH, lambda_tag=100, seed=1)


def rand_img(h, w, seed=0):
    rng = np.random.default_rng(seed)
    base = np.linspace(0, 255, w, dtype=np.float64)[None, :, None]
    noise = rng.normal(0, 12, (h, w, 3))
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def assert_rate_bound(res):
    assert res.stream_bits <= res.modeled_bits + 256 + 0.001 * res.modeled_bits


def test_roundtrip_latents_bit_exact(model):
    img = rand_img(64, 64)
    res = codec.encode_array(model, img)
    out = codec.decode_array(model, res.data)
    assert out.latent_digest == res.latent_digest
    assert out.image.shape == img.shape
    assert_rate_bound(res)


def test_roundtrip_nonaligned_dims(model):
    img = rand_img(50, 70, seed=1)
    res = codec.encode_array(model, img)
    out = codec.decode_array(model, res.data)
    assert out.image.shape == (50, 70, 3)
    assert out.latent_digest == res.latent_digest
    assert_rate_bound(res)
    assert (out.header.pad_h, out.header.pad_w) == (64, 128)


def test_decode_is_deterministic(model):
    img = rand_img(64, 64, seed=2)
    res = codec.encode_array(model, img)
    a = codec.decode_array(model, res.data)
    b = codec.decode_array(model, res.data)
    np.testing.assert_array_equal(a.image, b.image)


def test_encode_is_deterministic(model):
    img = rand_img(64, 64, seed=3)
    assert codec.encode_array(model, img).data == codec.encode_array(model, img).data


def test_psnr_finite_on_roundtrip(model):
    img = rand_img(64, 64, seed=4)
    out = codec.decode_array(model, codec.encode_array(model, img).data)
    value = psnr(img, out.image)
    assert np.isfinite(value)


def test_wrong_model_refused(model):
    img = rand_img(64, 64, seed=5)
    res = codec.encode_array(model, img)
    other = CodecModel(ARCH, lambda_tag=999, seed=77)
    with pytest.raises(ModelIdMismatchError):
        codec.decode_array(other, res.data)


def test_bpp_accounts_for_whole_file(model):
    img = rand_img(64, 64, seed=6)
    res = codec.encode_array(model, img)
    assert bpp(len(res.data), 64, 64) == pytest.approx(8 * len(res.data) / (64 * 64))


def test_encoder_input_contract(model):
    with pytest.raises(ContractViolation):
        codec.encode_array(model, np.zeros((4, 4, 3), np.float32))
    with pytest.raises(ContractViolation):
        codec.encode_array(model, np.zeros((4, 4), np.uint8))


def test_rate_bound_various_images(model):
    for seed in range(5):
        img = rand_img(64, 96, seed=10 + seed)
        assert_rate_bound(codec.encode_array(model, img))


def test_saved_model_roundtrips_container(tmp_path, model):
    """A fresh model loaded from disk decodes containers from the original."""
    path = tmp_path / "m.c2fw"
    wts.save_model(model, path)
    loaded = wts.load_model(path)
    img = rand_img(64, 64, seed=7)
    res = codec.encode_array(model, img)
    out = codec.decode_array(loaded, res.data)
    assert out.latent_digest == res.latent_digest
    reference = codec.decode_array(model, res.data)
    np.testing.assert_array_equal(out.image, reference.image)
