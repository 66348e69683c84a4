import numpy as np
import pytest

from helpers import central_difference, max_relative_error
from mlfexplain.autoencoders import (
    VaeModel,
    build_residual_layer,
    build_segmentation_autoencoder,
    build_vae_autoencoder,
    init_vae,
    kl_divergence,
    load_vae,
    reconstruction_error,
    residual_as_layer,
    save_vae,
    train_vae,
    vae_encode,
    vae_loss,
    vae_loss_and_grads,
    vae_sample,
)
from mlfexplain.data import synth_images
from mlfexplain.errors import DimensionError, HierarchyError, ValidationError
from mlfexplain.nn import TrainConfig, _pack_params, _unpack_params, forward, identity_network
from mlfexplain.segmentation import Partition, SegmentationHierarchy, auto_segment, flat_segment


def _two_by_two():
    img = np.array([[1.0, 2.0], [3.0, 4.0]])
    fine = Partition(np.array([0, 0, 1, 1]), 2, (2, 2))
    coarse = Partition(np.zeros(4, dtype=np.int64), 1, (2, 2))
    return img, coarse, fine


def test_flat_decoder_reconstructs_from_ones():
    img, _, fine = _two_by_two()
    ae = build_segmentation_autoencoder(img, SegmentationHierarchy((fine,), ()))
    assert ae.kind == "flat-seg" and len(ae.decoder.layers) == 1
    np.testing.assert_array_equal(ae.decode([1.0, 1.0], with_residual=False), [1, 2, 3, 4])
    np.testing.assert_array_equal(ae.residual, np.zeros(4))


def test_two_level_decoder_containment_weights():
    img, coarse, fine = _two_by_two()
    h = SegmentationHierarchy((coarse, fine), (np.array([0, 0]),))
    ae = build_segmentation_autoencoder(img, h)
    assert ae.kind == "hier-seg" and len(ae.decoder.layers) == 2
    np.testing.assert_array_equal(ae.decoder.layers[0].weights, [[1.0], [1.0]])
    np.testing.assert_array_equal(ae.encode(), [1.0])
    np.testing.assert_array_equal(ae.decode([1.0]), [1, 2, 3, 4])


def test_containment_is_zero_for_foreign_regions():
    img = np.arange(8, dtype=float).reshape(2, 4)
    coarse = Partition(np.array([0, 0, 1, 1, 0, 0, 1, 1]), 2, (2, 4))
    fine = Partition(np.array([0, 1, 2, 3, 0, 1, 2, 3]), 4, (2, 4))
    h = SegmentationHierarchy((coarse, fine), (np.array([0, 0, 1, 1]),))
    w = build_segmentation_autoencoder(img, h).decoder.layers[0].weights
    np.testing.assert_array_equal(w, [[1, 0], [1, 0], [0, 1], [0, 1]])


def test_decoder_layers_are_linear_with_zero_bias():
    img = np.random.default_rng(0).random((8, 8, 3))
    ae = build_segmentation_autoencoder(img, auto_segment(img, min_size=4))
    for layer in ae.decoder.layers:
        assert layer.activation == "identity" and np.all(layer.biases == 0)
        assert set(np.unique(layer.weights)) <= set(np.unique(np.r_[0.0, 1.0, img.ravel()]))


def test_size_mismatch_rejected():
    img, _, fine = _two_by_two()
    with pytest.raises(HierarchyError):
        build_segmentation_autoencoder(np.zeros((3, 3)), SegmentationHierarchy((fine,), ()))


def test_non_nested_hierarchy_rejected():
    img, _, fine = _two_by_two()
    coarse = Partition(np.array([0, 1, 0, 1]), 2, (2, 2))
    with pytest.raises(HierarchyError):
        build_segmentation_autoencoder(img, SegmentationHierarchy((coarse, fine), (np.array([0, 0]),)))


@pytest.mark.parametrize("seed", range(6))
def test_segmentation_autoencoding_is_exact(seed):
    rng = np.random.default_rng(seed)
    img = rng.random((6 + seed, 7, 1 + seed % 3))
    h = auto_segment(img, min_size=seed)
    ae = build_segmentation_autoencoder(img, h)
    np.testing.assert_array_equal(ae.residual, 0.0)
    assert np.max(np.abs(ae.decode(ae.encode()) - img.ravel())) <= 1e-12
    assert ae.level_sizes == [p.n_regions for p in h.levels]


@pytest.mark.parametrize("c", [0.0, -2.5, 3.0, 1e3])
def test_segmentation_decoder_is_linear(c):
    img = np.random.default_rng(1).random((6, 6))
    ae = build_segmentation_autoencoder(img, auto_segment(img, min_size=2))
    out = ae.decode(c * np.ones(ae.latent_dim), with_residual=False)
    np.testing.assert_allclose(out, c * img.ravel(), rtol=1e-15, atol=0)


def test_zeroing_one_code_blanks_exactly_that_segment():
    img = np.random.default_rng(2).random((7, 7, 3)) + 0.1
    part = flat_segment(img, 0.4, min_size=3)
    ae = build_segmentation_autoencoder(img, SegmentationHierarchy((part,), ()))
    for i in range(part.n_regions):
        h = np.ones(part.n_regions)
        h[i] = 0.0
        out = ae.decode(h, with_residual=False).reshape(img.shape)
        mask = part.mask(i)
        assert np.all(out[mask] == 0)
        np.testing.assert_array_equal(out[~mask], img[~mask])


def test_residual_layer_examples():
    dec = identity_network(3)
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(build_residual_layer(x, dec, x), 0.0)
    r = build_residual_layer(x, dec, np.zeros(3))
    np.testing.assert_array_equal(r, x)
    layer = residual_as_layer(r)
    np.testing.assert_array_equal(layer.weights, np.zeros((3, 3)))
    with pytest.raises(DimensionError):
        build_residual_layer(np.zeros(4), dec, np.zeros(3))


def test_vae_shapes_and_default_latent_count():
    vae = init_vae(48)
    assert vae.latent_dim == 10
    assert [l.n_out for l in vae.encoder.layers] == [256, 64, 20]
    assert [l.n_out for l in vae.decoder.layers] == [64, 256, 48]
    mu, lv = vae_encode(vae, np.random.default_rng(0).random(48))
    assert mu.shape == lv.shape == (10,)


def test_vae_dimension_checks():
    a = init_vae(6, 2, hidden=(4,))
    b = init_vae(6, 3, hidden=(4,))
    with pytest.raises(DimensionError):
        VaeModel(a.encoder, b.decoder)
    with pytest.raises(DimensionError):
        build_vae_autoencoder(a, np.zeros(5))


def test_vae_autoencoder_is_exact_via_residual():
    rng = np.random.default_rng(3)
    vae = init_vae(30, 4, hidden=(16, 8), seed=2)
    for _ in range(5):
        x = rng.random(30)
        ae = build_vae_autoencoder(vae, x)
        assert ae.kind == "vae" and ae.catalog == tuple(f"latent{i}" for i in range(4))
        np.testing.assert_array_equal(ae.encode(), vae_encode(vae, x)[0])
        np.testing.assert_array_equal(ae.residual, x - forward(vae.decoder, ae.encode()).output)
        assert np.max(np.abs(ae.decode(ae.encode()) - x)) <= 1e-12


def test_sampling_examples():
    eps = np.array([0.3, -1.2, 2.0])
    np.testing.assert_array_equal(vae_sample(np.zeros(3), np.zeros(3), eps=eps), eps)
    mu = np.array([1.0, -2.0, 0.5])
    z = vae_sample(mu, np.full(3, -np.inf), eps=eps)
    assert np.all(np.abs(z - mu) <= 1e-2 * np.abs(eps))
    np.testing.assert_array_equal(vae_sample(mu, np.zeros(3), seed=5), vae_sample(mu, np.zeros(3), seed=5))


def test_kl_examples():
    assert kl_divergence(np.zeros(4), np.zeros(4)) == 0.0
    assert kl_divergence([1.0], [0.0]) == pytest.approx(0.5, abs=1e-15)
    rng = np.random.default_rng(0)
    assert np.all(kl_divergence(rng.normal(size=(50, 3)), rng.normal(size=(50, 3))) >= 0)


def test_loss_examples():
    x = np.array([0.2, 0.4])
    assert vae_loss(x, x, np.zeros(2), np.zeros(2), 4.0) == 0.0
    assert vae_loss(x, x + 1, np.array([1.0]), np.array([0.0]), 2.0) == pytest.approx(2.0 + 1.0)
    with pytest.raises(ValidationError):
        vae_loss(x, x, np.zeros(1), np.zeros(1), -1.0)


@pytest.mark.parametrize("seed", range(3))
def test_elbo_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    vae = init_vae(5, 2, hidden=(4,), beta=1.5, seed=seed)
    X = rng.random((3, 5))
    eps = rng.standard_normal((3, 2))
    enc, dec = _unpack_params(vae.encoder), _unpack_params(vae.decoder)

    def loss():
        cur = VaeModel(_pack_params(vae.encoder, enc, copy=False), _pack_params(vae.decoder, dec, copy=False), 1.5)
        return vae_loss_and_grads(cur, X, eps)[0]

    _, eg, dg, _ = vae_loss_and_grads(vae, X, eps)
    analytic = [a for pair in eg + dg for a in pair]
    assert max_relative_error(analytic, central_difference(loss, enc + dec)) < 1e-4


def _cfg(**kw):
    base = dict(learning_rate=1e-3, batch_size=32, loss="vae-elbo", clip_norm=10.0, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def test_single_repeated_image_is_memorised_without_kl():
    x = synth_images(3, size=8, seed=0).flat[0]
    X = np.tile(x, (32, 1))
    vae = train_vae(X, beta=0.0, cfg=_cfg(epochs=150))
    per_pixel = reconstruction_error(vae, X) / x.size
    assert per_pixel < 0.01 * x.var()


def test_huge_beta_collapses_the_posterior_mean():
    X = synth_images(40, size=8, seed=1).flat
    vae = train_vae(X, beta=1e6, cfg=_cfg(epochs=30, batch_size=10))
    mu, _ = vae_encode(vae, X)
    assert np.linalg.norm(mu, axis=1).max() < 0.1


def test_training_is_deterministic_and_improves():
    X = synth_images(64, size=8, seed=2).flat
    hist_a, hist_b = [], []
    a = train_vae(X, latent_dim=4, cfg=_cfg(epochs=6), hidden=(32, 16), history=hist_a, warmup_epochs=2)
    b = train_vae(X, latent_dim=4, cfg=_cfg(epochs=6), hidden=(32, 16), history=hist_b, warmup_epochs=2)
    assert a.encoder.layers[0].weights.tobytes() == b.encoder.layers[0].weights.tobytes()
    assert hist_a == hist_b
    assert hist_a[-1][1] <= hist_a[0][1]
    assert a.latent_std.shape == (4,)


def test_empty_dataset_rejected():
    with pytest.raises(ValidationError):
        train_vae(np.zeros((0, 4)))


def test_save_and_load_round_trip(tmp_path):
    X = synth_images(16, size=8, seed=3).flat
    vae = train_vae(X, latent_dim=3, cfg=_cfg(epochs=2), hidden=(8,))
    path = save_vae(tmp_path / "vae.json", vae)
    back = load_vae(path)
    assert back.beta == vae.beta and back.latent_dim == 3
    np.testing.assert_array_equal(back.latent_std, vae.latent_std)
    np.testing.assert_array_equal(vae_encode(back, X)[0], vae_encode(vae, X)[0])
