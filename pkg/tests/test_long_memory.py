import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from memassoc.errors import ContractError, DimensionError, VariantError
from memassoc.long_memory import (
    ClassPriorSet, GaussianPosterior, LambdaHotConfig, LongTermModel, Variant, decode_features,
    decode_root, encode_features, kl_to_prior, lambda_hot, posterior, recall, recognize,
    reconstruction_loss, reparameterize, total_loss,
)
from memassoc.rng import Rng
from memassoc.short_memory import ShortTermMemory, onehot
from memassoc.tensor import Tensor


def small_model(variant, seed=0, **kw):
    kw = {"root_dim": 6, "latent_dim": 4, "hidden": (10, 8, 7), **kw}
    return LongTermModel.init(variant, 12, 3, Rng(seed), **kw)


# ---------------------------------------------------------------- lambda-hot priors


def test_lambda_hot_vectors():
    cfg = LambdaHotConfig(num_classes=4, scale=6.0, padded_dim=8)
    assert np.array_equal(lambda_hot(cfg, 0), [6, 0, 0, 0, 0, 0, 0, 0])
    assert np.array_equal(lambda_hot(cfg, 2), [0, 0, 6, 0, 0, 0, 0, 0])
    assert np.linalg.norm(lambda_hot(cfg, 1) - lambda_hot(cfg, 3)) == pytest.approx(6 * math.sqrt(2), abs=1e-12)
    with pytest.raises(IndexError):
        lambda_hot(cfg, 4)


def test_lambda_hot_config_validation():
    with pytest.raises(ContractError):
        LambdaHotConfig(num_classes=4, padded_dim=3)
    assert LambdaHotConfig(num_classes=5).padded_dim == 5


def test_prior_set_rows_and_distances():
    priors = ClassPriorSet(LambdaHotConfig(10, 6.0, 16))
    for i in range(10):
        assert np.array_equal(priors.means[i], lambda_hot(priors.config, i))
    d = priors.pairwise_distances()
    off = d[~np.eye(10, dtype=bool)]
    assert np.all(off == math.sqrt(72.0))
    assert np.all(off >= 6.0)


# ---------------------------------------------------------------- forward pieces


def test_model_widths():
    a, b = small_model("A"), small_model("B")
    assert a.params["post.1.w"].shape == (3 + 6, 7)
    assert b.params["post.1.w"].shape == (6, 7)
    assert a.params["root.1.w"].shape == (3 + 4, 7)
    assert b.params["root.1.w"].shape == (4, 7)
    full = LongTermModel.init("B", 256, 10, Rng(0))
    assert full.params["enc.1.w"].shape == (256, 256)
    assert full.params["enc.2.w"].shape == (256, 128)
    assert full.params["enc.3.w"].shape == (128, 64)
    assert full.params["post.mu.w"].shape == (64, 16)


def test_init_is_glorot_uniform_with_zero_bias():
    m = LongTermModel.init("B", 256, 3, Rng(1))
    bound = math.sqrt(6 / (256 + 256))
    assert np.abs(m.params["enc.1.w"]).max() <= bound
    assert np.abs(m.params["enc.1.w"]).max() > 0.95 * bound
    assert all(not v.any() for k, v in m.params.items() if k.endswith(".b"))


def test_type_b_latent_must_hold_classes():
    with pytest.raises(ContractError):
        LongTermModel("B", 12, 20, latent_dim=16)


def test_encode_zero_network():
    m = LongTermModel.zeros("B", 12, 3, root_dim=6, latent_dim=4)
    assert not encode_features(m, np.ones((2, 12))).data.any()


def test_encode_identical_rows():
    m = small_model("B")
    h = encode_features(m, np.tile(Rng(3).uniform((12,)), (2, 1))).data
    assert np.array_equal(h[0], h[1])


def test_encode_matches_brute_force_arithmetic():
    m = small_model("B", seed=5)
    x = Rng(6).uniform((3, 12))

    def dense(v, w, b):
        out = [[sum(v[i][k] * w[k][j] for k in range(len(w))) + b[j] for j in range(len(b))]
               for i in range(len(v))]
        return out

    def relu(v):
        return [[max(a, 0.0) for a in row] for row in v]

    P = {k: v.tolist() for k, v in m.params.items()}
    h = relu(dense(x.tolist(), P["enc.1.w"], P["enc.1.b"]))
    h = relu(dense(h, P["enc.2.w"], P["enc.2.b"]))
    h = dense(h, P["enc.3.w"], P["enc.3.b"])
    assert np.allclose(encode_features(m, x).data, h, rtol=1e-13, atol=1e-13)


def test_encode_wrong_width():
    with pytest.raises(DimensionError):
        encode_features(small_model("B"), np.ones((2, 11)))


def test_posterior_variant_contract():
    a, b = small_model("A"), small_model("B")
    h = np.zeros((2, 6))
    with pytest.raises(VariantError):
        posterior(b, np.eye(3)[:2], h)
    with pytest.raises(VariantError):
        posterior(a, None, h)
    with pytest.raises(VariantError):
        decode_root(b, np.eye(3)[:2], np.zeros((2, 4)))


def test_posterior_zero_network_is_standard_normal():
    m = LongTermModel.zeros("B", 12, 3, root_dim=6, latent_dim=4)
    post = posterior(m, None, np.ones((2, 6)))
    assert not post.mu.data.any() and not post.logvar.data.any()
    assert np.array_equal(post.std, np.ones((2, 4)))


def test_type_a_condition_changes_posterior_and_decoding():
    m = small_model("A", seed=2)
    h = Rng(1).normal((1, 6))
    p0 = posterior(m, onehot(0, 3)[None], h)
    p1 = posterior(m, onehot(1, 3)[None], h)
    assert not np.allclose(p0.mu.data, p1.mu.data)
    assert not np.allclose(p0.logvar.data, p1.logvar.data)
    # independent recompute of the conditioned first layer
    P = m.params
    hidden = np.maximum(np.concatenate([onehot(1, 3), h[0]]) @ P["post.1.w"] + P["post.1.b"], 0)
    assert np.allclose(p1.mu.data[0], hidden @ P["post.mu.w"] + P["post.mu.b"], rtol=1e-13)
    z = Rng(4).normal((1, 4))
    r0 = decode_root(m, onehot(0, 3)[None], z).data
    r2 = decode_root(m, onehot(2, 3)[None], z).data
    assert not np.allclose(r0, r2)
    assert r0.shape == (1, 6)


def test_reparameterize():
    mu = Tensor(Rng(0).normal((3, 4)))
    post = GaussianPosterior(mu, Tensor(Rng(1).normal((3, 4))))
    assert reparameterize(post, np.zeros((3, 4))).data.tobytes() == mu.data.tobytes()
    e = Rng(2).normal((3, 4))
    unit = GaussianPosterior(mu, Tensor(np.zeros((3, 4))))
    assert np.array_equal(reparameterize(unit, e).data, mu.data + e)
    z = reparameterize(GaussianPosterior(Tensor([[1.0]]), Tensor([[math.log(4)]])), [[0.5]])
    assert z.item() == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(DimensionError):
        reparameterize(post, np.zeros((3, 3)))


def test_decode_features_range_and_zero_network():
    m = small_model("B")
    out = decode_features(m, Rng(0).normal((5, 6)) * 50).data
    # large logits may round to exactly 0 or 1 in float64
    assert out.shape == (5, 12) and np.all((out >= 0) & (out <= 1))
    out = decode_features(m, Rng(0).normal((5, 6))).data
    assert np.all((out > 0) & (out < 1))
    z = LongTermModel.zeros("B", 12, 3, root_dim=6, latent_dim=4)
    assert np.all(decode_features(z, np.ones((2, 6))).data == 0.5)


def test_round_trip_shape():
    m = small_model("B")
    x = Rng(0).uniform((4, 12))
    h = encode_features(m, x)
    assert decode_features(m, decode_root(m, None, posterior(m, None, h).mu)).shape == (4, 12)


# ---------------------------------------------------------------- KL


def _post(mu, logvar):
    return GaussianPosterior(Tensor(np.atleast_2d(mu)), Tensor(np.atleast_2d(logvar)))


def test_kl_identical_is_zero():
    assert kl_to_prior(_post([0.3, -1.0], [0.0, 0.0]), [0.3, -1.0]).item() == 0.0


def test_kl_direct_value():
    assert kl_to_prior(_post([1.0], [0.0]), [0.0]).item() == 0.5


def test_kl_dimension_mismatch():
    with pytest.raises(DimensionError):
        kl_to_prior(_post([1.0, 2.0], [0.0, 0.0]), [0.0])


def test_kl_per_sample_prior_means_average_over_batch():
    post = _post([[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]])
    # row 0 vs prior 0 -> 0.5, row 1 vs prior (2, 0) -> 2.0
    assert kl_to_prior(post, [[0.0, 0.0], [2.0, 0.0]]).item() == pytest.approx(1.25)


def monte_carlo_kl(mu, sigma, m, n, gen):
    z = mu + sigma * gen.standard_normal((n, mu.size))
    log_q = (-0.5 * ((z - mu) / sigma) ** 2 - np.log(sigma)).sum(axis=1)
    log_p = (-0.5 * (z - m) ** 2).sum(axis=1)
    return float((log_q - log_p).mean())


def test_kl_matches_monte_carlo():
    gen = np.random.default_rng(2)
    for _ in range(10):
        mu, m = gen.uniform(-2, 2, 2), gen.uniform(-2, 2, 2)
        sigma = gen.uniform(0.5, 2, 2)
        closed = kl_to_prior(_post(mu, np.log(sigma**2)), m).item()
        assert abs(closed - monte_carlo_kl(mu, sigma, m, 10**6, gen)) < 0.01


finite = st.floats(-3, 3, allow_nan=False)


@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (3, 4), elements=finite),
       arrays(np.float64, (4,), elements=st.floats(-8, 8)))
@settings(max_examples=200, deadline=None)
def test_kl_is_nonnegative(mu, logvar, m):
    assert kl_to_prior(_post(mu, logvar), m).item() >= -1e-12


# ---------------------------------------------------------------- reconstruction


def test_bce_half_half():
    assert reconstruction_loss(np.full((1, 4), 0.5), np.full((1, 4), 0.5)).item() == pytest.approx(4 * math.log(2))


def test_bce_decreases_towards_target():
    gen = np.random.default_rng(0)
    x = gen.uniform(size=(1, 10))
    start = gen.uniform(0.05, 0.95, size=(1, 10))
    losses = [reconstruction_loss(x, start + t * (x - start)).item() for t in np.linspace(0, 1, 21)]
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_bce_clamps_saturated_outputs():
    val = reconstruction_loss(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])).item()
    assert np.isfinite(val) and val == pytest.approx(-2 * math.log(1e-7), rel=1e-6)
    assert np.isfinite(reconstruction_loss(np.array([[1.0]]), np.array([[1.0]])).item())


# ---------------------------------------------------------------- total loss


def batch_for(seed=0, n=6):
    mem = ShortTermMemory(3)
    rng = Rng(seed)
    for i in range(9):
        mem.insert(i % 3, rng.uniform((12,)))
    return mem.sample_batch(n, rng)


@pytest.mark.parametrize("variant", ["A", "B"])
def test_total_loss_is_sum_of_nonnegative_terms(variant):
    m = small_model(variant)
    terms = total_loss(m, batch_for(), Rng(0))
    assert terms.kl.item() >= 0 and terms.recon.item() >= 0 and terms.root_mse.item() >= 0
    assert terms.total.item() == terms.kl.item() + terms.recon.item() + m.root_weight * terms.root_mse.item()


def test_type_b_kl_uses_class_prior():
    m = LongTermModel.zeros("B", 12, 3, root_dim=6, latent_dim=4)
    terms = total_loss(m, batch_for(), Rng(0))
    # mu = 0, logvar = 0: KL to N(6 e_i, I) is 36 / 2 per sample
    assert terms.kl.item() == pytest.approx(18.0)
    a = LongTermModel.zeros("A", 12, 3, root_dim=6, latent_dim=4)
    assert total_loss(a, batch_for(), Rng(0)).kl.item() == 0.0


def test_total_loss_empty_batch():
    from memassoc.short_memory import Batch

    with pytest.raises(ContractError):
        total_loss(small_model("B"), Batch(np.zeros((0, 12)), [], np.zeros((0, 3))), Rng(0))


@pytest.mark.parametrize("variant", ["A", "B"])
def test_total_loss_gradients_small_model_all_coordinates(variant):
    from memassoc.gradcheck import grad_check

    m = small_model(variant, seed=3)
    batch = batch_for(3)
    report = grad_check(lambda p, tape: total_loss(m, batch, Rng(9), p=p).total, m.params)
    assert report.max_error < 1e-4
    assert sum(report.checked.values()) > 0.9 * sum(v.size for v in m.params.values())


# ---------------------------------------------------------------- recall / recognition


@pytest.mark.parametrize("variant", ["A", "B"])
def test_recall_shapes_and_determinism(variant):
    m = small_model(variant)
    assert recall(m, None, 1, 0, Rng(0)).shape == (0, 12)
    a = recall(m, None, 2, 5, Rng(4))
    assert a.shape == (5, 12)
    assert np.array_equal(a, recall(m, None, 2, 5, Rng(4)))
    with pytest.raises(IndexError):
        recall(m, None, 3, 1, Rng(0))


def test_type_b_recall_samples_around_prior_mean():
    # same noise, different prior mean
    m = small_model("B")
    priors = m.priors()
    x0 = recall(m, priors, 0, 3, Rng(8))
    x1 = recall(m, priors, 1, 3, Rng(8))
    assert not np.allclose(x0, x1)


def test_recognize_nearest_prior_and_ties():
    m = LongTermModel.zeros("B", 12, 3, root_dim=6, latent_dim=4)
    priors = m.priors()
    # mu = post.mu.b for a zero network
    m.params["post.mu.b"] = priors.mean(2).copy()
    assert recognize(m, priors, np.zeros(12)) == 2
    m.params["post.mu.b"] = (priors.mean(0) + priors.mean(1)) / 2
    assert recognize(m, priors, np.zeros(12)) == 0
    assert list(recognize(m, priors, np.zeros((3, 12)))) == [0, 0, 0]


def test_recognize_rejects_type_a():
    with pytest.raises(VariantError):
        recognize(small_model("A"), None, np.zeros(12))


def test_variant_enum_round_trip():
    assert Variant("A") is Variant.A and small_model("B").variant is Variant.B
