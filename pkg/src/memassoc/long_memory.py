"""Long-term generative memories.

Both variants share one pipeline::

    x -> feature encoder -> h_root -> posterior head -> (mu, logvar)
      -> z = mu + std * eps -> root decoder -> h_root_hat -> feature decoder -> x_hat

Type A is a conditional VAE: the posterior head and the root decoder both see
the one-hot class key, and the prior is N(0, I). Type B has unconditional
heads; the class enters only through the prior N(lambda * c'_i, I), whose
mean is a scaled one-hot vector zero-padded to the latent width. That prior
set is the long-term memory itself, and the posterior mean doubles as a
recognizer.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError, VariantError
from .rng import Rng
from .short_memory import Batch, onehot
from .tensor import Tape, Tensor

BCE_CLAMP = 1e-7


class Variant(str, enum.Enum):
    A = "A"
    B = "B"


# ---------------------------------------------------------------- class priors


@dataclass(frozen=True)
class LambdaHotConfig:
    num_classes: int
    scale: float = 6.0
    padded_dim: int | None = None

    def __post_init__(self):
        if self.padded_dim is None:
            object.__setattr__(self, "padded_dim", self.num_classes)
        if self.num_classes <= 0 or self.scale <= 0:
            raise ContractError("num_classes and scale must be positive")
        if self.padded_dim < self.num_classes:
            raise ContractError(f"padded_dim {self.padded_dim} < num_classes {self.num_classes}")


def lambda_hot(cfg: LambdaHotConfig, i: int) -> np.ndarray:
    """``scale`` at index ``i``, zero everywhere else including the padding."""
    if not 0 <= i < cfg.num_classes:
        raise IndexError(f"lambda_hot: class {i} out of range [0, {cfg.num_classes})")
    return cfg.scale * onehot(i, cfg.padded_dim)


@dataclass
class ClassPriorSet:
    """Per-class prior means; covariance is always the identity."""

    config: LambdaHotConfig
    means: np.ndarray = field(init=False)

    def __post_init__(self):
        self.means = np.stack([lambda_hot(self.config, i) for i in range(self.config.num_classes)])

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    @property
    def scale(self) -> float:
        return self.config.scale

    def mean(self, i: int) -> np.ndarray:
        if not 0 <= i < self.num_classes:
            raise IndexError(f"class {i} out of range [0, {self.num_classes})")
        return self.means[i]

    def pairwise_distances(self) -> np.ndarray:
        diff = self.means[:, None, :] - self.means[None, :, :]
        return np.sqrt((diff * diff).sum(axis=-1))


# ---------------------------------------------------------------- model


@dataclass
class GaussianPosterior:
    mu: Tensor
    logvar: Tensor

    @property
    def std(self) -> np.ndarray:
        return np.exp(0.5 * self.logvar.data)


HIDDEN = (256, 128, 64)


@dataclass
class LongTermModel:
    variant: Variant
    input_dim: int
    num_classes: int
    root_dim: int = 64
    latent_dim: int = 16
    prior_scale: float = 6.0
    root_weight: float = 1.0
    hidden: tuple[int, int, int] = HIDDEN
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.variant is Variant.B and self.latent_dim < self.num_classes:
            raise ContractError(
                f"Type B needs latent_dim >= num_classes, got {self.latent_dim} < {self.num_classes}")

    @property
    def cond_dim(self) -> int:
        return self.num_classes if self.variant is Variant.A else 0

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Parameter shapes in canonical (serialization) order."""
        D, R, L, C = self.input_dim, self.root_dim, self.latent_dim, self.cond_dim
        h1, h2, hp = self.hidden
        layers = [
            ("enc.1", D, h1), ("enc.2", h1, h2), ("enc.3", h2, R),
            ("post.1", C + R, hp), ("post.mu", hp, L), ("post.logvar", hp, L),
            ("root.1", C + L, hp), ("root.2", hp, R),
            ("dec.1", R, h2), ("dec.2", h2, h1), ("dec.3", h1, D),
        ]
        out = {}
        for name, fan_in, fan_out in layers:
            out[f"{name}.w"] = (fan_in, fan_out)
            out[f"{name}.b"] = (fan_out,)
        return out

    @classmethod
    def init(cls, variant, input_dim: int, num_classes: int, rng: Rng, **kw) -> "LongTermModel":
        """Glorot-uniform weights drawn in canonical order, zero biases."""
        model = cls(variant, input_dim, num_classes, **kw)
        for name, shape in model.shapes().items():
            if len(shape) == 2:
                a = math.sqrt(6.0 / (shape[0] + shape[1]))
                model.params[name] = (2.0 * rng.uniform(shape) - 1.0) * a
            else:
                model.params[name] = np.zeros(shape)
        return model

    @classmethod
    def zeros(cls, variant, input_dim: int, num_classes: int, **kw) -> "LongTermModel":
        model = cls(variant, input_dim, num_classes, **kw)
        model.params = {k: np.zeros(s) for k, s in model.shapes().items()}
        return model

    def priors(self) -> ClassPriorSet:
        return ClassPriorSet(LambdaHotConfig(self.num_classes, self.prior_scale, self.latent_dim))

    def bind(self, tape: Tape | None = None) -> dict[str, Tensor]:
        """Parameters as tape leaves, or as constants when ``tape`` is None."""
        if tape is None:
            return {k: Tensor(v) for k, v in self.params.items()}
        return {k: tape.leaf(v) for k, v in self.params.items()}


def _dense(p: dict[str, Tensor], name: str, x: Tensor) -> Tensor:
    return x @ p[f"{name}.w"] + p[f"{name}.b"]


def _params(model: LongTermModel, p):
    return model.bind() if p is None else p


def _with_condition(model: LongTermModel, cond, v: Tensor) -> Tensor:
    if model.variant is Variant.A:
        if cond is None:
            raise VariantError("Type A requires a class condition")
        cond = T.as_tensor(cond)
        if cond.shape != (v.shape[0], model.num_classes):
            raise DimensionError(f"condition shape {cond.shape}, expected {(v.shape[0], model.num_classes)}")
        return T.concat([cond, v])
    if cond is not None:
        raise VariantError("Type B heads take no class condition")
    return v


def encode_features(model: LongTermModel, x, p=None) -> Tensor:
    p = _params(model, p)
    x = T.as_tensor(x)
    if x.data.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionError(f"encode_features: input shape {x.shape}, expected (batch, {model.input_dim})")
    h = T.relu(_dense(p, "enc.1", x))
    h = T.relu(_dense(p, "enc.2", h))
    return _dense(p, "enc.3", h)


def posterior(model: LongTermModel, cond, h_root, p=None) -> GaussianPosterior:
    p = _params(model, p)
    h = T.relu(_dense(p, "post.1", _with_condition(model, cond, T.as_tensor(h_root))))
    return GaussianPosterior(_dense(p, "post.mu", h), _dense(p, "post.logvar", h))


def reparameterize(post: GaussianPosterior, eps) -> Tensor:
    eps = T.as_tensor(eps)
    if eps.shape != post.mu.shape:
        raise DimensionError(f"reparameterize: noise shape {eps.shape} != mean shape {post.mu.shape}")
    return post.mu + T.exp(0.5 * post.logvar) * eps


def decode_root(model: LongTermModel, cond, z, p=None) -> Tensor:
    p = _params(model, p)
    h = T.relu(_dense(p, "root.1", _with_condition(model, cond, T.as_tensor(z))))
    return _dense(p, "root.2", h)


def decode_features(model: LongTermModel, h_root_hat, p=None) -> Tensor:
    p = _params(model, p)
    h = T.relu(_dense(p, "dec.1", T.as_tensor(h_root_hat)))
    h = T.relu(_dense(p, "dec.2", h))
    return T.sigmoid(_dense(p, "dec.3", h))


# ---------------------------------------------------------------- losses


def kl_to_prior(post: GaussianPosterior, prior_mean) -> Tensor:
    """Closed-form KL(N(mu, diag(exp(logvar))) || N(m, I)), averaged over the batch.

    ``prior_mean`` is one vector shared by every row, or one row per sample.
    """
    m = np.asarray(prior_mean, dtype=np.float64)
    L = post.mu.shape[1]
    if m.shape[-1] != L or (m.ndim == 2 and m.shape[0] != post.mu.shape[0]) or m.ndim > 2:
        raise DimensionError(f"kl_to_prior: prior mean shape {m.shape} vs posterior {post.mu.shape}")
    diff = post.mu - m
    per_dim = T.exp(post.logvar) + diff * diff - 1.0 - post.logvar
    return T.mean(T.sum(per_dim, axis="cols")) * 0.5


def reconstruction_loss(x, x_hat) -> Tensor:
    """Pixel binary cross-entropy summed per sample, averaged over the batch."""
    x = T.as_tensor(x)
    x_hat = T.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise DimensionError(f"reconstruction_loss: {x.shape} vs {x_hat.shape}")
    q = T.clip(x_hat, BCE_CLAMP, 1.0 - BCE_CLAMP)
    ll = x * T.log(q) + (1.0 - x) * T.log(1.0 - q)
    return -T.mean(T.sum(ll, axis="cols"))


def root_mse(h_root: Tensor, h_root_hat: Tensor) -> Tensor:
    d = h_root - h_root_hat
    return T.mean(d * d)


@dataclass
class LossTerms:
    total: Tensor
    kl: Tensor
    recon: Tensor
    root_mse: Tensor
    tape: Tape | None
    params: dict[str, Tensor]


def total_loss(model: LongTermModel, batch: Batch, rng: Rng, tape: Tape | None = None,
               p: dict[str, Tensor] | None = None) -> LossTerms:
    """KL + BCE + root_weight * MSE(h_root, h_root_hat), every term a batch mean.

    Draws one standard normal per latent coordinate from ``rng``. With a fresh
    tape unless one (and its bound params ``p``) is supplied.
    """
    n = len(batch)
    if n == 0:
        raise ContractError("total_loss: empty batch")
    if p is None:
        tape = Tape() if tape is None else tape
        p = model.bind(tape)
    x = Tensor(batch.payloads)
    cond = batch.keys if model.variant is Variant.A else None

    h_root = encode_features(model, x, p)
    post = posterior(model, cond, h_root, p)
    z = reparameterize(post, rng.normal((n, model.latent_dim)))
    h_hat = decode_root(model, cond, z, p)
    x_hat = decode_features(model, h_hat, p)

    if model.variant is Variant.A:
        prior_mean = np.zeros(model.latent_dim)
    else:
        prior_mean = model.priors().means[batch.class_ids]
    kl = kl_to_prior(post, prior_mean)
    recon = reconstruction_loss(x, x_hat)
    mse = root_mse(h_root, h_hat)
    total = kl + recon + model.root_weight * mse
    return LossTerms(total, kl, recon, mse, tape, p)


# ---------------------------------------------------------------- recall / recognition


def recall(model: LongTermModel, priors: ClassPriorSet | None, i: int, n: int, rng: Rng) -> np.ndarray:
    """``n`` generated samples of class ``i``, shape (n, D)."""
    if not 0 <= i < model.num_classes:
        raise IndexError(f"recall: class {i} out of range [0, {model.num_classes})")
    if n == 0:
        return np.zeros((0, model.input_dim))
    eps = rng.normal((n, model.latent_dim))
    if model.variant is Variant.A:
        cond = np.tile(onehot(i, model.num_classes), (n, 1))
        z = eps
    else:
        priors = priors or model.priors()
        cond = None
        z = priors.mean(i) + eps
    return decode_features(model, decode_root(model, cond, z)).data


def posterior_mean(model: LongTermModel, x) -> np.ndarray:
    """Posterior means for a Type B model, shape (batch, L)."""
    if model.variant is not Variant.B:
        raise VariantError("posterior_mean without a condition needs a Type B model")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return posterior(model, None, encode_features(model, x)).mu.data


def recognize(model: LongTermModel, priors: ClassPriorSet | None, x):
    """Nearest prior mean to the posterior mean; ties go to the lowest class.

    A single observation gives an ``int``; a batch gives an integer array.
    """
    if model.variant is not Variant.B:
        raise VariantError("recognize requires a Type B model")
    priors = priors or model.priors()
    single = np.asarray(x).ndim == 1
    mu = posterior_mean(model, x)
    d = ((mu[:, None, :] - priors.means[None, :, :]) ** 2).sum(axis=-1)
    ids = np.argmin(d, axis=1)
    return int(ids[0]) if single else ids
