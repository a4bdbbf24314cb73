"""Training loop from short-term memory into a long-term model, plus recall metrics."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import tensor as T
from .data import ImageSet
from .errors import ContractError, EmptyMemoryError
from .gridworld import NUM_STATES, render_screen
from .long_memory import (ClassPriorSet, LongTermModel, Variant, posterior_mean, recall, recognize,
                          total_loss)
from .optim import Adam
from .rng import Rng
from .short_memory import DEFAULT_CAPACITY, ShortTermMemory

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    variant: str = "B"
    steps: int = 2000
    batch_size: int = 32
    seed: int = 0
    prior_scale: float = 6.0
    root_weight: float = 1.0
    input_dim: int = 256
    root_dim: int = 64
    latent_dim: int = 16
    num_classes: int = 3
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    capacity: int = DEFAULT_CAPACITY

    def __post_init__(self):
        self.variant = Variant(self.variant).value
        for name in ("batch_size", "input_dim", "root_dim", "latent_dim", "num_classes", "capacity"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")
        if self.steps < 0:
            raise ContractError("steps must be non-negative")
        if self.prior_scale <= 0:
            raise ContractError("prior_scale must be positive")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StepRecord:
    step: int
    loss: float
    kl: float
    recon: float
    root_mse: float


def build_model(cfg: TrainConfig, rng: Rng) -> LongTermModel:
    return LongTermModel.init(cfg.variant, cfg.input_dim, cfg.num_classes, rng,
                              root_dim=cfg.root_dim, latent_dim=cfg.latent_dim,
                              prior_scale=cfg.prior_scale, root_weight=cfg.root_weight)


def build_optimizer(cfg: TrainConfig) -> Adam:
    return Adam(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)


def train_step(model: LongTermModel, mem: ShortTermMemory, batch_size: int, opt: Adam, rng: Rng) -> StepRecord:
    batch = mem.sample_batch(batch_size, rng)
    terms = total_loss(model, batch, rng)
    T.backward(terms.tape, terms.total)
    opt.step(model.params, {k: v.grad for k, v in terms.params.items()})
    return StepRecord(opt.t, terms.total.item(), terms.kl.item(), terms.recon.item(), terms.root_mse.item())


def train(model: LongTermModel, mem: ShortTermMemory, cfg: TrainConfig, rng: Rng,
          opt: Adam | None = None, steps: int | None = None):
    """Run ``steps`` (default ``cfg.steps``) Adam steps; returns ``(model, history)``.

    Pass the optimizer and rng restored from a checkpoint to resume: the result
    is bitwise identical to an uninterrupted run.
    """
    if not mem.nonempty_classes():
        raise EmptyMemoryError("cannot train from an empty short-term memory")
    opt = opt if opt is not None else build_optimizer(cfg)
    steps = cfg.steps if steps is None else steps
    history = []
    for _ in range(steps):
        rec = train_step(model, mem, cfg.batch_size, opt, rng)
        history.append(rec)
        if rec.step % 500 == 0:
            log.info("step %d loss %.4f (kl %.4f recon %.4f root %.5f)",
                     rec.step, rec.loss, rec.kl, rec.recon, rec.root_mse)
    return model, history


# ---------------------------------------------------------------- evaluation


def nearest_centroid(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)
    return np.argmin(d, axis=1)


def eval_recall(model: LongTermModel, priors: ClassPriorSet | None, real: ImageSet,
                n_per_class: int, rng: Rng) -> dict:
    """Per-class recall quality against real data.

    For every class present in ``real``: the fraction of ``n_per_class`` recalls
    the nearest-centroid classifier assigns back to that class, their mean
    per-pixel MSE to the class centroid, and for Type B the distance between
    the mean posterior mean of the real samples and the class prior mean.
    """
    priors = priors or (model.priors() if model.variant is Variant.B else None)
    present = [c for c in range(model.num_classes) if np.any(real.labels == c)]
    skipped = [c for c in range(model.num_classes) if c not in present]
    for c in skipped:
        log.warning("class %d has no real samples; skipped", c)
    if not present:
        raise ContractError("eval_recall: real set has none of the model's classes")
    centroids = np.stack([real.of_class(c).mean(axis=0) for c in present])

    per_class = {}
    hits = 0
    for j, c in enumerate(present):
        samples = recall(model, priors, c, n_per_class, rng)
        acc = float(np.mean(nearest_centroid(samples, centroids) == j)) if n_per_class else 0.0
        hits += acc * n_per_class
        entry = {"accuracy": acc, "centroid_mse": float(np.mean((samples - centroids[j]) ** 2))}
        if model.variant is Variant.B:
            mu = posterior_mean(model, real.of_class(c)).mean(axis=0)
            entry["latent_mean_distance"] = float(np.linalg.norm(mu - priors.mean(c)))
        per_class[str(c)] = entry
    return {
        "accuracy": hits / (n_per_class * len(present)) if n_per_class else 0.0,
        "classes": per_class,
        "skipped": skipped,
    }


def recognition_accuracy(model: LongTermModel, real: ImageSet) -> float:
    return float(np.mean(recognize(model, None, real.images) == real.labels))


def gridworld_recall_gap(model: LongTermModel, priors: ClassPriorSet | None, visited,
                         rng: Rng, n: int = 16):
    """Mean per-pixel recall MSE over visited states and over unvisited ones.

    ``visited`` is a set of state ids or the :class:`ShortTermMemory` the model
    learned from (non-empty queues count as visited). Either mean is None when
    its state set is empty.
    """
    if isinstance(visited, ShortTermMemory):
        visited = visited.nonempty_classes()
    visited = set(int(s) for s in visited)
    if model.num_classes != NUM_STATES:
        raise ContractError(f"gridworld model needs {NUM_STATES} classes, has {model.num_classes}")
    err = {}
    for s in range(NUM_STATES):
        samples = recall(model, priors, s, n, rng)
        err[s] = float(np.mean((samples - render_screen(s)) ** 2))
    seen = [err[s] for s in sorted(visited)]
    unseen = [err[s] for s in range(NUM_STATES) if s not in visited]
    if not unseen:
        log.warning("every state was visited; the recall gap is undefined")
    return (float(np.mean(seen)) if seen else None,
            float(np.mean(unseen)) if unseen else None)
