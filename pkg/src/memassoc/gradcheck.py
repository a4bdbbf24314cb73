"""Central-difference gradient checking against the tape."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError
from .rng import Rng
from .tensor import Tape, Tensor, backward

LossFn = Callable[[dict[str, Tensor], Tape], Tensor]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps coordinates whose true gradient is ~0 from turning
    finite-difference round-off into a huge ratio.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def _kink_signature(tape: Tape) -> list[np.ndarray]:
    # active sets of every piecewise op, in tape order
    sig = []
    for node in tape.nodes:
        if node.op == "relu":
            sig.append(node.data > 0)
        elif node.op == "clip":
            sig.append(node.data != node.parents[0].data)
    return sig


def _same_piece(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


@dataclass
class GradCheckReport:
    worst: dict[str, float]  # parameter name -> max relative error
    checked: dict[str, int]
    skipped: dict[str, int]  # coordinates whose +-h step crossed a relu/clip kink

    @property
    def max_error(self) -> float:
        return max(self.worst.values(), default=0.0)


def grad_check(f: LossFn, params: dict[str, np.ndarray], h: float = 1e-5,
               coords_per_param: int | None = None, rng: Rng | None = None) -> GradCheckReport:
    """Compare tape gradients with central differences, per parameter tensor.

    ``f`` builds a scalar loss from leaf tensors recorded on the given tape and
    must be a deterministic function of ``params``. A coordinate is only
    compared when the central difference stays on one smooth piece, i.e. no
    relu or clip changes its active set between theta - h and theta + h;
    otherwise it is skipped and counted. With ``coords_per_param`` set, that
    many smooth coordinates are checked per tensor, visited in an order drawn
    from ``rng``; otherwise every coordinate is tried.
    """
    tape = Tape()
    leaves = {k: tape.leaf(v) for k, v in params.items()}
    root = f(leaves, tape)
    if not np.isfinite(root.data).all():
        raise DomainError("grad_check: loss is not finite")
    backward(tape, root)
    base_sig = _kink_signature(tape)

    def evaluate(name, idx, value):
        trial = dict(params)
        arr = params[name].copy()
        arr[idx] = value
        trial[name] = arr
        t = Tape()
        out = f({k: t.leaf(v) for k, v in trial.items()}, t).item()
        if not np.isfinite(out):
            raise DomainError("grad_check: loss is not finite")
        return out, _kink_signature(t)

    rng = rng or Rng(0)
    report = GradCheckReport({}, {}, {})
    for name, value in params.items():
        analytic = leaves[name].grad
        order = np.arange(value.size)
        if coords_per_param is not None:
            order = np.argsort(rng.uniform((value.size,)), kind="stable")
        errs, skipped = [], 0
        for k in order:
            if coords_per_param is not None and len(errs) >= coords_per_param:
                break
            idx = np.unravel_index(k, value.shape)
            x0 = value[idx]
            up, sig_up = evaluate(name, idx, x0 + h)
            down, sig_down = evaluate(name, idx, x0 - h)
            if not (_same_piece(sig_up, base_sig) and _same_piece(sig_down, base_sig)):
                skipped += 1
                continue
            numeric = (up - down) / (2 * h)
            errs.append(float(relative_error(np.asarray(analytic[idx]), np.asarray(numeric))))
        report.worst[name] = max(errs, default=0.0)
        report.checked[name] = len(errs)
        report.skipped[name] = skipped
    return report


def check_loss(variant: str, seed: int, batch_size: int = 8, coords_per_param: int = 8,
               h: float = 1e-5) -> GradCheckReport:
    """Grad-check the full long-term loss of a freshly initialized model.

    Uses synthetic shapes as input and a fixed noise draw, so the loss is a
    deterministic function of the parameters.
    """
    from .data import synth_shapes
    from .long_memory import LongTermModel, total_loss
    from .short_memory import ShortTermMemory

    rng = Rng(seed)
    data = synth_shapes(batch_size, rng)
    mem = ShortTermMemory(3)
    for x, y in zip(data.images, data.labels):
        mem.insert(int(y), x)
    batch = mem.sample_batch(batch_size, rng)
    model = LongTermModel.init(variant, data.images.shape[1], 3, rng)
    noise_state = rng.state

    def f(leaves, tape):
        return total_loss(model, batch, Rng(noise_state), p=leaves).total

    return grad_check(f, model.params, h=h, coords_per_param=coords_per_param, rng=Rng(seed + 1))
