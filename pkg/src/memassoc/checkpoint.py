"""The "MAN1" tensor container and the checkpoints built on it.

Layout (all integers little-endian)::

    b"MAN1" | u32 version (1) | u32 tensor count
    per tensor: u16 name length | UTF-8 name | u8 rank | u32 dim * rank | float64 data

Scalars are stored as 1-element rank-1 tensors. The 64-bit rng state does not
fit in a float64 value, so its bit pattern is stored reinterpreted as one.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .long_memory import LongTermModel, Variant
from .optim import Adam
from .rng import Rng
from .short_memory import ShortTermMemory

MAGIC = b"MAN1"
VERSION = 1


def encode_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, value in tensors.items():
        arr = np.ascontiguousarray(value, dtype="<f8")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def decode_tensors(buf: bytes) -> dict[str, np.ndarray]:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError(f"truncated {what}", pos)
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise FormatError("bad magic, expected b'MAN1'", 0)
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    tensors = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2, "name length"))
        start = pos
        try:
            name = take(n, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("tensor name is not UTF-8", start) from None
        (rank,) = struct.unpack("<B", take(1, "rank"))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        size = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(take(8 * size, f"data of {name!r}"), dtype="<f8")
        tensors[name] = data.reshape(shape).astype(np.float64)
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes", pos)
    return tensors


def write_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode_tensors(tensors))


def read_tensors(path) -> dict[str, np.ndarray]:
    return decode_tensors(Path(path).read_bytes())


def _scalar(x) -> np.ndarray:
    return np.array([x], dtype=np.float64)


def u64_to_f64(x: int) -> np.ndarray:
    return np.array([x], dtype=np.uint64).view(np.float64)


def f64_to_u64(a: np.ndarray) -> int:
    return int(np.asarray(a, dtype=np.float64).reshape(1).view(np.uint64)[0])


# ---------------------------------------------------------------- model checkpoints

_MODEL_FIELDS = ("input_dim", "num_classes", "root_dim", "latent_dim", "prior_scale", "root_weight")


@dataclass
class Checkpoint:
    version: int
    model: LongTermModel
    optimizer: Adam
    rng: Rng
    extras: dict[str, float]


def checkpoint_tensors(model: LongTermModel, opt: Adam, rng: Rng, extras: dict | None = None) -> dict:
    t = {"config/variant": _scalar(0.0 if model.variant is Variant.A else 1.0)}
    for f in _MODEL_FIELDS:
        t[f"config/{f}"] = _scalar(getattr(model, f))
    t["config/hidden"] = np.array(model.hidden, dtype=np.float64)
    for k, v in (extras or {}).items():
        t[f"extra/{k}"] = _scalar(v)
    for k, v in model.params.items():
        t[f"model/{k}"] = v
    t["adam/t"] = _scalar(opt.t)
    t["adam/hyper"] = np.array([opt.lr, opt.beta1, opt.beta2, opt.eps])
    for k in model.params:
        if k in opt.m:
            t[f"adam/m/{k}"] = opt.m[k]
            t[f"adam/v/{k}"] = opt.v[k]
    t["rng/state"] = u64_to_f64(rng.state)
    return t


def save_checkpoint(path, model: LongTermModel, opt: Adam, rng: Rng, extras: dict | None = None) -> None:
    write_tensors(path, checkpoint_tensors(model, opt, rng, extras))


def load_checkpoint(path) -> Checkpoint:
    t = read_tensors(path)
    try:
        variant = Variant.A if t["config/variant"][0] == 0.0 else Variant.B
        kw = {f: t[f"config/{f}"][0] for f in _MODEL_FIELDS}
        for f in ("input_dim", "num_classes", "root_dim", "latent_dim"):
            kw[f] = int(kw[f])
        hidden = tuple(int(h) for h in t["config/hidden"])
        model = LongTermModel(variant, hidden=hidden, **kw)
        model.params = {k: t[f"model/{k}"] for k in model.shapes()}
        lr, b1, b2, eps = t["adam/hyper"]
        opt = Adam(lr=float(lr), beta1=float(b1), beta2=float(b2), eps=float(eps), t=int(t["adam/t"][0]))
        for k in model.params:
            if f"adam/m/{k}" in t:
                opt.m[k] = t[f"adam/m/{k}"]
                opt.v[k] = t[f"adam/v/{k}"]
        rng = Rng(f64_to_u64(t["rng/state"]))
    except KeyError as e:
        raise FormatError(f"checkpoint is missing tensor {e.args[0]!r}", 0) from None
    for k, shape in model.shapes().items():
        if model.params[k].shape != shape:
            raise FormatError(f"tensor model/{k} has shape {model.params[k].shape}, expected {shape}", 0)
    extras = {k[len("extra/"):]: float(v[0]) for k, v in t.items() if k.startswith("extra/")}
    return Checkpoint(VERSION, model, opt, rng, extras)


# ---------------------------------------------------------------- memory snapshots


def save_memory(path, mem: ShortTermMemory, extras: dict | None = None) -> None:
    t = {"memory/num_classes": _scalar(mem.num_classes), "memory/capacity": _scalar(mem.capacity)}
    for k, v in (extras or {}).items():
        t[f"extra/{k}"] = _scalar(v)
    for i, q in enumerate(mem.queues):
        if q:
            t[f"memory/class/{i}"] = np.stack(list(q))
    write_tensors(path, t)


def load_memory(path) -> tuple[ShortTermMemory, dict[str, float]]:
    t = read_tensors(path)
    try:
        mem = ShortTermMemory(int(t["memory/num_classes"][0]), int(t["memory/capacity"][0]))
    except KeyError as e:
        raise FormatError(f"memory file is missing tensor {e.args[0]!r}", 0) from None
    for i in range(mem.num_classes):
        for row in t.get(f"memory/class/{i}", ()):
            mem.insert(i, row)
    extras = {k[len("extra/"):]: float(v[0]) for k, v in t.items() if k.startswith("extra/")}
    return mem, extras
