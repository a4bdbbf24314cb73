import time

import numpy as np
import pytest

from memassoc.data import synth_shapes
from memassoc.gridworld import NUM_STATES, collect_screens, train_q_policy
from memassoc.rng import Rng
from memassoc.short_memory import ShortTermMemory
from memassoc.trainer import TrainConfig, build_model, build_optimizer, train

SEED = 42

# wall-clock seconds spent building the session fixtures, reported by the acceptance suite
TIMINGS = {}


def shapes_memory(per_class=200, seed=SEED, capacity=256):
    data = synth_shapes(per_class, Rng(seed))
    mem = ShortTermMemory(3, capacity)
    for x, y in zip(data.images, data.labels):
        mem.insert(int(y), x)
    return mem, data


def run(mem, variant, steps=2000, seed=SEED, **cfg):
    cfg = TrainConfig(variant=variant, steps=steps, seed=seed, num_classes=mem.num_classes,
                      input_dim=mem.payload_dim(), **cfg)
    rng = Rng(seed)
    model = build_model(cfg, rng)
    opt = build_optimizer(cfg)
    model, history = train(model, mem, cfg, rng, opt)
    return model, history


@pytest.fixture(scope="session")
def heldout():
    return synth_shapes(50, Rng(SEED + 1))


@pytest.fixture(scope="session")
def trained_b():
    start = time.perf_counter()
    mem, data = shapes_memory()
    model, history = run(mem, "B")
    TIMINGS["trained_b"] = time.perf_counter() - start
    return model, history, data


@pytest.fixture(scope="session")
def trained_a():
    start = time.perf_counter()
    mem, data = shapes_memory()
    model, history = run(mem, "A")
    TIMINGS["trained_a"] = time.perf_counter() - start
    return model, history, data


@pytest.fixture(scope="session")
def gridworld_memory():
    q = train_q_policy(Rng(SEED))
    return q, collect_screens(q, 20, ShortTermMemory(NUM_STATES))


@pytest.fixture(scope="session")
def trained_grid(gridworld_memory):
    _, mem = gridworld_memory
    start = time.perf_counter()
    model, history = run(mem, "B")
    TIMINGS["trained_grid"] = time.perf_counter() - start
    return model, mem


@pytest.fixture
def rng():
    return Rng(1234)


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        up = f(x)
        x[i] = old - h
        down = f(x)
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g
