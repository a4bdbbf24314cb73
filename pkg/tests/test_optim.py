import numpy as np
import pytest

from memassoc.errors import DimensionError
from memassoc.optim import Adam


def test_first_step_from_zero():
    p = {"w": np.zeros(3)}
    Adam().step(p, {"w": np.ones(3)})
    # m_hat = v_hat = 1, so the step is -lr / (1 + eps)
    assert np.allclose(p["w"], -1e-3 / (1 + 1e-8), rtol=0, atol=1e-18)
    assert p["w"][0] == pytest.approx(-0.001, rel=1e-7)


def test_zero_gradient_leaves_params_unchanged():
    p = {"w": np.array([1.5, -2.0])}
    opt = Adam()
    for _ in range(10):
        opt.step(p, {"w": np.zeros(2)})
    assert np.array_equal(p["w"], [1.5, -2.0])
    assert opt.t == 10


def test_identical_states_give_identical_results():
    rng = np.random.default_rng(0)
    grads = [rng.normal(size=4) for _ in range(5)]
    outs = []
    for _ in range(2):
        p, opt = {"w": np.ones(4)}, Adam(lr=0.01)
        for g in grads:
            opt.step(p, {"w": g})
        outs.append(p["w"].tobytes())
    assert outs[0] == outs[1]


def test_matches_textbook_recurrence():
    grads = [np.array([0.3, -1.2]), np.array([0.1, 0.4]), np.array([-0.5, 0.0])]
    p = {"w": np.array([1.0, 2.0])}
    opt = Adam(lr=0.05)
    theta, m, v = np.array([1.0, 2.0]), np.zeros(2), np.zeros(2)
    for t, g in enumerate(grads, start=1):
        opt.step(p, {"w": g})
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g**2
        theta = theta - 0.05 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert np.allclose(p["w"], theta, rtol=1e-14, atol=0)
    assert opt.m["w"].shape == opt.v["w"].shape == (2,)


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        Adam().step({"w": np.zeros(3)}, {"w": np.zeros(2)})
