"""Optimizer arithmetic: cosine schedule and the momentum update rule."""

import math

import numpy as np
import pytest

from opal.optim import OptimizerState, cosine_lr, sgd_step


def test_cosine_endpoints():
    lr0 = 3e-4
    assert cosine_lr(0, 100, lr0) == lr0
    # final value is cos(7*pi/16) of the base rate, about 19.5%
    final = cosine_lr(100, 100, lr0)
    assert final == pytest.approx(lr0 * 0.19509032201612825, rel=1e-12)
    assert final > 0


def test_cosine_monotone_decreasing():
    vals = [cosine_lr(t, 50, 1.0) for t in range(51)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_cosine_rejects_bad_steps():
    with pytest.raises(ValueError):
        cosine_lr(-1, 10, 1.0)
    with pytest.raises(ValueError):
        cosine_lr(11, 10, 1.0)
    with pytest.raises(ValueError):
        cosine_lr(0, 0, 1.0)


def test_current_lr_floors_past_horizon():
    st = OptimizerState(lr0=1.0, total_steps=10, t=25)
    assert st.current_lr() == pytest.approx(cosine_lr(10, 10, 1.0))


def _reference_step(p, g, v, lr, mu, wd, nesterov, decay):
    g = g + wd * p if decay else g.copy()
    v = mu * v + g
    step = g + mu * v if nesterov else v
    return p - lr * step, v


def test_sgd_matches_reference_update():
    rng = np.random.default_rng(11)
    params = {"enc0.W": rng.normal(size=(3, 2)), "enc0.b": rng.normal(size=2)}
    grads = {k: rng.normal(size=v.shape) for k, v in params.items()}
    st = OptimizerState(lr0=0.1, total_steps=4, momentum=0.9, weight_decay=0.01, nesterov=True)
    lr = st.current_lr()

    expect = {}
    expect["enc0.W"], vW = _reference_step(
        params["enc0.W"], grads["enc0.W"], np.zeros((3, 2)), lr, 0.9, 0.01, True, decay=True
    )
    # bias vectors are exempt from weight decay
    expect["enc0.b"], vb = _reference_step(
        params["enc0.b"], grads["enc0.b"], np.zeros(2), lr, 0.9, 0.01, True, decay=False
    )

    sgd_step(params, grads, st)
    np.testing.assert_allclose(params["enc0.W"], expect["enc0.W"], rtol=1e-12)
    np.testing.assert_allclose(params["enc0.b"], expect["enc0.b"], rtol=1e-12)
    np.testing.assert_allclose(st.velocity["enc0.W"], vW, rtol=1e-12)
    assert st.t == 1

    # second step uses the advanced schedule position and stored velocity
    lr2 = st.current_lr()
    expect2, v2 = _reference_step(params["enc0.W"], grads["enc0.W"], vW, lr2, 0.9, 0.01, True, True)
    sgd_step(params, {"enc0.W": grads["enc0.W"]}, st)
    np.testing.assert_allclose(params["enc0.W"], expect2, rtol=1e-12)
    np.testing.assert_allclose(st.velocity["enc0.W"], v2, rtol=1e-12)
    assert st.t == 2


def test_sgd_plain_momentum_path():
    params = {"cls.W": np.ones((2, 2))}
    grads = {"cls.W": np.full((2, 2), 0.5)}
    st = OptimizerState(lr0=0.1, total_steps=2, momentum=0.5, weight_decay=0.0, nesterov=False)
    lr = st.current_lr()
    sgd_step(params, grads, st)
    # v = 0.5*0 + g = g ; p -= lr * v
    np.testing.assert_allclose(params["cls.W"], 1.0 - lr * 0.5, rtol=1e-12)


def test_sgd_only_touches_named_grads():
    params = {"enc0.W": np.ones((2, 2)), "cls.W": np.ones((2, 2))}
    frozen = params["cls.W"].copy()
    st = OptimizerState(lr0=0.1, total_steps=3)
    sgd_step(params, {"enc0.W": np.ones((2, 2))}, st)
    # absent from grads: no update, no decay, no velocity entry
    np.testing.assert_array_equal(params["cls.W"], frozen)
    assert "cls.W" not in st.velocity
    assert not np.array_equal(params["enc0.W"], np.ones((2, 2)))


def test_sgd_t_advances_once_per_call_not_per_tensor():
    params = {"a.W": np.ones(2), "b.W": np.ones(2)}
    grads = {k: np.ones(2) for k in params}
    st = OptimizerState(lr0=0.1, total_steps=5)
    sgd_step(params, grads, st)
    assert st.t == 1
