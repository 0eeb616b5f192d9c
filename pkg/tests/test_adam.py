import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from CycleWalk.engine import ParamSet
from CycleWalk.exceptions import ConfigError, ShapeMismatch
from CycleWalk.train import AdamConfig, AdamState, adam_update


def _params(**arrays):
    return ParamSet.from_arrays({k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()})


def test_zero_gradient_leaves_parameters():
    params = _params(w=[[1.0, -2.0]])
    new, state = adam_update(params, {"w": np.zeros((1, 2))}, AdamState.zeros_like(params), AdamConfig())
    assert_array_equal(new["w"].data, [[1.0, -2.0]])
    assert state.step == 1


def test_first_step_is_learning_rate():
    params = _params(theta=[0.0])
    cfg = AdamConfig(learning_rate=0.1)
    new, _ = adam_update(params, {"theta": np.ones(1)}, AdamState.zeros_like(params), cfg)
    assert new["theta"].data[0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-12)


def test_opposite_gradients_move_symmetrically():
    params = _params(a=[0.5], b=[0.5])
    grads = {"a": np.array([0.3]), "b": np.array([-0.3])}
    new, _ = adam_update(params, grads, AdamState.zeros_like(params), AdamConfig(learning_rate=0.01))
    da = new["a"].data[0] - 0.5
    db = new["b"].data[0] - 0.5
    assert da == pytest.approx(-db)
    assert da < 0


def test_inputs_are_untouched():
    params = _params(w=[1.0, 2.0])
    state = AdamState.zeros_like(params)
    before = params.copy()
    adam_update(params, {"w": np.array([1.0, 1.0])}, state, AdamConfig())
    assert params.equals(before)
    assert state.step == 0
    assert_array_equal(state.m["w"], 0)


def test_bias_correction_over_steps():
    params = _params(w=[0.0])
    state = AdamState.zeros_like(params)
    cfg = AdamConfig(learning_rate=0.01)
    for _ in range(3):
        params, state = adam_update(params, {"w": np.array([2.0])}, state, cfg)
    # a constant gradient gives m_hat = g and v_hat = g^2 at every step
    assert_allclose(params["w"].data, [-0.03], rtol=1e-6)
    assert state.step == 3


def test_gradient_shape_checked():
    params = _params(w=[1.0, 2.0])
    with pytest.raises(ShapeMismatch):
        adam_update(params, {"w": np.zeros(3)}, AdamState.zeros_like(params), AdamConfig())


@pytest.mark.parametrize("changes", [
    {"learning_rate": 0.0},
    {"betas": (1.0, 0.999)},
    {"eps": 0.0},
])
def test_invalid_adam_config(changes):
    with pytest.raises(ConfigError):
        AdamConfig(**changes).validate()
