import numpy as np
import pytest

from CycleWalk.engine import ParamSet, Tensor, finite_diff_check, matmul, mul, reduce_sum, scale
from CycleWalk.exceptions import ConfigError
from CycleWalk.train import gradient_check


def _quadratic(params):
    w = params["w"]
    return reduce_sum(mul(matmul(w, Tensor(np.array([[1.0], [2.0], [-1.0]]))), matmul(w, Tensor(np.ones((3, 1))))))


def test_quadratic_loss_is_exact(rng):
    params = ParamSet()
    params.add("w", rng.normal(size=(2, 3)))
    assert finite_diff_check(_quadratic, params) < 1e-8


def test_check_restores_parameters(rng):
    params = ParamSet()
    params.add("w", rng.normal(size=(2, 3)))
    before = params.copy()
    finite_diff_check(_quadratic, params)
    assert params.equals(before)


def _cubic(params):
    x = params["x"]
    return reduce_sum(mul(mul(x, x), x))


def test_cubic_error_grows_with_step():
    def error(h):
        params = ParamSet()
        params.add("x", np.array([1.5]))
        return finite_diff_check(_cubic, params, h=h)

    coarse, finer = error(1e-2), error(5e-3)
    # central differences on x^3 are off by exactly h^2 in absolute terms
    assert coarse > finer
    assert coarse / finer == pytest.approx(4.0, rel=1e-3)


def test_single_precision_rejected():
    params = ParamSet()
    params.add("x", np.ones(2, dtype=np.float32))
    with pytest.raises(ConfigError):
        finite_diff_check(lambda p: reduce_sum(scale(p["x"], 2.0)), params)


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("clip_length", [2, 3, 4])
def test_full_pipeline_gradients(seed, clip_length):
    assert gradient_check(seed=seed, clip_length=clip_length) < 1e-4
