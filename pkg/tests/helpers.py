import numpy as np

from CycleWalk.engine import Tensor


def random_unit_rows(rng, n, d):
    q = rng.normal(size=(n, d))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_stochastic(rng, n):
    a = rng.random((n, n)) + 1e-3
    return a / a.sum(axis=1, keepdims=True)


def const(values):
    return Tensor(np.asarray(values, dtype=np.float64))
