import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import ortho_group

from CycleWalk.walk import (
    WalkConfig, cycle_and_subcycle_losses, frame_energies, row_softmax, subcycle_losses, transition_energies, walk,
)
from helpers import const, random_stochastic, random_unit_rows


def test_transitions_and_walks_are_row_stochastic():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 17))
        d = int(rng.integers(2, 9))
        tau = float(rng.uniform(0.03, 1.0))
        steps = [row_softmax(transition_energies(const(random_unit_rows(rng, n, d)),
                                                 const(random_unit_rows(rng, n, d)), tau))
                 for _ in range(int(rng.integers(1, 4)))]
        for a in steps:
            assert_allclose(a.data.sum(axis=1), 1.0, atol=1e-6)
        assert_allclose(walk(steps).data.sum(axis=1), 1.0, atol=1e-6)


def _path_sum(mats, i, j):
    n = mats[0].shape[0]
    total = 0.0
    for middle in itertools.product(range(n), repeat=len(mats) - 1):
        nodes = (i, *middle, j)
        p = 1.0
        for step, a in enumerate(mats):
            p *= a[nodes[step], nodes[step + 1]]
        total += p
    return total


def test_walk_equals_path_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(2, 6))
        k = int(rng.integers(2, 5))
        mats = [random_stochastic(rng, n) for _ in range(k)]
        product = walk([const(a) for a in mats]).data
        brute = np.array([[_path_sum(mats, i, j) for j in range(n)] for i in range(n)])
        assert_allclose(product, brute, atol=1e-10, rtol=0)


@pytest.mark.parametrize("n", [4, 49])
def test_uniform_cycle_loss_is_log_n(n):
    report = subcycle_losses([const(np.full((n, n), 1.0 / n))] * 6)
    for loss in report.subcycle_losses:
        assert abs(loss - np.log(n)) < 1e-8


def test_identity_cycle_loss_vanishes():
    report = subcycle_losses([const(np.eye(9))] * 4)
    assert max(report.subcycle_losses) < 1e-8


def test_node_permutations_carry_through(rng):
    q_t, q_u = random_unit_rows(rng, 7, 4), random_unit_rows(rng, 7, 4)
    p = np.eye(7)[rng.permutation(7)]
    r = np.eye(7)[rng.permutation(7)]
    a = row_softmax(transition_energies(const(q_t), const(q_u), 0.1)).data
    permuted = row_softmax(transition_energies(const(p @ q_t), const(r @ q_u), 0.1)).data
    assert_allclose(permuted, p @ a @ r.T, atol=1e-12)


def test_global_rotation_changes_nothing(rng):
    qs = [random_unit_rows(rng, 9, 5) for _ in range(4)]
    o = ortho_group.rvs(5, random_state=3)
    cfg = WalkConfig(temperature=0.1, edge_dropout=0.0)

    def losses(frames):
        energies = frame_energies([const(q) for q in frames], cfg.temperature)
        return cycle_and_subcycle_losses(energies, cfg, train=False)

    plain = losses(qs)
    rotated = losses([q @ o.T for q in qs])
    assert_allclose(rotated.subcycle_losses, plain.subcycle_losses, atol=1e-10)


def test_cycle_loss_is_zero_only_for_perfect_returns(rng):
    steps = [const(random_stochastic(rng, 5)) for _ in range(4)]
    report = subcycle_losses(steps)
    assert all(loss > 0 for loss in report.subcycle_losses)
    assert all(p < 1 for p in report.return_probability)
