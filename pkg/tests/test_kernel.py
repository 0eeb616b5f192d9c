import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from CycleWalk.exceptions import ConfigError, ShapeMismatch
from CycleWalk.propagation import ContextQueue, PropagationConfig, QueueEntry, build_kernel
from helpers import random_unit_rows

COORDS = np.stack(np.divmod(np.arange(9), 3), axis=1)


def _entry(emb, classes=2, frame=0, rng=None):
    labels = np.eye(classes)[np.arange(emb.shape[0]) % classes] if rng is None \
        else rng.dirichlet(np.ones(classes), size=emb.shape[0])
    return QueueEntry(emb, labels, COORDS[:emb.shape[0]], frame)


def brute_force(q_target, coords, queue, cfg):
    """Score every pair, keep candidates in the radius, sort, pick, softmax.
    Returns the dense kernel and each row's picks, best first."""
    entries = queue.entries
    dense = np.zeros((q_target.shape[0], sum(e.embeddings.shape[0] for e in entries)))
    picks = []
    for i in range(q_target.shape[0]):
        scored = []
        offset = 0
        for frame, e in enumerate(entries):
            for j in range(e.embeddings.shape[0]):
                if max(abs(coords[i] - e.coords[j])) <= cfg.radius:
                    scored.append((-(q_target[i] @ e.embeddings[j]) / cfg.temperature, offset + j, frame))
            offset += e.embeddings.shape[0]
        if cfg.topk_mode == "global":
            chosen = sorted(scored)[:cfg.neighbors]
        else:
            chosen = []
            for frame in range(len(entries)):
                chosen += sorted(s for s in scored if s[2] == frame)[:cfg.neighbors]
            chosen = sorted(chosen)
        picks.append(np.array([s[1] for s in chosen]))
        logits = np.array([-s[0] for s in chosen])
        w = np.exp(logits - logits.max())
        dense[i, picks[-1]] = w / w.sum()
    return dense, picks


def test_identical_frame_matches_itself(rng):
    emb = random_unit_rows(rng, 9, 6)
    queue = ContextQueue(_entry(emb), context=1)
    kernel = build_kernel(emb, COORDS, queue, PropagationConfig(neighbors=1, radius=5))
    assert_array_equal(np.concatenate(kernel.indices), np.arange(9))
    assert_array_equal(kernel.dense(), np.eye(9))


def test_identical_embeddings_give_uniform_weights():
    emb = np.tile([[1.0, 0.0]], (9, 1))
    queue = ContextQueue(_entry(emb), context=1)
    kernel = build_kernel(emb, COORDS, queue, PropagationConfig(neighbors=9, radius=5))
    assert_allclose(kernel.dense(), 1 / 9)
    # ties resolve to the lower source index
    assert_array_equal(kernel.indices[0], np.arange(9))


@pytest.mark.parametrize("seed", range(50))
@pytest.mark.parametrize("mode", ["global", "per_frame"])
@pytest.mark.parametrize("radius", [1, 2, 5])
def test_matches_brute_force(seed, mode, radius):
    rng = np.random.default_rng(seed)
    queue = ContextQueue(_entry(random_unit_rows(rng, 9, 5), 3, 0, rng), context=2)
    queue.push(_entry(random_unit_rows(rng, 9, 5), 3, 1, rng))
    q = random_unit_rows(rng, 9, 5)
    cfg = PropagationConfig(neighbors=4, radius=radius, temperature=0.1, topk_mode=mode)
    kernel = build_kernel(q, COORDS, queue, cfg)
    dense, picks = brute_force(q, COORDS, queue, cfg)
    assert_allclose(kernel.dense(), dense, atol=1e-12)
    for got, want in zip(kernel.indices, picks):
        assert_array_equal(got, want)
    assert_allclose(kernel.dense().sum(axis=1), 1.0, atol=1e-12)
    assert not kernel.fallback.any()


def test_radius_limits_candidates(rng):
    queue = ContextQueue(_entry(random_unit_rows(rng, 9, 4)), context=1)
    kernel = build_kernel(random_unit_rows(rng, 9, 4), COORDS, queue,
                          PropagationConfig(neighbors=9, radius=1))
    # the corner node sees its 2 x 2 neighbourhood, the centre sees all nine
    assert sorted(kernel.indices[0]) == [0, 1, 3, 4]
    assert len(kernel.indices[4]) == 9


def test_empty_neighbourhood_falls_back(rng, caplog):
    far = QueueEntry(random_unit_rows(rng, 2, 3), np.eye(2), np.array([[40, 40], [41, 41]]))
    queue = ContextQueue(far, context=1)
    kernel = build_kernel(random_unit_rows(rng, 9, 3), COORDS, queue, PropagationConfig(neighbors=1, radius=1))
    assert kernel.fallback.all()
    assert all(len(i) == 1 for i in kernel.indices)
    assert "no source within radius" in caplog.text


def test_queue_keeps_first_frame_and_recent_ones(rng):
    queue = ContextQueue(_entry(random_unit_rows(rng, 9, 2), frame=0), context=2)
    for t in range(1, 5):
        queue.push(_entry(random_unit_rows(rng, 9, 2), frame=t))
    assert [e.frame for e in queue.entries] == [0, 3, 4]
    assert len(queue) == 3
    emb, labels, coords, owner = queue.stacked()
    assert emb.shape == (27, 2) and labels.shape == (27, 2)
    assert_array_equal(np.unique(owner), [0, 1, 2])


def test_queue_rejects_other_label_widths(rng):
    queue = ContextQueue(_entry(random_unit_rows(rng, 9, 2), classes=2), context=2)
    with pytest.raises(ShapeMismatch):
        queue.push(_entry(random_unit_rows(rng, 9, 2), classes=3))


def test_kernel_apply_mixes_labels(rng):
    queue = ContextQueue(_entry(random_unit_rows(rng, 9, 4), classes=3), context=1)
    kernel = build_kernel(random_unit_rows(rng, 9, 4), COORDS, queue, PropagationConfig(neighbors=3, radius=2))
    _, labels, _, _ = queue.stacked()
    assert_allclose(kernel.apply(labels), kernel.dense() @ labels, atol=1e-12)


@pytest.mark.parametrize("changes", [
    {"neighbors": 0}, {"context": 0}, {"radius": 0}, {"temperature": -1.0}, {"topk_mode": "local"},
])
def test_invalid_propagation_config(changes):
    with pytest.raises(ConfigError):
        PropagationConfig(**changes).validate()
