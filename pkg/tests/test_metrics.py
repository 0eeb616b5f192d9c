import numpy as np
import pytest
from numpy.testing import assert_allclose

from CycleWalk.data import SequenceDataset, generate_many
from CycleWalk.evaluation import (
    MetricsReport, evaluate_propagation, evaluate_walks, per_class_iou, propagation_score, row_entropy,
    walk_accuracy,
)
from CycleWalk.exceptions import EmptyLabelSet, ShapeMismatch
from CycleWalk.walk import CorrespondenceLabels, init_encoder
from helpers import const


def test_identity_walk_is_perfect():
    assert walk_accuracy(np.eye(4), CorrespondenceLabels.identity(4)) == 1.0
    assert walk_accuracy(const(np.eye(4)), CorrespondenceLabels.identity(4)) == 1.0


def test_permutation_walk_is_perfect():
    perm = np.array([3, 0, 2, 1])
    labels = CorrespondenceLabels(perm, np.ones(4, dtype=bool))
    assert walk_accuracy(np.eye(4)[perm], labels) == 1.0


def test_only_valid_rows_count():
    walk = np.eye(3)
    labels = CorrespondenceLabels([0, 0, 2], [True, False, False])
    assert walk_accuracy(walk, labels) == 1.0
    labels = CorrespondenceLabels([1, 1, 2], [True, True, True])
    assert walk_accuracy(walk, labels) == pytest.approx(2 / 3)


def test_uniform_walk_is_chance_level():
    rng = np.random.default_rng(0)
    n, trials = 9, 400
    uniform = np.full((n, n), 1.0 / n)
    hits = [walk_accuracy(uniform, CorrespondenceLabels(rng.integers(0, n, size=n), np.ones(n, bool)))
            for _ in range(trials)]
    # ties go to node 0, so accuracy is the share of targets equal to 0
    sigma = np.sqrt((1 / n) * (1 - 1 / n) / (n * trials))
    assert abs(np.mean(hits) - 1 / n) < 3 * sigma


def test_accuracy_needs_valid_rows():
    with pytest.raises(EmptyLabelSet):
        walk_accuracy(np.eye(2), CorrespondenceLabels([0, 1], [False, False]))
    with pytest.raises(ShapeMismatch):
        walk_accuracy(np.eye(3), CorrespondenceLabels.identity(2))


def test_row_entropy():
    assert_allclose(row_entropy(np.array([[1.0, 0.0], [0.5, 0.5]])), [0.0, np.log(2)])


def test_perfect_propagation_scores_one():
    truth = np.array([[0, 1, 1], [0, 0, 1], [1, 1, 0]])
    assert propagation_score(truth.copy(), truth) == 1.0


def test_all_background_prediction():
    truth = np.array([[0, 0, 1, 1], [0, 1, 1, 0]])
    predicted = np.zeros_like(truth)
    scores = per_class_iou(predicted, truth)
    assert scores[1] == 0.0
    assert scores[0] == pytest.approx(2 / 4)
    assert propagation_score(predicted, truth) < 1.0


def test_three_by_three_grid_with_one_error():
    truth = np.array([[0, 0, 0, 0, 1, 1, 0, 1, 1]] * 2)
    predicted = truth.copy()
    predicted[1, 8] = 0
    # frame 0 is given; in frame 1 the sprite has 4 cells, 3 predicted
    assert per_class_iou(predicted, truth) == {0: pytest.approx(5 / 6), 1: pytest.approx(3 / 4)}
    assert propagation_score(predicted, truth) == pytest.approx((5 / 6 + 3 / 4) / 2)


def test_iou_shape_checked():
    with pytest.raises(ShapeMismatch):
        propagation_score(np.zeros((2, 4)), np.zeros((2, 5)))


def test_evaluate_walks_report(small_run):
    data = SequenceDataset.from_items(generate_many(small_run.scene, [1, 2]))
    params = init_encoder(small_run.encoder, 0)
    report = evaluate_walks(params, data, small_run.grid, small_run.encoder, 0.07, hops=(1, 2))
    assert set(report.walk_accuracy) == {1, 2}
    assert all(0.0 <= v <= 1.0 for v in report.walk_accuracy.values())
    assert all(0.0 < v <= 1.0 for v in report.return_probability.values())
    assert all(0.0 <= v <= np.log(9) + 1e-9 for v in report.entropy.values())
    assert report.sequences == 2
    as_dict = report.to_dict()
    assert set(as_dict["walk_accuracy"]) == {"1", "2"}


def test_evaluate_propagation(small_run):
    data = SequenceDataset.from_items(generate_many(small_run.scene, [1, 2]))
    result = evaluate_propagation(init_encoder(small_run.encoder, 0), data, small_run.grid, small_run.encoder,
                                  small_run.propagation)
    assert len(result["per_sequence"]) == 2
    assert 0.0 <= result["mean_iou"] <= 1.0


def test_empty_report_serializes():
    assert MetricsReport().to_dict()["mean_iou"] is None


def test_score_ignores_class_names():
    rng = np.random.default_rng(4)
    truth = rng.integers(0, 4, size=(5, 49))
    predicted = np.where(rng.random((5, 49)) < 0.3, rng.integers(0, 4, size=(5, 49)), truth)
    rename = np.array([2, 0, 3, 1])
    assert propagation_score(rename[predicted], rename[truth]) == pytest.approx(propagation_score(predicted, truth))
