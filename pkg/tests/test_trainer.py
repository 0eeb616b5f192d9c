import json
import os

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from CycleWalk.data import Clip, SequenceDataset, generate_many
from CycleWalk.exceptions import ConfigError, NonFiniteLoss, NumericOverflow
from CycleWalk.train import TrainConfig, fit, load_checkpoint, loss_history, train_step
from CycleWalk.train import trainer
from CycleWalk.utils.seeds import sequence_seeds, stream_rng
from CycleWalk.walk import PatchGridConfig, WalkConfig, init_encoder


@pytest.fixture
def dataset(small_run):
    return SequenceDataset.from_items(generate_many(small_run.scene, sequence_seeds(small_run.seed, 3)))


def _step(small_run, clips, **kwargs):
    params = init_encoder(small_run.encoder, 0)
    return train_step(params, clips, small_run.walk, small_run.grid, small_run.encoder, **kwargs)


def test_single_pair_loss_is_finite(small_run, dataset):
    clip = Clip(dataset.sequences[0].frames[:2])
    report, grads = _step(small_run, [clip])
    assert np.isfinite(report.total) and report.total >= 0
    assert len(report.subcycle_losses) == 1
    assert set(grads) == set(init_encoder(small_run.encoder, 0).names())


def test_repeated_frame_is_reproducible(small_run, dataset):
    still = np.repeat(dataset.sequences[0].frames[:1], 3, axis=0)
    clips = [Clip(still)]
    small_run.walk.edge_dropout = 0.0
    first, g1 = _step(small_run, clips)
    second, g2 = _step(small_run, clips)
    assert first.total == second.total
    for name in g1:
        assert_array_equal(g1[name], g2[name])


def test_batch_loss_is_mean_of_clips(small_run, dataset):
    a = Clip(dataset.sequences[0].frames[:3])
    b = Clip(dataset.sequences[1].frames[:3])
    ra, _ = _step(small_run, [a])
    rb, _ = _step(small_run, [b])
    both, _ = _step(small_run, [a, b])
    assert both.total == pytest.approx((ra.total + rb.total) / 2)
    assert len(both.subcycle_losses) == 2


def test_batch_needs_matching_clips(small_run, dataset):
    with pytest.raises(ConfigError):
        _step(small_run, [])
    with pytest.raises(ConfigError):
        _step(small_run, [Clip(dataset.sequences[0].frames[:2]), Clip(dataset.sequences[0].frames[:3])])


def test_supervised_objective(small_run, dataset):
    seq, gt = dataset[0]
    clip = Clip(seq.frames[1:4], truth=gt, start=1)
    report, _ = _step(small_run, [clip], objective="supervised")
    assert np.isfinite(report.total) and report.total >= 0
    with pytest.raises(ConfigError):
        _step(small_run, [Clip(seq.frames[:3])], objective="supervised")


def test_non_finite_loss_dumps_the_clip(small_run, dataset, tmp_path, monkeypatch):
    def overflow(*args, **kwargs):
        raise NumericOverflow(node="log")
    monkeypatch.setattr(trainer, "clip_loss", overflow)
    monkeypatch.setattr(trainer.Var, "DUMP_NONFINITE", True)
    clip = Clip(dataset.sequences[0].frames[:2])
    with pytest.raises(NonFiniteLoss) as err:
        _step(small_run, [clip], dump_dir=str(tmp_path))
    assert err.value.details["clip"] == 0
    dumped = err.value.details["dump"]
    assert os.path.exists(dumped)
    assert_array_equal(np.load(dumped), clip.frames)


def test_zero_steps_returns_initialization(small_run, dataset):
    small_run.train.steps = 0
    result = fit(dataset, small_run)
    assert result.history == []
    expected = init_encoder(small_run.encoder, stream_rng(small_run.seed, "init"))
    assert result.checkpoint.params.equals(expected)
    assert result.checkpoint.step == 0


def test_same_seed_same_history(small_run, dataset):
    first = fit(dataset, small_run)
    second = fit(dataset, small_run)
    assert loss_history(first.history) == loss_history(second.history)
    assert first.checkpoint.params.equals(second.checkpoint.params)
    assert len(first.history) == 3


def test_fit_writes_checkpoints_and_history(small_run, dataset, tmp_path):
    out = str(tmp_path / "train")
    result = fit(dataset, small_run, out_dir=out)
    assert sorted(os.listdir(out)) == ["final.cwck", "final.json", "history.jsonl",
                                       "step_000002.cwck", "step_000002.json"]
    with open(os.path.join(out, "history.jsonl")) as src:
        header, *lines = [json.loads(line) for line in src]
    assert header["kind"] == "history"
    assert header["steps"] == 3
    assert header["config"] == small_run.to_dict()
    assert "version" in header
    assert [line["step"] for line in lines] == [1, 2, 3]
    assert lines[-1]["total"] == result.history[-1]["total"]
    final = load_checkpoint(os.path.join(out, "final.cwck"))
    assert final.step == 3
    assert final.params.equals(result.checkpoint.params)
    assert load_checkpoint(os.path.join(out, "step_000002.cwck")).step == 2


def test_periodic_evaluation(small_run, dataset):
    heldout = SequenceDataset.from_items(generate_many(small_run.scene, sequence_seeds(small_run.seed, 2, heldout=True)))
    small_run.train.eval_every = 2
    result = fit(dataset, small_run, heldout=heldout)
    assert "eval" not in result.history[0]
    assert set(result.history[1]["eval"]) == {"1", "2", "3"}


def test_single_precision_training(small_run, dataset):
    small_run.train.precision = "float32"
    small_run.train.steps = 1
    result = fit(dataset, small_run)
    assert result.checkpoint.params.dtype == np.float32
    assert np.isfinite(result.history[0]["total"])


def test_empty_dataset_rejected(small_run):
    with pytest.raises(ConfigError):
        fit(SequenceDataset([], []), small_run)


@pytest.mark.parametrize("changes", [
    {"batch_size": 0},
    {"steps": -1},
    {"precision": "float16"},
    {"objective": "contrastive"},
    {"learning_rate": 0.0},
])
def test_invalid_train_config(changes):
    with pytest.raises(ConfigError):
        TrainConfig(**changes).validate()


def test_grid_and_walk_configs_are_used(small_run, dataset):
    # a 32 x 32 frame with 16 px patches at stride 16 has only 4 nodes
    small_run.grid = PatchGridConfig(patch_size=16, stride=16)
    small_run.walk = WalkConfig(temperature=0.2, edge_dropout=0.0, clip_length=2)
    report, _ = _step(small_run, [Clip(dataset.sequences[0].frames[:2])])
    assert np.isfinite(report.total)
    assert 0.0 < report.return_probability[0] <= 1.0
