import csv
import io
import json

import pytest

from CycleWalk.data import SequenceDataset
from CycleWalk.evaluation import sweep
from CycleWalk.evaluation.sweep import csv_table, generate_dataset, run_sweep
from CycleWalk.exceptions import ConfigError
from CycleWalk.walk import init_encoder


@pytest.fixture
def heldout(small_run):
    return generate_dataset(small_run, heldout=True)


def test_generated_splits_do_not_share_seeds(small_run, heldout):
    train = generate_dataset(small_run)
    assert len(train) == 3 and len(heldout) == 2
    assert not set(train.manifest["seeds"]) & set(heldout.manifest["seeds"])


def test_eval_axis_reuses_the_encoder(small_run, heldout, tmp_path, monkeypatch):
    def no_training(*args, **kwargs):
        raise AssertionError("evaluation-only cells must not train")
    monkeypatch.setattr(sweep, "fit", no_training)
    params = init_encoder(small_run.encoder, 0)
    rows = run_sweep("context-length", [1, 3], small_run, heldout, params=params, out_dir=str(tmp_path))
    assert [r["value"] for r in rows] == [1, 3]
    assert all(r["status"] == "ok" for r in rows)
    assert set(rows[0]["walk_accuracy"]) == {1, 2, 3}

    with open(tmp_path / "sweep_context_length.json") as src:
        doc = json.load(src)
    assert doc["axis"] == "context-length"
    assert doc["config"]["seed"] == small_run.seed
    assert "version" in doc
    table = list(csv.DictReader(io.StringIO((tmp_path / "sweep_context_length.csv").read_text())))
    assert [row["value"] for row in table] == ["1", "3"]
    assert table[0]["status"] == "ok"


def test_training_axis_trains_each_cell(small_run, heldout):
    small_run.train.steps = 1
    rows = run_sweep("edge-dropout", [0.0, 0.2], small_run, heldout, train_data=generate_dataset(small_run))
    assert [r["status"] for r in rows] == ["ok", "ok"]
    assert all(r["mean_iou"] is not None for r in rows)


def test_frame_rate_cells_keep_sequence_length(small_run):
    fast = sweep._apply(small_run, "frame-rate", 2)
    assert fast.scene.speed == 2
    assert fast.scene.output_frames == small_run.scene.frames
    still = sweep._apply(small_run, "frame-rate", 0)
    assert still.scene.output_frames == small_run.scene.frames
    assert small_run.scene.speed == 1


def test_path_length_extends_short_sequences(small_run):
    cell = sweep._apply(small_run, "path-length", 8)
    assert cell.walk.clip_length == 8
    assert cell.scene.frames == 8


def test_failed_cells_are_recorded(small_run, heldout, monkeypatch):
    def broken(*args, **kwargs):
        raise RuntimeError("boom")
    monkeypatch.setattr(sweep, "fit", broken)
    rows = run_sweep("edge-dropout", [0.1], small_run, heldout)
    assert rows == [{"axis": "edge-dropout", "value": 0.1, "status": "failed", "error": "boom"}]


def test_invalid_sweeps(small_run, heldout):
    with pytest.raises(ConfigError):
        run_sweep("learning-rate", [1], small_run, heldout)
    with pytest.raises(ConfigError):
        run_sweep("radius", [], small_run, heldout)
    with pytest.raises(ConfigError):
        run_sweep("radius", [1], small_run, SequenceDataset([], []))


def test_csv_flattens_hops():
    text = csv_table([{"axis": "radius", "value": 2, "status": "ok", "walk_accuracy": {1: 0.5}}])
    row = next(csv.DictReader(io.StringIO(text)))
    assert row["walk_accuracy_1"] == "0.5"
    assert row["walk_accuracy_2"] == ""
