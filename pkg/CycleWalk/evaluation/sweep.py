# This file is a part of CycleWalk

from __future__ import annotations
import asyncio
import copy
import csv
import io
import logging
import os
import time
import traceback
from typing import List, Optional, Sequence

from CycleWalk.config import RunConfig
from CycleWalk.data.dataset import SequenceDataset
from CycleWalk.data.synth import generate_many
from CycleWalk.engine import ParamSet
from CycleWalk.evaluation.metrics import evaluate_propagation, evaluate_walks
from CycleWalk.exceptions import ConfigError
from CycleWalk.train.trainer import fit
from CycleWalk.utils.files import dump_json, write_files
from CycleWalk.utils.run_info import stamp
from CycleWalk.utils.seeds import sequence_seeds
from CycleWalk.vars import Var

TRAINING_AXES = ("edge-dropout", "path-length", "frame-rate")
EVAL_AXES = ("context-length", "neighbors", "radius")
AXES = TRAINING_AXES + EVAL_AXES

HOPS = (1, 2, 3)


def _apply(run: RunConfig, axis: str, value) -> RunConfig:
    cell = copy.deepcopy(run)
    if axis == "edge-dropout":
        cell.walk.edge_dropout = float(value)
    elif axis == "path-length":
        cell.walk.clip_length = int(value)
        cell.scene.frames = max(cell.scene.frames, int(value))
    elif axis == "frame-rate":
        speed = int(value)
        cell.scene.speed = speed
        # keep the number of output frames fixed across speeds
        cell.scene.frames = cell.scene.frames * max(speed, 1)
    elif axis == "context-length":
        cell.propagation.context = int(value)
    elif axis == "neighbors":
        cell.propagation.neighbors = int(value)
    elif axis == "radius":
        cell.propagation.radius = float(value)
    return cell.validate()


def generate_dataset(run: RunConfig, heldout: bool = False) -> SequenceDataset:
    count = run.heldout if heldout else run.sequences
    seeds = sequence_seeds(run.seed, count, heldout=heldout)
    return SequenceDataset.from_items(generate_many(run.scene, seeds), {"seeds": seeds})


def _cell(axis: str, value, run: RunConfig, train_data: Optional[SequenceDataset],
          heldout: SequenceDataset, params: Optional[ParamSet]) -> dict:
    started = time.time()
    cell = _apply(run, axis, value)
    if axis in TRAINING_AXES or params is None:
        data = train_data
        if data is None or axis in ("frame-rate", "path-length"):
            data = generate_dataset(cell)
        params = fit(data, cell).checkpoint.params
    walks = evaluate_walks(params, heldout, cell.grid, cell.encoder, cell.walk.temperature, HOPS)
    props = evaluate_propagation(params, heldout, cell.grid, cell.encoder, cell.propagation)
    return {
        "axis": axis,
        "value": value,
        "status": "ok",
        "walk_accuracy": walks.walk_accuracy,
        "return_probability": walks.return_probability,
        "entropy": walks.entropy,
        "mean_iou": props["mean_iou"],
        "wall_time": time.time() - started,
    }


async def _run_cells(axis, values, run, train_data, heldout, params) -> List[dict]:
    gate = asyncio.Semaphore(Var.THREADS)

    async def one(value):
        async with gate:
            try:
                return await asyncio.to_thread(_cell, axis, value, run, train_data, heldout, params)
            except Exception as e:
                logging.error(traceback.format_exc())
                return {"axis": axis, "value": value, "status": "failed", "error": str(e)}

    return await asyncio.gather(*[one(v) for v in values])


def csv_table(rows: List[dict]) -> str:
    columns = ["axis", "value", "status"]
    columns += [f"walk_accuracy_{k}" for k in HOPS]
    columns += [f"return_probability_{k}" for k in HOPS]
    columns += [f"entropy_{k}" for k in HOPS]
    columns += ["mean_iou", "wall_time", "error"]
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        flat = {c: row.get(c, "") for c in ("axis", "value", "status", "mean_iou", "wall_time", "error")}
        for key in ("walk_accuracy", "return_probability", "entropy"):
            for k in HOPS:
                flat[f"{key}_{k}"] = row.get(key, {}).get(k, "")
        writer.writerow(flat)
    return buffer.getvalue()


def run_sweep(axis: str, values: Sequence, run: RunConfig, heldout: SequenceDataset,
              train_data: Optional[SequenceDataset] = None, params: Optional[ParamSet] = None,
              out_dir: Optional[str] = None) -> List[dict]:
    """One row per value, in value order; failed cells are recorded, not raised."""
    if axis not in AXES:
        raise ConfigError("Unknown sweep axis", axis=axis, choices=AXES)
    if not values:
        raise ConfigError("A sweep needs at least one value", axis=axis)
    if len(heldout) == 0:
        raise ConfigError("A sweep needs held-out sequences")
    run.validate()
    logging.info(f"Sweeping {axis} over {list(values)} with {Var.THREADS} worker(s)")
    rows = asyncio.run(_run_cells(axis, list(values), run, train_data, heldout, params))
    failed = sum(r["status"] != "ok" for r in rows)
    if failed:
        logging.warning(f"{failed} of {len(rows)} sweep cells failed")
    if out_dir:
        name = axis.replace("-", "_")
        write_files({
            os.path.join(out_dir, f"sweep_{name}.json"): dump_json(stamp({"axis": axis, "rows": rows}, run.to_dict())),
            os.path.join(out_dir, f"sweep_{name}.csv"): csv_table(rows),
        })
    return rows
