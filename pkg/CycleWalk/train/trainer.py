# This file is a part of CycleWalk

from __future__ import annotations
import io
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from CycleWalk.data.dataset import Clip, SequenceDataset
from CycleWalk.data.labels import correspondence_labels
from CycleWalk.data.synth import SpriteSceneConfig, generate_sequence
from CycleWalk.engine import ParamSet, Tensor, add, backward, finite_diff_check, scale
from CycleWalk.exceptions import ConfigError, EmptyLabelSet, NonFiniteLoss, NumericOverflow
from CycleWalk.train.adam import AdamConfig, AdamState, adam_update
from CycleWalk.train.checkpoint import Checkpoint, save_checkpoint
from CycleWalk.utils.files import write_files
from CycleWalk.utils.run_info import stamp
from CycleWalk.utils.seeds import rng_state, stream_rng
from CycleWalk.utils.time_format import get_readable_time
from CycleWalk.vars import Var
from CycleWalk.walk.core import (
    LossReport, WalkConfig, apply_edge_dropout, cycle_and_subcycle_losses, frame_energies,
    row_softmax, supervised_walk_loss, walk,
)
from CycleWalk.walk.encoder import EncoderConfig, embed_frames, init_encoder
from CycleWalk.walk.nodes import PatchGridConfig, extract_clip, grid_geometry, spatial_jitter

if TYPE_CHECKING:
    from CycleWalk.config import RunConfig

OBJECTIVES = ("cycle", "supervised")
PRECISIONS = ("float32", "float64")
HIDDEN_BIAS = 0.1


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 4
    steps: int = 2000
    precision: str = "float64"
    seed: int = 0
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    checkpoint_every: int = 500
    eval_every: int = 0
    objective: str = "cycle"

    def validate(self) -> TrainConfig:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", batch_size=self.batch_size)
        if self.steps < 0:
            raise ConfigError("steps must be >= 0", steps=self.steps)
        if self.checkpoint_every < 0 or self.eval_every < 0:
            raise ConfigError("Cadences must be >= 0", checkpoint_every=self.checkpoint_every,
                              eval_every=self.eval_every)
        if self.precision not in PRECISIONS:
            raise ConfigError("Unknown precision", precision=self.precision, choices=PRECISIONS)
        if self.objective not in OBJECTIVES:
            raise ConfigError("Unknown objective", objective=self.objective, choices=OBJECTIVES)
        self.adam().validate()
        return self

    def adam(self) -> AdamConfig:
        return AdamConfig(self.learning_rate, tuple(self.betas), self.eps)

    @property
    def dtype(self):
        return np.dtype(self.precision)


@dataclass
class FitResult:
    checkpoint: Checkpoint
    history: List[dict] = field(default_factory=list)
    optimizer: Optional[AdamState] = None


def _dump_clip(clip: Clip, index: int, dump_dir: Optional[str]) -> Optional[str]:
    if not (dump_dir and Var.DUMP_NONFINITE):
        return None
    buffer = io.BytesIO()
    np.save(buffer, clip.frames)
    path = os.path.join(dump_dir, f"nonfinite_clip_{index}.npy")
    write_files({path: buffer.getvalue()})
    return path


def _supervised_clip_loss(embeddings: Sequence[Tensor], clip: Clip, walk_cfg: WalkConfig,
                          grid_cfg: PatchGridConfig, rng: Optional[np.random.Generator]) -> LossReport:
    """Sum over k of the walk loss from frame 0 to frame k against ground truth."""
    if clip.truth is None:
        raise ConfigError("The supervised objective needs ground truth for every clip")
    geometry = grid_geometry(clip.frames.shape[1:], grid_cfg)
    steps = []
    for e in frame_energies(embeddings, walk_cfg.temperature):
        if rng is not None and walk_cfg.edge_dropout > 0:
            e = apply_edge_dropout(e, walk_cfg.edge_dropout, rng)
        steps.append(row_softmax(e))
    total, losses, hits = None, [], []
    for k in range(1, len(steps) + 1):
        walk_matrix = walk(steps[:k])
        labels = correspondence_labels(clip.truth, geometry, clip.start, k)
        try:
            loss_k = supervised_walk_loss(walk_matrix, labels)
        except EmptyLabelSet:
            logging.debug(f"No valid correspondences at hop {k} of clip starting at {clip.start}")
            continue
        rows = np.flatnonzero(labels.valid)
        losses.append(loss_k.item())
        hits.append(float(np.mean(walk_matrix.data[rows, labels.targets[rows]])))
        total = loss_k if total is None else add(total, loss_k)
    if total is None:
        raise EmptyLabelSet("No hop of the clip has a valid correspondence", start=clip.start)
    return LossReport(subcycle_losses=losses, total=total.item(), return_probability=hits, loss=total)


def clip_loss(params: ParamSet, clip: Clip, walk_cfg: WalkConfig, grid_cfg: PatchGridConfig,
              enc_cfg: EncoderConfig, jitter_rng: Optional[np.random.Generator],
              dropout_rng: Optional[np.random.Generator], objective: str = "cycle") -> LossReport:
    """Patches, jitter, embeddings, energies and the walk loss of one clip."""
    nodes = extract_clip(clip.frames, grid_cfg)
    if jitter_rng is not None:
        nodes = [spatial_jitter(n, jitter_rng, grid_cfg) for n in nodes]
    embeddings = embed_frames(params, nodes, enc_cfg)
    if objective == "supervised":
        return _supervised_clip_loss(embeddings, clip, walk_cfg, grid_cfg, dropout_rng)
    energies = frame_energies(embeddings, walk_cfg.temperature)
    return cycle_and_subcycle_losses(energies, walk_cfg, rng=dropout_rng, train=dropout_rng is not None)


def train_step(params: ParamSet, clips: List[Clip], walk_cfg: WalkConfig, grid_cfg: PatchGridConfig,
               enc_cfg: EncoderConfig, jitter_rng: Optional[np.random.Generator] = None,
               dropout_rng: Optional[np.random.Generator] = None, objective: str = "cycle",
               dump_dir: Optional[str] = None) -> Tuple[LossReport, Dict[str, np.ndarray]]:
    """Mean loss over the clips, accumulated in clip order, and its gradients."""
    if not clips:
        raise ConfigError("A batch needs at least one clip")
    shapes = {c.frames.shape for c in clips}
    if len(shapes) != 1:
        raise ConfigError("Clips in a batch must share one shape", shapes=sorted(shapes))

    reports = []
    total = None
    for index, clip in enumerate(clips):
        try:
            report = clip_loss(params, clip, walk_cfg, grid_cfg, enc_cfg, jitter_rng, dropout_rng, objective)
        except NumericOverflow as e:
            raise NonFiniteLoss(clip=index, node=e.details.get("node"), dump=_dump_clip(clip, index, dump_dir))
        if not np.isfinite(report.total):
            raise NonFiniteLoss(clip=index, loss=report.total, dump=_dump_clip(clip, index, dump_dir))
        reports.append(report)
        total = report.loss if total is None else add(total, report.loss)
    loss = scale(total, 1.0 / len(clips))
    grads = backward(loss, params)

    depth = min(len(r.subcycle_losses) for r in reports)
    batch = LossReport(
        subcycle_losses=[float(np.mean([r.subcycle_losses[i] for r in reports])) for i in range(depth)],
        total=loss.item(),
        return_probability=[float(np.mean([r.return_probability[i] for r in reports])) for i in range(depth)],
        loss=loss,
    )
    return batch, grads


def _history_lines(header: dict, history: List[dict]) -> str:
    """Stamped header line first, then one record per step."""
    return "".join(json.dumps(h) + "\n" for h in [header, *history])


def fit(dataset: SequenceDataset, run: RunConfig, out_dir: Optional[str] = None,
        heldout: Optional[SequenceDataset] = None) -> FitResult:
    """Train an encoder from scratch on `dataset`; deterministic given the run seed."""
    if len(dataset) == 0:
        raise ConfigError("Cannot train on an empty dataset")
    cfg = run.train.validate()
    walk_cfg = run.walk.validate()
    grid_cfg = run.grid.validate(dataset.sequences[0].frame_shape)
    enc_cfg = run.encoder.validate()
    adam_cfg = cfg.adam()

    params = init_encoder(enc_cfg, stream_rng(run.seed, "init"), dtype=cfg.dtype)
    sampler = stream_rng(run.seed, "sampler")
    jitter_rng = stream_rng(run.seed, "jitter")
    dropout_rng = stream_rng(run.seed, "dropout")
    state = AdamState.zeros_like(params)
    run_config = run.to_dict()

    def snapshot(step: int) -> Checkpoint:
        return Checkpoint(
            params=params.copy(),
            train_config=asdict(cfg),
            step=step,
            rng_state={"sampler": rng_state(sampler), "jitter": rng_state(jitter_rng),
                       "dropout": rng_state(dropout_rng)},
            run_config=run_config,
        )

    history = []
    started = time.time()
    logging.info(f"Training {cfg.steps} steps, batch {cfg.batch_size}, clip length {walk_cfg.clip_length}, "
                 f"objective {cfg.objective}")
    for step in tqdm(range(1, cfg.steps + 1), desc="train", disable=not Var.PROGRESS):
        clips = dataset.sample_clips(sampler, cfg.batch_size, walk_cfg.clip_length)
        report, grads = train_step(params, clips, walk_cfg, grid_cfg, enc_cfg, jitter_rng, dropout_rng,
                                   cfg.objective, dump_dir=out_dir)
        params, state = adam_update(params, grads, state, adam_cfg)
        record = {"step": step, "total": report.total, "subcycles": report.subcycle_losses,
                  "wall_time": time.time() - started}
        if cfg.eval_every and heldout is not None and step % cfg.eval_every == 0:
            from CycleWalk.evaluation.metrics import evaluate_walks
            metrics = evaluate_walks(params, heldout, grid_cfg, enc_cfg, walk_cfg.temperature)
            record["eval"] = {str(k): v for k, v in metrics.walk_accuracy.items()}
        history.append(record)
        if step == 1 or step % 100 == 0:
            logging.info(f"step {step}: loss {report.total:.4f}")
        if out_dir and cfg.checkpoint_every and step % cfg.checkpoint_every == 0 and step != cfg.steps:
            save_checkpoint(os.path.join(out_dir, f"step_{step:06d}.cwck"), snapshot(step))

    final = snapshot(cfg.steps)
    if out_dir:
        save_checkpoint(os.path.join(out_dir, "final.cwck"), final)
        header = stamp({"kind": "history", "steps": cfg.steps}, run_config)
        write_files({os.path.join(out_dir, "history.jsonl"): _history_lines(header, history)})
    logging.info(f"Finished {cfg.steps} steps in {get_readable_time(time.time() - started)}")
    return FitResult(checkpoint=final, history=history, optimizer=state)


def loss_history(history: List[dict]) -> List[Tuple[int, float, List[float]]]:
    """History without wall times, for comparing runs."""
    return [(h["step"], h["total"], list(h["subcycles"])) for h in history]


def gradient_check(seed: int, clip_length: int, h: float = 1e-5, embed_dim: int = 4) -> float:
    """Finite-difference check of the clip loss on a 3 x 3 grid (N = 9) in 64-bit.

    The hidden bias starts at 0.1 so flat patches, which are all zero after
    mean removal, still land on the smooth side of every relu."""
    scene = SpriteSceneConfig(height=32, width=32, sprites=1, sprite_size=(8, 12), velocity_range=(1, 3),
                              frames=clip_length)
    frames, _ = generate_sequence(scene, seed)
    grid_cfg = PatchGridConfig(patch_size=16, stride=8)
    enc_cfg = EncoderConfig(input_dims=(16, 16, 1), hidden_widths=[16], embed_dim=embed_dim)
    walk_cfg = WalkConfig(temperature=0.5, edge_dropout=0.0, clip_length=clip_length)
    params = init_encoder(enc_cfg, stream_rng(seed, "init"), dtype=np.float64)
    params.replace("layer0.bias", np.full(params["layer0.bias"].shape, HIDDEN_BIAS))
    clip = Clip(frames.frames)
    return finite_diff_check(
        lambda p: clip_loss(p, clip, walk_cfg, grid_cfg, enc_cfg, None, None).loss,
        params, h=h, max_coords=32, seed=seed,
    )
