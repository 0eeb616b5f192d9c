# This file is a part of CycleWalk

from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from CycleWalk.engine import ParamSet
from CycleWalk.exceptions import ConfigError, ShapeMismatch
from CycleWalk.propagation.kernel import ContextQueue, PropagationConfig, QueueEntry, build_kernel
from CycleWalk.train.adapt import AdaptConfig, test_time_adapt, window_bounds
from CycleWalk.walk.core import WalkConfig
from CycleWalk.walk.encoder import EncoderConfig, embed_sequence
from CycleWalk.walk.nodes import PatchGridConfig, grid_geometry


@dataclass
class PropagationResult:
    soft: List[np.ndarray]                 # per frame N x C
    grid_dims: Tuple[int, int]
    fallbacks: int = 0
    adaptations: List[dict] = field(default_factory=list)

    @property
    def hard(self) -> np.ndarray:
        """T x N argmax labels, lower class index on ties."""
        return np.stack([np.argmax(s, axis=1) for s in self.soft])


def check_label_matrix(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim != 2 or (labels < 0).any():
        raise ConfigError("Label matrices are N x C and nonnegative", shape=labels.shape)
    sums = labels.sum(axis=1)
    labelled = sums > 0
    if not np.allclose(sums[labelled], 1.0, atol=1e-6):
        raise ConfigError("Labelled rows must sum to 1")
    return labels


def propagate_step(queue: ContextQueue, q_target: np.ndarray, coords: np.ndarray,
                   cfg: PropagationConfig) -> Tuple[np.ndarray, int]:
    kernel = build_kernel(q_target, coords, queue, cfg)
    _, source_labels, _, _ = queue.stacked()
    return kernel.apply(source_labels), int(kernel.fallback.sum())


def propagate_video(embeddings: Sequence[np.ndarray], first_labels: np.ndarray, grid_dims: Tuple[int, int],
                    cfg: PropagationConfig) -> PropagationResult:
    """Label every frame from frame 0, reusing predicted soft labels as context."""
    cfg.validate()
    first_labels = check_label_matrix(first_labels)
    n = grid_dims[0] * grid_dims[1]
    if any(e.shape[0] != n for e in embeddings) or first_labels.shape[0] != n:
        raise ShapeMismatch(node="propagate_video", expected=n,
                            actual=[e.shape[0] for e in embeddings] + [first_labels.shape[0]])
    coords = np.stack(np.divmod(np.arange(n), grid_dims[1]), axis=1)
    queue = ContextQueue(QueueEntry(embeddings[0], first_labels, coords, 0), cfg.context)
    result = PropagationResult(soft=[first_labels], grid_dims=grid_dims)
    for t in range(1, len(embeddings)):
        labels, fallbacks = propagate_step(queue, embeddings[t], coords, cfg)
        result.fallbacks += fallbacks
        result.soft.append(labels)
        queue.push(QueueEntry(embeddings[t], labels, coords, t))
    return result


def propagate_sequence(params: ParamSet, frames: np.ndarray, first_labels: np.ndarray,
                       grid_cfg: PatchGridConfig, enc_cfg: EncoderConfig,
                       cfg: PropagationConfig) -> PropagationResult:
    geometry = grid_geometry(frames.shape[1:], grid_cfg)
    embeddings = embed_sequence(params, frames, grid_cfg, enc_cfg)
    return propagate_video(embeddings, first_labels, geometry.grid_dims, cfg)


def adapt_and_propagate(params: ParamSet, frames: np.ndarray, first_labels: np.ndarray,
                        grid_cfg: PatchGridConfig, enc_cfg: EncoderConfig, cfg: PropagationConfig,
                        adapt_cfg: AdaptConfig, walk_cfg: WalkConfig,
                        rng: Optional[np.random.Generator] = None) -> PropagationResult:
    """Online pass: every `adapt_cfg.every` frames, adapt a fresh copy of the
    base parameters on the window around the current frame, then label it
    with queue and target re-embedded by the adapted encoder."""
    cfg.validate()
    adapt_cfg.validate()
    first_labels = check_label_matrix(first_labels)
    geometry = grid_geometry(frames.shape[1:], grid_cfg)
    coords = geometry.grid_coords()
    rng = rng if rng is not None else np.random.default_rng(0)

    current = params
    result = PropagationResult(soft=[first_labels], grid_dims=geometry.grid_dims)
    for t in range(1, frames.shape[0]):
        if (t - 1) % adapt_cfg.every == 0:
            window = window_bounds(t, frames.shape[0], adapt_cfg.window)
            adapted = test_time_adapt(params, frames[window.start:window.stop], adapt_cfg, walk_cfg,
                                      grid_cfg, enc_cfg, rng=rng, measure=True)
            current = adapted.params
            result.adaptations.append({"frame": t, "window": [window.start, window.stop],
                                       "before": adapted.initial_loss, "after": adapted.final_loss})
        context = list(range(max(1, t - cfg.context), t))
        used = [0, *context, t]
        emb = dict(zip(used, embed_sequence(current, frames[used], grid_cfg, enc_cfg)))
        queue = ContextQueue(QueueEntry(emb[0], first_labels, coords, 0), cfg.context)
        for s in context:
            queue.push(QueueEntry(emb[s], result.soft[s], coords, s))
        labels, fallbacks = propagate_step(queue, emb[t], coords, cfg)
        result.fallbacks += fallbacks
        result.soft.append(labels)
    logging.debug(f"Adapted {len(result.adaptations)} times over {frames.shape[0]} frames")
    return result


def export_predictions(result: PropagationResult) -> Dict[str, list]:
    rows, cols = result.grid_dims
    hard = result.hard
    return {
        "grid_dims": [rows, cols],
        "frames": [
            {
                "frame": t,
                "hard": hard[t].reshape(rows, cols).tolist(),
                "soft": np.round(result.soft[t], 6).tolist(),
            }
            for t in range(len(result.soft))
        ],
        "fallbacks": result.fallbacks,
    }
