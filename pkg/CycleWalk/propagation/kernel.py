# This file is a part of CycleWalk

from __future__ import annotations
import logging
from collections import deque
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.special import softmax

from CycleWalk.exceptions import ConfigError, ShapeMismatch

TOPK_MODES = ("global", "per_frame")


@dataclass
class PropagationConfig:
    neighbors: int = 10
    context: int = 20
    radius: float = 12
    temperature: float = 0.07
    topk_mode: str = "global"

    def validate(self) -> PropagationConfig:
        if self.neighbors < 1 or self.context < 1:
            raise ConfigError("neighbors and context must be >= 1", neighbors=self.neighbors, context=self.context)
        if not self.radius > 0:
            raise ConfigError("radius must be > 0", radius=self.radius)
        if not self.temperature > 0:
            raise ConfigError("temperature must be > 0", temperature=self.temperature)
        if self.topk_mode not in TOPK_MODES:
            raise ConfigError("Unknown top-k mode", topk_mode=self.topk_mode, choices=TOPK_MODES)
        return self


@dataclass
class QueueEntry:
    embeddings: np.ndarray   # N x d, unit rows
    labels: np.ndarray       # N x C
    coords: np.ndarray       # N x 2 grid coordinates
    frame: int = 0

    def __post_init__(self):
        n = self.embeddings.shape[0]
        if self.labels.shape[0] != n or self.coords.shape[0] != n:
            raise ShapeMismatch(node="QueueEntry", expected=n,
                                actual=(self.labels.shape[0], self.coords.shape[0]))


class ContextQueue:
    """The first labelled frame plus a FIFO of the last m predicted frames."""

    def __init__(self, first: QueueEntry, context: int):
        if context < 1:
            raise ConfigError("context must be >= 1", context=context)
        self.first = first
        self.recent = deque(maxlen=context)

    def push(self, entry: QueueEntry) -> None:
        if entry.labels.shape[1] != self.first.labels.shape[1]:
            raise ShapeMismatch(node="ContextQueue", expected=self.first.labels.shape[1],
                                actual=entry.labels.shape[1])
        self.recent.append(entry)

    @property
    def entries(self) -> List[QueueEntry]:
        return [self.first, *self.recent]

    def __len__(self) -> int:
        return 1 + len(self.recent)

    def stacked(self):
        entries = self.entries
        return (
            np.concatenate([e.embeddings for e in entries]),
            np.concatenate([e.labels for e in entries]),
            np.concatenate([e.coords for e in entries]),
            np.concatenate([np.full(e.embeddings.shape[0], i) for i, e in enumerate(entries)]),
        )


@dataclass
class Kernel:
    """Per target row: selected source indices (best first) and weights."""
    indices: List[np.ndarray]
    weights: List[np.ndarray]
    fallback: np.ndarray
    sources: int

    def dense(self) -> np.ndarray:
        out = np.zeros((len(self.indices), self.sources))
        for row, (idx, w) in enumerate(zip(self.indices, self.weights)):
            out[row, idx] = w
        return out

    def apply(self, source_labels: np.ndarray) -> np.ndarray:
        if source_labels.shape[0] != self.sources:
            raise ShapeMismatch(node="Kernel.apply", expected=self.sources, actual=source_labels.shape[0])
        return np.stack([w @ source_labels[idx] for idx, w in zip(self.indices, self.weights)])


def _top(scores: np.ndarray, candidates: np.ndarray, k: int) -> np.ndarray:
    # candidates ascend, so a stable sort keeps the lower index first on ties
    order = np.argsort(-scores[candidates], kind="stable")
    return candidates[order[:k]]


def build_kernel(q_target: np.ndarray, target_coords: np.ndarray, queue: ContextQueue,
                 cfg: PropagationConfig) -> Kernel:
    """Sparse k-NN attention from target nodes to queue nodes within the radius."""
    cfg.validate()
    sources, _, coords, owner = queue.stacked()
    if q_target.shape[1] != sources.shape[1]:
        raise ShapeMismatch(node="build_kernel", expected=sources.shape[1], actual=q_target.shape[1])
    scores = q_target @ sources.T / cfg.temperature
    near = np.abs(target_coords[:, None, :] - coords[None, :, :]).max(axis=2) <= cfg.radius

    indices, weights = [], []
    fallback = np.zeros(q_target.shape[0], dtype=bool)
    for row in range(q_target.shape[0]):
        candidates = np.flatnonzero(near[row])
        if candidates.size == 0:
            candidates = np.arange(sources.shape[0])
            fallback[row] = True
        if cfg.topk_mode == "global":
            chosen = _top(scores[row], candidates, cfg.neighbors)
        else:
            picks = [_top(scores[row], candidates[owner[candidates] == f], cfg.neighbors)
                     for f in np.unique(owner[candidates])]
            union = np.concatenate(picks)
            chosen = union[np.lexsort((union, -scores[row, union]))]
        indices.append(chosen)
        weights.append(softmax(scores[row, chosen]))
    if fallback.any():
        logging.warning(f"{int(fallback.sum())} target nodes had no source within radius {cfg.radius}")
    return Kernel(indices, weights, fallback, sources.shape[0])
