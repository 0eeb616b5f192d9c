# This file is a part of CycleWalk

from __future__ import annotations
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import entr, softmax

from CycleWalk.data.dataset import SequenceDataset
from CycleWalk.data.labels import correspondence_labels, grid_labels, node_classes
from CycleWalk.engine import ParamSet, Tensor
from CycleWalk.exceptions import EmptyLabelSet, ShapeMismatch
from CycleWalk.propagation.kernel import PropagationConfig
from CycleWalk.propagation.propagate import propagate_sequence
from CycleWalk.walk.core import CorrespondenceLabels
from CycleWalk.walk.encoder import EncoderConfig, embed_sequence
from CycleWalk.walk.nodes import PatchGridConfig, grid_geometry


def _array(matrix) -> np.ndarray:
    return matrix.data if isinstance(matrix, Tensor) else np.asarray(matrix)


def walk_accuracy(walk_matrix, labels: CorrespondenceLabels) -> float:
    """Fraction of valid rows whose most likely endpoint is the labelled node."""
    a = _array(walk_matrix)
    if a.shape[0] != labels.size:
        raise ShapeMismatch(node="walk_accuracy", expected=labels.size, actual=a.shape[0])
    rows = np.flatnonzero(labels.valid)
    if rows.size == 0:
        raise EmptyLabelSet("Every correspondence row is invalid")
    # np.argmax returns the first maximum, i.e. the lower index on ties
    return float(np.mean(np.argmax(a[rows], axis=1) == labels.targets[rows]))


def row_entropy(matrix) -> np.ndarray:
    """Entropy (nats) of every row of a row-stochastic matrix."""
    return entr(_array(matrix)).sum(axis=1)


def per_class_iou(predicted: np.ndarray, truth: np.ndarray, skip_first: bool = True) -> Dict[int, float]:
    """IoU per class present in `truth`, over frames 1.. (frame 0 is given)."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ShapeMismatch(node="propagation_score", expected=truth.shape, actual=predicted.shape)
    if skip_first:
        predicted, truth = predicted[1:], truth[1:]
    scores = {}
    for c in np.unique(truth):
        p, g = predicted == c, truth == c
        scores[int(c)] = float(np.sum(p & g) / np.sum(p | g))
    return scores


def propagation_score(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Mean per-class IoU of hard node labels (T x N)."""
    scores = per_class_iou(predicted, truth)
    return float(np.mean(list(scores.values()))) if scores else 0.0


@dataclass
class MetricsReport:
    walk_accuracy: Dict[int, float] = field(default_factory=dict)
    return_probability: Dict[int, float] = field(default_factory=dict)
    entropy: Dict[int, float] = field(default_factory=dict)
    mean_iou: Optional[float] = None
    sequences: int = 0
    wall_time: float = 0.0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "walk_accuracy": {str(k): v for k, v in self.walk_accuracy.items()},
            "return_probability": {str(k): v for k, v in self.return_probability.items()},
            "entropy": {str(k): v for k, v in self.entropy.items()},
            "mean_iou": self.mean_iou,
            "sequences": self.sequences,
            "wall_time": self.wall_time,
            "config": self.config,
        }


def hop_transitions(embeddings: Sequence[np.ndarray], temperature: float) -> List[np.ndarray]:
    return [softmax(a @ b.T / temperature, axis=1) for a, b in zip(embeddings[:-1], embeddings[1:])]


def evaluate_walks(params: ParamSet, dataset: SequenceDataset, grid_cfg: PatchGridConfig,
                   enc_cfg: EncoderConfig, temperature: float, hops: Sequence[int] = (1, 2, 3)) -> MetricsReport:
    """Pooled walk accuracy, round-trip return probability and entropy per hop
    length over every start frame of every sequence, without dropout or jitter."""
    started = time.time()
    correct = {k: 0 for k in hops}
    counted = {k: 0 for k in hops}
    returns = {k: [] for k in hops}
    entropies = {k: [] for k in hops}
    for seq, gt in zip(dataset.sequences, dataset.truths):
        geometry = grid_geometry(seq.frame_shape, grid_cfg)
        emb = embed_sequence(params, seq.frames, grid_cfg, enc_cfg)
        forward = hop_transitions(emb, temperature)
        backward = [softmax(a @ b.T / temperature, axis=1) for a, b in zip(emb[1:], emb[:-1])]
        for k in hops:
            for t in range(seq.length - k):
                walk = np.linalg.multi_dot(forward[t:t + k]) if k > 1 else forward[t]
                back = np.linalg.multi_dot(backward[t:t + k][::-1]) if k > 1 else backward[t]
                returns[k].append(float(np.mean(np.diag(walk @ back))))
                entropies[k].append(float(np.mean(row_entropy(walk))))
                labels = correspondence_labels(gt, geometry, t, k)
                valid = np.flatnonzero(labels.valid)
                correct[k] += int(np.sum(np.argmax(walk[valid], axis=1) == labels.targets[valid]))
                counted[k] += valid.size
    report = MetricsReport(sequences=len(dataset))
    for k in hops:
        if counted[k] == 0:
            logging.warning(f"No valid correspondences at hop {k}")
            continue
        report.walk_accuracy[k] = correct[k] / counted[k]
        report.return_probability[k] = float(np.mean(returns[k]))
        report.entropy[k] = float(np.mean(entropies[k]))
    report.wall_time = time.time() - started
    logging.debug(f"Walk evaluation over {len(dataset)} sequences: {report.walk_accuracy}")
    return report


def evaluate_propagation(params: ParamSet, dataset: SequenceDataset, grid_cfg: PatchGridConfig,
                         enc_cfg: EncoderConfig, prop_cfg: PropagationConfig) -> Dict[str, object]:
    """Propagate frame-0 ground truth through every sequence and score it."""
    scores = []
    for seq, gt in zip(dataset.sequences, dataset.truths):
        geometry = grid_geometry(seq.frame_shape, grid_cfg)
        result = propagate_sequence(params, seq.frames, grid_labels(gt, geometry)[0], grid_cfg, enc_cfg, prop_cfg)
        scores.append(propagation_score(result.hard, node_classes(gt, geometry)))
    return {"mean_iou": float(np.mean(scores)) if scores else None, "per_sequence": scores}
