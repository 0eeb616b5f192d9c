# This file is a part of CycleWalk

from __future__ import annotations
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from CycleWalk.engine import (
    DROPPED, Tensor, gather, log, mask_fill, matmul, reduce_sum, row_renormalize, scale, transpose,
)
from CycleWalk.engine import add as _add
from CycleWalk.engine import row_softmax as _row_softmax
from CycleWalk.exceptions import ConfigError, EmptyLabelSet, ShapeMismatch

# Floor inside -log(p) so a vanishing return probability stays finite.
LOG_FLOOR = 1e-20
DROPOUT_MODES = ("prefill", "renormalize")


@dataclass
class WalkConfig:
    temperature: float = 0.07
    edge_dropout: float = 0.1
    clip_length: int = 4
    dropout_mode: str = "prefill"

    def validate(self) -> WalkConfig:
        if not self.temperature > 0:
            raise ConfigError("temperature must be > 0", temperature=self.temperature)
        if not 0 <= self.edge_dropout < 1:
            raise ConfigError("edge_dropout must lie in [0, 1)", edge_dropout=self.edge_dropout)
        if self.clip_length < 2:
            raise ConfigError("clip_length must be >= 2", clip_length=self.clip_length)
        if self.dropout_mode not in DROPOUT_MODES:
            raise ConfigError("Unknown dropout mode", dropout_mode=self.dropout_mode, choices=DROPOUT_MODES)
        return self


@dataclass
class CorrespondenceLabels:
    """Target node Y(i) for each source node i, with a validity mask."""
    targets: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.int64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.targets.shape != self.valid.shape:
            raise ShapeMismatch(node="CorrespondenceLabels", expected=self.targets.shape, actual=self.valid.shape)
        n = self.targets.shape[0]
        bad = self.valid & ((self.targets < 0) | (self.targets >= n))
        if bad.any():
            raise ConfigError("Valid correspondence targets must lie in [0, N)", rows=np.flatnonzero(bad).tolist())

    @classmethod
    def identity(cls, n: int) -> CorrespondenceLabels:
        return cls(np.arange(n), np.ones(n, dtype=bool))

    @property
    def size(self) -> int:
        return self.targets.shape[0]


@dataclass
class LossReport:
    subcycle_losses: List[float]
    total: float
    return_probability: List[float]
    loss: Optional[Tensor] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "subcycles": list(self.subcycle_losses),
            "return_probability": list(self.return_probability),
        }


# ----------[One hop]----------
def transition_energies(q_t: Tensor, q_u: Tensor, temperature: float) -> Tensor:
    """E(i, j) = <q_t[i], q_u[j]> / temperature."""
    if not temperature > 0:
        raise ConfigError("temperature must be > 0", temperature=temperature)
    return scale(matmul(q_t, transpose(q_u)), 1.0 / temperature)


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    return rng.random(shape) < rate


def apply_edge_dropout(energies: Tensor, rate: float, rng: np.random.Generator,
                       mask: np.ndarray = None) -> Tensor:
    """Replace each energy by -1e10 with probability `rate` (or where `mask` is set)."""
    if not 0 <= rate < 1:
        raise ConfigError("edge_dropout must lie in [0, 1)", edge_dropout=rate)
    if mask is None:
        if rate == 0:
            return energies
        mask = dropout_mask(energies.shape, rate, rng)
    return mask_fill(energies, mask, DROPPED)


def row_softmax(energies: Tensor) -> Tensor:
    return _row_softmax(energies)


# ----------[Palindrome walks]----------
def palindrome_energies(energies: Sequence[Tensor]) -> List[Tensor]:
    """[E_1, ..., E_{T-1}, E_{T-1}^T, ..., E_1^T]."""
    if len(energies) < 1:
        raise ConfigError("A palindrome needs T >= 2 frames", hops=len(energies))
    return list(energies) + [transpose(e) for e in reversed(energies)]


def palindrome_transitions(energies: Sequence[Tensor], cfg: WalkConfig,
                           rng: np.random.Generator = None, train: bool = True) -> List[Tensor]:
    """Row-stochastic transitions along the palindrome. Edge dropout is
    drawn independently for every step, forward and backward halves alike."""
    steps = palindrome_energies(energies)
    dropping = train and rng is not None and cfg.edge_dropout > 0
    if not dropping:
        return [row_softmax(e) for e in steps]
    if cfg.dropout_mode == "prefill":
        return [row_softmax(apply_edge_dropout(e, cfg.edge_dropout, rng)) for e in steps]
    return [
        row_renormalize(row_softmax(e), ~dropout_mask(e.shape, cfg.edge_dropout, rng))
        for e in steps
    ]


def walk(transitions: Sequence[Tensor]) -> Tensor:
    """Left-to-right product A_1 A_2 ... A_k."""
    if not transitions:
        raise ConfigError("walk needs at least one transition matrix")
    n = transitions[0].shape[0]
    for a in transitions:
        if a.shape != (n, n):
            raise ShapeMismatch(node="walk", expected=(n, n), actual=a.shape)
    out = transitions[0]
    for a in transitions[1:]:
        out = matmul(out, a)
    return out


def _mean_nll(probs: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    picked = gather(probs, rows, cols)
    return scale(reduce_sum(log(picked, floor=LOG_FLOOR)), -1.0 / len(rows))


def subcycle_losses(transitions: Sequence[Tensor]) -> LossReport:
    """Cycle losses for every sub-cycle of a palindrome of 2h transitions.

    Sub-cycle i walks the first i forward steps and the last i backward
    steps; prefix and suffix products are shared between sub-cycles.
    """
    if len(transitions) < 2 or len(transitions) % 2:
        raise ConfigError("A palindrome has an even, non-zero number of steps", steps=len(transitions))
    hops = len(transitions) // 2
    n = transitions[0].shape[0]
    diag = np.arange(n)

    losses, returns = [], []
    forward = suffix = None
    total = None
    for i in range(1, hops + 1):
        step_fwd = transitions[i - 1]
        step_back = transitions[2 * hops - i]
        forward = step_fwd if forward is None else matmul(forward, step_fwd)
        suffix = step_back if suffix is None else matmul(step_back, suffix)
        round_trip = matmul(forward, suffix)
        loss_i = _mean_nll(round_trip, diag, diag)
        losses.append(loss_i)
        returns.append(float(np.mean(np.diag(round_trip.data))))
        total = loss_i if total is None else _add(total, loss_i)
    return LossReport(
        subcycle_losses=[l.item() for l in losses],
        total=total.item(),
        return_probability=returns,
        loss=total,
    )


def cycle_and_subcycle_losses(energies: Sequence[Tensor], cfg: WalkConfig,
                              rng: np.random.Generator = None, train: bool = True) -> LossReport:
    cfg.validate()
    return subcycle_losses(palindrome_transitions(energies, cfg, rng=rng, train=train))


def supervised_walk_loss(walk_matrix: Tensor, labels: CorrespondenceLabels) -> Tensor:
    """Mean over valid rows of -log A(i, Y(i))."""
    if labels.size != walk_matrix.shape[0]:
        raise ShapeMismatch(node="supervised_walk_loss", expected=walk_matrix.shape[0], actual=labels.size)
    rows = np.flatnonzero(labels.valid)
    if rows.size == 0:
        raise EmptyLabelSet("Every correspondence row is invalid")
    return _mean_nll(walk_matrix, rows, labels.targets[rows])


def frame_energies(embeddings: Sequence[Tensor], temperature: float) -> List[Tensor]:
    """Energies between consecutive frames of a clip."""
    return [transition_energies(a, b, temperature) for a, b in zip(embeddings[:-1], embeddings[1:])]
