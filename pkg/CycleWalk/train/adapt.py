# This file is a part of CycleWalk
"""Test-time adaptation: a few Adam steps of the self-supervised loss on
frames around the one being labelled. Labels never enter this module."""

from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from CycleWalk.data.dataset import Clip
from CycleWalk.engine import ParamSet
from CycleWalk.exceptions import ConfigError
from CycleWalk.train.adam import AdamConfig, AdamState, adam_update
from CycleWalk.train.trainer import clip_loss, train_step
from CycleWalk.walk.core import WalkConfig
from CycleWalk.walk.encoder import EncoderConfig
from CycleWalk.walk.nodes import PatchGridConfig


@dataclass
class AdaptConfig:
    updates: int = 100
    learning_rate: float = 1e-4
    window: int = 10       # m: frames on each side of the current one
    every: int = 5         # adapt before every `every`-th propagated frame

    def validate(self) -> AdaptConfig:
        if self.updates < 0:
            raise ConfigError("updates must be >= 0", updates=self.updates)
        if self.window < 1 or self.every < 1:
            raise ConfigError("window and every must be >= 1", window=self.window, every=self.every)
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0", learning_rate=self.learning_rate)
        return self


@dataclass
class AdaptResult:
    params: ParamSet
    losses: List[float] = field(default_factory=list)
    initial_loss: Optional[float] = None
    final_loss: Optional[float] = None


def window_bounds(t: int, length: int, m: int) -> range:
    """The 2m + 1 frames centred on t, clamped at the sequence ends."""
    return range(max(0, t - m), min(length, t + m + 1))


def window_clips(frames: np.ndarray, clip_length: int) -> List[Clip]:
    """All stride-1 sub-clips of the window, shortened to fit the window."""
    length = min(clip_length, frames.shape[0])
    return [Clip(frames[s:s + length], start=s) for s in range(frames.shape[0] - length + 1)]


def window_loss(params: ParamSet, frames: np.ndarray, walk_cfg: WalkConfig, grid_cfg: PatchGridConfig,
                enc_cfg: EncoderConfig) -> float:
    """Self-supervised loss of the window without jitter or dropout."""
    clips = window_clips(frames, walk_cfg.clip_length)
    return float(np.mean([clip_loss(params, c, walk_cfg, grid_cfg, enc_cfg, None, None).total for c in clips]))


def test_time_adapt(params: ParamSet, frames: np.ndarray, cfg: AdaptConfig, walk_cfg: WalkConfig,
                    grid_cfg: PatchGridConfig, enc_cfg: EncoderConfig,
                    rng: Optional[np.random.Generator] = None, measure: bool = False) -> AdaptResult:
    """Adapted copy of `params`; the input parameters are never modified."""
    cfg.validate()
    frames = np.asarray(frames)
    if frames.shape[0] < 2:
        raise ConfigError("Adaptation needs a window of at least 2 frames", frames=frames.shape[0])
    rng = rng if rng is not None else np.random.default_rng(0)
    adapted = params.copy()
    state = AdamState.zeros_like(adapted)
    adam_cfg = AdamConfig(learning_rate=cfg.learning_rate)
    clips = window_clips(frames, walk_cfg.clip_length)

    result = AdaptResult(params=adapted)
    if measure:
        result.initial_loss = window_loss(adapted, frames, walk_cfg, grid_cfg, enc_cfg)
    for _ in range(cfg.updates):
        report, grads = train_step(adapted, clips, walk_cfg, grid_cfg, enc_cfg, jitter_rng=rng, dropout_rng=rng)
        adapted, state = adam_update(adapted, grads, state, adam_cfg)
        result.losses.append(report.total)
    result.params = adapted
    if measure:
        result.final_loss = window_loss(adapted, frames, walk_cfg, grid_cfg, enc_cfg)
        logging.debug(f"Adaptation over {frames.shape[0]} frames: {result.initial_loss:.4f} -> {result.final_loss:.4f}")
    return result


test_time_adapt.__test__ = False  # not a pytest test despite the name
