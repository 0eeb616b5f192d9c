# This file is a part of CycleWalk

from __future__ import annotations
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from CycleWalk.engine import ParamSet
from CycleWalk.exceptions import ConfigError, ShapeMismatch


@dataclass
class AdamConfig:
    learning_rate: float = 1e-4
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def validate(self) -> AdamConfig:
        b1, b2 = self.betas
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0", learning_rate=self.learning_rate)
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)", betas=self.betas)
        if not self.eps > 0:
            raise ConfigError("Adam eps must be > 0", eps=self.eps)
        return self


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ParamSet) -> AdamState:
        return cls(m={n: np.zeros_like(t.data) for n, t in params.items()},
                   v={n: np.zeros_like(t.data) for n, t in params.items()})

    def copy(self) -> AdamState:
        return AdamState({k: a.copy() for k, a in self.m.items()},
                         {k: a.copy() for k, a in self.v.items()}, self.step)


def adam_update(params: ParamSet, grads: Dict[str, np.ndarray], state: AdamState,
                cfg: AdamConfig) -> Tuple[ParamSet, AdamState]:
    """One bias-corrected Adam step; returns new params and state, inputs untouched."""
    b1, b2 = cfg.betas
    state = state.copy()
    state.step += 1
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step

    updated = {}
    for name, tensor in params.items():
        g = grads[name]
        if g.shape != tensor.shape:
            raise ShapeMismatch(node=f"adam:{name}", expected=tensor.shape, actual=g.shape)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m, v = np.zeros_like(tensor.data), np.zeros_like(tensor.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name], state.v[name] = m, v
        m_hat = m / bc1
        v_hat = v / bc2
        updated[name] = tensor.data - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return ParamSet.from_arrays(updated), state
