# This file is a part of CycleWalk
"""False negatives identical to the positive in a contrastive softmax.

For a query q, positive u, true negatives V+ and |V-| exact copies of u
among the negatives, the gradient of L = u.q - log Z with respect to q is
lambda_u * u - sum_{v in V+} (exp(v.q) / Z) v with
lambda_u = 1 - (1 + |V-|) exp(u.q) / Z, which is never negative.
"""

from __future__ import annotations
from dataclasses import dataclass

import numpy as np

from CycleWalk.engine import Tensor, backward, matmul, scale, softmax_xent, transpose
from CycleWalk.exceptions import ConfigError


@dataclass
class LemmaResult:
    lambda_u: float
    partition: float
    negative_weights: np.ndarray   # exp(v.q / tau) / Z for v in V+
    analytic_grad: np.ndarray      # d L / d q


def _negatives(v_pos, dim: int) -> np.ndarray:
    v_pos = np.asarray(v_pos, dtype=np.float64)
    return v_pos.reshape(-1, dim) if v_pos.size else np.zeros((0, dim))


def false_negative_coefficient(q, u, v_pos, duplicate_count: int, temperature: float = 1.0) -> LemmaResult:
    if duplicate_count < 0:
        raise ConfigError("duplicate_count must be >= 0", duplicate_count=duplicate_count)
    q = np.asarray(q, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v_pos = _negatives(v_pos, q.shape[0])
    s_u = float(u @ q) / temperature
    s_v = v_pos @ q / temperature
    shift = max(s_u, float(s_v.max())) if s_v.size else s_u
    e_u = np.exp(s_u - shift)
    e_v = np.exp(s_v - shift)
    pos_mass = (1 + duplicate_count) * e_u
    rest = float(e_v.sum())
    z = pos_mass + rest
    # 1 - pos_mass / z, written so that it is exactly 0 when V+ is empty
    lambda_u = rest / z
    weights = e_v / z
    grad = (lambda_u * u - weights @ v_pos) / temperature
    return LemmaResult(lambda_u=lambda_u, partition=z * np.exp(shift),
                       negative_weights=weights, analytic_grad=grad)


def autodiff_positive_coefficient(q, u, v_pos, duplicate_count: int, temperature: float = 1.0):
    """The same coefficient read off reverse-mode gradients of the InfoNCE
    loss over keys [u, copies of u, V+]; returns (lambda_u, dL/dq)."""
    q = np.asarray(q, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v_pos = _negatives(v_pos, q.shape[0])
    keys = Tensor(np.vstack([np.tile(u, (1 + duplicate_count, 1)), v_pos]))
    query = Tensor(q[:, None], requires_grad=True)
    logits = transpose(scale(matmul(keys, query), 1.0 / temperature))
    loss = softmax_xent(logits, [0])
    backward(loss)
    g = logits.grad[0]
    lambda_u = -float(np.sum(g[: 1 + duplicate_count]))
    return lambda_u, -query.grad[:, 0]


@dataclass
class LemmaRun:
    draws: int
    min_lambda: float
    max_disagreement: float

    @property
    def passed(self) -> bool:
        return self.min_lambda >= -1e-12 and self.max_disagreement < 1e-10


@dataclass
class LemmaCase:
    q: np.ndarray
    u: np.ndarray
    v_pos: np.ndarray
    duplicate_count: int
    temperature: float


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def sample_lemma_case(rng: np.random.Generator, max_dim: int = 8, max_negatives: int = 8,
                      max_duplicates: int = 8) -> LemmaCase:
    """One random instance on the unit sphere, like the l2-normalized embeddings."""
    dim = int(rng.integers(2, max_dim + 1))
    q = _unit_rows(rng.normal(size=dim))
    u = _unit_rows(rng.normal(size=dim))
    v_pos = _unit_rows(rng.normal(size=(int(rng.integers(0, max_negatives + 1)), dim)))
    dup = int(rng.integers(0, max_duplicates + 1))
    return LemmaCase(q=q, u=u, v_pos=v_pos, duplicate_count=dup, temperature=float(rng.uniform(0.05, 1.0)))


def lemma_property_run(draws: int = 10_000, seed: int = 0, max_dim: int = 8,
                       max_negatives: int = 8, max_duplicates: int = 8) -> LemmaRun:
    """Random queries, positives and negatives with exact duplicates of the
    positive; tracks the smallest coefficient and the autodiff disagreement."""
    rng = np.random.default_rng(seed)
    min_lambda, worst = np.inf, 0.0
    for _ in range(draws):
        case = sample_lemma_case(rng, max_dim, max_negatives, max_duplicates)
        args = (case.q, case.u, case.v_pos, case.duplicate_count, case.temperature)
        exact = false_negative_coefficient(*args)
        auto_lambda, _ = autodiff_positive_coefficient(*args)
        min_lambda = min(min_lambda, exact.lambda_u)
        worst = max(worst, abs(auto_lambda - exact.lambda_u))
    return LemmaRun(draws=draws, min_lambda=float(min_lambda), max_disagreement=float(worst))
