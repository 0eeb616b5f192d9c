# This file is a part of CycleWalk

from __future__ import annotations
from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy as np

from CycleWalk.engine import ParamSet, Tensor, add, l2_normalize_rows, matmul, relu
from CycleWalk.exceptions import ConfigError, ShapeMismatch
from CycleWalk.walk.nodes import NodeSet, PatchGridConfig, extract_patches

NORM_EPS = 1e-12


@dataclass
class EncoderConfig:
    input_dims: Tuple[int, int, int] = (16, 16, 1)
    hidden_widths: List[int] = field(default_factory=lambda: [64])
    embed_dim: int = 32
    activation: str = "relu"

    def validate(self) -> EncoderConfig:
        if self.embed_dim < 2:
            raise ConfigError("embed_dim must be >= 2", embed_dim=self.embed_dim)
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ConfigError("hidden_widths must be a non-empty list of positive ints",
                              hidden_widths=self.hidden_widths)
        if self.activation != "relu":
            raise ConfigError("Only the rectified-linear activation is supported", activation=self.activation)
        if len(self.input_dims) != 3 or any(d < 1 for d in self.input_dims):
            raise ConfigError("input_dims must be (patch, patch, channels)", input_dims=self.input_dims)
        return self

    @property
    def fan_in(self) -> int:
        p, q, c = self.input_dims
        return p * q * c

    def layer_shapes(self) -> List[Tuple[int, int]]:
        widths = [self.fan_in, *self.hidden_widths, self.embed_dim]
        return list(zip(widths[:-1], widths[1:]))


def init_encoder(cfg: EncoderConfig, seed: Union[int, np.random.Generator], dtype=np.float64) -> ParamSet:
    """Weights ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)) (unit-variance law scaled
    by 1/sqrt(fan_in)); biases zero."""
    cfg.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = ParamSet()
    for layer, (fan_in, fan_out) in enumerate(cfg.layer_shapes()):
        bound = np.sqrt(3.0 / fan_in)
        params.add(f"layer{layer}.weight", rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
        params.add(f"layer{layer}.bias", np.zeros(fan_out, dtype=dtype))
    return params


def prepare_patches(patches: Union[NodeSet, np.ndarray], cfg: EncoderConfig, dtype) -> np.ndarray:
    """Flatten patches to rows and remove each patch's mean."""
    data = patches.patches if isinstance(patches, NodeSet) else np.asarray(patches)
    if data.ndim == 3:
        data = data[..., None]
    if tuple(data.shape[1:]) != tuple(cfg.input_dims):
        raise ShapeMismatch(node="embed", expected=tuple(cfg.input_dims), actual=tuple(data.shape[1:]))
    flat = data.reshape(data.shape[0], -1).astype(dtype)
    return flat - flat.mean(axis=1, keepdims=True)


def embed(params: ParamSet, patches: Union[NodeSet, np.ndarray], cfg: EncoderConfig) -> Tensor:
    """N x d embedding matrix with unit-norm rows, differentiable in params."""
    x = Tensor(prepare_patches(patches, cfg, params.dtype or np.float64))
    n_layers = len(cfg.layer_shapes())
    for layer in range(n_layers):
        x = add(matmul(x, params[f"layer{layer}.weight"]), params[f"layer{layer}.bias"])
        if layer < n_layers - 1:
            x = relu(x)
    return l2_normalize_rows(x, eps=NORM_EPS)


def embed_frames(params: ParamSet, nodes: List[NodeSet], cfg: EncoderConfig) -> List[Tensor]:
    return [embed(params, n, cfg) for n in nodes]


def embed_sequence(params: ParamSet, frames: np.ndarray, grid_cfg: PatchGridConfig, cfg: EncoderConfig) -> List[np.ndarray]:
    """Unjittered node embeddings of every frame, as plain arrays."""
    return [embed(params, extract_patches(frame, grid_cfg), cfg).data for frame in frames]
