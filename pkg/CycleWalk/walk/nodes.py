# This file is a part of CycleWalk

from __future__ import annotations
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import map_coordinates

from CycleWalk.exceptions import ConfigError


@dataclass
class FrameSequence:
    """T frames of shape H x W x C with values in [0, 1]."""
    frames: np.ndarray
    frame_rate_tag: float = 1.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim == 3:
            self.frames = self.frames[..., None]
        if self.frames.ndim != 4 or self.frames.shape[0] < 2:
            raise ConfigError("A frame sequence needs T >= 2 frames of H x W x C",
                              shape=self.frames.shape)
        if not self.frame_rate_tag > 0:
            raise ConfigError("frame_rate_tag must be positive", frame_rate_tag=self.frame_rate_tag)

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_shape(self) -> Tuple[int, int, int]:
        return tuple(self.frames.shape[1:])


@dataclass
class PatchGridConfig:
    patch_size: int = 16
    stride: int = 8
    jitter_scale_range: Tuple[float, float] = (0.7, 0.9)
    jitter_aspect_range: Tuple[float, float] = (0.7, 1.3)

    def validate(self, frame_shape: Tuple[int, ...] = None) -> PatchGridConfig:
        lo, hi = self.jitter_scale_range
        a_lo, a_hi = self.jitter_aspect_range
        if self.patch_size < 1 or self.stride < 1:
            raise ConfigError("patch_size and stride must be >= 1",
                              patch_size=self.patch_size, stride=self.stride)
        if not 0 < lo <= hi <= 1:
            raise ConfigError("jitter scale range must satisfy 0 < lo <= hi <= 1",
                              jitter_scale_range=self.jitter_scale_range)
        if not 0 < a_lo <= a_hi:
            raise ConfigError("jitter aspect range must satisfy 0 < lo <= hi",
                              jitter_aspect_range=self.jitter_aspect_range)
        if frame_shape is not None and self.patch_size > min(frame_shape[0], frame_shape[1]):
            raise ConfigError("Patch larger than frame", patch_size=self.patch_size,
                              frame=frame_shape[:2])
        return self


@dataclass
class GridGeometry:
    grid_dims: Tuple[int, int]
    centers: np.ndarray          # N x 2, (row, col) pixel coordinates
    stride: int

    @property
    def size(self) -> int:
        return self.grid_dims[0] * self.grid_dims[1]

    def grid_coords(self) -> np.ndarray:
        """(row, col) of every node in grid units, raster order."""
        rows, cols = self.grid_dims
        return np.stack(np.divmod(np.arange(rows * cols), cols), axis=1)


@dataclass
class NodeSet:
    patches: np.ndarray          # N x P x P x C
    centers: np.ndarray
    grid_dims: Tuple[int, int]
    stride: int = 1

    @property
    def size(self) -> int:
        return self.patches.shape[0]

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.grid_dims, self.centers, self.stride)

    def grid_coords(self) -> np.ndarray:
        return self.geometry.grid_coords()


def grid_geometry(frame_shape: Tuple[int, ...], cfg: PatchGridConfig) -> GridGeometry:
    """Grid dims and patch centers for a frame size, without touching pixels."""
    height, width = frame_shape[0], frame_shape[1]
    cfg.validate(frame_shape)
    rows = (height - cfg.patch_size) // cfg.stride + 1
    cols = (width - cfg.patch_size) // cfg.stride + 1
    half = cfg.patch_size / 2.0
    r, c = np.meshgrid(np.arange(rows) * cfg.stride + half, np.arange(cols) * cfg.stride + half, indexing="ij")
    return GridGeometry((rows, cols), np.stack([r.ravel(), c.ravel()], axis=1), cfg.stride)


def extract_patches(frame: np.ndarray, cfg: PatchGridConfig) -> NodeSet:
    frame = np.asarray(frame)
    if frame.ndim == 2:
        frame = frame[..., None]
    geometry = grid_geometry(frame.shape, cfg)
    rows, cols = geometry.grid_dims
    p, s = cfg.patch_size, cfg.stride
    windows = sliding_window_view(frame, (p, p), axis=(0, 1))[::s, ::s]
    # windows: rows x cols x C x P x P
    patches = np.ascontiguousarray(windows[:rows, :cols].transpose(0, 1, 3, 4, 2)).reshape(rows * cols, p, p, frame.shape[2])
    return NodeSet(patches=patches.copy(), centers=geometry.centers, grid_dims=(rows, cols), stride=s)


def sample_crop_box(rng: np.random.Generator, size: int, cfg: PatchGridConfig) -> Tuple[float, float, float, float]:
    """(top, left, height, width) of a crop with area fraction in the scale
    range and aspect (width / height) in the ratio range, clamped to fit."""
    area = size * size * rng.uniform(*cfg.jitter_scale_range)
    log_lo, log_hi = math.log(cfg.jitter_aspect_range[0]), math.log(cfg.jitter_aspect_range[1])
    aspect = math.exp(rng.uniform(log_lo, log_hi))
    width = min(math.sqrt(area * aspect), float(size))
    height = area / width
    if height > size:
        height = float(size)
        width = area / height
    top = rng.uniform(0.0, size - height)
    left = rng.uniform(0.0, size - width)
    return top, left, height, width


def resample_crop(patch: np.ndarray, box: Tuple[float, float, float, float], size: int) -> np.ndarray:
    """Bilinear resample of a crop box back to size x size, corner aligned."""
    top, left, height, width = box
    ys = np.linspace(top, top + height - 1, size) if height > 1 else np.full(size, top)
    xs = np.linspace(left, left + width - 1, size) if width > 1 else np.full(size, left)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = np.empty((size, size, patch.shape[2]), dtype=patch.dtype)
    for ch in range(patch.shape[2]):
        out[..., ch] = map_coordinates(patch[..., ch], [yy, xx], order=1, mode="nearest")
    return out


def spatial_jitter(nodes: NodeSet, rng: np.random.Generator, cfg: PatchGridConfig) -> NodeSet:
    cfg.validate()
    size = nodes.patches.shape[1]
    jittered = np.empty_like(nodes.patches)
    for i in range(nodes.size):
        box = sample_crop_box(rng, size, cfg)
        jittered[i] = resample_crop(nodes.patches[i], box, size)
    return NodeSet(patches=jittered, centers=nodes.centers.copy(), grid_dims=nodes.grid_dims, stride=nodes.stride)


def extract_clip(frames: np.ndarray, cfg: PatchGridConfig) -> List[NodeSet]:
    return [extract_patches(frame, cfg) for frame in frames]
