# This file is a part of CycleWalk

import numpy as np

from CycleWalk.data.synth import GroundTruth
from CycleWalk.exceptions import ConfigError, ShapeMismatch
from CycleWalk.walk.core import CorrespondenceLabels
from CycleWalk.walk.nodes import GridGeometry


def _center_pixels(gt: GroundTruth, geometry: GridGeometry) -> np.ndarray:
    h, w = gt.ownership.shape[1:]
    pix = np.floor(geometry.centers).astype(np.int64)
    if pix.size and (pix[:, 0].max() >= h or pix[:, 1].max() >= w):
        raise ShapeMismatch(node="grid geometry", expected=(h, w), actual=tuple(pix.max(axis=0) + 1))
    return pix


def node_classes(gt: GroundTruth, geometry: GridGeometry) -> np.ndarray:
    """T x N class index per node: the owner of the pixel under its center."""
    pix = _center_pixels(gt, geometry)
    return gt.ownership[:, pix[:, 0], pix[:, 1]].astype(np.int64)


def grid_labels(gt: GroundTruth, geometry: GridGeometry) -> np.ndarray:
    """T x N x C one-hot label matrices with C = S + 1 (class 0 is background)."""
    classes = node_classes(gt, geometry)
    return np.eye(gt.num_classes, dtype=np.float64)[classes]


def correspondence_labels(gt: GroundTruth, geometry: GridGeometry, t: int, k: int) -> CorrespondenceLabels:
    """Where each node of frame t lands in frame t + k.

    A node follows the sprite that owns its center pixel (background stays
    put) and maps to the grid node nearest to its displaced center. It is
    invalid when the displaced center leaves the frame or is owned by
    something else at t + k.
    """
    if k < 1 or t < 0 or t + k >= gt.length:
        raise ConfigError("Hop outside the sequence", t=t, k=k, length=gt.length)
    h, w = gt.ownership.shape[1:]
    rows, cols = geometry.grid_dims
    pix = _center_pixels(gt, geometry)
    owner = gt.ownership[t, pix[:, 0], pix[:, 1]].astype(np.int64)

    shift = np.zeros((geometry.size, 2), dtype=np.float64)
    if gt.num_sprites:
        moved = gt.displacement(t, k).astype(np.float64)
        sprite = owner > 0
        shift[sprite] = moved[owner[sprite] - 1]

    landed = geometry.centers + shift
    landed_pix = np.floor(landed).astype(np.int64)
    inside = (landed_pix[:, 0] >= 0) & (landed_pix[:, 0] < h) & (landed_pix[:, 1] >= 0) & (landed_pix[:, 1] < w)
    valid = inside.copy()
    safe = np.where(inside[:, None], landed_pix, 0)
    valid &= gt.ownership[t + k, safe[:, 0], safe[:, 1]] == owner

    origin = geometry.centers[0]
    cell = np.floor((landed - origin) / geometry.stride + 0.5).astype(np.int64)
    cell[:, 0] = np.clip(cell[:, 0], 0, rows - 1)
    cell[:, 1] = np.clip(cell[:, 1], 0, cols - 1)
    targets = cell[:, 0] * cols + cell[:, 1]
    return CorrespondenceLabels(targets=np.where(valid, targets, np.arange(geometry.size)), valid=valid)
