# This file is a part of CycleWalk

from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from CycleWalk.exceptions import ConfigError, PlacementError
from CycleWalk.walk.nodes import FrameSequence

MAX_PLACEMENT_TRIES = 200


@dataclass
class SpriteSceneConfig:
    """Textured square sprites moving over a textured background.

    Positions and velocities are (row, col) pairs in pixels; `speed` keeps
    every speed-th frame of the base trajectory, 0 repeats the first frame.
    `noise_std` is the std of Gaussian pixel noise drawn afresh for every
    rendered frame; repeated speed-0 frames share frame 0's draw.
    """
    height: int = 64
    width: int = 64
    channels: int = 1
    sprites: int = 2
    sprite_size: Tuple[int, int] = (16, 24)
    velocity_range: Tuple[int, int] = (2, 8)
    texture_sigma: float = 3.0
    brightness_jitter: float = 0.0
    noise_std: float = 0.2
    occlusion: bool = False
    frames: int = 8
    speed: int = 1
    base_fps: float = 30.0
    fixed_positions: Optional[List[Tuple[int, int]]] = None
    fixed_velocities: Optional[List[Tuple[int, int]]] = None

    def validate(self) -> SpriteSceneConfig:
        lo, hi = self.sprite_size
        v_lo, v_hi = self.velocity_range
        if self.frames < 2:
            raise ConfigError("frames must be >= 2", frames=self.frames)
        if self.sprites < 0:
            raise ConfigError("sprites must be >= 0", sprites=self.sprites)
        if self.sprites > 254:
            raise ConfigError("At most 254 sprites fit the u8 ownership map", sprites=self.sprites)
        if not 1 <= lo <= hi <= min(self.height, self.width):
            raise ConfigError("Sprites must fit in the frame", sprite_size=self.sprite_size,
                              frame=(self.height, self.width))
        if not 0 <= v_lo <= v_hi:
            raise ConfigError("velocity_range must satisfy 0 <= lo <= hi", velocity_range=self.velocity_range)
        if self.speed < 0:
            raise ConfigError("speed must be >= 0", speed=self.speed)
        if max(self.speed, 1) * v_hi >= min(self.height, self.width) - hi:
            raise ConfigError("Per-hop displacement must stay below the free frame extent",
                              velocity_range=self.velocity_range, speed=self.speed)
        if self.channels not in (1, 3):
            raise ConfigError("channels must be 1 or 3", channels=self.channels)
        if self.texture_sigma < 0:
            raise ConfigError("texture_sigma must be >= 0", texture_sigma=self.texture_sigma)
        if self.noise_std < 0 or self.brightness_jitter < 0:
            raise ConfigError("Appearance jitter must be >= 0", noise_std=self.noise_std,
                              brightness_jitter=self.brightness_jitter)
        for name in ("fixed_positions", "fixed_velocities"):
            value = getattr(self, name)
            if value is not None and len(value) != self.sprites:
                raise ConfigError(f"{name} needs one entry per sprite", sprites=self.sprites, given=len(value))
        return self

    @property
    def output_frames(self) -> int:
        if self.speed == 0:
            return self.frames
        return -(-self.frames // self.speed)

    @property
    def frame_rate_tag(self) -> float:
        return float("inf") if self.speed == 0 else self.base_fps / self.speed


@dataclass
class GroundTruth:
    ownership: np.ndarray       # T x H x W u8, 0 = background, s + 1 = sprite s
    displacements: np.ndarray   # T x S x 2 i32, motion from t to t + 1 (zero on the last frame)
    visible: np.ndarray         # T x S bool
    positions: np.ndarray       # T x S x 2 i32, top-left corner
    sizes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int32))

    @property
    def num_sprites(self) -> int:
        return self.displacements.shape[1]

    @property
    def num_classes(self) -> int:
        return self.num_sprites + 1

    @property
    def length(self) -> int:
        return self.ownership.shape[0]

    def displacement(self, t: int, k: int) -> np.ndarray:
        """S x 2 motion from frame t to frame t + k."""
        return self.displacements[t:t + k].sum(axis=0)


def smooth_texture(rng: np.random.Generator, shape: Tuple[int, ...], sigma: float) -> np.ndarray:
    noise = rng.random(shape)
    if sigma > 0:
        noise = gaussian_filter(noise, sigma=(sigma, sigma) + (0,) * (len(shape) - 2))
    lo, hi = noise.min(), noise.max()
    return ((noise - lo) / (hi - lo if hi > lo else 1.0)).astype(np.float32)


def _draw_velocity(rng: np.random.Generator, cfg: SpriteSceneConfig) -> np.ndarray:
    v_lo, v_hi = cfg.velocity_range
    magnitude = rng.integers(v_lo, v_hi + 1, size=2)
    sign = rng.choice(np.array([-1, 1]), size=2)
    return magnitude * sign


def _trajectory(start: np.ndarray, velocity: np.ndarray, limits: np.ndarray, steps: int) -> np.ndarray:
    """Constant-velocity motion reflected at [0, limit] per axis."""
    pos, vel = start.copy(), velocity.copy()
    out = [pos.copy()]
    for _ in range(steps - 1):
        pos = pos + vel
        for axis in range(2):
            if pos[axis] < 0:
                pos[axis] = -pos[axis]
                vel[axis] = -vel[axis]
            elif pos[axis] > limits[axis]:
                pos[axis] = 2 * limits[axis] - pos[axis]
                vel[axis] = -vel[axis]
        out.append(pos.copy())
    return np.stack(out)


def _overlaps(positions: np.ndarray, sizes: np.ndarray) -> bool:
    """True when any two sprites share a pixel in any frame (T x S x 2)."""
    s_count = positions.shape[1]
    for a in range(s_count):
        for b in range(a + 1, s_count):
            lo = np.maximum(positions[:, a], positions[:, b])
            hi = np.minimum(positions[:, a] + sizes[a], positions[:, b] + sizes[b])
            if np.any(np.all(hi > lo, axis=1)):
                return True
    return False


def _sample_motion(rng: np.random.Generator, cfg: SpriteSceneConfig, sizes: np.ndarray) -> np.ndarray:
    """Base-rate trajectories, T_base x S x 2."""
    frame = np.array([cfg.height, cfg.width])
    keep = slice(None, None, cfg.speed) if cfg.speed > 0 else slice(0, 1)
    for attempt in range(MAX_PLACEMENT_TRIES):
        paths = []
        for s in range(cfg.sprites):
            limits = frame - sizes[s]
            if cfg.fixed_positions is not None:
                start = np.asarray(cfg.fixed_positions[s], dtype=np.int64)
            else:
                start = np.array([rng.integers(0, limits[0] + 1), rng.integers(0, limits[1] + 1)])
            if cfg.fixed_velocities is not None:
                velocity = np.asarray(cfg.fixed_velocities[s], dtype=np.int64)
            else:
                velocity = _draw_velocity(rng, cfg)
            paths.append(_trajectory(start, velocity, limits, cfg.frames))
        paths = np.stack(paths, axis=1) if paths else np.zeros((cfg.frames, 0, 2), dtype=np.int64)
        if cfg.occlusion or not _overlaps(paths[keep], sizes):
            if attempt:
                logging.debug(f"Placed {cfg.sprites} sprites after {attempt + 1} attempts")
            return paths
        if cfg.fixed_positions is not None and cfg.fixed_velocities is not None:
            break
    raise PlacementError(sprites=cfg.sprites, sprite_size=cfg.sprite_size,
                         frame=(cfg.height, cfg.width), attempts=MAX_PLACEMENT_TRIES)


def generate_sequence(cfg: SpriteSceneConfig, seed: int) -> Tuple[FrameSequence, GroundTruth]:
    cfg.validate()
    rng = np.random.default_rng(seed)
    h, w, c = cfg.height, cfg.width, cfg.channels
    background = smooth_texture(rng, (h, w, c), cfg.texture_sigma)
    sizes = rng.integers(cfg.sprite_size[0], cfg.sprite_size[1] + 1, size=cfg.sprites).astype(np.int32)
    textures = [smooth_texture(rng, (int(sz), int(sz), c), cfg.texture_sigma) for sz in sizes]

    paths = _sample_motion(rng, cfg, sizes)
    if cfg.speed == 0:
        positions = np.repeat(paths[:1], cfg.frames, axis=0)
    else:
        positions = paths[::cfg.speed]
    n_out = positions.shape[0]

    frames = np.empty((n_out, h, w, c), dtype=np.float32)
    ownership = np.zeros((n_out, h, w), dtype=np.uint8)
    for t in range(n_out):
        if cfg.speed == 0 and t > 0:
            frames[t], ownership[t] = frames[0], ownership[0]
            continue
        canvas = background.copy()
        for s in range(cfg.sprites):
            y, x = positions[t, s]
            sz = sizes[s]
            canvas[y:y + sz, x:x + sz] = textures[s]
            ownership[t, y:y + sz, x:x + sz] = s + 1
        if cfg.noise_std > 0:
            canvas = canvas + rng.normal(0.0, cfg.noise_std, size=canvas.shape)
        if cfg.brightness_jitter > 0:
            canvas = canvas + rng.uniform(-cfg.brightness_jitter, cfg.brightness_jitter)
        frames[t] = np.clip(canvas, 0.0, 1.0)

    displacements = np.zeros((n_out, cfg.sprites, 2), dtype=np.int32)
    displacements[:-1] = np.diff(positions, axis=0)
    visible = np.stack([[np.any(ownership[t] == s + 1) for s in range(cfg.sprites)] for t in range(n_out)]) \
        if cfg.sprites else np.zeros((n_out, 0), dtype=bool)
    gt = GroundTruth(
        ownership=ownership,
        displacements=displacements,
        visible=np.asarray(visible, dtype=bool).reshape(n_out, cfg.sprites),
        positions=positions.astype(np.int32),
        sizes=sizes,
    )
    return FrameSequence(frames, frame_rate_tag=cfg.frame_rate_tag), gt


def generate_many(cfg: SpriteSceneConfig, seeds: List[int]) -> List[Tuple[FrameSequence, GroundTruth]]:
    return [generate_sequence(cfg, s) for s in seeds]
