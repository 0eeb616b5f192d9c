# This file is a part of CycleWalk

import logging
import os
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from CycleWalk.data.synth import GroundTruth
from CycleWalk.exceptions import ConfigError, DatasetFormatError
from CycleWalk.utils.files import dump_json, load_json, read_files, write_files
from CycleWalk.walk.nodes import FrameSequence

MAGIC = b"CWVD"
VERSION = 1
MANIFEST = "manifest.json"

_HEADER = struct.Struct("<4sIIIII")
_GT_HEADER = struct.Struct("<Id")


def sequence_name(index: int) -> str:
    return f"seq_{index:05d}.cwvd"


def encode_sequence(sequence: FrameSequence, gt: GroundTruth) -> bytes:
    """Little-endian CWVD: header, f32 frames, then the ground-truth block."""
    t, h, w, c = sequence.frames.shape
    s = gt.num_sprites
    if gt.ownership.shape != (t, h, w):
        raise DatasetFormatError("Ground truth does not match the frames",
                                 frames=(t, h, w), ownership=gt.ownership.shape)
    parts = [
        _HEADER.pack(MAGIC, VERSION, t, h, w, c),
        sequence.frames.astype("<f4").tobytes(),
        _GT_HEADER.pack(s, float(sequence.frame_rate_tag)),
        np.asarray(gt.sizes, dtype="<i4").reshape(s).tobytes(),
    ]
    for i in range(t):
        parts.append(gt.ownership[i].astype(np.uint8).tobytes())
        parts.append(gt.displacements[i].astype("<i4").tobytes())
        parts.append(gt.visible[i].astype(np.uint8).tobytes())
        parts.append(gt.positions[i].astype("<i4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, payload: bytes, path: str):
        self.payload = payload
        self.path = path
        self.offset = 0

    def take(self, count: int) -> bytes:
        end = self.offset + count
        if end > len(self.payload):
            raise DatasetFormatError("Truncated file", path=self.path, needed=end, size=len(self.payload))
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def array(self, dtype: str, shape: Tuple[int, ...]) -> np.ndarray:
        dt = np.dtype(dtype)
        count = int(np.prod(shape)) if shape else 1
        return np.frombuffer(self.take(count * dt.itemsize), dtype=dt).reshape(shape)


def decode_sequence(payload: bytes, path: str = "<memory>") -> Tuple[FrameSequence, GroundTruth]:
    reader = _Reader(payload, path)
    magic, version, t, h, w, c = _HEADER.unpack(reader.take(_HEADER.size))
    if magic != MAGIC:
        raise DatasetFormatError("Bad magic", path=path, magic=magic)
    if version != VERSION:
        raise DatasetFormatError("Unsupported version", path=path, version=version)
    frames = reader.array("<f4", (t, h, w, c)).astype(np.float32)
    s, frame_rate_tag = _GT_HEADER.unpack(reader.take(_GT_HEADER.size))
    sizes = reader.array("<i4", (s,)).astype(np.int32)
    ownership = np.empty((t, h, w), dtype=np.uint8)
    displacements = np.empty((t, s, 2), dtype=np.int32)
    visible = np.empty((t, s), dtype=bool)
    positions = np.empty((t, s, 2), dtype=np.int32)
    for i in range(t):
        ownership[i] = reader.array("u1", (h, w))
        displacements[i] = reader.array("<i4", (s, 2))
        visible[i] = reader.array("u1", (s,)).astype(bool)
        positions[i] = reader.array("<i4", (s, 2))
    if reader.offset != len(payload):
        raise DatasetFormatError("Trailing bytes", path=path, extra=len(payload) - reader.offset)
    gt = GroundTruth(ownership=ownership, displacements=displacements, visible=visible,
                     positions=positions, sizes=sizes)
    return FrameSequence(frames, frame_rate_tag=frame_rate_tag), gt


@dataclass
class Clip:
    frames: np.ndarray                  # T x H x W x C
    truth: Optional[GroundTruth] = None
    start: int = 0
    sequence: int = -1

    @property
    def length(self) -> int:
        return self.frames.shape[0]


@dataclass
class SequenceDataset:
    sequences: List[FrameSequence]
    truths: List[GroundTruth]
    manifest: dict = field(default_factory=dict)
    root: Optional[str] = None

    @classmethod
    def from_items(cls, items: List[Tuple[FrameSequence, GroundTruth]], manifest: dict = None) -> "SequenceDataset":
        return cls([seq for seq, _ in items], [gt for _, gt in items], manifest or {})

    def __len__(self) -> int:
        return len(self.sequences)

    def __getitem__(self, index: int) -> Tuple[FrameSequence, GroundTruth]:
        return self.sequences[index], self.truths[index]

    @property
    def min_length(self) -> int:
        return min(s.length for s in self.sequences)

    def sample_clips(self, rng: np.random.Generator, batch_size: int, clip_length: int) -> List[Clip]:
        """`batch_size` clips of `clip_length` consecutive frames, in draw order."""
        if not self.sequences:
            raise ConfigError("Dataset is empty", root=self.root)
        if clip_length > self.min_length:
            raise ConfigError("clip_length exceeds the shortest sequence",
                              clip_length=clip_length, shortest=self.min_length)
        clips = []
        for _ in range(batch_size):
            index = int(rng.integers(len(self.sequences)))
            seq = self.sequences[index]
            start = int(rng.integers(seq.length - clip_length + 1))
            clips.append(Clip(seq.frames[start:start + clip_length], self.truths[index], start, index))
        return clips


def write_dataset(root: str, items: List[Tuple[FrameSequence, GroundTruth]], manifest: dict) -> List[str]:
    files = {os.path.join(root, sequence_name(i)): encode_sequence(seq, gt) for i, (seq, gt) in enumerate(items)}
    files[os.path.join(root, MANIFEST)] = dump_json({**manifest, "count": len(items)})
    written = write_files(files)
    logging.info(f"Wrote {len(items)} sequences to {root}")
    return written


def load_dataset(root: str) -> SequenceDataset:
    manifest_path = os.path.join(root, MANIFEST)
    if not os.path.isdir(root) or not os.path.exists(manifest_path):
        raise DatasetFormatError("Not a dataset directory (missing manifest.json)", path=root)
    manifest = load_json(manifest_path)
    paths = [os.path.join(root, sequence_name(i)) for i in range(int(manifest.get("count", 0)))]
    missing = [p for p in paths if not os.path.exists(p)]
    if missing:
        raise DatasetFormatError("Manifest lists missing sequences", path=root, missing=missing[:3])
    sequences, truths = [], []
    for path, payload in zip(paths, read_files(paths)):
        seq, gt = decode_sequence(payload, path)
        sequences.append(seq)
        truths.append(gt)
    logging.debug(f"Loaded {len(sequences)} sequences from {root}")
    return SequenceDataset(sequences, truths, manifest, root)
