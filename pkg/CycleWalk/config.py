# This file is a part of CycleWalk

from __future__ import annotations
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Optional

from CycleWalk.data.synth import SpriteSceneConfig
from CycleWalk.exceptions import ConfigError
from CycleWalk.propagation.kernel import PropagationConfig
from CycleWalk.train.adapt import AdaptConfig
from CycleWalk.train.trainer import TrainConfig
from CycleWalk.utils.files import load_json
from CycleWalk.vars import Var
from CycleWalk.walk.core import WalkConfig
from CycleWalk.walk.encoder import EncoderConfig
from CycleWalk.walk.nodes import PatchGridConfig

SECTIONS = {
    "scene": SpriteSceneConfig,
    "grid": PatchGridConfig,
    "encoder": EncoderConfig,
    "walk": WalkConfig,
    "train": TrainConfig,
    "propagation": PropagationConfig,
    "adapt": AdaptConfig,
}


def _section(cls, values: Dict[str, Any], name: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError("Unknown config keys", section=name, keys=unknown)
    defaults = cls()
    cleaned = {}
    for key, value in values.items():
        if isinstance(getattr(defaults, key), tuple) and isinstance(value, list):
            value = tuple(value)
        cleaned[key] = value
    return cls(**cleaned)


@dataclass
class RunConfig:
    """Every setting of one experiment; echoed into each output artifact."""
    seed: int = 0
    out: str = Var.OUT_DIR
    sequences: int = 32
    heldout: int = 20
    scene: SpriteSceneConfig = field(default_factory=SpriteSceneConfig)
    grid: PatchGridConfig = field(default_factory=PatchGridConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    walk: WalkConfig = field(default_factory=WalkConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(precision=Var.PRECISION))
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)

    def validate(self) -> RunConfig:
        if self.sequences < 0 or self.heldout < 0:
            raise ConfigError("Sequence counts must be >= 0", sequences=self.sequences, heldout=self.heldout)
        # the encoder always reads whole patches of the scene's channel count
        self.encoder.input_dims = (self.grid.patch_size, self.grid.patch_size, self.scene.channels)
        self.train.seed = self.seed
        self.scene.validate()
        self.grid.validate((self.scene.height, self.scene.width))
        self.encoder.validate()
        self.walk.validate()
        self.train.validate()
        self.propagation.validate()
        self.adapt.validate()
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> RunConfig:
        data = dict(data)
        run = cls()
        for name, section_cls in SECTIONS.items():
            if name in data:
                setattr(run, name, _section(section_cls, data.pop(name) or {}, name))
        for key in ("seed", "sequences", "heldout"):
            if key in data:
                setattr(run, key, int(data.pop(key)))
        if "out" in data:
            run.out = str(data.pop("out"))
        if data:
            raise ConfigError("Unknown config keys", keys=sorted(data))
        return run

    @classmethod
    def load(cls, path: Optional[str]) -> RunConfig:
        return cls.from_dict(load_json(path)) if path else cls()

    def override(self, values: Dict[str, Any]) -> RunConfig:
        """Apply `section.key` (or top-level `key`) overrides; None values are skipped."""
        for dotted, value in values.items():
            if value is None:
                continue
            target, key = self, dotted
            if "." in dotted:
                section, key = dotted.split(".", 1)
                target = getattr(self, section, None)
                if target is None or section not in SECTIONS:
                    raise ConfigError("Unknown config section", section=section)
            if not hasattr(target, key):
                raise ConfigError("Unknown config key", key=dotted)
            setattr(target, key, value)
        return self
