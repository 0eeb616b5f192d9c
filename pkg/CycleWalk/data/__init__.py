# This file is a part of CycleWalk

from .synth import GroundTruth, SpriteSceneConfig, generate_many, generate_sequence, smooth_texture
from .labels import correspondence_labels, grid_labels, node_classes
from .dataset import (
    Clip, SequenceDataset, decode_sequence, encode_sequence, load_dataset, sequence_name, write_dataset,
)
