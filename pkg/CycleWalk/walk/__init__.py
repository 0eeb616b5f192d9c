# This file is a part of CycleWalk

from .nodes import (
    FrameSequence, GridGeometry, NodeSet, PatchGridConfig, extract_clip, extract_patches,
    grid_geometry, sample_crop_box, spatial_jitter,
)
from .encoder import EncoderConfig, embed, embed_frames, embed_sequence, init_encoder
from .core import (
    CorrespondenceLabels, LossReport, WalkConfig, apply_edge_dropout, cycle_and_subcycle_losses,
    frame_energies, palindrome_energies, palindrome_transitions, row_softmax, subcycle_losses,
    supervised_walk_loss, transition_energies, walk,
)
from .lemma import (
    LemmaCase, LemmaResult, LemmaRun, autodiff_positive_coefficient, false_negative_coefficient, lemma_property_run,
    sample_lemma_case,
)
