# This file is a part of CycleWalk

from .kernel import ContextQueue, Kernel, PropagationConfig, QueueEntry, build_kernel
from .propagate import (
    PropagationResult, adapt_and_propagate, export_predictions, propagate_sequence, propagate_step,
    propagate_video,
)
