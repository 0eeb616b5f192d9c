# This file is a part of CycleWalk

from .metrics import (
    MetricsReport, evaluate_propagation, evaluate_walks, per_class_iou, propagation_score, row_entropy,
    walk_accuracy,
)
