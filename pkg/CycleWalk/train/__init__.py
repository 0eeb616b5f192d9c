# This file is a part of CycleWalk

from .adam import AdamConfig, AdamState, adam_update
from .checkpoint import Checkpoint, decode_params, encode_params, load_checkpoint, save_checkpoint
from .trainer import FitResult, TrainConfig, clip_loss, fit, gradient_check, loss_history, train_step
from .adapt import AdaptConfig, AdaptResult, test_time_adapt, window_bounds, window_loss
