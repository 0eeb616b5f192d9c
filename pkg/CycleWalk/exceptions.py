# This file is a part of CycleWalk


class CycleWalkError(Exception):
    message = "CycleWalk error"

    def __init__(self, message: str = None, **details):
        self.message = message or self.message
        self.details = details
        super().__init__(self.__str__())

    def __str__(self):
        if not self.details:
            return self.message
        extra = ", ".join(f"{k}={v}" for k, v in self.details.items())
        return f"{self.message} ({extra})"


class ConfigError(CycleWalkError):
    message = "Invalid configuration"

class ShapeMismatch(CycleWalkError):
    message = "Shape mismatch"

class NumericOverflow(CycleWalkError):
    message = "Non-finite value produced"

class UsageError(CycleWalkError):
    message = "Invalid usage"

class PlacementError(CycleWalkError):
    message = "Could not place sprites without overlap, try fewer or smaller sprites"

class DatasetFormatError(CycleWalkError):
    message = "Malformed dataset file"

class CheckpointFormatError(CycleWalkError):
    message = "Malformed checkpoint file"

class NonFiniteLoss(CycleWalkError):
    message = "Non-finite training loss"

class EmptyLabelSet(CycleWalkError):
    message = "No valid rows to score"

class ArtifactIOError(CycleWalkError):
    message = "Could not read or write artifact"
