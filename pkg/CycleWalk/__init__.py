# This file is a part of CycleWalk

__version__ = "0.4.0"
