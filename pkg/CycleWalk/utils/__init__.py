# This file is a part of CycleWalk

from .time_format import get_readable_time
from .human_readable import humanbytes
from .seeds import stream_rng, sequence_seeds
from .run_info import version_string, stamp
