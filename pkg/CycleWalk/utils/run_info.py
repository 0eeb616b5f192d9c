# This file is a part of CycleWalk

import os
import subprocess
from functools import lru_cache

from CycleWalk import __version__


@lru_cache(maxsize=1)
def version_string() -> str:
    """`git describe` of the source tree when available, else the package version."""
    root = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=root, capture_output=True, text=True, timeout=5, check=True,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        described = ""
    return f"{__version__}+{described}" if described else __version__


def stamp(payload: dict, run_config: dict) -> dict:
    """Attach the config echo and version to an output document."""
    return {"version": version_string(), "config": run_config, **payload}
