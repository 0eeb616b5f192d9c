# This file is a part of CycleWalk

import asyncio
import json
import logging
import os
from typing import Dict, Union

import aiofiles

from CycleWalk.exceptions import ArtifactIOError
from CycleWalk.utils.human_readable import humanbytes


async def write_bytes(path: str, payload: bytes) -> str:
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        async with aiofiles.open(path, "wb") as out:
            await out.write(payload)
    except OSError as e:
        raise ArtifactIOError(path=path, reason=e.strerror or str(e))
    logging.debug(f"Wrote {path} ({humanbytes(len(payload))})")
    return path


async def write_text(path: str, text: str) -> str:
    return await write_bytes(path, text.encode("utf-8"))


async def read_bytes(path: str) -> bytes:
    try:
        async with aiofiles.open(path, "rb") as src:
            return await src.read()
    except OSError as e:
        raise ArtifactIOError(path=path, reason=e.strerror or str(e))


async def _write_all(files: Dict[str, Union[bytes, str]]) -> list:
    jobs = [
        write_bytes(path, data if isinstance(data, bytes) else data.encode("utf-8"))
        for path, data in files.items()
    ]
    return await asyncio.gather(*jobs)


def write_files(files: Dict[str, Union[bytes, str]]) -> list:
    """Write many artifacts concurrently; returns the written paths."""
    return asyncio.run(_write_all(files))


def read_files(paths: list) -> list:
    async def _read_all():
        return await asyncio.gather(*[read_bytes(p) for p in paths])
    return asyncio.run(_read_all())


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, default=_jsonable) + "\n"


def _jsonable(value):
    if hasattr(value, "tolist"):
        return value.tolist()
    if hasattr(value, "item"):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as src:
            return json.load(src)
    except OSError as e:
        raise ArtifactIOError(path=path, reason=e.strerror or str(e))
    except json.JSONDecodeError as e:
        raise ArtifactIOError(path=path, reason=f"invalid JSON: {e}")
