# This file is a part of CycleWalk
from os import environ
from dotenv import load_dotenv

load_dotenv()


def _flag(name: str, default: str = "0") -> bool:
    return str(environ.get(name, default)).lower() in ("1", "true", "t", "yes", "y")


class Var(object):
    THREADS = max(1, int(environ.get("CYCLEWALK_THREADS", "1")))  # sweep cells at once
    LOG_LEVEL = str(environ.get("LOG_LEVEL", "INFO")).upper()
    LOG_FILE = str(environ.get("LOG_FILE", "cyclewalk.log"))
    OUT_DIR = str(environ.get("OUT_DIR", "runs"))
    PRECISION = str(environ.get("PRECISION", "float64")).lower()
    PROGRESS = _flag("PROGRESS")
    DUMP_NONFINITE = _flag("DUMP_NONFINITE", "1")  # write offending clip on non-finite loss
