# This file is a part of CycleWalk

import sys
import logging
import logging.handlers as handlers
from .vars import Var
from CycleWalk.cli import run_cli


logging.basicConfig(
    level=getattr(logging, Var.LOG_LEVEL, logging.INFO),
    datefmt="%d/%m/%Y %H:%M:%S",
    format='[%(asctime)s] {%(pathname)s:%(lineno)d} %(levelname)s - %(message)s',
    handlers=[logging.StreamHandler(stream=sys.stdout),
              handlers.RotatingFileHandler(Var.LOG_FILE, mode="a", maxBytes=104857600, backupCount=2, encoding="utf-8")],)

logging.getLogger("asyncio").setLevel(logging.ERROR)


if __name__ == "__main__":
    try:
        code = run_cli(sys.argv[1:])
    except KeyboardInterrupt:
        code = 130
        print("------------------------ Interrupted ------------------------")
    sys.exit(code)
