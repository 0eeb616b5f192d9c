# This file is a part of CycleWalk

UNITS = ("B", "KiB", "MiB", "GiB", "TiB")


def humanbytes(size: int) -> str:
    if not size:
        return "0 B"
    value = float(size)
    for unit in UNITS:
        if value < 1024 or unit == UNITS[-1]:
            return f"{value:.0f} {unit}" if unit == "B" else f"{value:.2f} {unit}"
        value /= 1024
