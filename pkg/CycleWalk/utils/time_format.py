# This file is a part of CycleWalk

def get_readable_time(seconds: float) -> str:
    """Render a duration as e.g. '1h 02m 05s' or '3.4s' for short spans."""
    if seconds < 60:
        return f"{seconds:.1f}s"
    minutes, secs = divmod(int(round(seconds)), 60)
    hours, minutes = divmod(minutes, 60)
    days, hours = divmod(hours, 24)
    parts = []
    if days:
        parts.append(f"{days} days")
    if days or hours:
        parts.append(f"{hours}h")
    parts.append(f"{minutes:02d}m")
    parts.append(f"{secs:02d}s")
    return " ".join(parts)
