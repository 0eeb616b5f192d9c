# This file is a part of CycleWalk

import logging
from typing import Callable, Optional

import numpy as np

from CycleWalk.engine.params import ParamSet
from CycleWalk.engine.tensor import Tensor, backward
from CycleWalk.exceptions import ConfigError, NumericOverflow


def _value(loss: Tensor, where: str) -> float:
    value = float(loss.data)
    if not np.isfinite(value):
        raise NumericOverflow(node="finite_diff_check", at=where)
    return value


def finite_diff_check(loss_fn: Callable[[ParamSet], Tensor], params: ParamSet,
                      h: float = 1e-5, max_coords: Optional[int] = None, seed: int = 0,
                      atol: float = 0.0) -> float:
    """Compare reverse-mode gradients with central differences.

    Returns the largest |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
    over the checked coordinates. `loss_fn` must rebuild its graph from
    `params` on every call and be deterministic. Coordinates whose absolute
    difference is within `atol` count as agreeing (roundoff of the loss).
    """
    if params.dtype != np.float64:
        raise ConfigError("Gradient checks need 64-bit parameters", dtype=str(params.dtype))
    if not 1e-6 <= h <= 1e-4:
        logging.warning(f"Finite difference step {h} is outside [1e-6, 1e-4]")

    analytic = backward(loss_fn(params), params)
    rng = np.random.default_rng(seed)
    worst, worst_at = 0.0, None
    for name in params.names():
        base = params[name].data.copy()
        coords = np.arange(base.size)
        if max_coords is not None and base.size > max_coords:
            coords = np.sort(rng.choice(base.size, size=max_coords, replace=False))
        for idx in coords:
            shifted = base.copy()
            shifted.flat[idx] = base.flat[idx] + h
            params.replace(name, shifted)
            f_plus = _value(loss_fn(params), f"{name}[{idx}]+h")
            shifted.flat[idx] = base.flat[idx] - h
            params.replace(name, shifted)
            f_minus = _value(loss_fn(params), f"{name}[{idx}]-h")
            params.replace(name, base)

            numeric = (f_plus - f_minus) / (2 * h)
            exact = float(analytic[name].flat[idx])
            diff = abs(exact - numeric)
            err = 0.0 if diff <= atol else diff / max(abs(exact), abs(numeric), 1e-8)
            if err > worst:
                worst, worst_at = err, f"{name}[{idx}]"
    logging.debug(f"Gradient check worst relative error {worst:.3e} at {worst_at}")
    return worst
