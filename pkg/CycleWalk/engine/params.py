# This file is a part of CycleWalk

from __future__ import annotations
from typing import Dict, Iterator, Tuple

import numpy as np

from CycleWalk.engine.tensor import Tensor
from CycleWalk.exceptions import ConfigError


class ParamSet:
    """Named trainable tensors, iterated in insertion order."""

    def __init__(self):
        self._params: Dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise ConfigError("Duplicate parameter name", name=name)
        tensor = Tensor(value, requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def replace(self, name: str, value: np.ndarray) -> Tensor:
        """Swap in a new value for an existing parameter, keeping its dtype."""
        old = self._params[name]
        if np.shape(value) != old.shape:
            raise ConfigError("Parameter shape cannot change", name=name,
                              expected=old.shape, actual=np.shape(value))
        tensor = Tensor(value, dtype=old.dtype, requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list:
        return list(self._params)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._params.items())

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def copy(self) -> ParamSet:
        return ParamSet.from_arrays(self.arrays())

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray], dtype=None) -> ParamSet:
        params = cls()
        for name, value in arrays.items():
            params.add(name, np.asarray(value, dtype=dtype) if dtype else value)
        return params

    @property
    def dtype(self):
        kinds = {t.dtype for t in self._params.values()}
        return kinds.pop() if len(kinds) == 1 else None

    def equals(self, other: ParamSet) -> bool:
        if self.names() != other.names():
            return False
        return all(np.array_equal(self[n].data, other[n].data) for n in self)
