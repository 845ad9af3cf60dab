"""Dense float64 tensors with flat row-major storage.

Thin immutable wrapper around a numpy array.  Every public operation
validates shapes and finiteness so downstream numerical code can assume
clean values.
"""

from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np


class ShapeMismatchError(ValueError):
    pass


class NonFiniteError(ValueError):
    pass


class Tensor:
    """Immutable dense tensor of 64-bit reals."""

    __slots__ = ("_shape", "_data")

    def __init__(self, shape: Sequence[int], data: Iterable[float]):
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ValueError(f"extents must be positive, got {shape}")
        flat = np.asarray(data, dtype=np.float64).reshape(-1)
        if flat.size != int(np.prod(shape)):
            raise ShapeMismatchError(
                f"data length {flat.size} does not match shape {shape}"
            )
        if not np.all(np.isfinite(flat)):
            raise NonFiniteError("tensor contains NaN or Inf")
        flat = flat.copy()
        flat.setflags(write=False)
        self._shape = shape
        self._data = flat

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Tensor":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr.shape if arr.ndim > 0 else (1,), arr.reshape(-1))

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "Tensor":
        return cls(shape, np.zeros(int(np.prod(shape))))

    @property
    def shape(self) -> tuple:
        return self._shape

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view (read-only)."""
        return self._data

    @property
    def array(self) -> np.ndarray:
        """Read-only view reshaped to ``shape``."""
        return self._data.reshape(self._shape)

    @property
    def size(self) -> int:
        return self._data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self._shape})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Tensor)
            and self._shape == other._shape
            and np.array_equal(self._data, other._data)
        )

    def to_json_dict(self) -> dict:
        return {"shape": list(self._shape), "data": self._data.tolist()}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Tensor":
        return cls(doc["shape"], doc["data"])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load(cls, path) -> "Tensor":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def _check_same_shape(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shapes differ: {a.shape} vs {b.shape}")


_ELEMENTWISE = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def elementwise(op_tag: str, a: Tensor, b: Tensor) -> Tensor:
    """Apply a binary elementwise op; op_tag in {add, sub, mul}."""
    if op_tag not in _ELEMENTWISE:
        raise ValueError(f"unknown op tag {op_tag!r}")
    _check_same_shape(a, b)
    return Tensor(a.shape, _ELEMENTWISE[op_tag](a.data, b.data))


def dot(a: Tensor, b: Tensor) -> float:
    _check_same_shape(a, b)
    return float(np.dot(a.data, b.data))


def norm2(a: Tensor) -> float:
    return float(np.linalg.norm(a.data))
