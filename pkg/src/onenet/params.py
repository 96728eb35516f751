"""Named parameter tensors backed by one flat float64 buffer.

Every tensor is a view into ``ParameterStore.flat`` (and its gradient a view
into ``ParameterStore.flat_grad``), so optimizers can update the whole model
with a handful of vectorized calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PARTITIONS = ("shared", "domain-head", "intent-head", "slot-head")


@dataclass(frozen=True)
class TensorSpec:
    name: str
    shape: tuple
    partition: str
    init: str  # "glorot" | "embedding" | "zeros"

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1


class ParameterStore:
    """Declare tensors with :meth:`declare`, then call :meth:`allocate` once.

    Shapes are fixed after allocation.
    """

    def __init__(self):
        self.specs: dict[str, TensorSpec] = {}
        self.flat: np.ndarray | None = None
        self.flat_grad: np.ndarray | None = None
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._offsets: dict[str, tuple[int, int]] = {}

    def declare(self, name, shape, partition="shared", init="glorot"):
        if self.flat is not None:
            raise RuntimeError("parameter store already allocated")
        if name in self.specs:
            raise ValueError(f"duplicate parameter name {name!r}")
        if partition not in PARTITIONS:
            raise ValueError(f"unknown partition {partition!r} for {name!r}")
        self.specs[name] = TensorSpec(name, tuple(int(s) for s in shape), partition, init)

    def allocate(self, seed: int = 0, dtype=np.float64) -> "ParameterStore":
        total = sum(s.size for s in self.specs.values())
        self.flat = np.zeros(total, dtype=dtype)
        self.flat_grad = np.zeros(total, dtype=dtype)
        rng = np.random.default_rng(seed)
        offset = 0
        for spec in self.specs.values():
            lo, hi = offset, offset + spec.size
            self._offsets[spec.name] = (lo, hi)
            self.values[spec.name] = self.flat[lo:hi].reshape(spec.shape)
            self.grads[spec.name] = self.flat_grad[lo:hi].reshape(spec.shape)
            self.values[spec.name][...] = _initial_value(spec, rng)
            offset = hi
        return self

    def __contains__(self, name):
        return name in self.specs

    def __getitem__(self, name) -> np.ndarray:
        return self.values[name]

    def names(self, partition: str | None = None) -> list[str]:
        return [n for n, s in self.specs.items() if partition is None or s.partition == partition]

    def partition_of(self, name: str) -> str:
        return self.specs[name].partition

    def slice_of(self, name: str) -> slice:
        lo, hi = self._offsets[name]
        return slice(lo, hi)

    def zero_grad(self) -> None:
        self.flat_grad.fill(0.0)

    def assign(self, name: str, value) -> None:
        value = np.asarray(value, dtype=self.flat.dtype)
        if value.shape != self.specs[name].shape:
            raise ValueError(
                f"shape mismatch for {name!r}: expected {self.specs[name].shape}, got {value.shape}"
            )
        self.values[name][...] = value

    def copy(self, dtype=None) -> "ParameterStore":
        other = ParameterStore()
        other.specs = dict(self.specs)
        other.allocate(dtype=self.flat.dtype if dtype is None else dtype)
        other.flat[...] = self.flat
        return other

    def load_flat(self, flat: np.ndarray) -> None:
        self.flat[...] = flat


def _initial_value(spec: TensorSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.init == "zeros" or len(spec.shape) < 2:
        return np.zeros(spec.shape)
    if spec.init == "embedding":
        # one row per symbol; fan_in of a lookup is a single one-hot unit
        bound = np.sqrt(6.0 / (1 + spec.shape[1]))
    elif spec.init == "glorot":
        bound = np.sqrt(6.0 / (spec.shape[0] + spec.shape[1]))
    else:
        raise ValueError(f"unknown init {spec.init!r}")
    return rng.uniform(-bound, bound, size=spec.shape)
