"""Named parameter blocks with matching gradient accumulators."""

import threading

import numpy as np


class ParamStore:
    """Flat registry of named parameter arrays plus gradient accumulators.

    Gradients always mirror the parameter shapes; accumulation is locked so
    worker threads can reduce into the store concurrently.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._values: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def create(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._values:
            raise KeyError(f"parameter {name!r} already exists")
        arr = np.ascontiguousarray(value, dtype=self.dtype)
        self._values[name] = arr
        self._grads[name] = np.zeros_like(arr)
        return arr

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def names(self) -> list[str]:
        return list(self._values)

    def get(self, name: str) -> np.ndarray:
        return self._values[name]

    def set(self, name: str, value: np.ndarray) -> None:
        cur = self._values[name]
        arr = np.ascontiguousarray(value, dtype=self.dtype)
        if arr.shape != cur.shape:
            raise ValueError(f"shape mismatch for {name!r}: {arr.shape} vs {cur.shape}")
        self._values[name] = arr
        if self._grads[name].shape != arr.shape:
            self._grads[name] = np.zeros_like(arr)

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def add_grad(self, name: str, g: np.ndarray) -> None:
        with self._lock:
            self._grads[name] += g

    def zero_grads(self) -> None:
        for g in self._grads.values():
            g[...] = 0.0

    def n_params(self) -> int:
        return sum(v.size for v in self._values.values())

    def astype(self, dtype) -> "ParamStore":
        """Copy of the store in another precision (test-mode promotion)."""
        out = ParamStore(dtype=dtype)
        for name, v in self._values.items():
            out.create(name, v.astype(dtype))
        return out

    def copy(self) -> "ParamStore":
        return self.astype(self.dtype)
