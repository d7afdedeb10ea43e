"""MLP building blocks on top of the tape."""

import numpy as np

from . import ops
from .params import ParamStore
from .tape import Node, Tape


def init_linear(store: ParamStore, name: str, fan_in: int, fan_out: int,
                rng: np.random.Generator, zero: bool = False) -> None:
    """Glorot-uniform weight init; zero bias. `zero` forces null weights
    (useful to pin activations at their zero-input values)."""
    if zero:
        w = np.zeros((fan_in, fan_out))
    else:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    store.create(f"{name}.w", w)
    store.create(f"{name}.b", np.zeros(fan_out))


def linear(tape: Tape, x: Node, name: str) -> Node:
    w = tape.param(f"{name}.w")
    b = tape.param(f"{name}.b")
    return ops.add(ops.matmul(x, w), b)


def init_mlp(store: ParamStore, prefix: str, in_dim: int, hidden: list[int],
             rng: np.random.Generator, skip_at: int | None = None) -> None:
    """Create parameters for a trunk of `len(hidden)` layers; `skip_at` marks
    the layer whose input is concatenated with the raw network input."""
    d = in_dim
    for i, h in enumerate(hidden):
        if skip_at is not None and i == skip_at:
            d += in_dim
        init_linear(store, f"{prefix}.l{i}", d, h, rng)
        d = h


def mlp_trunk(tape: Tape, x: Node, prefix: str, hidden: list[int],
              skip_at: int | None = None) -> Node:
    """Hidden trunk with softplus activations (twice differentiable)."""
    h = x
    for i in range(len(hidden)):
        if skip_at is not None and i == skip_at:
            h = ops.concat([h, x], axis=1)
        h = ops.softplus(ops.add(ops.matmul(h, tape.param(f"{prefix}.l{i}.w")),
                                 tape.param(f"{prefix}.l{i}.b")))
    return h
