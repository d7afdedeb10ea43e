"""Minimal reverse-mode autodiff over numpy arrays with second-order support."""

from . import nn, ops
from .params import ParamStore
from .tape import ArityError, Node, SecondOrderError, StateError, Tape

__all__ = [
    "Tape",
    "Node",
    "ParamStore",
    "ops",
    "nn",
    "ArityError",
    "StateError",
    "SecondOrderError",
]
