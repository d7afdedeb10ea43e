"""Reverse-mode tape: eager array-valued nodes, replayable, twice differentiable.

Nodes are created eagerly (values computed at construction) and recorded in
program order, so replaying the tape with `eval` reproduces every value
bit-identically. `backward` is a numeric reverse sweep. `input_gradient`
builds the vector-Jacobian chain out of ordinary tape nodes, which makes the
returned gradient itself differentiable by later backward passes.
"""

import numpy as np

from .params import ParamStore


class ArityError(ValueError):
    """Inputs do not match the declared arity/shape of the tape."""


class StateError(RuntimeError):
    """Operation requires an evaluated tape (call eval first)."""


class SecondOrderError(TypeError):
    """An op without a registered derivative graph sits on the gradient path."""


# op name -> OpDef, populated by ops.py
OP_REGISTRY: dict = {}


class Node:
    __slots__ = ("tape", "idx", "op", "inputs", "value", "aux", "cache", "name")

    def __init__(self, tape, op, inputs, value, aux=None, name=None):
        self.tape = tape
        self.op = op
        self.inputs = inputs
        self.value = value
        self.aux = aux
        self.cache = None
        self.name = name
        self.idx = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return None if self.value is None else self.value.shape

    def __repr__(self):
        return f"<Node{self.idx} {self.op} {self.shape}>"

    # convenience operator sugar (delegates to ops.py registry wrappers)
    def __add__(self, other):
        return _sugar("add", self, other)

    def __radd__(self, other):
        return _sugar("add", other, self)

    def __sub__(self, other):
        return _sugar("sub", self, other)

    def __rsub__(self, other):
        return _sugar("sub", other, self)

    def __mul__(self, other):
        return _sugar("mul", self, other)

    def __rmul__(self, other):
        return _sugar("mul", other, self)

    def __truediv__(self, other):
        return _sugar("div", self, other)

    def __rtruediv__(self, other):
        return _sugar("div", other, self)

    def __neg__(self):
        return _sugar("neg", self)

    def __matmul__(self, other):
        return _sugar("matmul", self, other)


def _sugar(opname, *args):
    from . import ops

    tape = next(a.tape for a in args if isinstance(a, Node))
    args = [a if isinstance(a, Node) else tape.constant(a) for a in args]
    return getattr(ops, opname)(*args)


class Tape:
    """Recorded program over array values, bound to an optional ParamStore."""

    def __init__(self, store: ParamStore | None = None, dtype=None):
        self.store = store
        if dtype is None:
            dtype = store.dtype if store is not None else np.float64
        self.dtype = np.dtype(dtype)
        self.nodes: list[Node] = []
        self._inputs: dict[str, Node] = {}
        self._stale = False  # True when placeholders lack values

    # ---- leaf constructors -------------------------------------------------
    def input(self, name: str, value=None, shape=None) -> Node:
        """Named input. With a value the tape stays eager; without one the
        tape is stale until eval() supplies it."""
        if name in self._inputs:
            raise ArityError(f"duplicate input {name!r}")
        if value is not None:
            value = np.asarray(value, dtype=self.dtype)
            if shape is not None and tuple(shape) != value.shape:
                raise ArityError(f"input {name!r}: declared {shape}, got {value.shape}")
        else:
            self._stale = True
        node = Node(self, "input", (), value, aux=tuple(shape) if shape is not None else None,
                    name=name)
        self._inputs[name] = node
        return node

    def constant(self, value) -> Node:
        return Node(self, "const", (), np.asarray(value, dtype=self.dtype))

    def param(self, name: str) -> Node:
        if self.store is None or name not in self.store:
            raise KeyError(f"unknown parameter {name!r}")
        value = np.asarray(self.store.get(name), dtype=self.dtype)
        return Node(self, "param", (), value, name=name)

    # ---- execution ---------------------------------------------------------
    def eval(self, inputs: dict[str, np.ndarray] | None = None) -> None:
        """Replay the recorded program, optionally rebinding named inputs.

        Replaying with identical inputs reproduces all values bit-identically:
        every recorded constant (including sampler draws) is reused as-is.
        """
        inputs = dict(inputs or {})
        unknown = set(inputs) - set(self._inputs)
        if unknown:
            raise ArityError(f"unknown inputs: {sorted(unknown)}")
        for name, node in self._inputs.items():
            if name in inputs:
                v = np.asarray(inputs[name], dtype=self.dtype)
                declared = node.aux if node.aux is not None else (
                    node.value.shape if node.value is not None else None)
                if declared is not None and v.shape != tuple(declared):
                    raise ArityError(f"input {name!r}: expected shape {declared}, got {v.shape}")
                node.value = v
            elif node.value is None:
                raise ArityError(f"missing value for input {name!r}")
        for node in self.nodes:
            if node.op in ("input", "const"):
                continue
            if node.op == "param":
                node.value = np.asarray(self.store.get(node.name), dtype=self.dtype)
                continue
            opdef = OP_REGISTRY[node.op]
            node.cache = None
            node.value = opdef.forward(node, *[n.value for n in node.inputs])
        self._stale = False

    def _check_evaluated(self):
        if self._stale or any(n.value is None for n in self.nodes):
            raise StateError("tape has unevaluated placeholders; call eval() first")

    def backward(self, y: Node, seed=None, accumulate: bool = True, want=None):
        """Numeric reverse sweep from y.

        Returns adjoints for leaf nodes (inputs, params, constants) plus any
        nodes listed in `want`; parameter adjoints are also reduced into the
        store when `accumulate` is set. Intermediate adjoints are dropped as
        soon as they are consumed to bound memory.
        """
        self._check_evaluated()
        if y.tape is not self:
            raise ValueError("node belongs to a different tape")
        if seed is None:
            seed = np.ones_like(y.value)
        else:
            seed = np.asarray(seed, dtype=self.dtype)
            if seed.shape != y.value.shape:
                raise ArityError(f"seed shape {seed.shape} != output shape {y.value.shape}")
        want_idx = {n.idx for n in want} if want else set()
        adjoints: dict[int, np.ndarray] = {y.idx: seed}
        out: dict[Node, np.ndarray] = {}
        for idx in range(y.idx, -1, -1):
            adj = adjoints.pop(idx, None)
            if adj is None:
                continue
            node = self.nodes[idx]
            if idx in want_idx:
                out[node] = adj
            if node.op == "param":
                if accumulate and self.store is not None:
                    self.store.add_grad(node.name, adj.astype(self.store.dtype, copy=False))
                out[node] = adj
                continue
            if node.op in ("input", "const"):
                out[node] = adj
                continue
            opdef = OP_REGISTRY[node.op]
            gs = opdef.vjp(node, adj)
            for inp, g in zip(node.inputs, gs):
                if g is None:
                    continue
                prev = adjoints.get(inp.idx)
                adjoints[inp.idx] = g if prev is None else prev + g
        return out

    def input_gradient(self, y: Node, x: Node) -> Node:
        """Gradient of sum(y) w.r.t. x as a differentiable node.

        Builds the VJP chain symbolically; every op on the y->x path must
        provide a derivative graph (twice-differentiable op set), otherwise
        SecondOrderError is raised.
        """
        from . import ops

        if y.tape is not self or x.tape is not self:
            raise ValueError("nodes belong to a different tape")
        # mark nodes reachable from x (forward dependency)
        reach = np.zeros(y.idx + 1, dtype=bool)
        reach[x.idx] = True
        for idx in range(x.idx + 1, y.idx + 1):
            node = self.nodes[idx]
            reach[idx] = any(inp.idx <= y.idx and reach[inp.idx] for inp in node.inputs)
        if not reach[y.idx]:
            return ops.zeros_like_node(x)
        adj_nodes: dict[int, Node] = {y.idx: ops.ones_like_node(y)}
        for idx in range(y.idx, x.idx, -1):
            adj = adj_nodes.pop(idx, None)
            if adj is None:
                continue
            node = self.nodes[idx]
            opdef = OP_REGISTRY[node.op]
            if opdef.grad_graph is None:
                raise SecondOrderError(
                    f"op {node.op!r} does not support gradients-of-gradients")
            needs = [inp.idx <= y.idx and reach[inp.idx] for inp in node.inputs]
            gs = opdef.grad_graph(node, adj, needs)
            for inp, g in zip(node.inputs, gs):
                if g is None or not reach[inp.idx]:
                    continue
                prev = adj_nodes.get(inp.idx)
                adj_nodes[inp.idx] = g if prev is None else ops.add(prev, g)
        out = adj_nodes.get(x.idx)
        return out if out is not None else ops.zeros_like_node(x)
