"""Minimal dense-array computation tape with reverse-mode differentiation.

All values are 64-bit floats.  A Tape is rebuilt per forward pass (graph
shapes change per frame) and is confined to one thread; parameters outlive
tapes and accumulate gradients across backward calls until zeroed.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np


class NumericError(ArithmeticError):
    """A primitive produced a non-finite value."""


class Tensor:
    """A dense float64 array, optionally tracking a gradient accumulator."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def item(self) -> float:
        return self.data.item()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


_LOCAL = threading.local()


def _tape_stack() -> list:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def _active_tape() -> "Tape":
    stack = _tape_stack()
    if not stack:
        raise RuntimeError("no active Tape; wrap the computation in `with Tape():`")
    return stack[-1]


class _Entry:
    __slots__ = ("output", "inputs")

    def __init__(self, output: Tensor,
                 inputs: Sequence[tuple[Tensor, Callable[[np.ndarray], np.ndarray]]]):
        self.output = output
        self.inputs = inputs


class Tape:
    """Ordered record of primitive applications for one forward pass."""

    def __init__(self):
        self._entries: list[_Entry] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack().pop()

    def _record(self, output: Tensor, inputs) -> None:
        self._entries.append(_Entry(output, inputs))
        self._produced.add(id(output))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(tensor) into every requires_grad input.

        Repeated calls without zero_grad accumulate.  Visits entries exactly
        once, in reverse recording order.
        """
        if loss.data.size != 1:
            raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
        if id(loss) not in self._produced and not loss.requires_grad:
            raise ValueError("loss tensor was not produced on this tape")
        pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self._entries):
            out_grad = pending.pop(id(entry.output), None)
            if out_grad is None:
                continue
            for tensor, pull in entry.inputs:
                if tensor.requires_grad:
                    tensor.grad += pull(out_grad)
                elif id(tensor) in self._produced:
                    contrib = pull(out_grad)
                    key = id(tensor)
                    if key in pending:
                        pending[key] += contrib
                    else:
                        pending[key] = contrib


def backward(loss: Tensor) -> None:
    """Run the active tape's backward pass from a scalar loss."""
    _active_tape().backward(loss)


def _emit(name: str, value: np.ndarray, inputs) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite result in {name}")
    out = Tensor(value)
    _active_tape()._record(out, inputs)
    return out


class _quiet(np.errstate):
    """Overflow becomes inf and is caught by the finiteness guard instead."""

    def __init__(self):
        super().__init__(over="ignore", invalid="ignore")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    with _quiet():
        value = a.data @ b.data
    ad, bd = a.data, b.data
    return _emit("matmul", value, [
        (a, lambda g: g @ bd.T),
        (b, lambda g: ad.T @ g),
    ])


def _bias_compatible(a: np.ndarray, b: np.ndarray) -> bool:
    if b.ndim == 1 and a.ndim == 2 and b.shape[0] == a.shape[1]:
        return True
    if b.ndim == 2 and b.shape[0] == 1 and a.ndim == 2 and b.shape[1] == a.shape[1]:
        return True
    return False


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; the only broadcast allowed is a row-vector bias."""
    if a.data.shape == b.data.shape:
        return _emit("add", a.data + b.data, [(a, lambda g: g), (b, lambda g: g)])
    if _bias_compatible(a.data, b.data):
        def pull_bias(g, shape=b.data.shape):
            summed = g.sum(axis=0)
            return summed.reshape(shape)
        return _emit("add", a.data + b.data, [(a, lambda g: g), (b, pull_bias)])
    raise ValueError(f"add shape mismatch: {a.shape} + {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"sub shape mismatch: {a.shape} - {b.shape}")
    return _emit("sub", a.data - b.data, [(a, lambda g: g), (b, lambda g: -g)])


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} * {b.shape}")
    ad, bd = a.data, b.data
    with _quiet():
        value = ad * bd
    return _emit("mul", value, [(a, lambda g: g * bd), (b, lambda g: g * ad)])


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign so exp never overflows.
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                   np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    return _emit("sigmoid", out, [(x, lambda g: g * out * (1.0 - out))])


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _emit("tanh", out, [(x, lambda g: g * (1.0 - out * out))])


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ValueError("transpose expects a matrix")
    return _emit("transpose", x.data.T.copy(), [(x, lambda g: g.T)])


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if axis not in (0, 1):
        raise ValueError("concat supports axis 0 or 1")
    value = np.concatenate([p.data for p in parts], axis=axis)
    inputs = []
    offset = 0
    for p in parts:
        size = p.data.shape[axis]
        lo, hi = offset, offset + size

        def pull(g, lo=lo, hi=hi):
            return g[lo:hi] if axis == 0 else g[:, lo:hi]

        inputs.append((p, pull))
        offset = hi
    return _emit("concat", value, inputs)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    if axis not in (0, 1) or x.data.ndim != 2:
        raise ValueError("slice_axis expects a matrix and axis 0 or 1")
    value = x.data[start:stop] if axis == 0 else x.data[:, start:stop]

    def pull(g):
        full = np.zeros_like(x.data)
        if axis == 0:
            full[start:stop] = g
        else:
            full[:, start:stop] = g
        return full

    return _emit("slice_axis", value.copy(), [(x, pull)])


def mean_pool(x: Tensor) -> Tensor:
    """Mean over rows: (n, d) -> (1, d)."""
    if x.data.ndim != 2 or x.data.shape[0] == 0:
        raise ValueError("mean_pool expects a non-empty matrix")
    n = x.data.shape[0]
    value = x.data.mean(axis=0, keepdims=True)
    return _emit("mean_pool", value, [(x, lambda g: np.repeat(g / n, n, axis=0))])


def softmax_rows(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ValueError("softmax_rows expects a matrix")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def pull(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return out * (g - dot)

    return _emit("softmax_rows", out, [(x, pull)])


def weighted_softmax_cross_entropy(logits: Tensor, targets, weights) -> Tensor:
    """Sum of per-row weighted cross-entropy against integer class targets.

    `targets` and `weights` are plain arrays (one entry per row); a scalar
    target/weight is accepted for single-row logits.
    """
    if logits.data.ndim != 2:
        raise ValueError("weighted_softmax_cross_entropy expects (rows, classes) logits")
    t = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    w = np.atleast_1d(np.asarray(weights, dtype=np.float64))
    n, c = logits.data.shape
    if t.shape != (n,) or w.shape != (n,):
        raise ValueError("targets/weights must have one entry per logits row")
    if np.any(t < 0) or np.any(t >= c):
        raise ValueError("target index out of range")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    ce = lse - shifted[np.arange(n), t]
    value = np.array((w * ce).sum())

    probs = np.exp(shifted - lse[:, None])

    def pull(g):
        grad = probs.copy()
        grad[np.arange(n), t] -= 1.0
        return float(g) * w[:, None] * grad

    return _emit("weighted_softmax_cross_entropy", value, [(logits, pull)])


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a python constant."""
    f = float(factor)
    return _emit("scale", x.data * f, [(x, lambda g: g * f)])


def gradient_check(f: Callable[[], Tensor], params: Sequence[Tensor],
                   eps: float = 1e-5, max_coords: int = 200, seed: int = 0) -> float:
    """Max relative error between analytic gradients and central differences.

    `f` rebuilds the scalar loss from scratch on each call.  At most
    `max_coords` coordinates are probed, sampled uniformly across all
    parameters with a seeded generator.
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    coords = [(i, j) for i, p in enumerate(params) for j in range(p.data.size)]
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[k] for k in picks]

    def evaluate() -> float:
        with Tape():
            return f().item()

    worst = 0.0
    for i, j in coords:
        flat = params[i].data.reshape(-1)
        original = flat[j]
        flat[j] = original + eps
        up = evaluate()
        flat[j] = original - eps
        down = evaluate()
        flat[j] = original
        numeric = (up - down) / (2.0 * eps)
        exact = analytic[i].reshape(-1)[j]
        err = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
