"""Dense float64 tensors with taped reverse-mode differentiation.

The op set is deliberately small: matrix products, the elementwise
functions used by the encoders and Q heads, row gathering and averaging
for graph aggregation, and concatenation. There is no general
broadcasting; shapes must match exactly except where an op documents
otherwise.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sparse

# Validate values at op boundaries. Cheap at the sizes this library
# targets; flip off for long frozen-policy rollouts if profiling says so.
CHECK_FINITE = True


def _checked(name: str, out: np.ndarray) -> np.ndarray:
    if CHECK_FINITE and not np.all(np.isfinite(out)):
        raise FloatingPointError(f"{name}: non-finite values in result")
    return out


class Tensor:
    """A dense float64 array plus a requires-gradient flag.

    Tensors are leaves of the computation record; every op output is a
    fresh Tensor with requires_grad False. Parameter tensors are updated
    in place by the optimizer, so their identity is stable across steps.
    """

    __slots__ = ("data", "requires_grad")

    def __init__(self, values, requires_grad: bool = False):
        data = np.array(values, dtype=np.float64)
        if CHECK_FINITE and not np.all(np.isfinite(data)):
            raise FloatingPointError("tensor values must be finite")
        self.data = data
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


_Pull = tuple[Tensor, Callable[[np.ndarray], np.ndarray]]


class Tape:
    """Records one forward pass and replays it in reverse for gradients.

    One tape serves one forward pass; backward() consumes it. Gradients
    accumulate additively where a tensor fans out into several ops.
    Tapes and their tensors are not shared across threads.
    """

    def __init__(self):
        self._ops: list[tuple[Tensor, tuple[_Pull, ...]]] = []
        self._produced: set[int] = set()
        self._consumed = False

    # -- recording ---------------------------------------------------

    def _emit(self, name: str, out_data: np.ndarray, pulls: Iterable[_Pull]) -> Tensor:
        out = Tensor.__new__(Tensor)
        out.data = _checked(name, out_data)
        out.requires_grad = False
        self._ops.append((out, tuple(pulls)))
        self._produced.add(id(out))
        return out

    # -- ops ----------------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        """Matrix product; supports 2Dx2D, 2Dx1D and 1Dx2D operands."""
        ad, bd = a.data, b.data
        if ad.ndim == 2 and bd.ndim == 2:
            if ad.shape[1] != bd.shape[0]:
                raise ValueError(f"matmul: inner dimensions disagree: {ad.shape} @ {bd.shape}")
            out = ad @ bd
            pulls = [(a, lambda g: g @ bd.T), (b, lambda g: ad.T @ g)]
        elif ad.ndim == 2 and bd.ndim == 1:
            if ad.shape[1] != bd.shape[0]:
                raise ValueError(f"matmul: inner dimensions disagree: {ad.shape} @ {bd.shape}")
            out = ad @ bd
            pulls = [(a, lambda g: np.outer(g, bd)), (b, lambda g: ad.T @ g)]
        elif ad.ndim == 1 and bd.ndim == 2:
            if ad.shape[0] != bd.shape[0]:
                raise ValueError(f"matmul: inner dimensions disagree: {ad.shape} @ {bd.shape}")
            out = ad @ bd
            pulls = [(a, lambda g: bd @ g), (b, lambda g: np.outer(ad, g))]
        else:
            raise ValueError(f"matmul: unsupported ranks {ad.shape} @ {bd.shape}")
        return self._emit("matmul", out, pulls)

    def matmul_const(self, a_const, x: Tensor) -> Tensor:
        """Product by a constant matrix (ndarray or scipy sparse); no gradient into the constant."""
        out = a_const @ x.data
        at = a_const.T
        return self._emit("matmul_const", np.asarray(out), [(x, lambda g: np.asarray(at @ g))])

    def linear(self, x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
        """x @ w.T (+ b). x is (n,) or (rows, n); w is (m, n); b is (m,)."""
        xd, wd = x.data, w.data
        if wd.ndim != 2 or xd.shape[-1] != wd.shape[1]:
            raise ValueError(f"linear: shapes disagree: x {xd.shape}, w {wd.shape}")
        if xd.ndim == 1:
            out = wd @ xd
            pulls = [(x, lambda g: wd.T @ g), (w, lambda g: np.outer(g, xd))]
        elif xd.ndim == 2:
            out = xd @ wd.T
            pulls = [(x, lambda g: g @ wd), (w, lambda g: g.T @ xd)]
        else:
            raise ValueError(f"linear: unsupported input rank {xd.shape}")
        if b is not None:
            if b.data.shape != (wd.shape[0],):
                raise ValueError(f"linear: bias shape {b.data.shape} does not match w {wd.shape}")
            out = out + b.data
            if xd.ndim == 1:
                pulls.append((b, lambda g: g))
            else:
                pulls.append((b, lambda g: g.sum(axis=0)))
        return self._emit("linear", out, pulls)

    def _binary(self, name, a, b, fwd, da, db):
        if a.data.shape != b.data.shape:
            raise ValueError(f"{name}: shapes disagree: {a.data.shape} vs {b.data.shape}")
        return self._emit(name, fwd(a.data, b.data), [(a, da(a, b)), (b, db(a, b))])

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        return self._binary("add", a, b, np.add, lambda a_, b_: lambda g: g, lambda a_, b_: lambda g: g)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        return self._binary("sub", a, b, np.subtract, lambda a_, b_: lambda g: g, lambda a_, b_: lambda g: -g)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        ad, bd = a.data, b.data
        return self._binary("mul", a, b, np.multiply, lambda a_, b_: lambda g: g * bd, lambda a_, b_: lambda g: g * ad)

    def scale(self, x: Tensor, factor: float, shift: float = 0.0) -> Tensor:
        """Elementwise factor * x + shift with python-scalar constants."""
        return self._emit("scale", factor * x.data + shift, [(x, lambda g: factor * g)])

    def mul_const(self, x: Tensor, mask) -> Tensor:
        """Elementwise product with a constant array of the same shape."""
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != x.data.shape:
            raise ValueError(f"mul_const: shapes disagree: {x.data.shape} vs {mask.shape}")
        return self._emit("mul_const", x.data * mask, [(x, lambda g: g * mask)])

    def relu(self, x: Tensor) -> Tensor:
        keep = x.data > 0.0
        return self._emit("relu", np.where(keep, x.data, 0.0), [(x, lambda g: g * keep)])

    def sigmoid(self, x: Tensor) -> Tensor:
        xd = x.data
        out = np.where(xd >= 0, 1.0 / (1.0 + np.exp(-np.abs(xd))), np.exp(-np.abs(xd)) / (1.0 + np.exp(-np.abs(xd))))
        return self._emit("sigmoid", out, [(x, lambda g: g * out * (1.0 - out))])

    def tanh(self, x: Tensor) -> Tensor:
        out = np.tanh(x.data)
        return self._emit("tanh", out, [(x, lambda g: g * (1.0 - out * out))])

    def concat(self, a: Tensor, b: Tensor) -> Tensor:
        """Concatenate two 1-D tensors."""
        if a.data.ndim != 1 or b.data.ndim != 1:
            raise ValueError(f"concat: expects 1-D operands, got {a.data.shape}, {b.data.shape}")
        split = a.data.shape[0]
        out = np.concatenate([a.data, b.data])
        return self._emit("concat", out, [(a, lambda g: g[:split]), (b, lambda g: g[split:])])

    def concat_cols(self, a: Tensor, b: Tensor) -> Tensor:
        """Concatenate two 2-D tensors along columns."""
        if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
            raise ValueError(f"concat_cols: shapes disagree: {a.data.shape}, {b.data.shape}")
        split = a.data.shape[1]
        out = np.concatenate([a.data, b.data], axis=1)
        return self._emit("concat_cols", out, [(a, lambda g: g[:, :split]), (b, lambda g: g[:, split:])])

    def gather_row(self, x: Tensor, index: int) -> Tensor:
        if x.data.ndim != 2:
            raise ValueError(f"gather_row: expects a matrix, got {x.data.shape}")
        if not (0 <= index < x.data.shape[0]):
            raise IndexError(f"gather_row: row {index} out of range for {x.data.shape}")
        xd = x.data

        def pull(g):
            out = np.zeros_like(xd)
            out[index] = g
            return out

        return self._emit("gather_row", xd[index].copy(), [(x, pull)])

    def gather_rows(self, x: Tensor, indices) -> Tensor:
        """Select rows by an integer array; repeated rows accumulate gradient."""
        idx = np.asarray(indices, dtype=np.int64)
        if x.data.ndim != 2 or idx.ndim != 1:
            raise ValueError(f"gather_rows: expects matrix and 1-D index, got {x.data.shape}, {idx.shape}")
        if idx.size and (idx.min() < 0 or idx.max() >= x.data.shape[0]):
            raise IndexError(f"gather_rows: index out of range for {x.data.shape}")
        xd = x.data

        def pull(g):
            out = np.zeros_like(xd)
            np.add.at(out, idx, g)
            return out

        return self._emit("gather_rows", xd[idx], [(x, pull)])

    def mean_rows(self, x: Tensor) -> Tensor:
        """Mean over the rows of a matrix; the empty matrix is rejected."""
        if x.data.ndim != 2:
            raise ValueError(f"mean_rows: expects a matrix, got {x.data.shape}")
        n = x.data.shape[0]
        if n == 0:
            raise ValueError("mean_rows: empty matrix")
        return self._emit("mean_rows", x.data.mean(axis=0), [(x, lambda g: np.tile(g / n, (n, 1)))])

    def mean_of(self, tensors: list[Tensor]) -> Tensor:
        """Elementwise mean of same-shaped tensors (rows given as a list)."""
        if not tensors:
            raise ValueError("mean_of: empty input")
        shape = tensors[0].data.shape
        for t in tensors:
            if t.data.shape != shape:
                raise ValueError(f"mean_of: shapes disagree: {shape} vs {t.data.shape}")
        n = len(tensors)
        out = tensors[0].data.copy()
        for t in tensors[1:]:
            out += t.data
        return self._emit("mean_of", out / n, [(t, lambda g: g / n) for t in tensors])

    def sum(self, x: Tensor) -> Tensor:
        xd = x.data
        return self._emit("sum", np.asarray(xd.sum()), [(x, lambda g: np.full_like(xd, float(g)))])

    def mean(self, x: Tensor) -> Tensor:
        xd = x.data
        if xd.size == 0:
            raise ValueError("mean: empty tensor")
        return self._emit("mean", np.asarray(xd.mean()), [(x, lambda g: np.full_like(xd, float(g) / xd.size))])

    def reshape(self, x: Tensor, shape) -> Tensor:
        orig = x.data.shape
        return self._emit("reshape", x.data.reshape(shape), [(x, lambda g: g.reshape(orig))])

    # -- backward ------------------------------------------------------

    def backward(self, loss: Tensor, wrt: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
        """Gradients of a scalar loss for every requires-grad tensor seen.

        Returns a map parameter -> array of the parameter's shape. Tensors
        in `wrt` always get an entry (zeros when the loss does not depend
        on them). A tape can be consumed exactly once.
        """
        if self._consumed:
            raise RuntimeError("tape already consumed by a previous backward pass")
        if loss.shape != ():
            raise ValueError(f"loss must be scalar, got shape {loss.shape}")
        self._consumed = True
        grads: dict[Tensor, np.ndarray] = {loss: np.ones(())}
        for out, pulls in reversed(self._ops):
            g = grads.pop(out, None)
            if g is None:
                continue
            for inp, pull in pulls:
                if inp.requires_grad or id(inp) in self._produced:
                    piece = pull(g)
                    held = grads.get(inp)
                    grads[inp] = piece if held is None else held + piece
        result = {t: g for t, g in grads.items() if t.requires_grad}
        if wrt is not None:
            for t in wrt:
                result.setdefault(t, np.zeros(t.shape))
        return result
