"""Reverse-mode automatic differentiation over dense float64 matrices.

A :class:`Tape` records every operation applied to tensors created from it
(define-by-run). :meth:`Tape.backward` walks the records in reverse append
order and accumulates gradients into every leaf that requires them.

Every tensor is two dimensional. Scalars are ``1 x 1`` tensors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import NumericalError

__all__ = [
    "Tape",
    "Tensor",
    "GradCheckReport",
    "matmul",
    "add",
    "scale",
    "transpose",
    "sum_all",
    "concat_cols",
    "mean_stack",
    "leaky_relu",
    "sigmoid",
    "segment_softmax",
    "gather_rows",
    "segment_weighted_sum",
    "pairwise_sq_dists",
    "exp_neg",
    "frobenius_sq",
    "trace_quadratic",
    "normalized_laplacian",
    "check_gradients",
]


class Tensor:
    """A dense matrix node on a :class:`Tape`."""

    __slots__ = ("values", "node_id", "requires_grad", "tape", "is_leaf", "grad")

    def __init__(self, values, tape: "Tape", node_id: int, requires_grad: bool, is_leaf: bool):
        self.values = values
        self.tape = tape
        self.node_id = node_id
        self.requires_grad = requires_grad
        self.is_leaf = is_leaf
        self.grad = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def item(self) -> float:
        if self.values.shape != (1, 1):
            raise ValueError(f"item() needs a 1x1 tensor, got {self.values.shape}")
        return float(self.values[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, id={self.node_id}, requires_grad={self.requires_grad})"


def _as_matrix(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ValueError(f"tensors are 2-D, got ndim={arr.ndim}")
    return arr


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values produced by {what}")


class Tape:
    """Append-only record of operations plus the leaves they started from."""

    def __init__(self):
        self._next_id = 0
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.leaves: list[Tensor] = []

    def _new(self, values, requires_grad, is_leaf) -> Tensor:
        t = Tensor(values, self, self._next_id, requires_grad, is_leaf)
        self._next_id += 1
        return t

    def leaf(self, values, requires_grad: bool = True) -> Tensor:
        arr = _as_matrix(values)
        _check_finite(arr, "leaf creation")
        t = self._new(arr, requires_grad, True)
        self.leaves.append(t)
        return t

    def constant(self, values) -> Tensor:
        return self.leaf(values, requires_grad=False)

    def record(self, out_values, inputs: Sequence[Tensor], backward_fn, name: str) -> Tensor:
        _check_finite(out_values, name)
        requires_grad = any(t.requires_grad for t in inputs)
        out = self._new(out_values, requires_grad, False)
        if requires_grad:
            self.nodes.append((out, tuple(inputs), backward_fn))
        return out

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Gradients of ``loss`` for every ``requires_grad`` leaf, keyed by node id.

        Leaves also receive the result on ``.grad``. The tape is cleared
        afterwards.
        """
        if loss.tape is not self:
            raise ValueError("loss tensor belongs to a different tape")
        if loss.values.shape != (1, 1):
            raise ValueError(f"backward needs a scalar (1x1) loss, got {loss.values.shape}")
        grads: dict[int, np.ndarray] = {}
        if loss.requires_grad:
            grads[loss.node_id] = np.ones((1, 1))
            for out, inputs, backward_fn in reversed(self.nodes):
                g = grads.pop(out.node_id, None)
                if g is None:
                    continue
                for inp, gi in zip(inputs, backward_fn(g)):
                    if gi is None or not inp.requires_grad:
                        continue
                    if inp.node_id in grads:
                        grads[inp.node_id] = grads[inp.node_id] + gi
                    else:
                        grads[inp.node_id] = gi
        result = {}
        for leaf in self.leaves:
            if leaf.requires_grad:
                leaf.grad = grads.get(leaf.node_id, np.zeros_like(leaf.values))
                result[leaf.node_id] = leaf.grad
        self.nodes.clear()
        return result


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Tensor):
            return x.tape
    raise TypeError("at least one operand must be a Tensor")


def _lift(x, tape: Tape) -> Tensor:
    if isinstance(x, Tensor):
        if x.tape is not tape:
            raise ValueError("operands live on different tapes")
        return x
    return tape.constant(x)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    av, bv = a.values, b.values

    def backward(g):
        return (g @ bv.T if a.requires_grad else None,
                av.T @ g if b.requires_grad else None)

    return tape.record(av @ bv, (a, b), backward, "matmul")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.sum(axis=0, keepdims=True)


def add(a, b) -> Tensor:
    """Elementwise sum; either operand may be a ``1 x n`` row broadcast over rows."""
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    sa, sb = a.shape, b.shape
    if sa != sb and not (sa[1] == sb[1] and 1 in (sa[0], sb[0])):
        raise ValueError(f"add shape mismatch {sa} + {sb}")

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return tape.record(a.values + b.values, (a, b), backward, "add")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return a.tape.record(a.values * c, (a,), lambda g: (g * c,), "scale")


def transpose(a: Tensor) -> Tensor:
    return a.tape.record(a.values.T.copy(), (a,), lambda g: (g.T,), "transpose")


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return a.tape.record(np.array([[a.values.sum()]]), (a,),
                         lambda g: (np.full(shape, g[0, 0]),), "sum_all")


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    tape = _tape_of(*tensors)
    tensors = [_lift(t, tape) for t in tensors]
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1:
        raise ValueError("concat_cols needs equal row counts")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return tape.record(np.hstack([t.values for t in tensors]), tensors, backward, "concat_cols")


def mean_stack(tensors: Sequence[Tensor]) -> Tensor:
    tape = _tape_of(*tensors)
    tensors = [_lift(t, tape) for t in tensors]
    if len({t.shape for t in tensors}) != 1:
        raise ValueError("mean_stack needs equal shapes")
    k = len(tensors)
    out = sum(t.values for t in tensors) / k

    def backward(g):
        return tuple(g / k for _ in range(k))

    return tape.record(out, tensors, backward, "mean_stack")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    slope = float(slope)
    factor = np.where(a.values > 0, 1.0, slope)
    return a.tape.record(a.values * factor, (a,), lambda g: (g * factor,), "leaky_relu")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.values)
    return a.tape.record(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def _segment_sum(vals: np.ndarray, segments: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n,) + vals.shape[1:])
    np.add.at(out, segments, vals)
    return out


def segment_softmax(logits: Tensor, segments, n: int | None = None) -> Tensor:
    """Softmax of an ``E x 1`` column taken separately within each owner segment."""
    segments = np.asarray(segments, dtype=np.intp)
    if logits.shape != (len(segments), 1):
        raise ValueError(f"logits must be E x 1 with E={len(segments)}, got {logits.shape}")
    if n is None:
        n = int(segments.max()) + 1 if len(segments) else 0
    x = logits.values[:, 0]
    seg_max = np.full(n, -np.inf)
    np.maximum.at(seg_max, segments, x)
    ex = np.exp(x - seg_max[segments])
    denom = np.bincount(segments, weights=ex, minlength=n)
    s = (ex / denom[segments])[:, None]

    def backward(g):
        dot = np.bincount(segments, weights=(g * s)[:, 0], minlength=n)
        return (s * (g - dot[segments][:, None]),)

    return logits.tape.record(s, (logits,), backward, "segment_softmax")


def gather_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    n = a.shape[0]
    if len(idx) and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"row index out of range for {n} rows")

    def backward(g):
        return (_segment_sum(g, idx, n),)

    return a.tape.record(a.values[idx], (a,), backward, "gather_rows")


def segment_weighted_sum(vals: Tensor, weights: Tensor, segments, n: int) -> Tensor:
    """Row ``i`` of the result is the sum of ``weights[e] * vals[e]`` over edges owned by ``i``."""
    tape = _tape_of(vals, weights)
    vals, weights = _lift(vals, tape), _lift(weights, tape)
    segments = np.asarray(segments, dtype=np.intp)
    if weights.shape != (vals.shape[0], 1) or len(segments) != vals.shape[0]:
        raise ValueError("segment_weighted_sum: vals E x d, weights E x 1, segments length E")
    vv, wv = vals.values, weights.values
    out = _segment_sum(wv * vv, segments, n)

    def backward(g):
        ge = g[segments]
        return (ge * wv if vals.requires_grad else None,
                np.einsum("ed,ed->e", ge, vv)[:, None] if weights.requires_grad else None)

    return tape.record(out, (vals, weights), backward, "segment_weighted_sum")


def pairwise_sq_dists(a: Tensor) -> Tensor:
    """``(i, j) -> ||row_i - row_j||^2``; tiny negatives from the Gram expansion clamp to 0."""
    av = a.values
    sq = np.einsum("ij,ij->i", av, av)
    d = sq[:, None] + sq[None, :] - 2.0 * (av @ av.T)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    clamped = d < 0
    d[clamped] = 0.0

    def backward(g):
        g = np.where(clamped, 0.0, g)
        gs = g + g.T
        return (2.0 * (gs.sum(axis=1)[:, None] * av - gs @ av),)

    return a.tape.record(d, (a,), backward, "pairwise_sq_dists")


def exp_neg(a: Tensor, gamma: float) -> Tensor:
    gamma = float(gamma)
    out = np.exp(-gamma * a.values)
    return a.tape.record(out, (a,), lambda g: (-gamma * out * g,), "exp_neg")


def frobenius_sq(a: Tensor) -> Tensor:
    av = a.values
    return a.tape.record(np.array([[np.sum(av * av)]]), (a,),
                         lambda g: (2.0 * g[0, 0] * av,), "frobenius_sq")


def trace_quadratic(a, lap) -> Tensor:
    """``tr(a^T L a)``; ``L`` is usually a constant but may itself be on the tape."""
    tape = _tape_of(a, lap)
    a, lap = _lift(a, tape), _lift(lap, tape)
    av, lv = a.values, lap.values
    if lv.shape != (av.shape[0], av.shape[0]):
        raise ValueError(f"trace_quadratic shape mismatch: a {av.shape}, L {lv.shape}")
    la = lv @ av
    out = np.array([[np.sum(av * la)]])

    def backward(g):
        c = g[0, 0]
        return (c * (la + lv.T @ av) if a.requires_grad else None,
                c * (av @ av.T) if lap.requires_grad else None)

    return tape.record(out, (a, lap), backward, "trace_quadratic")


def normalized_laplacian(k: Tensor, right_exponent: float = -0.5, eps: float = 1e-8) -> Tensor:
    """``D^{-1/2} (D - K) D^{r}`` with ``D = diag(row sums of K)``.

    ``r = -1/2`` is the symmetric normalization. Degrees that are not
    strictly positive are replaced by ``eps``.
    """
    kv = k.values
    r = float(right_exponent)
    d = kv.sum(axis=1)
    bad = d <= 0
    d = np.where(bad, eps, d)
    left = d ** -0.5
    right = d ** r
    out = np.diag(d ** (0.5 + r)) - left[:, None] * kv * right[None, :]

    def backward(g):
        gk = -g * left[:, None] * right[None, :]
        gd = np.diag(g) * (0.5 + r) * d ** (r - 0.5)
        gd = gd + (-(g * kv) @ right) * (-0.5 * d ** -1.5)
        gd = gd + (-(g * kv).T @ left) * (r * d ** (r - 1.0))
        gd = np.where(bad, 0.0, gd)
        return (gk + gd[:, None],)

    return k.tape.record(out, (k,), backward, "normalized_laplacian")


# ---------------------------------------------------------------------------
# Finite-difference checking
# ---------------------------------------------------------------------------


SIGNIFICANT = 1e-6


@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    passed: bool
    checked: int
    flagged: list = field(default_factory=list)
    per_leaf: dict = field(default_factory=dict)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}: {self.checked} entries, max rel err {self.max_rel_error:.3e}, "
                f"max abs err {self.max_abs_error:.3e}, {len(self.flagged)} flagged")


def check_gradients(builder: Callable[[Tape, dict], Tensor], leaves: dict, eps: float = 1e-5,
                    tol: float = 1e-4, atol: float = 1e-8) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``builder(tape, tensors)`` must return a scalar loss, where ``tensors``
    maps each name in ``leaves`` to a leaf on ``tape``. An entry passes when
    its relative error is below ``tol`` or its absolute error is below
    ``atol``. The reported maximum relative error covers entries whose
    gradient magnitude is at least ``SIGNIFICANT`` or that miss the absolute
    floor. Entries whose perturbed loss is non-finite are flagged.
    """
    leaves = {name: _as_matrix(v) for name, v in leaves.items()}
    tape = Tape()
    tensors = {name: tape.leaf(v) for name, v in leaves.items()}
    loss = builder(tape, tensors)
    tape.backward(loss)
    analytic = {name: t.grad for name, t in tensors.items()}

    def evaluate(name, idx, delta):
        vals = {k: v.copy() for k, v in leaves.items()}
        vals[name][idx] += delta
        t = Tape()
        try:
            return builder(t, {k: t.leaf(v, requires_grad=False) for k, v in vals.items()}).item()
        except NumericalError:
            return float("nan")

    max_rel = max_abs = 0.0
    checked = 0
    flagged = []
    per_leaf = {}
    passed = True
    for name, base in leaves.items():
        leaf_rel = 0.0
        for idx in np.ndindex(base.shape):
            fp = evaluate(name, idx, eps)
            fm = evaluate(name, idx, -eps)
            checked += 1
            if not (np.isfinite(fp) and np.isfinite(fm)):
                flagged.append((name, idx))
                passed = False
                continue
            numeric = (fp - fm) / (2.0 * eps)
            a = analytic[name][idx]
            abs_err = abs(a - numeric)
            rel_err = abs_err / max(abs(a), abs(numeric), atol)
            max_abs = max(max_abs, abs_err)
            if abs_err >= atol or max(abs(a), abs(numeric)) >= SIGNIFICANT:
                leaf_rel = max(leaf_rel, rel_err)
            if abs_err >= atol and rel_err >= tol:
                passed = False
        per_leaf[name] = leaf_rel
        max_rel = max(max_rel, leaf_rel)
    return GradCheckReport(max_rel, max_abs, passed, checked, flagged, per_leaf)
