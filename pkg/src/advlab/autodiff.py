"""Dense float64 tensors with tape-based reverse-mode differentiation.

The operation set is deliberately small: matrix product, bias add, ReLU,
elementwise add/sub/mul, full sum, squared L2 norm, stabilized softmax
cross-entropy and the logit-margin loss used by margin-based attacks.
Every op records onto a :class:`Tape` when any input lives on one; ops on
plain constants evaluate eagerly with nothing recorded.

Tensors are immutable after construction and a tape is confined to one
thread; independent tapes can run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError


def _as_f64(values) -> np.ndarray:
    # always copy: tensors freeze their buffer, callers keep theirs writable
    return np.array(values, dtype=np.float64, order="C", copy=True)


class Tensor:
    """Immutable float64 array, optionally attached to a tape node."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, values, tape: "Tape | None" = None, node_id: int | None = None):
        data = _as_f64(values)
        data.flags.writeable = False
        self.data = data
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, tape={'yes' if self.tape else 'no'})"


def tensor(values) -> Tensor:
    """Wrap values as a constant (untaped) tensor."""
    return Tensor(values)


@dataclass
class _Record:
    out_id: int
    input_ids: tuple
    backward: Callable[[np.ndarray], tuple]


class Tape:
    """Ordered record of primitive ops; replayed strictly in reverse.

    A value consumed twice receives the sum of both gradient contributions.
    """

    def __init__(self):
        self._records: list[_Record] = []
        self._next_id = 0

    def leaf(self, values) -> Tensor:
        """Register an input variable on this tape."""
        t = Tensor(values, tape=self, node_id=self._fresh_id())
        return t

    def _fresh_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def _emit(self, out_data: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
        out = Tensor(out_data, tape=self, node_id=self._fresh_id())
        ids = tuple(t.node_id if t.tape is self else None for t in inputs)
        self._records.append(_Record(out.node_id, ids, backward))
        return out

    def gradients(self, loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
        """Gradient of a scalar loss w.r.t. each tensor in `wrt`."""
        if loss.tape is not self:
            raise ContractError("loss tensor is not on this tape")
        if loss.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
        for rec in reversed(self._records):
            g_out = grads.get(rec.out_id)
            if g_out is None:
                continue
            for nid, g_in in zip(rec.input_ids, rec.backward(g_out)):
                if nid is None or g_in is None:
                    continue
                acc = grads.get(nid)
                if acc is None:
                    grads[nid] = np.array(g_in, dtype=np.float64, copy=True)
                else:
                    acc += g_in
        out = []
        for t in wrt:
            if t.tape is not self:
                raise ContractError("requested gradient for a tensor not on this tape")
            g = grads.get(t.node_id)
            out.append(np.zeros_like(t.data) if g is None else g)
        return out


def _tape_of(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise ContractError("operands live on different tapes")
    return tape


def _result(tape, out_data, inputs, backward) -> Tensor:
    if tape is None:
        return Tensor(out_data)
    return tape._emit(out_data, inputs, backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; `a` may be a vector (treated as a single row)."""
    if b.data.ndim != 2 or a.data.ndim not in (1, 2):
        raise DimensionError(f"matmul needs (m,n)@(n,p) or (n,)@(n,p), got {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def backward(g):
        if ad.ndim == 1:
            return g @ bd.T, np.outer(ad, g)
        return g @ bd.T, ad.T @ g

    return _result(_tape_of(a, b), out, (a, b), backward)


def add_bias(a: Tensor, bias: Tensor) -> Tensor:
    """Add a bias vector to each row of `a` (or to `a` itself when 1-D)."""
    if bias.data.ndim != 1 or a.data.shape[-1] != bias.data.shape[0]:
        raise DimensionError(f"bias {bias.shape} does not match rows of {a.shape}")
    out = a.data + bias.data
    two_d = a.data.ndim == 2

    def backward(g):
        return g, (g.sum(axis=0) if two_d else g)

    return _result(_tape_of(a, bias), out, (a, bias), backward)


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise DimensionError(f"{op} needs equal shapes, got {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _result(_tape_of(a, b), a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _result(_tape_of(a, b), a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _result(_tape_of(a, b), ad * bd, (a, b), lambda g: (g * bd, g * ad))


def relu(a: Tensor) -> Tensor:
    """Elementwise max(0, x). The subgradient at exactly 0 is fixed to 0."""
    mask = a.data > 0
    out = np.where(mask, a.data, 0.0)
    return _result(_tape_of(a), out, (a,), lambda g: (g * mask,))


def sum_all(a: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    shape = a.shape
    return _result(_tape_of(a), np.asarray(a.data.sum()), (a,),
                   lambda g: (np.broadcast_to(g, shape).copy(),))


def l2_norm_sq(a: Tensor) -> Tensor:
    """Squared L2 norm of all entries."""
    ad = a.data
    return _result(_tape_of(a), np.asarray(np.square(ad).sum()), (a,),
                   lambda g: (2.0 * g * ad,))


def _softmax_stable(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_logits(logits: Tensor, class_index) -> Tensor:
    """-log softmax(logits)[class_index], with max-subtraction stabilization.

    1-D logits take a single class index. 2-D logits take one index per row
    and the result is the mean row loss (the minibatch training form).
    """
    z = logits.data
    if z.ndim == 1:
        c = int(class_index)
        if not 0 <= c < z.shape[0]:
            raise IndexError(f"class index {c} out of range for {z.shape[0]} logits")
        m = z.max()
        lse = m + np.log(np.exp(z - m).sum())
        out = np.asarray(lse - z[c])

        def backward(g):
            d = _softmax_stable(z)
            d[c] -= 1.0
            return (g * d,)

        return _result(_tape_of(logits), out, (logits,), backward)

    if z.ndim == 2:
        cls = np.asarray(class_index, dtype=np.int64)
        if cls.shape != (z.shape[0],):
            raise DimensionError(f"need one class per row: {cls.shape} vs {z.shape}")
        if cls.min() < 0 or cls.max() >= z.shape[1]:
            raise IndexError("class index out of range")
        m = z.max(axis=1, keepdims=True)
        lse = (m + np.log(np.exp(z - m).sum(axis=1, keepdims=True))).ravel()
        rows = np.arange(z.shape[0])
        out = np.asarray((lse - z[rows, cls]).mean())

        def backward(g):
            d = _softmax_stable(z)
            d[rows, cls] -= 1.0
            return (g * d / z.shape[0],)

        return _result(_tape_of(logits), out, (logits,), backward)

    raise DimensionError(f"logits must be 1-D or 2-D, got shape {logits.shape}")


def _runner_up(z: np.ndarray, c: int) -> int:
    # argmax over i != c; ties resolved to the lowest class index
    masked = z.copy()
    masked[c] = -np.inf
    return int(np.argmax(masked))


def margin_loss(logits: Tensor, c: int, kappa: float, targeted: bool) -> Tensor:
    """Clamped logit-margin loss max(margin, -kappa).

    targeted:   margin = max_{i != c} z_i - z_c  (drive class c to the top)
    untargeted: margin = z_c - max_{i != c} z_i  (drive class c off the top)

    When the outer max ties at -kappa the subgradient of the margin term is
    used, so gradient still flows at the clamp boundary.
    """
    z = logits.data
    if z.ndim != 1:
        raise DimensionError(f"margin loss needs 1-D logits, got shape {logits.shape}")
    M = z.shape[0]
    if M < 2:
        raise ContractError("margin loss needs at least 2 classes")
    if not 0 <= c < M:
        raise IndexError(f"class index {c} out of range for {M} logits")
    j = _runner_up(z, c)
    margin = (z[j] - z[c]) if targeted else (z[c] - z[j])
    out = np.asarray(max(margin, -float(kappa)))
    active = margin >= -float(kappa)

    def backward(g):
        d = np.zeros_like(z)
        if active:
            sign = 1.0 if targeted else -1.0
            d[j] = sign * g
            d[c] = -sign * g
        return (d,)

    return _result(_tape_of(logits), out, (logits,), backward)


def grad(loss_fn: Callable[[Tensor], Tensor], at) -> Tensor:
    """Gradient of `loss_fn` at `at`, evaluated by one reverse sweep.

    `loss_fn` must build its value from recorded primitives and return a
    scalar tensor.
    """
    tape = Tape()
    x = tape.leaf(at.data if isinstance(at, Tensor) else at)
    loss = loss_fn(x)
    if not isinstance(loss, Tensor) or loss.tape is not tape:
        raise ContractError("loss_fn must return a tensor recorded on the working tape")
    if loss.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    (g,) = tape.gradients(loss, [x])
    return Tensor(g)


@dataclass
class GradCheckReport:
    """Outcome of comparing an analytic gradient against central differences."""

    max_rel_err: float
    worst_index: tuple[int, ...]
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def finite_diff_check(loss_fn, at, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare grad() against central finite differences, coordinate-wise.

    Relative error uses max(|analytic|, |numeric|, 1e-12) as denominator.
    """
    if h <= 0:
        raise ContractError("h must be positive")
    x0 = _as_f64(at.data if isinstance(at, Tensor) else at)
    analytic = grad(loss_fn, x0).data

    def eval_loss(arr: np.ndarray) -> float:
        tape = Tape()
        return loss_fn(tape.leaf(arr)).item()

    worst = 0.0
    worst_idx: tuple[int, ...] = ()
    it = np.nditer(x0, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x0.copy()
        xp[idx] += h
        xm = x0.copy()
        xm[idx] -= h
        numeric = (eval_loss(xp) - eval_loss(xm)) / (2.0 * h)
        a = analytic[idx]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
        if rel > worst:
            worst, worst_idx = rel, idx
        it.iternext()
    return GradCheckReport(max_rel_err=worst, worst_index=worst_idx, tol=tol)
