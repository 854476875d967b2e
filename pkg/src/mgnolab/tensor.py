"""Reverse-mode automatic differentiation over dense float64 tensors.

A Tape records operations in execution order (which is a topological order
by construction); backward() replays it once in reverse, accumulating
gradients into leaf tensors that require them. Everything is float64 and
CPU-only, which keeps finite-difference checks tight.

Ops only record themselves when a tape is active and the result depends on
a grad-requiring input, so evaluation outside a tape has no overhead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node_id: int | None = None

    @staticmethod
    def _wrap(data: np.ndarray, requires_grad: bool) -> "Tensor":
        """Fast internal constructor for arrays already in float64."""
        t = Tensor.__new__(Tensor)
        t.data = data
        t.requires_grad = requires_grad
        t.grad = None
        t.node_id = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g)  # own the buffer; g may be shared
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of operations for one forward pass."""

    def __init__(self):
        self.ops: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._node_ids: dict[int, int] = {}
        self._produced: set[int] = set()
        self._next_id = 0

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def _ensure_id(self, t: Tensor) -> int:
        key = id(t)
        nid = self._node_ids.get(key)
        if nid is None:
            nid = self._next_id
            self._next_id += 1
            self._node_ids[key] = nid
            t.node_id = nid
        return nid

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], bwd) -> None:
        for t in inputs:
            self._ensure_id(t)
        self._ensure_id(out)
        self._produced.add(id(out))
        self.ops.append((out, inputs, bwd))

    def op_node_ids(self):
        """(output_id, input_ids) per op, for order introspection."""
        return [
            (self._node_ids[id(out)], tuple(self._node_ids[id(t)] for t in inputs))
            for out, inputs, _ in self.ops
        ]


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: Tensor, inputs: tuple[Tensor, ...], bwd) -> Tensor:
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, inputs, bwd)
    return out


# ---------------------------------------------------------------------------
# primitive operations


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {ad.shape} by {bd.shape}")
    out = Tensor(ad @ bd, a.requires_grad or b.requires_grad)

    def bwd(g, ad=ad, bd=bd, na=a.requires_grad, nb=b.requires_grad):
        return (g @ bd.T if na else None, ad.T @ g if nb else None)

    return _record(out, (a, b), bwd)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: shape mismatch {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data, a.requires_grad or b.requires_grad)

    def bwd(g, na=a.requires_grad, nb=b.requires_grad):
        return (g if na else None, g if nb else None)

    return _record(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub: shape mismatch {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data - b.data, a.requires_grad or b.requires_grad)

    def bwd(g, na=a.requires_grad, nb=b.requires_grad):
        return (g if na else None, -g if nb else None)

    return _record(out, (a, b), bwd)


def scale(t, c: float) -> Tensor:
    t = _as_tensor(t)
    c = float(c)
    out = Tensor(t.data * c, t.requires_grad)

    def bwd(g, c=c):
        return (g * c,)

    return _record(out, (t,), bwd)


def add_bias(mat, bias) -> Tensor:
    """Add a length-d bias row to every row of an (n, d) matrix."""
    mat, bias = _as_tensor(mat), _as_tensor(bias)
    if mat.data.ndim != 2 or bias.data.shape != (mat.data.shape[1],):
        raise ShapeError(
            f"add_bias: need (n, d) and (d,), got {mat.data.shape} and {bias.data.shape}"
        )
    out = Tensor(mat.data + bias.data, mat.requires_grad or bias.requires_grad)

    def bwd(g, nm=mat.requires_grad, nb=bias.requires_grad):
        return (g if nm else None, g.sum(axis=0) if nb else None)

    return _record(out, (mat, bias), bwd)


def linear(x, w, b) -> Tensor:
    """x @ w + b in one op; the common affine layer."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    xd, wd = x.data, w.data
    if xd.ndim != 2 or wd.ndim != 2 or xd.shape[1] != wd.shape[0] \
            or b.data.shape != (wd.shape[1],):
        raise ShapeError(f"linear: incompatible shapes {xd.shape}, {wd.shape}, "
                         f"{b.data.shape}")
    out = Tensor._wrap(xd @ wd + b.data,
                       x.requires_grad or w.requires_grad or b.requires_grad)

    def bwd(g, xd=xd, wd=wd, nx=x.requires_grad, nw=w.requires_grad,
            nb=b.requires_grad):
        return (g @ wd.T if nx else None, xd.T @ g if nw else None,
                g.sum(axis=0) if nb else None)

    return _record(out, (x, w, b), bwd)


def relu(t) -> Tensor:
    t = _as_tensor(t)
    td = t.data
    out = Tensor._wrap(np.maximum(td, 0.0), t.requires_grad)

    def bwd(g, td=td):
        return (g * (td > 0.0),)

    return _record(out, (t,), bwd)


def square(t) -> Tensor:
    t = _as_tensor(t)
    out = Tensor(t.data * t.data, t.requires_grad)

    def bwd(g, td=t.data):
        return (2.0 * td * g,)

    return _record(out, (t,), bwd)


def sqrt(t) -> Tensor:
    t = _as_tensor(t)
    od = np.sqrt(t.data)
    out = Tensor(od, t.requires_grad)

    def bwd(g, od=od):
        return (g * (0.5 / od),)

    return _record(out, (t,), bwd)


def sum_all(t) -> Tensor:
    t = _as_tensor(t)
    out = Tensor(np.asarray(t.data.sum()), t.requires_grad)

    def bwd(g, shp=t.data.shape):
        return (np.full(shp, float(g)),)

    return _record(out, (t,), bwd)


def concat_cols(*tensors) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts or any(t.data.ndim != 2 for t in ts):
        raise ShapeError("concat_cols: needs one or more 2-d tensors")
    n = ts[0].data.shape[0]
    if any(t.data.shape[0] != n for t in ts):
        raise ShapeError("concat_cols: row counts differ")
    out = Tensor(np.concatenate([t.data for t in ts], axis=1),
                 any(t.requires_grad for t in ts))
    widths = [t.data.shape[1] for t in ts]

    def bwd(g, widths=widths, needs=[t.requires_grad for t in ts]):
        pieces = []
        ofs = 0
        for wd, need in zip(widths, needs):
            pieces.append(g[:, ofs:ofs + wd] if need else None)
            ofs += wd
        return tuple(pieces)

    return _record(out, tuple(ts), bwd)


def gather_rows(t, idx) -> Tensor:
    t = _as_tensor(t)
    idx = np.asarray(idx, dtype=np.int64)
    if t.data.ndim != 2:
        raise ShapeError("gather_rows: needs a 2-d tensor")
    n = t.data.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"gather_rows: index out of bounds for {n} rows")
    out = Tensor(t.data[idx], t.requires_grad)

    def bwd(g, idx=idx, shp=t.data.shape):
        dt = np.zeros(shp)
        backend.scatter_add_rows(dt, idx, g)
        return (dt,)

    return _record(out, (t,), bwd)


def segment_mean(values, segment_of, n_segments: int) -> Tensor:
    """Row i of the result is the mean of value rows with segment id i.

    Empty segments produce zero rows. The reduction order is the row order,
    so results are reproducible.
    """
    values = _as_tensor(values)
    seg = np.asarray(segment_of, dtype=np.int64)
    if values.data.ndim != 2 or seg.shape != (values.data.shape[0],):
        raise ShapeError("segment_mean: needs (E, d) values and length-E segment ids")
    if seg.size and (seg.min() < 0 or seg.max() >= n_segments):
        raise IndexError(f"segment_mean: segment id out of bounds for {n_segments}")
    counts = np.bincount(seg, minlength=n_segments)
    sums = backend.segment_sum(values.data, seg, n_segments)
    out = Tensor(sums / np.maximum(counts, 1)[:, None], values.requires_grad)

    def bwd(g, seg=seg, counts=counts):
        return (g[seg] / counts[seg][:, None],)

    return _record(out, (values,), bwd)


def edge_matvec(kflat, vec) -> Tensor:
    """Apply a per-row (w, w) matrix (stored flattened) to a per-row vector."""
    kflat, vec = _as_tensor(kflat), _as_tensor(vec)
    kd, vd = kflat.data, vec.data
    if kd.ndim != 2 or vd.ndim != 2 or kd.shape[0] != vd.shape[0] \
            or kd.shape[1] != vd.shape[1] ** 2:
        raise ShapeError(
            f"edge_matvec: need (E, w*w) and (E, w), got {kd.shape} and {vd.shape}"
        )
    out = Tensor(backend.edge_matvec(kd, vd), kflat.requires_grad or vec.requires_grad)

    def bwd(g, kd=kd, vd=vd, nk=kflat.requires_grad, nv=vec.requires_grad):
        return backend.edge_matvec_backward(kd, vd, g, nk, nv)

    return _record(out, (kflat, vec), bwd)


# ---------------------------------------------------------------------------
# backward pass and gradient checking


def backward(loss: Tensor) -> None:
    """Populate .grad for every grad-requiring leaf the loss depends on.

    Repeated calls without zero_grad accumulate, matching the usual
    gradient-accumulation semantics.
    """
    tape = active_tape()
    if tape is None:
        raise RuntimeError("backward() requires an active Tape")
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")

    seed = np.ones_like(loss.data)
    produced = tape._produced
    if id(loss) not in produced:
        if loss.requires_grad:
            loss.accumulate_grad(seed)
        return

    pending: dict[int, np.ndarray] = {id(loss): seed}
    for out, inputs, bwd in reversed(tape.ops):
        g = pending.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, bwd(g)):
            if gi is None:
                continue
            key = id(t)
            if key in produced:
                acc = pending.get(key)
                pending[key] = gi if acc is None else acc + gi
            elif t.requires_grad:
                t.accumulate_grad(gi)


@dataclass
class GradcheckEntry:
    name: str
    max_rel: float
    passed: bool


@dataclass
class GradcheckReport:
    eps: float
    tol: float
    entries: list[GradcheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def max_rel(self) -> float:
        return max((e.max_rel for e in self.entries), default=0.0)

    def __str__(self) -> str:
        lines = [
            f"  {'ok' if e.passed else 'FAIL'}  {e.name}: max rel {e.max_rel:.3e}"
            for e in self.entries
        ]
        status = "passed" if self.passed else "FAILED"
        return f"gradcheck {status} (eps={self.eps}, tol={self.tol})\n" + "\n".join(lines)


def gradcheck(f, inputs, eps: float = 1e-5, tol: float = 1e-6,
              names=None) -> GradcheckReport:
    """Compare analytic gradients of scalar f(*inputs) to central differences.

    Discrepancy is |analytic - numeric| / max(1, |analytic|, |numeric|), so
    it is relative for large gradients and absolute near zero.
    """
    inputs = list(inputs)
    if names is None:
        names = [f"input[{i}]" for i in range(len(inputs))]

    with Tape():
        loss = f(*inputs)
        if loss.data.size != 1:
            raise ShapeError("gradcheck: f must be scalar-valued")
        for t in inputs:
            t.zero_grad()
        backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in inputs]

    report = GradcheckReport(eps=eps, tol=tol)
    for t, a, name in zip(inputs, analytic, names):
        a_flat = a.reshape(-1)
        worst = 0.0
        for i in range(t.data.size):
            # index per element: independent of the array's memory layout
            idx = np.unravel_index(i, t.data.shape)
            orig = t.data[idx]
            t.data[idx] = orig + eps
            f_plus = float(f(*inputs).data)
            t.data[idx] = orig - eps
            f_minus = float(f(*inputs).data)
            t.data[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(a_flat[i] - numeric) / max(1.0, abs(a_flat[i]), abs(numeric))
            worst = max(worst, rel)
        report.entries.append(GradcheckEntry(name, worst, worst <= tol))
    return report
