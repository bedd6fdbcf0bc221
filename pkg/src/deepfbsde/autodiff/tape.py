"""Reverse-mode automatic differentiation on an explicit tape.

One Tape records one computation (typically a full training iteration). Node
values are float64 numpy arrays, usually batched with the batch as the leading
axis, so a 300-step rollout costs a few thousand nodes rather than millions.
Nodes are appended in execution order, which makes the record topologically
sorted by construction; `backward` is a single reverse sweep that visits each
node exactly once and accumulates adjoints into the parents.

Leaves come in two kinds: `leaf` values (constants and data, no gradient
unless created with diff=True) and bound Parameters. Parameters are persistent
(name, ndarray) holders that live across tapes; `Tape.bind` registers one on
the current tape and memoizes the binding, so modules can be written as
ordinary objects whose `__call__` binds weights on whatever tape the inputs
live on.

Binary ops accept a plain number/ndarray on either side; constants are stored
on the node instead of becoming nodes, halving the record length of typical
formulas. Broadcasting follows numpy; the backward pass sums gradients over
broadcast axes.

There is no graph mutation and no in-place aliasing of adjoints: accumulation
rebinds `adj[i] = adj[i] + g`, never `+=`, so a gradient array may be shared
by several consumers safely. Everything is single threaded; a Tape must not
be shared across threads.
"""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from ..errors import UsageError
from . import _fused
from .backends import kernels


class Parameter:
    """A named trainable array, persistent across tapes."""

    __slots__ = ("name", "value")

    def __init__(self, value, name: str = ""):
        self.value = np.asarray(value, dtype=np.float64)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Var:
    """Handle to one tape node."""

    __slots__ = ("tape", "idx")

    # keep numpy from broadcasting elementwise over Var objects so that
    # ndarray <op> Var defers to the reflected operator below
    __array_ufunc__ = None

    def __init__(self, tape: "Tape", idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> np.ndarray:
        return self.tape.vals[self.idx]

    @property
    def shape(self):
        return self.tape.vals[self.idx].shape

    def __repr__(self):
        return f"Var(idx={self.idx}, shape={self.shape})"

    # arithmetic; the tape normalizes Var-vs-constant placement
    def __add__(self, other):
        return self.tape.binary("add", self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.tape.binary("sub", self, other)

    def __rsub__(self, other):
        return self.tape.binary("rsub", self, other)

    def __mul__(self, other):
        return self.tape.binary("mul", self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.tape.binary("div", self, other)

    def __rtruediv__(self, other):
        return self.tape.binary("rdiv", self, other)

    def __neg__(self):
        return self.tape.unary("neg", self)

    def __pow__(self, p):
        if p != 2:
            raise UsageError("only **2 is supported; use ops for other powers")
        return self.tape.unary("square", self)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __rmatmul__(self, other):
        return self.tape.matmul(other, self)

    def __getitem__(self, key):
        return self.tape.getitem(self, key)

    def reshape(self, shape):
        return self.tape.reshape(self, shape)


def _unb(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g over axes that were broadcast up from `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _acc(adj: list, idx: int, g: np.ndarray) -> None:
    cur = adj[idx]
    adj[idx] = g if cur is None else cur + g


# forward rules for binary ops; first operand is the Var side for r-variants
_FWD2 = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "rsub": lambda a, b: b - a,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
    "rdiv": lambda a, b: b / a,
}

_FWD1 = {
    "neg": np.negative,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "square": np.square,
    "abs": np.abs,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "relu": lambda a: np.maximum(a, 0.0),
}


class Tape:
    __slots__ = ("vals", "ops", "parents", "aux", "needs", "_bindings",
                 "_params", "serial")

    _serial_counter = itertools.count()

    def __init__(self):
        self.vals: list[np.ndarray] = []
        self.ops: list[str] = []
        self.parents: list[tuple] = []
        self.aux: list = []
        self.needs: list[bool] = []
        self._bindings: dict[int, int] = {}
        self._params: list[Parameter] = []
        # process-unique id: unlike id(), never reused after this tape dies,
        # so it is safe to key caches on.
        self.serial = next(Tape._serial_counter)

    def __len__(self):
        return len(self.vals)

    def _push(self, op, value, parents, aux, needs) -> Var:
        self.vals.append(value)
        self.ops.append(op)
        self.parents.append(parents)
        self.aux.append(aux)
        self.needs.append(needs)
        return Var(self, len(self.vals) - 1)

    # ---------------- leaves ----------------

    def leaf(self, value, diff: bool = False) -> Var:
        return self._push("leaf", np.asarray(value, dtype=np.float64), (), None, bool(diff))

    def bind(self, p: Parameter) -> Var:
        idx = self._bindings.get(id(p))
        if idx is not None:
            return Var(self, idx)
        var = self._push("leaf", p.value, (), None, True)
        self._bindings[id(p)] = var.idx
        self._params.append(p)
        return var

    # ---------------- elementwise ----------------

    def binary(self, op, a: Var, b) -> Var:
        av = self.vals[a.idx]
        if isinstance(b, Var):
            if b.tape is not self:
                raise UsageError("operands live on different tapes")
            val = _FWD2[op](av, self.vals[b.idx])
            return self._push(op, val, (a.idx, b.idx), None,
                              self.needs[a.idx] or self.needs[b.idx])
        c = np.asarray(b, dtype=np.float64)
        return self._push(op, _FWD2[op](av, c), (a.idx, -1), c, self.needs[a.idx])

    def unary(self, op, a: Var) -> Var:
        av = self.vals[a.idx]
        if op == "sigmoid":
            val = kernels.sigmoid_fwd(av)
        elif op == "softplus":
            val = kernels.softplus_fwd(av)
        else:
            val = _FWD1[op](av)
        return self._push(op, val, (a.idx,), None, self.needs[a.idx])

    # ---------------- shape ----------------

    def reshape(self, a: Var, shape) -> Var:
        val = self.vals[a.idx].reshape(shape)
        return self._push("reshape", val, (a.idx,), None, self.needs[a.idx])

    def getitem(self, a: Var, key) -> Var:
        val = self.vals[a.idx][key]
        if isinstance(val, np.ndarray) and val.base is not None:
            val = val.copy()
        return self._push("getitem", val, (a.idx,), key, self.needs[a.idx])

    def concat(self, parts: Sequence[Var], axis: int) -> Var:
        idxs = tuple(p.idx for p in parts)
        vals = [self.vals[i] for i in idxs]
        val = np.concatenate(vals, axis=axis)
        sizes = tuple(v.shape[axis] for v in vals)
        return self._push("concat", val, idxs, (axis, sizes),
                          any(self.needs[i] for i in idxs))

    def stack_cols(self, cols: Sequence) -> Var:
        """Stack 1-D batch vectors (M,) into (M, k). Entries may be constants."""
        idxs, consts, arrs = [], [], []
        needs = False
        for c in cols:
            if isinstance(c, Var):
                idxs.append(c.idx)
                consts.append(None)
                arrs.append(self.vals[c.idx])
                needs = needs or self.needs[c.idx]
            else:
                idxs.append(-1)
                cv = np.asarray(c, dtype=np.float64)
                consts.append(cv)
                arrs.append(cv)
        m = next(a.shape[0] for a in arrs if a.ndim == 1)
        arrs = [np.broadcast_to(a, (m,)) for a in arrs]
        val = np.stack(arrs, axis=1)
        return self._push("stack_cols", val, tuple(idxs), tuple(consts), needs)

    # ---------------- linear algebra ----------------

    def matmul(self, a, b) -> Var:
        if isinstance(a, Var) and isinstance(b, Var):
            val = np.matmul(self.vals[a.idx], self.vals[b.idx])
            return self._push("matmul", val, (a.idx, b.idx), None,
                              self.needs[a.idx] or self.needs[b.idx])
        if isinstance(a, Var):
            c = np.asarray(b, dtype=np.float64)
            val = np.matmul(self.vals[a.idx], c)
            return self._push("matmul", val, (a.idx, -1), c, self.needs[a.idx])
        c = np.asarray(a, dtype=np.float64)
        val = np.matmul(c, self.vals[b.idx])
        return self._push("matmul", val, (-1, b.idx), c, self.needs[b.idx])

    def bmv(self, a, v) -> Var:
        """Batched matrix-vector product einsum('...ij,...j->...i')."""
        av = self.vals[a.idx] if isinstance(a, Var) else np.asarray(a, np.float64)
        vv = self.vals[v.idx] if isinstance(v, Var) else np.asarray(v, np.float64)
        val = np.einsum("...ij,...j->...i", av, vv)
        pa = a.idx if isinstance(a, Var) else -1
        pv = v.idx if isinstance(v, Var) else -1
        aux = (None if pa >= 0 else av, None if pv >= 0 else vv)
        needs = (pa >= 0 and self.needs[pa]) or (pv >= 0 and self.needs[pv])
        return self._push("bmv", val, (pa, pv), aux, needs)

    def solve(self, a, b) -> Var:
        """Solve A y = b for y, batched; b has vector shape (..., k)."""
        av = self.vals[a.idx] if isinstance(a, Var) else np.asarray(a, np.float64)
        bv = self.vals[b.idx] if isinstance(b, Var) else np.asarray(b, np.float64)
        val = np.linalg.solve(av, bv[..., None])[..., 0]
        pa = a.idx if isinstance(a, Var) else -1
        pb = b.idx if isinstance(b, Var) else -1
        aux = (None if pa >= 0 else av, None if pb >= 0 else bv)
        needs = (pa >= 0 and self.needs[pa]) or (pb >= 0 and self.needs[pb])
        return self._push("solve", val, (pa, pb), aux, needs)

    def sum(self, a: Var, axis=None, keepdims: bool = False) -> Var:
        val = np.sum(self.vals[a.idx], axis=axis, keepdims=keepdims)
        val = np.asarray(val)
        return self._push("sum", val, (a.idx,), (axis, keepdims), self.needs[a.idx])

    # ---------------- structured ----------------

    def paste(self, batch: int, rows: int, cols: int, entries) -> Var:
        """Assemble a batched (batch, rows, cols) matrix from blocks.

        entries: iterable of (r0, c0, h, w, v) with v a Var/ndarray of shape
        (batch, h, w), or (batch,) when h = w = 1, or a plain scalar constant.
        Unfilled slots are zero.
        """
        val = np.zeros((batch, rows, cols))
        idxs, metas = [], []
        needs = False
        for r0, c0, h, w, v in entries:
            if isinstance(v, Var):
                idxs.append(v.idx)
                vv = self.vals[v.idx]
                needs = needs or self.needs[v.idx]
            else:
                idxs.append(-1)
                vv = np.asarray(v, dtype=np.float64)
            if vv.ndim == 1:
                blk = vv.reshape(batch, 1, 1)
            elif vv.ndim == 0:
                blk = vv.reshape(1, 1, 1)
            elif vv.ndim == 2:
                blk = vv.reshape(1, h, w)
            else:
                blk = vv
            val[:, r0 : r0 + h, c0 : c0 + w] += blk
            metas.append((r0, c0, h, w, vv.shape))
        return self._push("paste", val, tuple(idxs), tuple(metas), needs)

    def lstm_point(self, pre: Var, c_prev: Var) -> Var:
        out, cache = kernels.lstm_point_fwd(self.vals[pre.idx], self.vals[c_prev.idx])
        return self._push("lstm_point", out, (pre.idx, c_prev.idx), cache,
                          self.needs[pre.idx] or self.needs[c_prev.idx])

    def guard(self, a: Var, dead) -> Var:
        """Zero out dead batch rows; gradient is cut for those rows too."""
        dead = np.asarray(dead, dtype=bool)
        val = self.vals[a.idx].copy()
        val[dead] = 0.0
        return self._push("guard", val, (a.idx,), dead, self.needs[a.idx])

    # ---------------- fused ops (hot path) ----------------
    # Each replaces a short chain of primitives recorded every rollout step;
    # forward formulas live in _fused so the ndarray code path is identical.

    def _pidx(self, v):
        if isinstance(v, Var):
            return v.idx, None, self.needs[v.idx]
        c = np.asarray(v, dtype=np.float64)
        return -1, c, False

    def features(self, x: Var, center, inv_scale, tfrac: float) -> Var:
        """[(x - center) * inv_scale | tfrac column] -> (M, n+1)."""
        val = _fused.features(self.vals[x.idx], center, inv_scale, tfrac)
        return self._push("features", val, (x.idx,), inv_scale, self.needs[x.idx])

    def affine(self, x: Var, W, b) -> Var:
        """x @ W + b."""
        wi, wc, wn = self._pidx(W)
        bi, bc, bn = self._pidx(b)
        val = np.matmul(self.vals[x.idx], wc if wi < 0 else self.vals[wi])
        val += bc if bi < 0 else self.vals[bi]
        return self._push("affine", val, (x.idx, wi, bi), (wc, bc),
                          self.needs[x.idx] or wn or bn)

    def affine_cat(self, a: Var, b: Var, W, bias) -> Var:
        """concat([a, b], axis=1) @ W + bias (recurrent-cell input map)."""
        wi, wc, wn = self._pidx(W)
        bi, bc, bn = self._pidx(bias)
        cat = np.concatenate((self.vals[a.idx], self.vals[b.idx]), axis=1)
        val = np.matmul(cat, wc if wi < 0 else self.vals[wi])
        val += bc if bi < 0 else self.vals[bi]
        return self._push("affine_cat", val, (a.idx, b.idx, wi, bi), (wc, bc),
                          self.needs[a.idx] or self.needs[b.idx] or wn or bn)

    def sat(self, z: Var, scale) -> Var:
        """scale * tanh(z/2): the saturated control map."""
        scale = np.asarray(scale, dtype=np.float64)
        val = _fused.sat(self.vals[z.idx], scale)
        return self._push("sat", val, (z.idx,), scale, self.needs[z.idx])

    def satcost(self, z: Var, u_max, R) -> Var:
        """Row-summed control running cost from the preactivation z, (M,1)."""
        w2 = 2.0 * np.asarray(u_max, float) * np.asarray(R, float)
        val, s = _fused.satcost(self.vals[z.idx], w2)
        return self._push("satcost", val, (z.idx,), (w2, s), self.needs[z.idx])

    def quadcost(self, x: Var, Q, target) -> Var:
        """(x - target)^T Q (x - target) rowwise, (M, 1)."""
        Q = np.asarray(Q, float)
        target = np.asarray(target, float)
        val = _fused.quadcost(self.vals[x.idx], Q, target)
        return self._push("quadcost", val, (x.idx,), (Q + Q.T, target),
                          self.needs[x.idx])

    def penlog(self, c: Var, lo, hi, L: float, k: float, const_sum: float) -> Var:
        """Summed logistic constraint penalty of c = C x rows, (M, 1)."""
        val, s_hi, s_lo = _fused.penlog(self.vals[c.idx], lo, hi, L, k, const_sum)
        return self._push("penlog", val, (c.idx,), (L, k, s_hi, s_lo),
                          self.needs[c.idx])

    def penrelu(self, c: Var, lo, hi, kalpha: float) -> Var:
        """Summed ReLU constraint penalty of c rows, (M, 1)."""
        val = _fused.penrelu(self.vals[c.idx], lo, hi, kalpha)
        return self._push("penrelu", val, (c.idx,), (lo, hi, kalpha),
                          self.needs[c.idx])

    def wdot(self, a: Var, w, s: float) -> Var:
        """s * sum(a * w, axis=1, keepdims=True) with w, s constants."""
        w = np.asarray(w, dtype=np.float64)
        val = _fused.wdot(self.vals[a.idx], w, s)
        return self._push("wdot", val, (a.idx,), (w, float(s)), self.needs[a.idx])

    def yupdate(self, y: Var, corr: Var, dt: float, parts) -> Var:
        """y - dt * sum(parts) + corr: the value recursion in one node."""
        total = self.vals[parts[0].idx].copy()
        for p in parts[1:]:
            total += self.vals[p.idx]
        val = self.vals[y.idx] - dt * total + self.vals[corr.idx]
        idxs = (y.idx, corr.idx) + tuple(p.idx for p in parts)
        needs = any(self.needs[i] for i in idxs)
        return self._push("yupdate", val, idxs, float(dt), needs)

    # ---------------- backward ----------------

    def _sweep(self, root: Var) -> list:
        if root.tape is not self:
            raise UsageError("root lives on a different tape")
        rv = self.vals[root.idx]
        if rv.size != 1:
            raise UsageError(f"backward root must be scalar, got shape {rv.shape}")
        adj: list = [None] * (root.idx + 1)
        adj[root.idx] = np.ones_like(rv)
        ops, needs = self.ops, self.needs
        for i in range(root.idx, -1, -1):
            g = adj[i]
            if g is None or not needs[i]:
                continue
            op = ops[i]
            if op == "leaf":
                continue
            _BWD[op](self, i, g, adj)
        return adj

    def backward(self, root: Var) -> dict[Parameter, np.ndarray]:
        """Gradient of scalar `root` w.r.t. every Parameter bound on this tape.

        Parameters that do not influence the root get zero gradients.
        """
        adj = self._sweep(root)
        grads: dict[Parameter, np.ndarray] = {}
        for p in self._params:
            idx = self._bindings[id(p)]
            g = adj[idx] if idx < len(adj) else None
            grads[p] = np.zeros_like(p.value) if g is None else np.asarray(g)
        return grads

    def grad(self, root: Var, wrt: Sequence[Var]) -> list[np.ndarray]:
        """Gradients w.r.t. arbitrary leaves (created with diff=True)."""
        adj = self._sweep(root)
        out = []
        for v in wrt:
            g = adj[v.idx] if v.idx < len(adj) else None
            out.append(np.zeros_like(self.vals[v.idx]) if g is None else np.asarray(g))
        return out


# ---------------- backward rules ----------------


def _bwd_add(t, i, g, adj):
    pa, pb = t.parents[i]
    if t.needs[pa]:
        _acc(adj, pa, _unb(g, t.vals[pa].shape))
    if pb >= 0 and t.needs[pb]:
        _acc(adj, pb, _unb(g, t.vals[pb].shape))


def _bwd_sub(t, i, g, adj):
    pa, pb = t.parents[i]
    if t.needs[pa]:
        _acc(adj, pa, _unb(g, t.vals[pa].shape))
    if pb >= 0 and t.needs[pb]:
        _acc(adj, pb, _unb(-g, t.vals[pb].shape))


def _bwd_rsub(t, i, g, adj):
    pa, _ = t.parents[i]
    if t.needs[pa]:
        _acc(adj, pa, _unb(-g, t.vals[pa].shape))


def _bwd_mul(t, i, g, adj):
    pa, pb = t.parents[i]
    a = t.vals[pa]
    b = t.aux[i] if pb == -1 else t.vals[pb]
    if t.needs[pa]:
        _acc(adj, pa, _unb(g * b, a.shape))
    if pb >= 0 and t.needs[pb]:
        _acc(adj, pb, _unb(g * a, b.shape))


def _bwd_div(t, i, g, adj):
    pa, pb = t.parents[i]
    a = t.vals[pa]
    b = t.aux[i] if pb == -1 else t.vals[pb]
    if t.needs[pa]:
        _acc(adj, pa, _unb(g / b, a.shape))
    if pb >= 0 and t.needs[pb]:
        _acc(adj, pb, _unb(-g * t.vals[i] / b, b.shape))


def _bwd_rdiv(t, i, g, adj):
    pa, _ = t.parents[i]
    a = t.vals[pa]
    if t.needs[pa]:
        _acc(adj, pa, _unb(-g * t.vals[i] / a, a.shape))


def _bwd_neg(t, i, g, adj):
    _acc(adj, t.parents[i][0], -g)


def _bwd_exp(t, i, g, adj):
    _acc(adj, t.parents[i][0], g * t.vals[i])


def _bwd_log(t, i, g, adj):
    pa = t.parents[i][0]
    _acc(adj, pa, g / t.vals[pa])


def _bwd_sqrt(t, i, g, adj):
    _acc(adj, t.parents[i][0], 0.5 * g / t.vals[i])


def _bwd_square(t, i, g, adj):
    pa = t.parents[i][0]
    _acc(adj, pa, 2.0 * g * t.vals[pa])


def _bwd_abs(t, i, g, adj):
    pa = t.parents[i][0]
    _acc(adj, pa, g * np.sign(t.vals[pa]))


def _bwd_sin(t, i, g, adj):
    pa = t.parents[i][0]
    _acc(adj, pa, g * np.cos(t.vals[pa]))


def _bwd_cos(t, i, g, adj):
    pa = t.parents[i][0]
    _acc(adj, pa, -g * np.sin(t.vals[pa]))


def _bwd_tanh(t, i, g, adj):
    _acc(adj, t.parents[i][0], kernels.tanh_bwd(t.vals[i], g))


def _bwd_sigmoid(t, i, g, adj):
    _acc(adj, t.parents[i][0], kernels.sigmoid_bwd(t.vals[i], g))


def _bwd_relu(t, i, g, adj):
    pa = t.parents[i][0]
    _acc(adj, pa, g * (t.vals[pa] > 0.0))


def _bwd_softplus(t, i, g, adj):
    pa = t.parents[i][0]
    _acc(adj, pa, kernels.softplus_bwd(t.vals[pa], g))


def _bwd_reshape(t, i, g, adj):
    pa = t.parents[i][0]
    _acc(adj, pa, g.reshape(t.vals[pa].shape))


def _bwd_getitem(t, i, g, adj):
    pa = t.parents[i][0]
    z = np.zeros_like(t.vals[pa])
    z[t.aux[i]] += g
    _acc(adj, pa, z)


def _bwd_concat(t, i, g, adj):
    axis, sizes = t.aux[i]
    off = 0
    sl = [slice(None)] * g.ndim
    for pj, s in zip(t.parents[i], sizes):
        sl[axis] = slice(off, off + s)
        if t.needs[pj]:
            _acc(adj, pj, g[tuple(sl)])
        off += s


def _bwd_stack_cols(t, i, g, adj):
    for j, pj in enumerate(t.parents[i]):
        if pj >= 0 and t.needs[pj]:
            _acc(adj, pj, _unb(g[:, j], t.vals[pj].shape))


def _bwd_matmul(t, i, g, adj):
    pa, pb = t.parents[i]
    a = t.aux[i] if pa == -1 else t.vals[pa]
    b = t.aux[i] if pb == -1 else t.vals[pb]
    if pa >= 0 and t.needs[pa]:
        _acc(adj, pa, _unb(np.matmul(g, np.swapaxes(b, -1, -2)), a.shape))
    if pb >= 0 and t.needs[pb]:
        _acc(adj, pb, _unb(np.matmul(np.swapaxes(a, -1, -2), g), b.shape))


def _bwd_bmv(t, i, g, adj):
    pa, pv = t.parents[i]
    ca, cv = t.aux[i]
    a = ca if pa == -1 else t.vals[pa]
    v = cv if pv == -1 else t.vals[pv]
    if pa >= 0 and t.needs[pa]:
        _acc(adj, pa, _unb(np.einsum("...i,...j->...ij", g, v), a.shape))
    if pv >= 0 and t.needs[pv]:
        _acc(adj, pv, _unb(np.einsum("...ij,...i->...j", a, g), v.shape))


def _bwd_solve(t, i, g, adj):
    pa, pb = t.parents[i]
    ca, _ = t.aux[i]
    a = ca if pa == -1 else t.vals[pa]
    y = t.vals[i]
    gb = np.linalg.solve(np.swapaxes(a, -1, -2), g[..., None])[..., 0]
    if pb >= 0 and t.needs[pb]:
        _acc(adj, pb, _unb(gb, t.vals[pb].shape))
    if pa >= 0 and t.needs[pa]:
        _acc(adj, pa, _unb(-np.einsum("...i,...j->...ij", gb, y), a.shape))


def _bwd_sum(t, i, g, adj):
    pa = t.parents[i][0]
    axis, keepdims = t.aux[i]
    shape = t.vals[pa].shape
    if axis is None:
        _acc(adj, pa, np.broadcast_to(g.reshape((1,) * len(shape)), shape))
        return
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    _acc(adj, pa, np.broadcast_to(g, shape))


def _bwd_paste(t, i, g, adj):
    for pj, (r0, c0, h, w, vshape) in zip(t.parents[i], t.aux[i]):
        if pj >= 0 and t.needs[pj]:
            blk = g[:, r0 : r0 + h, c0 : c0 + w]
            _acc(adj, pj, blk.reshape(vshape))


def _bwd_lstm_point(t, i, g, adj):
    pre, cp = t.parents[i]
    gpre, gc = kernels.lstm_point_bwd(t.aux[i], t.vals[cp], np.ascontiguousarray(g))
    if t.needs[pre]:
        _acc(adj, pre, gpre)
    if t.needs[cp]:
        _acc(adj, cp, gc)


def _bwd_guard(t, i, g, adj):
    pa = t.parents[i][0]
    gg = g.copy()
    gg[t.aux[i]] = 0.0
    _acc(adj, pa, gg)


def _bwd_features(t, i, g, adj):
    pa = t.parents[i][0]
    n = t.vals[pa].shape[1]
    _acc(adj, pa, g[:, :n] * t.aux[i])


def _bwd_affine(t, i, g, adj):
    px, pw, pb = t.parents[i]
    wc, _ = t.aux[i]
    w = wc if pw < 0 else t.vals[pw]
    if t.needs[px]:
        _acc(adj, px, np.matmul(g, w.T))
    if pw >= 0 and t.needs[pw]:
        _acc(adj, pw, np.matmul(t.vals[px].T, g))
    if pb >= 0 and t.needs[pb]:
        _acc(adj, pb, _unb(g, t.vals[pb].shape))


def _bwd_affine_cat(t, i, g, adj):
    pa, pb, pw, pbias = t.parents[i]
    wc, _ = t.aux[i]
    w = wc if pw < 0 else t.vals[pw]
    na = t.vals[pa].shape[1]
    if t.needs[pa] or t.needs[pb]:
        gcat = np.matmul(g, w.T)
        if t.needs[pa]:
            _acc(adj, pa, gcat[:, :na])
        if t.needs[pb]:
            _acc(adj, pb, gcat[:, na:])
    if pw >= 0 and t.needs[pw]:
        cat = np.concatenate((t.vals[pa], t.vals[pb]), axis=1)
        _acc(adj, pw, np.matmul(cat.T, g))
    if pbias >= 0 and t.needs[pbias]:
        _acc(adj, pbias, _unb(g, t.vals[pbias].shape))


def _bwd_sat(t, i, g, adj):
    pz = t.parents[i][0]
    scale = t.aux[i]
    th = t.vals[i] / scale
    _acc(adj, pz, g * (0.5 * scale) * (1.0 - th * th))


def _bwd_satcost(t, i, g, adj):
    pz = t.parents[i][0]
    w2, s = t.aux[i]
    # d r / d z_j = w2_j z_j s_j (1 - s_j)
    _acc(adj, pz, g * (w2 * (t.vals[pz] * (s * (1.0 - s)))))


def _bwd_quadcost(t, i, g, adj):
    px = t.parents[i][0]
    Q2, target = t.aux[i]
    d = t.vals[px] - target
    _acc(adj, px, g * np.matmul(d, Q2))


def _bwd_penlog(t, i, g, adj):
    pc = t.parents[i][0]
    L, k, s_hi, s_lo = t.aux[i]
    _acc(adj, pc, g * ((L * k) * (s_hi * (1.0 - s_hi) - s_lo * (1.0 - s_lo))))


def _bwd_penrelu(t, i, g, adj):
    pc = t.parents[i][0]
    lo, hi, kalpha = t.aux[i]
    c = t.vals[pc]
    sign = (c > hi).astype(np.float64)
    sign -= c < lo
    _acc(adj, pc, g * (kalpha * sign))


def _bwd_wdot(t, i, g, adj):
    pa = t.parents[i][0]
    w, s = t.aux[i]
    _acc(adj, pa, (g * s) * w)


def _bwd_yupdate(t, i, g, adj):
    idxs = t.parents[i]
    dt = t.aux[i]
    if t.needs[idxs[0]]:
        _acc(adj, idxs[0], g)
    if t.needs[idxs[1]]:
        _acc(adj, idxs[1], g)
    gneg = (-dt) * g
    for p in idxs[2:]:
        if t.needs[p]:
            _acc(adj, p, gneg)


_BWD = {
    "add": _bwd_add,
    "sub": _bwd_sub,
    "rsub": _bwd_rsub,
    "mul": _bwd_mul,
    "div": _bwd_div,
    "rdiv": _bwd_rdiv,
    "neg": _bwd_neg,
    "exp": _bwd_exp,
    "log": _bwd_log,
    "sqrt": _bwd_sqrt,
    "square": _bwd_square,
    "abs": _bwd_abs,
    "sin": _bwd_sin,
    "cos": _bwd_cos,
    "tanh": _bwd_tanh,
    "sigmoid": _bwd_sigmoid,
    "relu": _bwd_relu,
    "softplus": _bwd_softplus,
    "reshape": _bwd_reshape,
    "getitem": _bwd_getitem,
    "concat": _bwd_concat,
    "stack_cols": _bwd_stack_cols,
    "matmul": _bwd_matmul,
    "bmv": _bwd_bmv,
    "solve": _bwd_solve,
    "sum": _bwd_sum,
    "paste": _bwd_paste,
    "lstm_point": _bwd_lstm_point,
    "guard": _bwd_guard,
    "features": _bwd_features,
    "affine": _bwd_affine,
    "affine_cat": _bwd_affine_cat,
    "sat": _bwd_sat,
    "satcost": _bwd_satcost,
    "quadcost": _bwd_quadcost,
    "penlog": _bwd_penlog,
    "penrelu": _bwd_penrelu,
    "wdot": _bwd_wdot,
    "yupdate": _bwd_yupdate,
}
