"""Small reverse-mode differentiation tape over numpy arrays, plus Adam.

Every operation on a :class:`Var` appends one node to the tape that owns
it.  Nodes are appended after their inputs, so the tape is always in
topological order and the backward pass is a single reverse sweep.

Plain numpy arrays and floats mixed into an expression are constants.
When none of the operands is a ``Var`` the primitives below fall back to
plain numpy, so the same model code runs with or without a tape.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .model import sigmoid as _np_sigmoid

__all__ = [
    "Var",
    "Tape",
    "TapeError",
    "ParameterStore",
    "Adam",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "transpose",
    "sigmoid",
    "tanh",
    "exp",
    "log",
    "softplus",
    "square",
    "vsum",
    "reshape",
    "take_rows",
    "column",
    "gradient",
    "adam_step",
    "finite_diff_check",
]


class TapeError(RuntimeError):
    pass


class Var:
    """A value recorded on a :class:`Tape`."""

    __slots__ = ("value", "tape", "index", "name")
    __array_ufunc__ = None

    def __init__(self, value, tape, index, name=None):
        self.value = value
        self.tape = tape
        self.index = index
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return take_rows(self, key)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.value.shape}, index={self.index})"


class Tape:
    """Record of primitive operations for one forward pass."""

    def __init__(self):
        self._values = []
        self._parents = []
        self._backward = []
        self._params = OrderedDict()

    def __len__(self):
        return len(self._values)

    def _record(self, value, parents=(), backward=None, name=None):
        value = np.asarray(value, dtype=float)
        v = Var(value, self, len(self._values), name)
        self._values.append(value)
        self._parents.append(parents)
        self._backward.append(backward)
        return v

    def parameter(self, name, value) -> Var:
        """Register a named leaf whose gradient :meth:`gradient` reports."""
        if name in self._params:
            raise TapeError(f"parameter {name!r} already on tape")
        v = self._record(np.array(value, dtype=float), name=name)
        self._params[name] = v
        return v

    def parameters(self, store) -> dict:
        """Register every array of a mapping as a named leaf."""
        return {name: self.parameter(name, value) for name, value in store.items()}

    def constant(self, value) -> Var:
        return self._record(np.array(value, dtype=float))

    def backward(self, root: Var) -> list:
        """Adjoints of every node with respect to ``root`` (``None`` if unreached)."""
        if not isinstance(root, Var) or root.tape is not self:
            raise TapeError("root does not belong to this tape")
        if root.value.size != 1:
            raise TapeError(f"root must be scalar, got shape {root.value.shape}")
        adj = [None] * (root.index + 1)
        adj[root.index] = np.ones_like(root.value)
        for i in range(root.index, -1, -1):
            g = adj[i]
            if g is None or self._backward[i] is None:
                continue
            parents = self._parents[i]
            grads = self._backward[i](g)
            for p, pg in zip(parents, grads):
                if p is None or pg is None:
                    continue
                if p.index >= i:
                    raise TapeError("malformed tape: input recorded after its consumer")
                if adj[p.index] is None:
                    adj[p.index] = pg
                else:
                    adj[p.index] = adj[p.index] + pg
        return adj

    def gradient(self, root: Var) -> "OrderedDict[str, np.ndarray]":
        """Gradient of scalar ``root`` with respect to every named parameter.

        Parameters that ``root`` does not depend on get zero gradients.
        """
        adj = self.backward(root)
        out = OrderedDict()
        for name, v in self._params.items():
            g = adj[v.index] if v.index < len(adj) else None
            out[name] = np.zeros_like(v.value) if g is None else np.array(g, dtype=float).reshape(v.value.shape)
        return out


def _tape_of(*xs):
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise TapeError("operands live on different tapes")
    return tape


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, fwd, grad_a, grad_b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = fwd(av, bv)
    if tape is None:
        return out
    pa = a if isinstance(a, Var) else None
    pb = b if isinstance(b, Var) else None

    def backward(g):
        ga = _unbroadcast(grad_a(g, av, bv), av.shape) if pa is not None else None
        gb = _unbroadcast(grad_b(g, av, bv), bv.shape) if pb is not None else None
        return ga, gb

    return tape._record(out, (pa, pb), backward)


def _unary(x, fwd, grad):
    if not isinstance(x, Var):
        return fwd(np.asarray(x, dtype=float))
    xv = x.value
    out = fwd(xv)
    return x.tape._record(out, (x,), lambda g: (grad(g, xv, out),))


def gradient(tape: Tape, root: Var):
    """Named parameter gradients of ``root``; see :meth:`Tape.gradient`."""
    return tape.gradient(root)


def add(a, b):
    return _binary(a, b, np.add, lambda g, a, b: g, lambda g, a, b: g)


def sub(a, b):
    return _binary(a, b, np.subtract, lambda g, a, b: g, lambda g, a, b: -g)


def mul(a, b):
    """Elementwise product with numpy broadcasting."""
    return _binary(a, b, np.multiply, lambda g, a, b: g * b, lambda g, a, b: g * a)


def neg(x):
    return _unary(x, np.negative, lambda g, x, y: -g)


def matmul(a, b):
    """Matrix product of 2-D operands (the right one may be a vector)."""
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    if av.ndim != 2 or bv.ndim not in (1, 2):
        raise ValueError(f"matmul expects 2-D @ 1-D/2-D, got {av.shape} @ {bv.shape}")
    out = av @ bv
    if tape is None:
        return out
    pa = a if isinstance(a, Var) else None
    pb = b if isinstance(b, Var) else None

    def backward(g):
        if bv.ndim == 1:
            ga = np.outer(g, bv) if pa is not None else None
            gb = av.T @ g if pb is not None else None
        else:
            ga = g @ bv.T if pa is not None else None
            gb = av.T @ g if pb is not None else None
        return ga, gb

    return tape._record(out, (pa, pb), backward)


def transpose(x):
    return _unary(x, lambda v: v.T.copy(), lambda g, x, y: g.T)


def sigmoid(x):
    return _unary(x, lambda v: np.asarray(_np_sigmoid(v), dtype=float),
                  lambda g, x, y: g * y * (1.0 - y))


def tanh(x):
    return _unary(x, np.tanh, lambda g, x, y: g * (1.0 - y * y))


def exp(x):
    return _unary(x, np.exp, lambda g, x, y: g * y)


def log(x):
    return _unary(x, np.log, lambda g, x, y: g / x)


def _np_softplus(v):
    return np.logaddexp(0.0, v)


def softplus(x):
    """``log(1 + exp(x))``; its derivative is the sigmoid."""
    return _unary(x, _np_softplus,
                  lambda g, x, y: g * np.asarray(_np_sigmoid(x), dtype=float))


def square(x):
    return _unary(x, np.square, lambda g, x, y: 2.0 * g * x)


def vsum(x):
    """Sum of all entries, as a 0-d value."""
    if not isinstance(x, Var):
        return np.asarray(np.sum(x), dtype=float)
    shape = x.value.shape
    return x.tape._record(np.sum(x.value), (x,),
                          lambda g: (np.broadcast_to(g, shape).copy(),))


def reshape(x, shape):
    if not isinstance(x, Var):
        return np.asarray(x, dtype=float).reshape(shape)
    old = x.value.shape
    return x.tape._record(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def take_rows(x, index):
    """Select along the first axis (integer array, slice or int)."""
    if not isinstance(x, Var):
        return np.asarray(x, dtype=float)[index]
    xv = x.value
    out = xv[index]

    def backward(g):
        full = np.zeros_like(xv)
        np.add.at(full, index, g)
        return (full,)

    return x.tape._record(out, (x,), backward)


def column(x, j):
    """Column ``j`` of a 2-D value."""
    if not isinstance(x, Var):
        return np.asarray(x, dtype=float)[:, j]
    xv = x.value

    def backward(g):
        full = np.zeros_like(xv)
        full[:, j] = g
        return (full,)

    return x.tape._record(xv[:, j], (x,), backward)


class ParameterStore(OrderedDict):
    """Named float arrays whose shapes never change once created."""

    def __setitem__(self, name, value):
        value = np.array(value, dtype=float)
        if name in self and self[name].shape != value.shape:
            raise ValueError(f"shape of {name!r} is fixed at {self[name].shape}, got {value.shape}")
        super().__setitem__(name, value)

    def copy(self):
        return ParameterStore((k, v.copy()) for k, v in self.items())

    @property
    def size(self):
        return sum(v.size for v in self.values())

    def flat(self) -> np.ndarray:
        """All entries concatenated in insertion order."""
        if not self:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self.values()])

    def set_flat(self, vector):
        vector = np.asarray(vector, dtype=float)
        if vector.size != self.size:
            raise ValueError(f"flat vector has {vector.size} entries, store has {self.size}")
        offset = 0
        for name, v in self.items():
            n = v.size
            super().__setitem__(name, vector[offset:offset + n].reshape(v.shape).copy())
            offset += n

    def locate(self, flat_index):
        """``(name, multi-index)`` of a flat coordinate."""
        offset = 0
        for name, v in self.items():
            if flat_index < offset + v.size:
                return name, np.unravel_index(flat_index - offset, v.shape)
            offset += v.size
        raise IndexError(flat_index)


class Adam:
    """Adam with bias correction.  ``step`` descends; negate gradients to ascend."""

    def __init__(self, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr!r}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        """Update ``params`` in place from ``grads`` (both keyed by name)."""
        for name, g in grads.items():
            if name not in params:
                raise KeyError(f"gradient for unknown parameter {name!r}")
            if np.shape(g) != params[name].shape:
                raise ValueError(f"gradient shape {np.shape(g)} != parameter shape "
                                 f"{params[name].shape} for {name!r}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
            # write through ParameterStore's shape check
            params[name] = params[name] - update
        return params


def adam_step(params, grads, state: Adam, lr=None):
    """Functional form: one Adam update of ``params`` using ``state``."""
    if lr is not None:
        state.lr = lr
    return state.step(params, grads)


def _evaluate(loss, store):
    tape = Tape()
    root = loss(tape, tape.parameters(store))
    return tape, root


def finite_diff_check(loss, params, h=1e-5, max_coords=None, seed=0):
    """Compare tape gradients against central differences.

    Parameters
    ----------
    loss : callable
        ``loss(tape, vars) -> Var`` building a scalar from the parameter
        ``Var`` mapping.  Must be deterministic.
    params : mapping of str to ndarray
    h : float
        Step for ``(f(p + h) - f(p - h)) / 2h``.
    max_coords : int, optional
        Check a random subset of this many coordinates (at least 50) instead
        of all of them.

    Returns
    -------
    float
        Max over checked coordinates of ``|a - b| / max(|a|, |b|, 1e-8)``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    store = ParameterStore((k, np.array(v, dtype=float)) for k, v in params.items())
    tape, root = _evaluate(loss, store)
    f0 = float(root.value)
    _, root2 = _evaluate(loss, store)
    if float(root2.value) != f0:
        raise TapeError("loss is not deterministic: two baseline evaluations differ")
    analytic = ParameterStore(tape.gradient(root)).flat()

    base = store.flat()
    n = base.size
    coords = np.arange(n)
    if max_coords is not None and n > max(max_coords, 50):
        rng = np.random.default_rng(seed)
        coords = np.sort(rng.choice(n, size=max(max_coords, 50), replace=False))

    def f_at(vec):
        s = store.copy()
        s.set_flat(vec)
        return float(_evaluate(loss, s)[1].value)

    worst = 0.0
    for c in coords:
        plus = base.copy()
        plus[c] += h
        minus = base.copy()
        minus[c] -= h
        numeric = (f_at(plus) - f_at(minus)) / (2.0 * h)
        a = analytic[c]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
