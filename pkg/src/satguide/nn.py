"""Minimal dense NN substrate: float64 tensors, a reverse-mode tape, layers,
Adam, and a finite-difference gradient checker.

Everything here operates on numpy float64 arrays wrapped in `Var` nodes.  A
`Var` remembers how it was produced so `backward` can accumulate gradients in
reverse topological order.  Forward passes on read-only parameters are safe to
run concurrently; a tape is owned by whoever built it.
"""

from __future__ import annotations

import json
import math

import numpy as np


class Var:
    """A node on the differentiation tape.

    data is always a float64 ndarray.  parents is a list of (Var, vjp) pairs
    where vjp maps the output gradient to this parent's gradient contribution.
    """

    __slots__ = ("data", "parents", "grad", "requires_grad")

    def __init__(self, data, parents=(), requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = list(parents)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in self.parents)

    @property
    def shape(self):
        return self.data.shape

    # convenience operators
    def __add__(self, other):
        return add(self, as_var(other))

    def __sub__(self, other):
        return sub(self, as_var(other))

    def __mul__(self, other):
        return mul(self, as_var(other))

    def __matmul__(self, other):
        return matmul(self, as_var(other))

    def __neg__(self):
        return mul(self, constant(-1.0))


def as_var(x):
    return x if isinstance(x, Var) else Var(x)


def constant(x):
    return Var(x)


def param(x):
    return Var(x, requires_grad=True)


def _unbroadcast(grad, shape):
    """Sum out broadcast dimensions so grad matches the original shape."""
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, out, da, db):
    parents = []
    if a.requires_grad:
        parents.append((a, lambda g: _unbroadcast(da(g), a.shape)))
    if b.requires_grad:
        parents.append((b, lambda g: _unbroadcast(db(g), b.shape)))
    return Var(out, parents)


def add(a, b):
    return _binary(a, b, a.data + b.data, lambda g: g, lambda g: g)


def sub(a, b):
    return _binary(a, b, a.data - b.data, lambda g: g, lambda g: -g)


def mul(a, b):
    return _binary(a, b, a.data * b.data, lambda g: g * b.data, lambda g: g * a.data)


def div(a, b):
    return _binary(a, b, a.data / b.data,
                   lambda g: g / b.data,
                   lambda g: -g * a.data / (b.data * b.data))


def matmul(a, b):
    out = a.data @ b.data
    parents = []
    if a.requires_grad:
        if b.data.ndim == 1:
            parents.append((a, lambda g: np.outer(g, b.data) if a.data.ndim == 2 else g * b.data))
        else:
            parents.append((a, lambda g: g @ b.data.T))
    if b.requires_grad:
        if a.data.ndim == 1:
            parents.append((b, lambda g: np.outer(a.data, g) if b.data.ndim == 2 else g * a.data))
        elif b.data.ndim == 1:
            parents.append((b, lambda g: a.data.T @ g))
        else:
            parents.append((b, lambda g: a.data.T @ g))
    return Var(out, parents)


def relu(x):
    mask = x.data > 0
    return Var(x.data * mask, [(x, lambda g: g * mask)] if x.requires_grad else [])


def tanh(x):
    out = np.tanh(x.data)
    return Var(out, [(x, lambda g: g * (1.0 - out * out))] if x.requires_grad else [])


def exp(x):
    out = np.exp(x.data)
    return Var(out, [(x, lambda g: g * out)] if x.requires_grad else [])


def log(x):
    return Var(np.log(x.data), [(x, lambda g: g / x.data)] if x.requires_grad else [])


def sqrt(x):
    out = np.sqrt(x.data)
    return Var(out, [(x, lambda g: g * 0.5 / out)] if x.requires_grad else [])


def vsum(x):
    return Var(x.data.sum(), [(x, lambda g: np.full(x.shape, g))] if x.requires_grad else [])


def vmean(x):
    n = x.data.size
    return Var(x.data.mean(), [(x, lambda g: np.full(x.shape, g / n))] if x.requires_grad else [])


def concat(xs):
    xs = [as_var(x) for x in xs]
    out = np.concatenate([x.data for x in xs])
    parents = []
    off = 0
    for x in xs:
        n = x.data.size
        if x.requires_grad:
            start = off
            parents.append((x, lambda g, s=start, n=n: g[s:s + n]))
        off += n
    return Var(out, parents)


def stack_columns(cols):
    """Stack 1-D Vars into a (dim, N) matrix."""
    cols = [as_var(c) for c in cols]
    out = np.stack([c.data for c in cols], axis=1)
    parents = []
    for j, c in enumerate(cols):
        if c.requires_grad:
            parents.append((c, lambda g, j=j: g[:, j]))
    return Var(out, parents)


def transpose(x):
    return Var(x.data.T, [(x, lambda g: g.T)] if x.requires_grad else [])


def reshape(x, shape):
    return Var(x.data.reshape(shape),
               [(x, lambda g: g.reshape(x.data.shape))] if x.requires_grad else [])


def stack_rows(xs):
    """Concatenate 2-D Vars along the row axis."""
    xs = [as_var(x) for x in xs]
    out = np.concatenate([x.data for x in xs], axis=0)
    parents = []
    off = 0
    for x in xs:
        n = x.data.shape[0]
        if x.requires_grad:
            parents.append((x, lambda g, s=off, n=n: g[s:s + n]))
        off += n
    return Var(out, parents)


def slice_columns(m, start, stop):
    """Columns [start, stop) of a 2-D Var."""
    def vjp(g):
        full = np.zeros_like(m.data)
        full[:, start:stop] = g
        return full

    return Var(m.data[:, start:stop], [(m, vjp)] if m.requires_grad else [])


def mean_columns(m):
    """Column-wise mean of a 2-D Var, as a 1-D Var."""
    n = m.data.shape[1]

    def vjp(g):
        return np.repeat(g[:, None] / n, n, axis=1)

    return Var(m.data.mean(axis=1), [(m, vjp)] if m.requires_grad else [])


def tile_column(v, n):
    """Repeat a 1-D Var as n identical columns."""
    out = np.repeat(v.data[:, None], n, axis=1)
    return Var(out, [(v, lambda g: g.sum(axis=1))] if v.requires_grad else [])


def gather_row(x, i):
    """Pick row i of a 2-D Var (embedding lookup)."""
    out = x.data[i]

    def vjp(g, i=i):
        full = np.zeros_like(x.data)
        full[i] = g
        return full

    return Var(out, [(x, vjp)] if x.requires_grad else [])


def max_pool_columns(m):
    """Row-wise max of a 2-D Var; gradient routes to the lowest-index argmax."""
    idx = np.argmax(m.data, axis=1)
    out = m.data[np.arange(m.data.shape[0]), idx]

    def vjp(g):
        full = np.zeros_like(m.data)
        full[np.arange(m.data.shape[0]), idx] = g
        return full

    return Var(out, [(m, vjp)] if m.requires_grad else [])


def mean_pool(rows):
    """Element-wise mean of a list of equally-shaped 1-D Vars."""
    acc = rows[0]
    for r in rows[1:]:
        acc = add(acc, r)
    return mul(acc, constant(1.0 / len(rows)))


def linear(x, w, b=None):
    """w @ x (+ b); x may be a vector or a matrix of column vectors."""
    out = matmul(w, x)
    if b is None:
        return out
    if out.data.ndim == 2:
        b = reshape(b, (b.data.shape[0], 1))
    return add(out, b)


LN_EPS = 1e-5


def layer_norm(x, gain=None, bias=None, eps=LN_EPS):
    """(x - mean) / sqrt(var + eps) * gain + bias.

    All-equal input maps to the bias (zero vector with the default gain/bias),
    courtesy of the eps variance floor.
    """
    n = x.data.size
    m = vmean(x)
    centered = sub(x, m)
    var = vmean(mul(centered, centered))
    normed = div(centered, sqrt(add(var, constant(eps))))
    if gain is not None:
        normed = mul(normed, gain)
    if bias is not None:
        normed = add(normed, bias)
    return normed


def softmax_scores(x, tau=1.0):
    """softmax(x / tau), stabilized by max subtraction.

    Equivalent to normalizing exp(x)^(1/tau); tau must be positive.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    z = x.data / tau
    z = z - z.max()
    e = np.exp(z)
    p = e / e.sum()

    def vjp(g):
        return (g * p - p * (g * p).sum()) / tau

    return Var(p, [(x, vjp)] if x.requires_grad else [])


def log_softmax_scores(x, tau=1.0):
    """log softmax(x / tau) via logsumexp; gradient stays bounded even when
    some probabilities underflow, unlike log(softmax(x))."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    z = x.data / tau
    z = z - z.max()
    out = z - np.log(np.exp(z).sum())
    p = np.exp(out)

    def vjp(g):
        return (g - p * g.sum()) / tau

    return Var(out, [(x, vjp)] if x.requires_grad else [])


def softmax_temperature(v, tau):
    """Normalize v^(1/tau) for strictly positive unnormalized scores v."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    arr = v.data if isinstance(v, Var) else np.asarray(v, dtype=np.float64)
    if np.any(arr <= 0):
        raise ValueError("scores must be positive; exponentiate upstream")
    logs = np.log(arr) / tau
    logs = logs - logs.max()
    e = np.exp(logs)
    p = e / e.sum()
    if isinstance(v, Var) and v.requires_grad:
        def vjp(g):
            return (g * p - p * (g * p).sum()) / (tau * arr)
        return Var(p, [(v, vjp)])
    return p


def entropy(p):
    """-sum p log p for a probability-vector Var (entries assumed > 0)."""
    return -vsum(mul(p, log(p)))


def dropout(x, p, rng, train=True):
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    if not train or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return Var(x.data * mask, [(x, lambda g: g * mask)] if x.requires_grad else [])


def backward(loss):
    """Accumulate gradients of a scalar loss into every reachable Var.grad."""
    if loss.data.size != 1:
        raise ValueError("backward expects a scalar loss")
    order = []
    seen = set()

    def visit(v):
        stack = [(v, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node.parents:
                stack.append((parent, False))

    visit(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and not node.parents:
            node.grad = g if node.grad is None else node.grad + g
        for parent, vjp in node.parents:
            pg = vjp(g)
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg


def zero_grads(params):
    for v in params.values():
        v.grad = None


class Adam:
    """Adam with bias correction over a named parameter dict."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("NaN in gradients")
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_dict(self):
        return {
            "t": self.t,
            "m": {k: v.tolist() for k, v in self.m.items()},
            "v": {k: v.tolist() for k, v in self.v.items()},
        }

    def load_state_dict(self, state):
        self.t = state["t"]
        self.m = {k: np.asarray(v, dtype=np.float64) for k, v in state["m"].items()}
        self.v = {k: np.asarray(v, dtype=np.float64) for k, v in state["v"].items()}


def uniform_init(rng, shape):
    """Uniform fan-in scaled initialization."""
    fan_in = shape[-1] if len(shape) > 1 else shape[0]
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def grad_check(f, params, eps=1e-5, dead_zone=1e-7):
    """Max relative error between tape gradients and central differences.

    f maps the named parameter dict to a scalar Var.  Inputs should be nudged
    away from non-differentiable points (relu kinks, max-pool ties) by the
    caller; central differences straddle them otherwise.  Coordinates where
    both gradients are below dead_zone are skipped: there the central
    difference is pure cancellation noise (loss eval noise / 2 eps), not
    signal.
    """
    for v in params.values():
        v.grad = None
    loss = f(params)
    backward(loss)
    worst = 0.0
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f(params).data)
            flat[i] = orig - eps
            lo = float(f(params).data)
            flat[i] = orig
            fd = (hi - lo) / (2 * eps)
            bp = analytic.reshape(-1)[i]
            if abs(fd) < dead_zone and abs(bp) < dead_zone:
                continue
            err = abs(fd - bp) / max(1e-8, abs(fd) + abs(bp))
            worst = max(worst, err)
    return worst


CHECKPOINT_VERSION = 1


def save_checkpoint(path, params, optimizer=None, extra=None):
    """Write parameters (and optionally optimizer state) as versioned JSON.

    Floats are serialized via repr, which round-trips IEEE doubles exactly.
    """
    blob = {
        "version": CHECKPOINT_VERSION,
        "params": {k: {"shape": list(v.shape), "data": v.data.reshape(-1).tolist()}
                   for k, v in params.items()},
    }
    if optimizer is not None:
        blob["optimizer"] = optimizer.state_dict()
    if extra is not None:
        blob["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blob, fh)


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('version')}")
    params = {}
    for k, spec in blob["params"].items():
        arr = np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
        params[k] = param(arr)
    return params, blob.get("optimizer"), blob.get("extra")
