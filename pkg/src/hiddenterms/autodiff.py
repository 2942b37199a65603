"""Tape-based automatic differentiation with second-order input jets.

Two derivative paths are combined:

* forward-mode "jets" carry the value of a network output together with its
  first and second partials w.r.t. tagged input coordinates (time, space),
  propagated layer by layer in batched form;
* a recorded operation tape is swept in reverse to obtain gradients w.r.t.
  every network parameter, including the contributions that flow through the
  input-derivative channels.

All arithmetic is float64. The tape records enough to replay the forward
pass bit-identically, and the reverse sweep visits nodes exactly once in
reverse construction order (construction order is topological). Training
loops rebuild the tape every iteration; an optional ArrayPool recycles the
intermediate buffers between iterations, which keeps the hot loop free of
large allocations.
"""

from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericsError, UnsupportedOrderError
from .neural import Mlp


# ---------------------------------------------------------------------------
# Jet layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JetSpec:
    """Channel layout of a batched jet array.

    A jet array has shape (n_channels, n_points, width): channel 0 holds
    values, then one channel per tagged input axis (first partials), then one
    channel per requested second-order pair (i <= j, both tagged).
    """

    dim: int
    tags: tuple = ()
    pairs: tuple = ()

    def __post_init__(self):
        for a in self.tags:
            if not 0 <= a < self.dim:
                raise ConfigError(f"tagged axis {a} outside input dimension {self.dim}")
        for (i, j) in self.pairs:
            if i > j:
                raise ConfigError(f"second-order pair {(i, j)} must be ordered i <= j")
            if i not in self.tags or j not in self.tags:
                raise ConfigError(f"second-order pair {(i, j)} uses an untagged axis")

    @property
    def n_channels(self):
        return 1 + len(self.tags) + len(self.pairs)

    def d1_channel(self, axis):
        return 1 + self.tags.index(axis)

    def d2_channel(self, i, j):
        key = (i, j) if i <= j else (j, i)
        return 1 + len(self.tags) + self.pairs.index(key)


def full_spec(dim, order=2):
    """JetSpec tagging every axis, with all second-order pairs when order==2."""
    if order not in (0, 1, 2):
        raise UnsupportedOrderError(f"derivative order {order} not supported (max 2)")
    tags = tuple(range(dim)) if order >= 1 else ()
    pairs = tuple((i, j) for i in range(dim) for j in range(i, dim)) if order == 2 else ()
    return JetSpec(dim, tags, pairs)


# ---------------------------------------------------------------------------
# Array pool
# ---------------------------------------------------------------------------


class ArrayPool:
    """Free-list of float64 scratch arrays keyed by shape.

    Buffers handed out are uninitialized; every op writes its full output.
    """

    def __init__(self):
        self._free = {}

    def get(self, shape):
        bucket = self._free.get(shape)
        if bucket:
            return bucket.pop()
        return np.empty(shape)

    def put(self, arr):
        self._free.setdefault(arr.shape, []).append(arr)


def _alloc(pool, shape):
    return pool.get(shape) if pool is not None else np.empty(shape)


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------


class Node:
    """One recorded value in the computation; leaves carry parameters/inputs."""

    __slots__ = ("tape", "op", "parents", "value", "extras", "name", "param",
                 "grad", "grad_shared")

    def __init__(self, tape, op, parents, value, extras=None, name=None, param=False):
        self.tape = tape
        self.op = op
        self.parents = parents
        self.value = value
        self.extras = extras
        self.name = name
        self.param = param
        self.grad = None
        self.grad_shared = False

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        nm = f" {self.name!r}" if self.name else ""
        return f"<Node {self.op}{nm} shape={self.value.shape}>"

    # Operator sugar; the right operand may be a Node, a float, or an ndarray
    # constant (constants are folded into the op, they get no gradient).
    def __add__(self, other):
        if isinstance(other, Node):
            return add(self, other)
        return add_const(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Node):
            return sub(self, other)
        return add_const(self, -np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        return add_const(neg(self), other)

    def __mul__(self, other):
        if isinstance(other, Node):
            return mul(self, other)
        return mul_const(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Node):
            return div(self, other)
        return div_const(self, other)

    def __neg__(self):
        return neg(self)


class Tape:
    """Recorded operation sequence with named parameter slots.

    Replaying the tape reproduces every recorded value bit-identically
    (`replay_values`); `backward` performs one reverse sweep in reverse
    construction order, accumulating adjoints deterministically.
    """

    def __init__(self, check_finite=False, pool=None):
        self.nodes = []
        self.check_finite = check_finite
        self.pool = pool

    def leaf(self, value, name=None, param=False):
        value = np.asarray(value, dtype=np.float64)
        node = Node(self, "leaf", (), value, name=name, param=param)
        self.nodes.append(node)
        return node

    def constant(self, value):
        return self.leaf(value)

    def record(self, op, parents, extras=None):
        fwd = _FORWARD[op]
        value = fwd([p.value for p in parents], extras, self.pool)
        node = Node(self, op, tuple(parents), value, extras=extras)
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NumericsError(
                f"non-finite value produced by op '{op}'",
                op=op, node_index=len(self.nodes))
        self.nodes.append(node)
        return node

    def params(self):
        return [n for n in self.nodes if n.param]

    def replay_values(self):
        """Recompute every node's value from the leaves; used to verify the tape."""
        computed = {}
        out = []
        for node in self.nodes:
            if node.op == "leaf":
                val = node.value
            else:
                val = _FORWARD[node.op]([computed[id(p)] for p in node.parents],
                                        node.extras, None)
            computed[id(node)] = val
            out.append(val)
        return out

    def backward(self, root):
        """Reverse sweep from a scalar root; fills `.grad` on reached nodes."""
        if root.value.shape != ():
            raise ConfigError("backward root must be scalar")
        pool = self.pool
        for n in self.nodes:
            n.grad = None
            n.grad_shared = False
        root.grad = np.asarray(1.0)
        for node in reversed(self.nodes):
            g = node.grad
            if g is None or node.op == "leaf":
                continue
            pgrads = _VJP[node.op](node, g)
            for parent, pg in zip(node.parents, pgrads):
                if pg is None:
                    continue
                if parent.grad is None:
                    # May alias an upstream buffer; copy before mutating.
                    parent.grad = pg
                    parent.grad_shared = True
                elif parent.grad_shared:
                    fresh = _alloc(pool, parent.grad.shape)
                    np.add(parent.grad, pg, out=fresh)
                    parent.grad = fresh
                    parent.grad_shared = False
                else:
                    parent.grad += pg

    def recycle(self):
        """Return intermediate value and gradient buffers to the pool.

        Call only when the tape (and everything referencing its arrays) is
        done; leaf values are external and are never pooled.
        """
        if self.pool is None:
            return
        seen = set()
        for node in self.nodes:
            if node.op != "leaf" and id(node.value) not in seen:
                seen.add(id(node.value))
                self.pool.put(node.value)
            g = node.grad
            if g is not None and not node.grad_shared and g.shape != () \
                    and id(g) not in seen:
                seen.add(id(g))
                self.pool.put(g)
            node.grad = None


# ---------------------------------------------------------------------------
# Primitive ops: forward functions (pure, replayable) and VJPs
# ---------------------------------------------------------------------------

_FORWARD = {}
_VJP = {}


def _op(name, forward, vjp):
    _FORWARD[name] = forward
    _VJP[name] = vjp


def _same_tape(*nodes):
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not tape:
            raise ConfigError("operands recorded on different tapes")
    return tape


def _pool_of(node):
    return node.tape.pool


def _ufunc_fwd(ufunc):
    def fwd(vals, extras, pool):
        out = _alloc(pool, np.broadcast_shapes(*[v.shape for v in vals]))
        return ufunc(*vals, out=out)
    return fwd


def _binary(name, a, b):
    if a.value.shape != b.value.shape and a.value.shape != () and b.value.shape != ():
        raise ConfigError(
            f"{name} shape mismatch {a.value.shape} vs {b.value.shape}")
    return _same_tape(a, b).record(name, (a, b))


def add(a, b):
    return _binary("add", a, b)


_op("add", _ufunc_fwd(np.add), lambda node, g: (g, g))


def sub(a, b):
    return _binary("sub", a, b)


def _sub_vjp(node, g):
    out = _alloc(_pool_of(node), g.shape)
    np.negative(g, out=out)
    return (g, out)


_op("sub", _ufunc_fwd(np.subtract), _sub_vjp)


def mul(a, b):
    return _binary("mul", a, b)


def _mul_vjp(node, g):
    a, b = node.parents
    pool = _pool_of(node)
    if a.value.shape == () and g.shape != ():
        ga = np.asarray(np.sum(g * b.value))
    else:
        ga = _alloc(pool, g.shape)
        np.multiply(g, b.value, out=ga)
    if b.value.shape == () and g.shape != ():
        gb = np.asarray(np.sum(g * a.value))
    else:
        gb = _alloc(pool, g.shape)
        np.multiply(g, a.value, out=gb)
    return (ga, gb)


_op("mul", _ufunc_fwd(np.multiply), _mul_vjp)


def div(a, b):
    return _binary("div", a, b)


def _div_vjp(node, g):
    a, b = node.parents
    pool = _pool_of(node)
    ga = _alloc(pool, g.shape)
    np.divide(g, b.value, out=ga)
    if b.value.shape == () and g.shape != ():
        gb = np.asarray(-np.sum(g * node.value / b.value))
    else:
        gb = _alloc(pool, g.shape)
        np.multiply(g, node.value, out=gb)
        gb /= b.value
        np.negative(gb, out=gb)
    return (ga, gb)


_op("div", _ufunc_fwd(np.divide), _div_vjp)


def neg(a):
    return a.tape.record("neg", (a,))


def _neg_vjp(node, g):
    out = _alloc(_pool_of(node), g.shape)
    np.negative(g, out=out)
    return (out,)


_op("neg", _ufunc_fwd(np.negative), _neg_vjp)


def add_const(a, c):
    return a.tape.record("add_const", (a,), np.asarray(c, dtype=np.float64))


def _add_const_fwd(vals, extras, pool):
    out = _alloc(pool, np.broadcast_shapes(vals[0].shape, extras.shape))
    return np.add(vals[0], extras, out=out)


_op("add_const", _add_const_fwd, lambda node, g: (g,))


def mul_const(a, c):
    return a.tape.record("mul_const", (a,), np.asarray(c, dtype=np.float64))


def _mul_const_fwd(vals, extras, pool):
    out = _alloc(pool, np.broadcast_shapes(vals[0].shape, extras.shape))
    return np.multiply(vals[0], extras, out=out)


def _mul_const_vjp(node, g):
    if node.parents[0].value.shape == () and g.shape != ():
        return (np.asarray(np.sum(g * node.extras)),)
    out = _alloc(_pool_of(node), g.shape)
    np.multiply(g, node.extras, out=out)
    return (out,)


_op("mul_const", _mul_const_fwd, _mul_const_vjp)


def div_const(a, c):
    return a.tape.record("div_const", (a,), np.asarray(c, dtype=np.float64))


def _div_const_fwd(vals, extras, pool):
    out = _alloc(pool, np.broadcast_shapes(vals[0].shape, extras.shape))
    return np.divide(vals[0], extras, out=out)


def _div_const_vjp(node, g):
    out = _alloc(_pool_of(node), g.shape)
    np.divide(g, node.extras, out=out)
    return (out,)


_op("div_const", _div_const_fwd, _div_const_vjp)


def square(a):
    return a.tape.record("square", (a,))


def _square_fwd(vals, extras, pool):
    out = _alloc(pool, vals[0].shape)
    return np.multiply(vals[0], vals[0], out=out)


def _square_vjp(node, g):
    out = _alloc(_pool_of(node), g.shape)
    np.multiply(node.parents[0].value, g, out=out)
    out *= 2.0
    return (out,)


_op("square", _square_fwd, _square_vjp)


def tanh(a):
    return a.tape.record("tanh", (a,))


def _tanh_fwd(vals, extras, pool):
    out = _alloc(pool, vals[0].shape)
    return np.tanh(vals[0], out=out)


def _tanh_vjp(node, g):
    out = _alloc(_pool_of(node), g.shape)
    np.multiply(node.value, node.value, out=out)
    np.subtract(1.0, out, out=out)
    out *= g
    return (out,)


_op("tanh", _tanh_fwd, _tanh_vjp)


def affine(x, w, b):
    """x @ w + b for a batch of rows."""
    if x.value.shape[-1] != w.value.shape[0]:
        raise ConfigError(
            f"affine width mismatch: input {x.value.shape} vs weight {w.value.shape}")
    return _same_tape(x, w, b).record("affine", (x, w, b))


def _affine_fwd(vals, extras, pool):
    x, w, b = vals
    out = _alloc(pool, (x.shape[0], w.shape[1]))
    np.matmul(x, w, out=out)
    out += b
    return out


def _affine_vjp(node, g):
    x, w, _ = (p.value for p in node.parents)
    pool = _pool_of(node)
    dx = _alloc(pool, x.shape)
    np.matmul(g, w.T, out=dx)
    dw = _alloc(pool, w.shape)
    np.matmul(x.T, g, out=dw)
    return (dx, dw, g.sum(axis=0))


_op("affine", _affine_fwd, _affine_vjp)


def column(x, j):
    """Select column j as an (n, 1) array."""
    return x.tape.record("column", (x,), int(j))


def _column_fwd(vals, extras, pool):
    out = _alloc(pool, (vals[0].shape[0], 1))
    out[:, 0] = vals[0][:, extras]
    return out


def _column_vjp(node, g):
    z = _alloc(_pool_of(node), node.parents[0].value.shape)
    z.fill(0.0)
    z[:, node.extras:node.extras + 1] = g
    return (z,)


_op("column", _column_fwd, _column_vjp)


def channel(jet, idx):
    """Select jet channel idx as an (n, width) array."""
    return jet.tape.record("channel", (jet,), int(idx))


def _channel_fwd(vals, extras, pool):
    out = _alloc(pool, vals[0].shape[1:])
    np.copyto(out, vals[0][extras])
    return out


def _channel_vjp(node, g):
    z = _alloc(_pool_of(node), node.parents[0].value.shape)
    z.fill(0.0)
    z[node.extras] = g
    return (z,)


_op("channel", _channel_fwd, _channel_vjp)


def hstack(parts):
    parts = list(parts)
    widths = tuple(p.value.shape[1] for p in parts)
    return _same_tape(*parts).record("hstack", tuple(parts), widths)


def _hstack_fwd(vals, extras, pool):
    out = _alloc(pool, (vals[0].shape[0], sum(extras)))
    start = 0
    for v, w in zip(vals, extras):
        out[:, start:start + w] = v
        start += w
    return out


def _hstack_vjp(node, g):
    pool = _pool_of(node)
    grads = []
    start = 0
    for w in node.extras:
        piece = _alloc(pool, (g.shape[0], w))
        np.copyto(piece, g[:, start:start + w])
        grads.append(piece)
        start += w
    return tuple(grads)


_op("hstack", _hstack_fwd, _hstack_vjp)


def sum_all(a):
    return a.tape.record("sum_all", (a,))


_op("sum_all", lambda v, e, pool: np.asarray(np.sum(v[0])),
    lambda node, g: (np.broadcast_to(g, node.parents[0].value.shape),))


def mean_all(a):
    return a.tape.record("mean_all", (a,))


_op("mean_all", lambda v, e, pool: np.asarray(np.mean(v[0])),
    lambda node, g: (np.broadcast_to(g / node.parents[0].value.size,
                                     node.parents[0].value.shape),))


# --- fused jet ops ---------------------------------------------------------


def affine_jet(jet, w, b):
    """Affine layer applied to a (C, n, in) jet; bias only reaches channel 0."""
    if jet.value.shape[-1] != w.value.shape[0]:
        raise ConfigError(
            f"affine_jet width mismatch: jet {jet.value.shape} vs weight {w.value.shape}")
    return _same_tape(jet, w, b).record("affine_jet", (jet, w, b))


def _affine_jet_fwd(vals, extras, pool):
    j, w, b = vals
    c, n, din = j.shape
    out = _alloc(pool, (c, n, w.shape[1]))
    np.matmul(j.reshape(c * n, din), w, out=out.reshape(c * n, w.shape[1]))
    out[0] += b
    return out


def _affine_jet_vjp(node, g):
    j, w, _ = (p.value for p in node.parents)
    pool = _pool_of(node)
    c, n, din = j.shape
    dout = g.shape[-1]
    g2 = g.reshape(c * n, dout)
    dj = _alloc(pool, j.shape)
    np.matmul(g2, w.T, out=dj.reshape(c * n, din))
    dw = _alloc(pool, w.shape)
    np.matmul(j.reshape(c * n, din).T, g2, out=dw)
    return (dj, dw, g[0].sum(axis=0))


_op("affine_jet", _affine_jet_fwd, _affine_jet_vjp)


def tanh_jet(jet, spec):
    """tanh nonlinearity propagated through value/first/second jet channels."""
    return jet.tape.record("tanh_jet", (jet,), spec)


def _tanh_jet_fwd(vals, spec, pool):
    a = vals[0]
    out = _alloc(pool, a.shape)
    s = np.tanh(a[0], out=out[0])
    p = _alloc(pool, s.shape)
    np.multiply(s, s, out=p)
    np.subtract(1.0, p, out=p)
    nt = len(spec.tags)
    for k in range(nt):
        np.multiply(p, a[1 + k], out=out[1 + k])
    if spec.pairs:
        q = _alloc(pool, s.shape)
        np.multiply(s, p, out=q)
        q *= -2.0
        tmp = _alloc(pool, s.shape)
        for m, (i, j) in enumerate(spec.pairs):
            ci = spec.d1_channel(i)
            cj = spec.d1_channel(j)
            cm = 1 + nt + m
            np.multiply(a[ci], a[cj], out=tmp)
            tmp *= q
            np.multiply(p, a[cm], out=out[cm])
            out[cm] += tmp
        if pool is not None:
            pool.put(q)
            pool.put(tmp)
    if pool is not None:
        pool.put(p)
    return out


def _tanh_jet_vjp(node, g):
    spec = node.extras
    a = node.parents[0].value
    s = node.value[0]
    pool = _pool_of(node)
    p = _alloc(pool, s.shape)
    np.multiply(s, s, out=p)
    np.subtract(1.0, p, out=p)
    nt = len(spec.tags)
    da = _alloc(pool, a.shape)
    dv = np.multiply(g[0], p, out=da[0])
    q = tmp = None
    if nt:
        q = _alloc(pool, s.shape)
        np.multiply(s, p, out=q)
        q *= -2.0
        tmp = _alloc(pool, s.shape)
        for k in range(nt):
            np.multiply(g[1 + k], a[1 + k], out=tmp)
            tmp *= q
            dv += tmp
            np.multiply(g[1 + k], p, out=da[1 + k])
    if spec.pairs:
        r = _alloc(pool, s.shape)           # third derivative: 2p(3s^2 - 1)
        np.multiply(s, s, out=r)
        r *= 3.0
        r -= 1.0
        r *= p
        r *= 2.0
        t2 = _alloc(pool, s.shape)
        for m, (i, j) in enumerate(spec.pairs):
            cm = 1 + nt + m
            ci = spec.d1_channel(i)
            cj = spec.d1_channel(j)
            gm = g[cm]
            np.multiply(gm, p, out=da[cm])
            np.multiply(gm, q, out=tmp)
            if ci == cj:
                np.multiply(tmp, a[ci], out=t2)
                t2 *= 2.0
                da[ci] += t2
            else:
                np.multiply(tmp, a[cj], out=t2)
                da[ci] += t2
                np.multiply(tmp, a[ci], out=t2)
                da[cj] += t2
            np.multiply(a[ci], a[cj], out=t2)
            t2 *= r
            t2 += np.multiply(a[cm], q, out=tmp)
            t2 *= gm
            dv += t2
        if pool is not None:
            pool.put(r)
            pool.put(t2)
    if pool is not None:
        pool.put(p)
        if q is not None:
            pool.put(q)
            pool.put(tmp)
    return (da,)


_op("tanh_jet", _tanh_jet_fwd, _tanh_jet_vjp)


# ---------------------------------------------------------------------------
# Network evaluation on the tape
# ---------------------------------------------------------------------------


TapeNet = namedtuple("TapeNet", "layers norm")


def mlp_params(tape, net, prefix):
    """Register a network's weights and biases as named parameter leaves.

    A fixed input normalization, when the network carries one, becomes a
    constant (non-trained) diagonal affine stage.
    """
    layers = []
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        layers.append((tape.leaf(w, name=f"{prefix}.W{l}", param=True),
                       tape.leaf(b, name=f"{prefix}.b{l}", param=True)))
    norm = None
    if net.input_scale is not None:
        inv = 1.0 / net.input_scale
        norm = (tape.leaf(np.diag(inv)), tape.leaf(-net.input_shift * inv))
    return TapeNet(layers, norm)


def mlp_value(tape, tnet, x):
    """Value-only forward pass; `x` is a Node or a constant (n, d) array."""
    if not isinstance(x, Node):
        x = tape.constant(np.asarray(x, dtype=np.float64))
    h = x
    if tnet.norm is not None:
        h = affine(h, *tnet.norm)
    last = len(tnet.layers) - 1
    for l, (w, b) in enumerate(tnet.layers):
        h = affine(h, w, b)
        if l != last:
            h = tanh(h)
    return h


def jet_seed_array(points, spec):
    """Initial jet array for the identity map at `points` (n, dim)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != spec.dim:
        raise ConfigError(
            f"points shape {points.shape} does not match jet dimension {spec.dim}")
    n = points.shape[0]
    seed = np.zeros((spec.n_channels, n, spec.dim))
    seed[0] = points
    for k, axis in enumerate(spec.tags):
        seed[1 + k, :, axis] = 1.0
    return seed


def jet_seed(tape, points, spec):
    return tape.constant(jet_seed_array(points, spec))


def mlp_jet(tape, tnet, points, spec):
    """Jet forward pass of a tanh network; returns a (C, n, out) Node."""
    j = points if isinstance(points, Node) else jet_seed(tape, points, spec)
    if tnet.norm is not None:
        j = affine_jet(j, *tnet.norm)
    last = len(tnet.layers) - 1
    for l, (w, b) in enumerate(tnet.layers):
        j = affine_jet(j, w, b)
        if l != last:
            j = tanh_jet(j, spec)
    return j


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


@dataclass
class Scalar2Jet:
    """Value with first and second partials w.r.t. the tagged input axes."""

    value: float
    d1: np.ndarray   # (n_tags,)
    d2: np.ndarray   # (n_tags, n_tags), symmetric

    def __post_init__(self):
        self.d1 = np.asarray(self.d1, dtype=np.float64)
        self.d2 = np.asarray(self.d2, dtype=np.float64)


def jet_eval(net, x, tags=None, order=2):
    """Evaluate a network at one point with input derivatives up to `order`.

    Returns one Scalar2Jet per network output. `tags` selects which input
    axes carry derivatives (all by default). Orders above 2 are rejected.
    """
    if not isinstance(net, Mlp):
        raise ConfigError("jet_eval expects an Mlp network")
    if order not in (0, 1, 2):
        raise UnsupportedOrderError(f"derivative order {order} not supported (max 2)")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != net.widths[0]:
        raise ConfigError(
            f"input dimension {x.shape[0]} does not match network input width "
            f"{net.widths[0]}")
    dim = x.shape[0]
    if tags is None:
        tags = tuple(range(dim))
    else:
        tags = tuple(tags)
    pairs = tuple((i, j) for i in tags for j in tags if i <= j) if order == 2 else ()
    spec = JetSpec(dim, tags if order >= 1 else (), pairs)

    tape = Tape()
    layers = mlp_params(tape, net, "net")
    out = mlp_jet(tape, layers, x[None, :], spec).value

    k = len(spec.tags)
    jets = []
    for c in range(net.widths[-1]):
        d1 = np.array([out[spec.d1_channel(a), 0, c] for a in spec.tags])
        d2 = np.zeros((k, k))
        if order == 2:
            for ii, i in enumerate(spec.tags):
                for jj, j in enumerate(spec.tags):
                    d2[ii, jj] = out[spec.d2_channel(i, j), 0, c]
        jets.append(Scalar2Jet(float(out[0, 0, c]), d1, d2))
    return jets


def param_grad(tape, loss):
    """Gradient of a scalar loss w.r.t. every parameter leaf on the tape.

    Returns a dict mapping parameter-slot names to gradient arrays; raises
    NumericsError naming the offending node if any forward value is
    non-finite.
    """
    if loss.value.shape != ():
        raise ConfigError("param_grad loss must be scalar-valued")
    for idx, node in enumerate(tape.nodes):
        if not np.all(np.isfinite(node.value)):
            raise NumericsError(
                f"non-finite forward value at node {idx} (op '{node.op}')",
                op=node.op, node_index=idx, name=node.name)
    tape.backward(loss)
    grads = {}
    for p in tape.params():
        grads[p.name] = p.grad if p.grad is not None else np.zeros_like(p.value)
    return grads
