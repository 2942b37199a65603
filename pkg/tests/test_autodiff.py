"""Derivative engine checks against finite-difference and closed-form oracles."""

import numpy as np
import pytest

import hiddenterms.autodiff as ad
from hiddenterms import (ConfigError, NumericsError, UnsupportedOrderError,
                         init_glorot, jet_eval)
from hiddenterms.neural import forward

FD_STEP = 1e-4


def central_d1(f, x, axis, h=FD_STEP):
    e = np.zeros_like(x)
    e[axis] = h
    return (f(x + e) - f(x - e)) / (2 * h)


def central_d2(f, x, ax1, ax2, h=FD_STEP):
    if ax1 == ax2:
        e = np.zeros_like(x)
        e[ax1] = h
        return (f(x + e) - 2 * f(x) + f(x - e)) / h ** 2
    e1 = np.zeros_like(x)
    e2 = np.zeros_like(x)
    e1[ax1] = h
    e2[ax2] = h
    return (f(x + e1 + e2) - f(x + e1 - e2) - f(x - e1 + e2)
            + f(x - e1 - e2)) / (4 * h * h)


def jet_tol(analytic):
    return 1e-5 * (1.0 + abs(analytic))


# ---------------------------------------------------------------------------
# jet_eval
# ---------------------------------------------------------------------------


def test_bilinear_product_rule():
    # u(x, t) = x * t as a closed-form jet composition at (2, 3)
    tape = ad.Tape()
    x = tape.leaf(np.asarray(2.0), name="x", param=True)
    t = tape.leaf(np.asarray(3.0), name="t", param=True)
    u = ad.mul(x, t)
    assert float(u.value) == 6.0
    grads = ad.param_grad(tape, u)
    assert float(grads["x"]) == 3.0
    assert float(grads["t"]) == 2.0
    # second partial in x of x*t vanishes: d/dx of the x-gradient (t) is 0
    tape2 = ad.Tape()
    x2 = tape2.leaf(np.asarray(2.0), name="x", param=True)
    t2 = tape2.leaf(np.asarray(3.0))
    tape2.backward(ad.mul(x2, t2))
    assert float(x2.grad) == 3.0  # independent of x => d2/dx2 = 0


def test_zero_weight_network_constant_jet():
    net = init_glorot([2, 8, 3], seed=0)
    for w in net.weights:
        w[:] = 0.0
    net.biases[-1][:] = [1.5, -2.0, 0.25]
    jets = jet_eval(net, [0.7, -0.3])
    for jet, bias in zip(jets, net.biases[-1]):
        assert jet.value == bias
        assert np.all(jet.d1 == 0.0)
        assert np.all(jet.d2 == 0.0)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_random_tanh_network_matches_finite_differences(seed):
    net = init_glorot([2, 16, 1], seed=seed)
    x0 = np.array([0.3, 0.7])
    jet = jet_eval(net, x0)[0]

    def f(x):
        return float(forward(net, x)[0])

    assert jet.value == pytest.approx(f(x0), abs=1e-12)
    for axis in (0, 1):
        fd = central_d1(f, x0, axis)
        assert abs(jet.d1[axis] - fd) <= jet_tol(jet.d1[axis])
    for a1 in (0, 1):
        for a2 in (0, 1):
            fd = central_d2(f, x0, a1, a2)
            assert abs(jet.d2[a1, a2] - fd) <= jet_tol(jet.d2[a1, a2])


def test_second_derivatives_symmetric():
    for seed in range(5):
        net = init_glorot([3, 12, 2], seed=seed)
        for jet in jet_eval(net, [0.1, -0.4, 0.9]):
            assert np.array_equal(jet.d2, jet.d2.T)


def test_jet_eval_rejects_bad_inputs():
    net = init_glorot([2, 4, 1], seed=0)
    with pytest.raises(ConfigError):
        jet_eval(net, [1.0, 2.0, 3.0])
    with pytest.raises(UnsupportedOrderError):
        jet_eval(net, [1.0, 2.0], order=3)


def test_normalized_network_jets_match_finite_differences():
    net = init_glorot([2, 10, 1], seed=4, input_shift=np.array([1.0, 0.5]),
                      input_scale=np.array([2.0, 3.0]))
    x0 = np.array([0.8, 1.4])
    jet = jet_eval(net, x0)[0]

    def f(x):
        return float(forward(net, x)[0])

    for axis in (0, 1):
        assert abs(jet.d1[axis] - central_d1(f, x0, axis)) <= jet_tol(jet.d1[axis])
    assert abs(jet.d2[0, 0] - central_d2(f, x0, 0, 0)) <= jet_tol(jet.d2[0, 0])


# ---------------------------------------------------------------------------
# param_grad
# ---------------------------------------------------------------------------


def build_quadratic_loss(tape, net, point, target):
    tnet = ad.mlp_params(tape, net, "U")
    pred = ad.mlp_value(tape, tnet, point)
    diff = pred - tape.constant(target)
    return ad.sum_all(ad.square(diff))


def test_param_grad_linear_network_closed_form():
    # loss = (w*p - c)^2 for a single linear layer: d/dw = 2(w*p - c)*p
    net = init_glorot([1, 1], seed=0)
    net.weights[0][:] = 0.7
    net.biases[0][:] = 0.0
    p, c = 1.3, 2.0
    tape = ad.Tape()
    loss = build_quadratic_loss(tape, net, np.array([[p]]), np.array([[c]]))
    grads = ad.param_grad(tape, loss)
    expected = 2.0 * (0.7 * p - c) * p
    assert grads["U.W0"][0, 0] == pytest.approx(expected, rel=1e-12)


def flat_grads(grads, prefix, n_layers):
    return np.concatenate([grads[f"{prefix}.{kind}{l}"].ravel()
                           for l in range(n_layers) for kind in ("W", "b")])


def fd_param_grads(net, loss_fn, h=1e-6):
    flat0 = net.flat_params()
    out = np.zeros_like(flat0)
    for i in range(flat0.size):
        fp = flat0.copy()
        fp[i] += h
        net.set_flat_params(fp)
        lp = loss_fn()
        fp[i] -= 2 * h
        net.set_flat_params(fp)
        lm = loss_fn()
        out[i] = (lp - lm) / (2 * h)
    net.set_flat_params(flat0)
    return out


def test_param_grad_through_time_derivative():
    # loss = mean (U_t)^2 for a one-hidden-unit tanh network
    net = init_glorot([1, 1, 1], seed=2)
    pts = np.array([[0.2], [0.9], [1.7]])
    spec = ad.JetSpec(1, (0,), ())

    def build(tape):
        tnet = ad.mlp_params(tape, net, "U")
        jet = ad.mlp_jet(tape, tnet, pts, spec)
        ut = ad.channel(jet, 1)
        return ad.sum_all(ad.square(ut)) / pts.shape[0]

    tape = ad.Tape()
    grads = ad.param_grad(tape, build(tape))
    analytic = flat_grads(grads, "U", 2)
    fd = fd_param_grads(net, lambda: float(build(ad.Tape()).value))
    assert np.max(np.abs(analytic - fd) / (1 + np.abs(analytic))) < 1e-5


def test_param_grad_full_burgers_residual_matches_fd():
    # residual nu*u_xx + F(u, u_x, u_t) - u_t at a single collocation point
    from hiddenterms import viscous_burgers
    from hiddenterms.trainer import _loss_pinn_node

    system = viscous_burgers(nu=0.05)
    u_net = init_glorot([2, 4, 1], seed=5)
    f_net = init_glorot([3, 3, 1], seed=6)
    point = np.array([[0.3, 0.4]])

    def build(tape):
        u_tnet = ad.mlp_params(tape, u_net, "U")
        f_tnet = ad.mlp_params(tape, f_net, "F")
        loss, _ = _loss_pinn_node(tape, system, u_tnet, f_tnet, point, None)
        return loss

    tape = ad.Tape()
    grads = ad.param_grad(tape, build(tape))
    for net, prefix in ((u_net, "U"), (f_net, "F")):
        analytic = flat_grads(grads, prefix, 2)
        fd = fd_param_grads(net, lambda: float(build(ad.Tape()).value))
        rel = np.max(np.abs(analytic - fd) / (1 + np.abs(analytic)))
        assert rel < 1e-4, f"{prefix}: {rel}"


def test_param_grad_linearity():
    net = init_glorot([2, 5, 1], seed=7)
    pts = np.random.default_rng(0).normal(size=(4, 2))
    t1 = np.ones((4, 1))
    t2 = np.full((4, 1), 0.5)

    def grads_for(targets):
        tape = ad.Tape()
        loss = build_quadratic_loss(tape, net, pts, targets)
        return flat_grads(ad.param_grad(tape, loss), "U", 2)

    def grads_sum():
        tape = ad.Tape()
        tnet = ad.mlp_params(tape, net, "U")
        pred = ad.mlp_value(tape, tnet, pts)
        l1 = ad.sum_all(ad.square(pred - tape.constant(t1)))
        l2 = ad.sum_all(ad.square(pred - tape.constant(t2)))
        return flat_grads(ad.param_grad(tape, l1 + l2), "U", 2)

    np.testing.assert_allclose(grads_sum(), grads_for(t1) + grads_for(t2),
                               rtol=1e-12, atol=1e-14)


def test_param_grad_reports_nonfinite_node():
    tape = ad.Tape()
    x = tape.leaf(np.asarray(2.0), name="x", param=True)
    bad = ad.div(x, tape.constant(0.0))
    loss = ad.mul(bad, bad)
    with pytest.raises(NumericsError) as err:
        ad.param_grad(tape, loss)
    assert "div" in str(err.value)


def test_param_grad_requires_scalar():
    tape = ad.Tape()
    x = tape.leaf(np.ones(3), param=True, name="x")
    with pytest.raises(ConfigError):
        ad.param_grad(tape, ad.square(x))


# ---------------------------------------------------------------------------
# Tape invariants
# ---------------------------------------------------------------------------


def make_mixed_tape(pool=None):
    tape = ad.Tape(pool=pool)
    net = init_glorot([2, 6, 2], seed=11)
    tnet = ad.mlp_params(tape, net, "N")
    pts = np.random.default_rng(3).normal(size=(5, 2))
    spec = ad.JetSpec(2, (0, 1), ((0, 0), (0, 1), (1, 1)))
    jet = ad.mlp_jet(tape, tnet, pts, spec)
    a = ad.channel(jet, 0)
    b = ad.channel(jet, spec.d2_channel(0, 1))
    c = ad.column(a, 1)
    d = ad.hstack([c, ad.column(b, 0)])
    e = ad.div(d, ad.add_const(ad.square(d), 1.0))
    loss = ad.mean_all(e) + ad.sum_all(ad.square(b)) / 5.0
    return tape, loss


def test_replay_reproduces_values_bit_identically():
    tape, _ = make_mixed_tape()
    for replayed, node in zip(tape.replay_values(), tape.nodes):
        assert np.array_equal(replayed, node.value)


def test_reverse_sweep_visits_each_node_once():
    tape, loss = make_mixed_tape()
    counts = {}
    original = dict(ad._VJP)

    def wrap(name, fn):
        def counted(node, g):
            counts[id(node)] = counts.get(id(node), 0) + 1
            return fn(node, g)
        return counted

    try:
        for name, fn in original.items():
            ad._VJP[name] = wrap(name, fn)
        tape.backward(loss)
    finally:
        ad._VJP.update(original)
    assert counts and all(v == 1 for v in counts.values())


def test_gradients_deterministic_bit_identical():
    def run():
        tape, loss = make_mixed_tape()
        return ad.param_grad(tape, loss)

    g1, g2 = run(), run()
    for key in g1:
        assert np.array_equal(g1[key], g2[key])


def test_pool_recycling_changes_nothing():
    pool = ad.ArrayPool()
    tape1, loss1 = make_mixed_tape(pool=pool)
    tape1.backward(loss1)
    ref = {p.name: p.grad.copy() for p in tape1.params()}
    tape1.recycle()
    # second pass reuses the pooled buffers
    tape2, loss2 = make_mixed_tape(pool=pool)
    tape2.backward(loss2)
    for p in tape2.params():
        assert np.array_equal(p.grad, ref[p.name])


# ---------------------------------------------------------------------------
# Per-primitive VJP checks against finite differences
# ---------------------------------------------------------------------------


def _vjp_case(build, x0):
    """max rel error between analytic and FD gradient of sum(op(x))."""
    def scalar(x):
        tape = ad.Tape()
        leaf = tape.leaf(x, name="x", param=True)
        return tape, ad.sum_all(build(tape, leaf))

    tape, loss = scalar(x0)
    g = ad.param_grad(tape, loss)["x"]
    fd = np.zeros_like(x0)
    h = 1e-6
    for idx in np.ndindex(x0.shape):
        xp = x0.copy()
        xp[idx] += h
        lp = float(scalar(xp)[1].value)
        xp[idx] -= 2 * h
        lm = float(scalar(xp)[1].value)
        fd[idx] = (lp - lm) / (2 * h)
    return np.max(np.abs(g - fd) / (1 + np.abs(g)))


@pytest.mark.parametrize("name,build", [
    ("add", lambda t, x: ad.add(x, ad.square(x))),
    ("sub", lambda t, x: ad.sub(ad.square(x), x)),
    ("mul", lambda t, x: ad.mul(x, ad.add_const(x, 2.0))),
    ("div", lambda t, x: ad.div(x, ad.add_const(ad.square(x), 1.0))),
    ("neg", lambda t, x: ad.neg(ad.square(x))),
    ("add_const", lambda t, x: ad.add_const(ad.square(x), 3.0)),
    ("mul_const", lambda t, x: ad.mul_const(ad.square(x), -1.7)),
    ("div_const", lambda t, x: ad.div_const(ad.square(x), 4.0)),
    ("tanh", lambda t, x: ad.tanh(x)),
    ("square", lambda t, x: ad.square(ad.tanh(x))),
    ("column", lambda t, x: ad.square(ad.column(x, 1))),
    ("hstack", lambda t, x: ad.square(ad.hstack([ad.column(x, 0),
                                                 ad.column(x, 2)]))),
    ("mean_all", lambda t, x: ad.square(ad.add_const(ad.mean_all(x), 1.0))),
])
def test_primitive_vjp_matches_fd(name, build):
    x0 = np.random.default_rng(17).uniform(0.2, 1.0, size=(3, 3))
    assert _vjp_case(build, x0) < 1e-6, name


def test_affine_vjp_matches_fd():
    rng = np.random.default_rng(5)
    x0 = rng.normal(size=(4, 3))
    w0 = rng.normal(size=(3, 2))
    b0 = rng.normal(size=(2,))

    def build(x, w, b):
        tape = ad.Tape()
        xn = tape.leaf(x, name="x", param=True)
        wn = tape.leaf(w, name="w", param=True)
        bn = tape.leaf(b, name="b", param=True)
        return tape, ad.sum_all(ad.square(ad.affine(xn, wn, bn)))

    tape, loss = build(x0, w0, b0)
    grads = ad.param_grad(tape, loss)
    h = 1e-6
    for name, arr in (("x", x0), ("w", w0), ("b", b0)):
        fd = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            for sign in (1, -1):
                bumped = {"x": x0.copy(), "w": w0.copy(), "b": b0.copy()}
                bumped[name][idx] += sign * h
                val = float(build(**bumped)[1].value)
                fd[idx] += sign * val / (2 * h)
        rel = np.max(np.abs(grads[name] - fd) / (1 + np.abs(grads[name])))
        assert rel < 1e-6, name


def test_shape_mismatch_raises():
    tape = ad.Tape()
    a = tape.leaf(np.ones((2, 3)))
    b = tape.leaf(np.ones((3, 2)))
    with pytest.raises(ConfigError):
        ad.add(a, b)
    with pytest.raises(ConfigError):
        ad.affine(a, tape.leaf(np.ones((5, 2))), tape.leaf(np.ones(2)))
