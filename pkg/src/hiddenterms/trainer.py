"""Joint training of the solution surrogate and the hidden-term network.

The total loss is the fixed-order sum of three mean-squared terms:
measurement misfit at the data, boundary residual at boundary collocation
points, and the differential-equation residual (known part plus hidden
network minus the surrogate's time derivative) at interior collocation
points. All three are minimized together with Adam over every participating
network's parameters (plus the shared scale, when one is learned).
"""

import time
from collections import namedtuple
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .dynamics import StateJets, hidden_input_exprs
from .errors import ConfigError, NumericsError
from .neural import Mlp, forward, init_glorot
from .sampling import (CollocationSet, burgers_reference, rk4_integrate,
                       trajectory_states)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    iterations: int = 30000
    weights: tuple = (1.0, 1.0, 1.0)   # (measurement, boundary, residual)
    u_hidden: tuple = (32, 32, 32)
    f_hidden: tuple = (32, 32)
    b_hidden: tuple = (16, 16)
    train_boundary_net: bool = False
    hidden_mode: str = "decoupled"
    normalize_inputs: bool = True
    seed: int = 0
    eval_grid: int = 300
    exclude_band: float = 0.0          # |x| <= band excluded from PDE metrics

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if len(self.weights) != 3 or any(w < 0 for w in self.weights):
            raise ConfigError("weights must be three nonnegative values")


@dataclass
class TrainReport:
    """Loss traces and final evaluation metrics for one training run."""

    trace_measurement: np.ndarray
    trace_boundary: np.ndarray
    trace_pinn: np.ndarray
    hidden_mse: float
    surrogate_mse: float
    elapsed_seconds: float
    seed: int
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "trace_measurement": self.trace_measurement.tolist(),
            "trace_boundary": self.trace_boundary.tolist(),
            "trace_pinn": self.trace_pinn.tolist(),
            "hidden_mse": self.hidden_mse,
            "surrogate_mse": self.surrogate_mse,
            "elapsed_seconds": self.elapsed_seconds,
            "seed": self.seed,
            "config": self.config,
            "extra": self.extra,
        }

    @staticmethod
    def from_dict(d):
        return TrainReport(
            trace_measurement=np.asarray(d["trace_measurement"]),
            trace_boundary=np.asarray(d["trace_boundary"]),
            trace_pinn=np.asarray(d["trace_pinn"]),
            hidden_mse=d["hidden_mse"],
            surrogate_mse=d["surrogate_mse"],
            elapsed_seconds=d["elapsed_seconds"],
            seed=d["seed"],
            config=d.get("config", {}),
            extra=d.get("extra", {}),
        )

    def traces_to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iteration,L_M,L_B,L_P\n")
            for i, (lm, lb, lp) in enumerate(zip(
                    self.trace_measurement, self.trace_boundary, self.trace_pinn)):
                fh.write(f"{i},{lm!r},{lb!r},{lp!r}\n")


TrainResult = namedtuple("TrainResult", "u_net f_net b_net phi report")


# ---------------------------------------------------------------------------
# Loss assembly on the tape
# ---------------------------------------------------------------------------


def _jet_spec(system):
    return ad.JetSpec(system.input_dim, system.jet_tags, system.jet_pairs)


def _state_view(jet_node, system, spec):
    """Per-component value/derivative columns from a (C, n, m) jet node."""
    m = system.state_dim
    val = ad.channel(jet_node, 0)
    vals = [ad.column(val, i) for i in range(m)]
    dt_ch = ad.channel(jet_node, spec.d1_channel(system.time_axis))
    dts = [ad.column(dt_ch, i) for i in range(m)]
    dxs = dxxs = None
    if system.domain.spatial_dim >= 1 and 0 in spec.tags:
        dx_ch = ad.channel(jet_node, spec.d1_channel(0))
        dxs = [ad.column(dx_ch, i) for i in range(m)]
        if (0, 0) in spec.pairs:
            dxx_ch = ad.channel(jet_node, spec.d2_channel(0, 0))
            dxxs = [ad.column(dxx_ch, i) for i in range(m)]
    return StateJets(vals, dx=dxs, dxx=dxxs, dt=dts)


def _residual_nodes(tape, system, u_layers, f_layers, points, phi_node,
                    seed_array=None):
    """DE residual columns at interior collocation points, on the tape."""
    spec = _jet_spec(system)
    if seed_array is None:
        seed_array = ad.jet_seed(tape, points, spec)
    else:
        seed_array = tape.constant(seed_array)
    jet = ad.mlp_jet(tape, u_layers, seed_array, spec)
    view = _state_view(jet, system, spec)

    f_in = ad.hstack(hidden_input_exprs(view, system.hidden_inputs))
    f_out = ad.mlp_value(tape, f_layers, f_in)
    f_cols = [ad.column(f_out, j) for j in range(system.f_arity)]
    contrib = system.hidden_apply(f_cols, phi_node)
    known = system.n_k(view)
    return [known[i] + contrib[i] - view.u_t(i) for i in range(system.state_dim)]


def _loss_pinn_node(tape, system, u_layers, f_layers, points, phi_node,
                    seed_array=None):
    resid = _residual_nodes(tape, system, u_layers, f_layers, points, phi_node,
                            seed_array)
    stacked = ad.hstack(resid) if len(resid) > 1 else resid[0]
    return ad.sum_all(ad.square(stacked)) / points.shape[0], stacked


def _loss_data_node(tape, u_layers, inputs, targets):
    pred = ad.mlp_value(tape, u_layers, inputs)
    diff = pred - tape.constant(targets)
    return ad.sum_all(ad.square(diff)) / inputs.shape[0]


def _loss_boundary_node(tape, u_layers, b_layers, points):
    pred = ad.mlp_value(tape, u_layers, points)
    if b_layers is not None:
        pred = pred + ad.mlp_value(tape, b_layers, pred)
    return ad.sum_all(ad.square(pred)) / points.shape[0]


# ---------------------------------------------------------------------------
# Public loss operations (evaluate to floats)
# ---------------------------------------------------------------------------


def loss_measurement(u_net, dataset):
    """Mean over records of the squared error, summed over state components."""
    if len(dataset) == 0:
        raise ConfigError("loss_measurement requires a nonempty dataset")
    tape = ad.Tape()
    layers = ad.mlp_params(tape, u_net, "U")
    node = _loss_data_node(tape, layers, dataset.inputs(), dataset.u)
    return float(node.value)


def loss_boundary(u_net, b_net, collocation, system):
    """Mean squared boundary residual; B network optional (known Dirichlet)."""
    if system.domain.spatial_dim == 0:
        raise ConfigError("boundary loss undefined for ODE systems")
    points = collocation.boundary if isinstance(collocation, CollocationSet) \
        else np.asarray(collocation, dtype=np.float64)
    if points is None or points.shape[0] == 0:
        raise ConfigError("no boundary collocation points supplied")
    tape = ad.Tape()
    u_layers = ad.mlp_params(tape, u_net, "U")
    b_layers = ad.mlp_params(tape, b_net, "B") if b_net is not None else None
    node = _loss_boundary_node(tape, u_layers, b_layers, points)
    return float(node.value)


def loss_pinn(u_net, f_net, collocation, system, phi=None):
    """Mean squared DE residual over interior collocation points."""
    points = collocation.interior if isinstance(collocation, CollocationSet) \
        else np.asarray(collocation, dtype=np.float64)
    if points.shape[0] == 0:
        raise ConfigError("no interior collocation points supplied")
    tape = ad.Tape()
    u_layers = ad.mlp_params(tape, u_net, "U")
    f_layers = ad.mlp_params(tape, f_net, "F")
    phi_node = tape.leaf(np.asarray(float(phi)), name="phi") \
        if phi is not None else None
    node, _ = _loss_pinn_node(tape, system, u_layers, f_layers, points, phi_node)
    return float(node.value)


def pinn_residual_arrays(system, view, f_values, phi=None):
    """DE residual from precomputed numpy jets and hidden-term values.

    `view` is a numpy-backed StateJets carrying the surrogate's value and
    derivative samples; `f_values` is (n, f_arity). Used to check the
    residual definition against an independent surrogate (e.g. a spline).
    """
    f_cols = [np.asarray(f_values)[:, j] for j in range(system.f_arity)]
    contrib = system.hidden_apply(f_cols, phi)
    known = system.n_k(view)
    resid = [np.asarray(known[i] + contrib[i] - view.u_t(i))
             for i in range(system.state_dim)]
    return np.stack(resid, axis=-1)


# ---------------------------------------------------------------------------
# Evaluation metrics
# ---------------------------------------------------------------------------


def default_reference(system, dense=3001):
    """Reference solution used for scoring (dense RK4 for ODE, FD for PDE)."""
    if system.domain.spatial_dim == 0:
        grid = np.linspace(0.0, system.domain.t_final, dense)
        return rk4_integrate(system, grid)
    return burgers_reference(system.params["nu"])


def _pde_reference_jets(reference, exclude_band):
    """Interior-grid value/derivative samples from a PDE reference solution."""
    x, t, u = reference.x, reference.t, reference.u
    dx = x[1] - x[0]
    rows = slice(1, len(t) - 1)
    cols = slice(1, len(x) - 1)
    u_x = (u[:, 2:] - u[:, :-2]) / (2 * dx)
    u_xx = (u[:, 2:] - 2 * u[:, 1:-1] + u[:, :-2]) / (dx * dx)
    dt_grid = np.diff(t)[:, None]
    u_t = (u[2:, :] - u[:-2, :]) / (dt_grid[1:] + dt_grid[:-1])
    keep = np.abs(x[cols]) > exclude_band
    vals = {
        "u": u[rows, cols][:, keep].ravel(),
        "x": u_x[rows, :][:, keep].ravel(),
        "xx": u_xx[rows, :][:, keep].ravel(),
        "t": u_t[:, cols][:, keep].ravel(),
    }
    return StateJets([vals["u"]], dx=[vals["x"]], dxx=[vals["xx"]], dt=[vals["t"]])


def evaluate_hidden_mse(f_net, system, reference, grid_n=300, phi=None,
                        exclude_band=0.0):
    """Mean squared error between the learned and true hidden functions.

    States are sampled along the reference solution: uniformly in time for
    ODE systems (`grid_n` samples), on the interior reference grid for PDE
    systems (optionally excluding the band |x| <= exclude_band). The error is
    averaged over samples and summed over hidden components; in shared-scale
    mode the learned pair (-phi*f, f) is compared against the true pair.
    """
    if system.f_true is None:
        raise ConfigError("system declares no true hidden term to compare against")
    if system.domain.spatial_dim == 0:
        _, states = trajectory_states(reference, grid_n)
        view = StateJets([states[:, i] for i in range(system.state_dim)])
    else:
        view = _pde_reference_jets(reference, exclude_band)

    inputs = np.column_stack(hidden_input_exprs(view, system.hidden_inputs))
    pred = forward(f_net, inputs)
    pred_cols = [pred[:, j] for j in range(system.f_arity)]
    true_cols = [np.asarray(c) for c in system.f_true(view)]
    if system.hidden_mode == "shared_scaled":
        pred_cols = system.hidden_apply(pred_cols, phi)
        true_cols = system.hidden_apply(true_cols, system.true_phi)
    return float(sum(np.mean((p - tc) ** 2)
                     for p, tc in zip(pred_cols, true_cols)))


def evaluate_surrogate_mse(u_net, system, reference, exclude_band=0.0):
    """Mean squared error of the surrogate against the reference solution."""
    if system.domain.spatial_dim == 0:
        pred = forward(u_net, reference.t[:, None])
        return float(np.sum(np.mean((pred - reference.u) ** 2, axis=0)))
    keep = np.abs(reference.x) > exclude_band
    xg, tg = np.meshgrid(reference.x[keep], reference.t)
    pts = np.column_stack([xg.ravel(), tg.ravel()])
    pred = forward(u_net, pts).reshape(tg.shape)
    return float(np.mean((pred - reference.u[:, keep]) ** 2))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


class Adam:
    """Standard Adam with bias correction, updating arrays in place."""

    def __init__(self, arrays, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.arrays = arrays
        self.lr = lr
        self.b1 = beta1
        self.b2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for a, m, v, g in zip(self.arrays, self.m, self.v, grads):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def domain_normalization(system):
    """Input shift/scale mapping the space-time box onto [-1, 1] per axis."""
    shift, scale = [], []
    for lo, hi in system.domain.bounds:
        shift.append(0.5 * (lo + hi))
        scale.append(0.5 * (hi - lo))
    t = system.domain.t_final
    shift.append(0.5 * t)
    scale.append(0.5 * t)
    return np.array(shift), np.array(scale)


def hidden_input_scale(system, dataset):
    """Per-input scale for the hidden network, from the measured states.

    State components are scaled by their max |value| in the data (floored at
    one); derivative inputs keep scale one, since measurements say nothing
    about them.
    """
    from .dynamics import parse_hidden_input
    scale = []
    for desc in system.hidden_inputs:
        comp, kind = parse_hidden_input(desc)
        if kind == "u":
            scale.append(max(1.0, float(np.max(np.abs(dataset.u[:, comp])))))
        else:
            scale.append(1.0)
    return np.zeros(len(scale)), np.array(scale)


def _diagnose_nan(iteration, losses, resid_node, points):
    for term, node in losses.items():
        if not np.isfinite(node.value):
            context = {"iteration": iteration, "term": term}
            if term == "L_P" and resid_node is not None:
                bad = np.argwhere(~np.isfinite(resid_node.value))
                if bad.size:
                    context["point"] = points[bad[0, 0]].tolist()
            raise NumericsError(
                f"non-finite loss term {term} at iteration {iteration}", **context)
    raise NumericsError(f"non-finite total loss at iteration {iteration}",
                        iteration=iteration)


def train(system, dataset, collocation, config, reference=None):
    """Run the joint optimization; returns networks, scale, and a report.

    Deterministic for a fixed config and seed. The returned report carries
    per-iteration traces of the three loss terms plus final hidden-term and
    surrogate MSEs measured against `reference` (computed on demand for ODE
    systems when not supplied).
    """
    if config.hidden_mode != system.hidden_mode:
        raise ConfigError(
            f"config hidden_mode {config.hidden_mode!r} does not match system "
            f"({system.hidden_mode!r})")
    if len(dataset) == 0:
        raise ConfigError("training requires at least one measurement")

    u_norm = f_norm = (None, None)
    if config.normalize_inputs:
        u_norm = domain_normalization(system)
        f_norm = hidden_input_scale(system, dataset)
    u_net = init_glorot([system.input_dim, *config.u_hidden, system.state_dim],
                        config.seed, input_shift=u_norm[0], input_scale=u_norm[1])
    f_net = init_glorot([len(system.hidden_inputs), *config.f_hidden,
                         system.f_arity], config.seed + 1,
                        input_shift=f_norm[0], input_scale=f_norm[1])
    b_net = None
    if config.train_boundary_net:
        if system.boundary == "none":
            raise ConfigError("boundary network requested for an ODE system")
        b_net = init_glorot([system.state_dim, *config.b_hidden,
                             system.state_dim], config.seed + 2)
    phi = np.asarray(1.0) if system.hidden_mode == "shared_scaled" else None

    data_inputs = dataset.inputs()
    data_targets = dataset.u
    xp = collocation.interior
    xb = collocation.boundary
    has_boundary = system.boundary != "none" and xb is not None and len(xb) > 0
    spec = _jet_spec(system)
    seed_array = ad.jet_seed_array(xp, spec)
    w_m, w_b, w_p = config.weights

    params = None
    optimizer = None
    trace = np.empty((config.iterations, 3))
    pool = ad.ArrayPool()
    started = time.perf_counter()

    for it in range(config.iterations):
        tape = ad.Tape(pool=pool)
        u_layers = ad.mlp_params(tape, u_net, "U")
        f_layers = ad.mlp_params(tape, f_net, "F")
        b_layers = ad.mlp_params(tape, b_net, "B") if b_net is not None else None
        phi_node = tape.leaf(phi, name="phi", param=True) if phi is not None else None

        l_m = _loss_data_node(tape, u_layers, data_inputs, data_targets)
        if has_boundary:
            l_b = _loss_boundary_node(tape, u_layers, b_layers, xb)
        else:
            l_b = tape.constant(0.0)
        l_p, resid_node = _loss_pinn_node(tape, system, u_layers, f_layers, xp,
                                          phi_node, seed_array)
        total = (l_m * w_m + l_b * w_b) + l_p * w_p

        trace[it, 0] = l_m.value
        trace[it, 1] = l_b.value
        trace[it, 2] = l_p.value
        if not np.isfinite(total.value):
            _diagnose_nan(it, {"L_M": l_m, "L_B": l_b, "L_P": l_p},
                          resid_node, xp)

        tape.backward(total)
        leaves = tape.params()
        if optimizer is None:
            params = [leaf.value for leaf in leaves]
            optimizer = Adam(params, config.learning_rate, config.beta1,
                             config.beta2)
        grads = []
        for leaf in leaves:
            g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
            if not np.all(np.isfinite(g)):
                raise NumericsError(
                    f"non-finite gradient for {leaf.name} at iteration {it}",
                    iteration=it, parameter=leaf.name)
            grads.append(g)
        optimizer.step(grads)
        tape.recycle()

    elapsed = time.perf_counter() - started
    if reference is None:
        reference = default_reference(system)
    phi_val = float(phi) if phi is not None else None
    hidden_mse = evaluate_hidden_mse(
        f_net, system, reference, grid_n=config.eval_grid, phi=phi_val,
        exclude_band=config.exclude_band)
    surrogate_mse = evaluate_surrogate_mse(
        u_net, system, reference, exclude_band=config.exclude_band)

    report = TrainReport(
        trace_measurement=trace[:, 0].copy(),
        trace_boundary=trace[:, 1].copy(),
        trace_pinn=trace[:, 2].copy(),
        hidden_mse=hidden_mse,
        surrogate_mse=surrogate_mse,
        elapsed_seconds=elapsed,
        seed=config.seed,
        config=asdict(config),
        extra={"phi": phi_val, "system": system.name,
               "n_data": len(dataset), "n_interior": collocation.n_interior,
               "n_boundary": collocation.n_boundary},
    )
    return TrainResult(u_net, f_net, b_net, phi_val, report)
