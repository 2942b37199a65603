"""Baseline: a neural network embedded in the ODE right-hand side.

The unknown contribution H(u) is added to the known operator part and the
resulting ODE is solved by RK4 unrolled on the autodiff tape, so the
data-fit loss differentiates exactly through the computed trajectory
(discretize-then-optimize).
"""

import time
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .dynamics import StateJets, hidden_input_exprs
from .errors import ConfigError, NumericsError
from .neural import Mlp, init_glorot
from .sampling import rk4_step, segment_steps
from .trainer import (Adam, TrainReport, default_reference, evaluate_hidden_mse,
                      evaluate_surrogate_mse)


@dataclass
class UdeConfig:
    hidden: tuple = (32, 32)
    step: float = 0.05
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    iterations: int = 10000
    normalize_inputs: bool = True
    seed: int = 0
    eval_grid: int = 300

    def __post_init__(self):
        if self.step <= 0:
            raise ConfigError("integration step must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")


def _tape_rhs(tape, system, h_layers, h_callable):
    m = system.state_dim

    def rhs(t, u):
        view = StateJets([ad.column(u, i) for i in range(m)])
        if h_layers is not None:
            h_in = ad.hstack(hidden_input_exprs(view, system.hidden_inputs))
            h_out = ad.mlp_value(tape, h_layers, h_in)
            cols = [ad.column(h_out, j) for j in range(system.f_arity)]
        else:
            cols = h_callable(view)
        contrib = system.hidden_apply(cols, None)
        known = system.n_k(view)
        return ad.hstack([known[i] + contrib[i] for i in range(m)])

    return rhs


def _unroll(tape, system, h_layers, h_callable, t_grid, u0, step):
    """States at every t_grid node, as (1, m) tape nodes."""
    rhs = _tape_rhs(tape, system, h_layers, h_callable)
    u = tape.constant(np.asarray(u0, dtype=np.float64)[None, :])
    states = [u]
    for k in range(len(t_grid) - 1):
        t0, t1 = t_grid[k], t_grid[k + 1]
        n, h = segment_steps(t0, t1, step)
        t = t0
        for i in range(n):
            u = rk4_step(rhs, t, u, h)
            t = t0 + (i + 1) * h
        states.append(u)
    return states


def ude_solve(system, h, t_grid, u0=None, step=0.05):
    """Solve du/dt = n_k(u) + H(u) with RK4 unrolled at the given step.

    `h` is either an Mlp (its parameters are recorded on a tape so training
    can differentiate through the solve) or a callable on a StateJets view
    returning the hidden output columns (oracle injection). Uses the same
    stepping arithmetic as rk4_integrate, so with H contributing exactly zero
    the trajectories agree bit for bit at equal steps.
    """
    if system.domain.spatial_dim != 0:
        raise ConfigError("the baseline supports ODE systems only")
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if u0 is None:
        u0 = system.u0
    tape = ad.Tape()
    h_layers = ad.mlp_params(tape, h, "H") if isinstance(h, Mlp) else None
    h_callable = None if isinstance(h, Mlp) else h
    states = _unroll(tape, system, h_layers, h_callable, t_grid, u0, step)
    traj = np.concatenate([s.value for s in states], axis=0)
    bad = ~np.all(np.isfinite(traj), axis=1)
    if np.any(bad):
        t_fail = float(t_grid[int(np.argmax(bad))])
        raise NumericsError(f"trajectory blew up near t={t_fail:g}", time=t_fail)
    return traj


def ude_train(system, dataset, config, reference=None):
    """Fit H by Adam on the trajectory-vs-data mean squared error.

    The integration grid is the measurement times subdivided so every
    substep is at most `config.step`; all measurement times are grid nodes,
    so no interpolation enters the loss.
    """
    if system.domain.spatial_dim != 0:
        raise ConfigError("the baseline supports ODE systems only")
    if len(dataset) == 0:
        raise ConfigError("training requires at least one measurement")
    order = np.argsort(dataset.t)
    t_grid = dataset.t[order]
    targets = dataset.u[order]
    if t_grid[0] != 0.0:
        t_grid = np.concatenate([[0.0], t_grid])
        targets = np.concatenate([[np.asarray(system.u0)], targets])
        data_rows = np.arange(1, len(t_grid))
    else:
        data_rows = np.arange(len(t_grid))
    n_data = len(dataset)

    h_shift = h_scale = None
    if config.normalize_inputs:
        from .trainer import hidden_input_scale
        h_shift, h_scale = hidden_input_scale(system, dataset)
    h_net = init_glorot([len(system.hidden_inputs), *config.hidden,
                         system.f_arity], config.seed,
                        input_shift=h_shift, input_scale=h_scale)
    params = [a for pair in zip(h_net.weights, h_net.biases) for a in pair]
    optimizer = Adam(params, config.learning_rate, config.beta1, config.beta2)
    trace = np.empty(config.iterations)
    pool = ad.ArrayPool()
    started = time.perf_counter()

    for it in range(config.iterations):
        tape = ad.Tape(pool=pool)
        h_layers = ad.mlp_params(tape, h_net, "H")
        states = _unroll(tape, system, h_layers, None, t_grid, system.u0,
                         config.step)
        loss = None
        for k, row in enumerate(data_rows):
            diff = states[row] - tape.constant(targets[row][None, :])
            sq = ad.sum_all(ad.square(diff))
            loss = sq if loss is None else loss + sq
        loss = loss / n_data
        trace[it] = loss.value
        if not np.isfinite(loss.value):
            traj = np.concatenate([s.value for s in states], axis=0)
            bad = ~np.all(np.isfinite(traj), axis=1)
            t_fail = float(t_grid[int(np.argmax(bad))]) if np.any(bad) else None
            raise NumericsError(
                f"non-finite loss at iteration {it}", iteration=it, time=t_fail)
        tape.backward(loss)
        grads = []
        for leaf in tape.params():
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
    hidden_mse = evaluate_hidden_mse(h_net, system, reference,
                                     grid_n=config.eval_grid)

    u_traj = ude_solve(system, h_net, reference.t, step=config.step)
    surrogate_mse = float(np.sum(np.mean((u_traj - reference.u) ** 2, axis=0)))

    report = TrainReport(
        trace_measurement=trace.copy(),
        trace_boundary=np.zeros(config.iterations),
        trace_pinn=np.zeros(config.iterations),
        hidden_mse=hidden_mse,
        surrogate_mse=surrogate_mse,
        elapsed_seconds=elapsed,
        seed=config.seed,
        config=asdict(config),
        extra={"method": "ude", "system": system.name, "n_data": n_data},
    )
    return h_net, report
