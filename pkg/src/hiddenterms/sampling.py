"""Synthetic data generation: ODE/PDE reference solves, noise, collocation.

All generators are pure functions of their inputs and seeds; experiments
record the seeds they used.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigError, NumericsError


@dataclass
class Dataset:
    """Measurement records (t, x, u) with noise metadata.

    `x` is None for ODE data; `u` has one row per record. `provenance`
    records which system and solver settings produced the values.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    noise_eps: float = 0.0
    seed: int = None
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.shape[0]

    @property
    def state_dim(self):
        return self.u.shape[1]

    def inputs(self):
        """Network-layout inputs (x..., t) as an (n, d+1) array."""
        if self.x is None:
            return self.t[:, None]
        return np.concatenate([self.x, self.t[:, None]], axis=1)


@dataclass
class CollocationSet:
    """Interior and boundary space-time points in network layout (x..., t)."""

    interior: np.ndarray
    boundary: np.ndarray = None
    seed: int = None

    @property
    def n_interior(self):
        return self.interior.shape[0]

    @property
    def n_boundary(self):
        return 0 if self.boundary is None else self.boundary.shape[0]


@dataclass
class ReferenceSolution:
    """Dense ground-truth values: (t, u) for ODE, (t, x, u-grid) for PDE."""

    t: np.ndarray
    u: np.ndarray
    x: np.ndarray = None
    meta: dict = field(default_factory=dict)
    accuracy: float = None


# ---------------------------------------------------------------------------
# Runge-Kutta integration
# ---------------------------------------------------------------------------


def rk4_step(f, t, u, h):
    """One classical RK4 step; works on numpy arrays and on tape nodes."""
    k1 = f(t, u)
    k2 = f(t + 0.5 * h, u + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, u + (0.5 * h) * k2)
    k4 = f(t + h, u + h * k3)
    return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def segment_steps(t0, t1, max_step):
    """Number of equal substeps (and their size) covering [t0, t1]."""
    n = max(1, int(np.ceil((t1 - t0) / max_step - 1e-12)))
    return n, (t1 - t0) / n


def rk4_integrate(system, t_grid, max_step=1e-3, rhs=None):
    """Integrate an ODE system over an ascending grid starting at 0.

    Uses a fine internal step (`max_step` bound, equal substeps per grid
    segment) and returns the states sampled at `t_grid`. `rhs` overrides the
    integrated right-hand side (default: known part plus true hidden part).
    """
    if system.domain.spatial_dim != 0:
        raise ConfigError("rk4_integrate requires an ODE system (spatial_dim 0)")
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.ndim != 1 or t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
        raise ConfigError("t_grid must be ascending and start at 0")
    if rhs is None:
        rhs = lambda t, u: system.rhs_full(u)

    u = np.asarray(system.u0, dtype=np.float64).copy()
    out = np.empty((t_grid.shape[0], u.shape[0]))
    out[0] = u
    for k in range(t_grid.shape[0] - 1):
        t0, t1 = t_grid[k], t_grid[k + 1]
        n, h = segment_steps(t0, t1, max_step)
        t = t0
        for i in range(n):
            u = rk4_step(rhs, t, u, h)
            t = t0 + (i + 1) * h
        if not np.all(np.isfinite(u)):
            raise NumericsError(f"ODE integration blew up near t={t1:g}", time=t1)
        out[k + 1] = u
    return ReferenceSolution(
        t=t_grid, u=out,
        meta={"solver": "rk4", "max_step": max_step, "system": system.name})


def trajectory_states(reference, grid_n):
    """States at `grid_n` uniformly spaced times along an ODE reference."""
    times = np.linspace(reference.t[0], reference.t[-1], grid_n)
    states = np.column_stack([
        np.interp(times, reference.t, reference.u[:, c])
        for c in range(reference.u.shape[1])])
    return times, states


# ---------------------------------------------------------------------------
# Viscous Burgers reference solve
# ---------------------------------------------------------------------------


def _minmod(a, b):
    slope = np.where(np.abs(a) < np.abs(b), a, b)
    return np.where(a * b > 0.0, slope, 0.0)


def _advection(u, dx):
    """Conservative flux difference with MUSCL/minmod reconstruction."""
    du = np.zeros_like(u)
    du[1:-1] = _minmod(u[1:-1] - u[:-2], u[2:] - u[1:-1])
    ul = u[:-1] + 0.5 * du[:-1]
    ur = u[1:] - 0.5 * du[1:]
    a = np.maximum(np.abs(ul), np.abs(ur))
    flux = 0.25 * (ul * ul + ur * ur) - 0.5 * a * (ur - ul)
    adv = np.zeros_like(u)
    adv[1:-1] = -(flux[1:] - flux[:-1]) / dx
    return adv


def burgers_reference(nu, nx=2048, t_out=None, cfl=0.4, estimate_accuracy=False):
    """Finite-difference reference for u_t = -u u_x + nu u_xx on [-1,1]x[0,1].

    Explicit conservative-form advection (second-order MUSCL reconstruction
    with a local Lax-Friedrichs flux), implicit diffusion (backward Euler in
    a tridiagonal solve), homogeneous Dirichlet boundaries, u(x,0)=-sin(pi x).
    The time step satisfies the advective CFL condition and is reduced
    automatically if the solution speed grows. With `estimate_accuracy`, a
    half-resolution solve provides a max-norm discrepancy estimate away from
    the shock region |x| <= 0.05.
    """
    if nu <= 0:
        raise ConfigError("viscosity nu must be positive")
    if t_out is None:
        t_out = np.linspace(0.0, 1.0, 101)
    t_out = np.asarray(t_out, dtype=np.float64)
    if t_out[0] != 0.0 or np.any(np.diff(t_out) <= 0):
        raise ConfigError("output times must be ascending and start at 0")

    x = np.linspace(-1.0, 1.0, nx + 1)
    dx = x[1] - x[0]
    u = -np.sin(np.pi * x)
    out = np.empty((t_out.shape[0], nx + 1))
    out[0] = u

    u = u.copy()
    u[0] = 0.0
    u[-1] = 0.0
    dt_max = cfl * dx / max(1.0, np.max(np.abs(u)))

    def diffusion_solve(rhs, dt):
        r = nu * dt / (dx * dx)
        m = nx - 1
        ab = np.zeros((3, m))
        ab[0, 1:] = -r
        ab[1, :] = 1.0 + 2.0 * r
        ab[2, :-1] = -r
        return solve_banded((1, 1), ab, rhs)

    t = 0.0
    dt = dt_max
    for k in range(1, t_out.shape[0]):
        target = t_out[k]
        while t < target - 1e-13:
            speed = np.max(np.abs(u))
            while speed * dt / dx > cfl + 1e-12:
                dt *= 0.5
            step = min(dt, target - t)
            ustar = u + step * _advection(u, dx)
            u[1:-1] = diffusion_solve(ustar[1:-1], step)
            if not np.all(np.isfinite(u)):
                raise NumericsError(f"Burgers solve unstable near t={t:g}", time=t)
            t += step
        out[k] = u
        t = target

    meta = {"solver": "muscl-rusanov+implicit-diffusion", "nx": nx,
            "cfl": cfl, "nu": nu}
    accuracy = None
    if estimate_accuracy and nx >= 8:
        coarse = burgers_reference(nu, nx=nx // 2, t_out=t_out, cfl=cfl)
        mask = np.abs(x[::2]) > 0.05
        accuracy = float(np.max(np.abs(out[:, ::2][:, mask] - coarse.u[:, mask])))
        meta["refinement_max_diff_offshock"] = accuracy
    return ReferenceSolution(t=t_out, u=out, x=x, meta=meta, accuracy=accuracy)


# ---------------------------------------------------------------------------
# Noise and sampling
# ---------------------------------------------------------------------------


def add_noise(dataset, epsilon, seed):
    """Additive Gaussian noise scaled by each component's dataset mean.

    Component c of every record receives epsilon * mean_i(u[i, c]) * N(0, 1).
    Deterministic per seed; epsilon 0 returns the values unchanged.
    """
    if len(dataset) == 0:
        raise ConfigError("cannot add noise to an empty dataset")
    u = dataset.u.copy()
    if epsilon != 0.0:
        rng = np.random.default_rng(seed)
        draws = rng.standard_normal(u.shape)
        scale = epsilon * u.mean(axis=0)
        u = u + scale[None, :] * draws
    return Dataset(
        t=dataset.t.copy(),
        x=None if dataset.x is None else dataset.x.copy(),
        u=u, noise_eps=float(epsilon), seed=seed,
        provenance=dict(dataset.provenance))


def latin_hypercube(n, box, seed):
    """n stratified points in a box; one point per stratum per coordinate.

    Each coordinate of the box is an (lo, hi) interval; samples fall in
    [lo, hi) with exactly one point in each of the n equal-width strata.
    """
    if n < 1:
        raise ConfigError("latin_hypercube requires n >= 1")
    box = [(float(lo), float(hi)) for lo, hi in box]
    for lo, hi in box:
        if not lo < hi:
            raise ConfigError(f"empty interval ({lo}, {hi})")
    rng = np.random.default_rng(seed)
    pts = np.empty((n, len(box)))
    for d, (lo, hi) in enumerate(box):
        strata = (rng.permutation(n) + rng.random(n)) / n
        pts[:, d] = lo + strata * (hi - lo)
    return pts


def collocation_for(system, n_interior, n_boundary, seed):
    """Latin-hypercube collocation matching the system's domain.

    Interior points live in Int(Omega) x (0, T]; for one space dimension the
    boundary points stratify time over (0, T] and alternate between the two
    endpoints.
    """
    if n_interior < 1:
        raise ConfigError("need at least one interior collocation point")
    dom = system.domain
    T = dom.t_final
    if dom.spatial_dim == 0:
        unit = latin_hypercube(n_interior, [(0.0, 1.0)], seed)
        interior = T * (1.0 - unit)            # maps [0,1) onto (0,T]
        return CollocationSet(interior=interior, boundary=None, seed=seed)
    if dom.spatial_dim != 1:
        raise ConfigError("collocation supports at most one spatial dimension")

    lo, hi = dom.bounds[0]
    unit = latin_hypercube(n_interior, [(0.0, 1.0), (0.0, 1.0)], seed)
    xs = unit[:, 0]
    xs[xs == 0.0] = np.nextafter(0.0, 1.0)     # keep points strictly interior
    interior = np.column_stack([lo + xs * (hi - lo), T * (1.0 - unit[:, 1])])

    boundary = None
    if n_boundary:
        tb = T * (1.0 - latin_hypercube(n_boundary, [(0.0, 1.0)], seed + 1)[:, 0])
        xb = np.where(np.arange(n_boundary) % 2 == 0, lo, hi)
        boundary = np.column_stack([xb, tb])
    return CollocationSet(interior=interior, boundary=boundary, seed=seed)


@dataclass(frozen=True)
class Schedule:
    """Measurement schedule: count-n equispaced, fixed spacing, or explicit times."""

    kind: str
    n: int = None
    spacing: float = None
    times: tuple = None
    spatial_subsample: int = 256

    @staticmethod
    def count(n):
        return Schedule("count", n=int(n))

    @staticmethod
    def by_spacing(spacing):
        return Schedule("spacing", spacing=float(spacing))

    @staticmethod
    def at_times(times, spatial_subsample=256):
        return Schedule("times", times=tuple(float(t) for t in times),
                        spatial_subsample=spatial_subsample)

    def resolve_times(self, t_final):
        if self.kind == "count":
            if self.n < 1:
                raise ConfigError("schedule count must be >= 1")
            return np.linspace(0.0, t_final, self.n)
        if self.kind == "spacing":
            if not 0 < self.spacing <= t_final:
                raise ConfigError(f"spacing {self.spacing} outside (0, {t_final}]")
            k = int(np.floor(t_final / self.spacing + 1e-9))
            return np.arange(k + 1) * self.spacing
        if self.kind == "times":
            times = np.asarray(self.times, dtype=np.float64)
            if np.any(times < 0) or np.any(times > t_final + 1e-12):
                raise ConfigError(f"scheduled time outside [0, {t_final}]")
            return times
        raise ConfigError(f"unknown schedule kind {self.kind!r}")


def union_time_grid(t_final, times, dense=3001):
    """Dense evaluation grid extended with the exact scheduled times."""
    return np.union1d(np.linspace(0.0, t_final, dense),
                      np.asarray(times, dtype=np.float64))


def _grid_index(grid, value):
    idx = int(np.argmin(np.abs(grid - value)))
    if abs(grid[idx] - value) > 1e-9:
        raise ConfigError(f"scheduled time {value} is not on the reference grid")
    return idx


def sample_measurements(reference, schedule, t_final=None):
    """Extract a measurement dataset from a reference solution.

    For PDE references each scheduled time contributes one spatial slice,
    subsampled to `schedule.spatial_subsample` equispaced grid nodes.
    """
    if t_final is None:
        t_final = float(reference.t[-1])
    times = schedule.resolve_times(t_final)
    rows = [_grid_index(reference.t, tv) for tv in times]

    if reference.x is None:
        return Dataset(t=times.copy(), x=None, u=reference.u[rows].copy(),
                       provenance=dict(reference.meta, schedule=schedule.kind))

    nx = reference.x.shape[0]
    take = min(schedule.spatial_subsample, nx)
    cols = np.unique(np.round(np.linspace(0, nx - 1, take)).astype(int))
    t_list, x_list, u_list = [], [], []
    for tv, row in zip(times, rows):
        t_list.append(np.full(cols.shape[0], tv))
        x_list.append(reference.x[cols])
        u_list.append(reference.u[row, cols])
    return Dataset(
        t=np.concatenate(t_list),
        x=np.concatenate(x_list)[:, None],
        u=np.concatenate(u_list)[:, None],
        provenance=dict(reference.meta, schedule=schedule.kind))


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------


def dataset_to_csv(dataset, path):
    """Write records as CSV with header t, x..., u... (x columns for PDE only)."""
    d = 0 if dataset.x is None else dataset.x.shape[1]
    header = ["t"] + [f"x{i}" for i in range(d)] + \
             [f"u{i}" for i in range(dataset.state_dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(len(dataset)):
            row = [repr(float(dataset.t[k]))]
            for i in range(d):
                row.append(repr(float(dataset.x[k, i])))
            for i in range(dataset.state_dim):
                row.append(repr(float(dataset.u[k, i])))
            writer.writerow(row)


def dataset_from_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        xcols = [i for i, h in enumerate(header) if h.startswith("x")]
        ucols = [i for i, h in enumerate(header) if h.startswith("u")]
        rows = [[float(v) for v in row] for row in reader]
    arr = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))
    return Dataset(
        t=arr[:, 0],
        x=arr[:, xcols] if xcols else None,
        u=arr[:, ucols])


def collocation_to_csv(colloc, path):
    """Write interior and boundary points with header set, x..., t."""
    dim = colloc.interior.shape[1]
    header = ["set"] + [f"x{i}" for i in range(dim - 1)] + ["t"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in colloc.interior:
            writer.writerow(["interior"] + [repr(float(v)) for v in row])
        if colloc.boundary is not None:
            for row in colloc.boundary:
                writer.writerow(["boundary"] + [repr(float(v)) for v in row])
