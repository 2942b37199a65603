"""Data generation oracles: integrators, reference solvers, sampling, noise."""

import numpy as np
import pytest

import hiddenterms as ht
from hiddenterms import (ConfigError, Dataset, Schedule, add_noise,
                         burgers_reference, collocation_for, latin_hypercube,
                         lotka_volterra, rk4_integrate, sample_measurements)
from hiddenterms.dynamics import DifferentialSystem, DomainSpec
from hiddenterms.sampling import (collocation_to_csv, dataset_from_csv,
                                  dataset_to_csv, union_time_grid)


def ode_system(rhs_known, u0, t_final=1.0, m=None):
    m = m if m is not None else len(u0)
    return DifferentialSystem(
        name="custom", domain=DomainSpec(0, (), t_final), state_dim=m,
        n_k=rhs_known, hidden_apply=lambda f, phi=None: [0.0] * m,
        hidden_inputs=tuple(f"u{i}" for i in range(m)), f_arity=0,
        u0=np.asarray(u0, dtype=np.float64), jet_tags=(0,))


# ---------------------------------------------------------------------------
# RK4
# ---------------------------------------------------------------------------


def test_rk4_constant_rhs():
    system = ode_system(lambda s: [0.0 * s.u(0)], [3.5])
    ref = rk4_integrate(system, np.linspace(0, 1, 11),
                        rhs=lambda t, u: system.rhs_known(u))
    assert np.all(ref.u == 3.5)


def test_rk4_exponential():
    system = ode_system(lambda s: [s.u(0)], [1.0])
    ref = rk4_integrate(system, np.array([0.0, 1.0]), max_step=1e-3,
                        rhs=lambda t, u: system.rhs_known(u))
    assert abs(ref.u[-1, 0] - np.e) < 1e-9


def test_rk4_order_four_convergence():
    system = ode_system(lambda s: [s.u(0)], [1.0])
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        ref = rk4_integrate(system, np.array([0.0, 1.0]), max_step=h,
                            rhs=lambda t, u: system.rhs_known(u))
        errs.append(abs(ref.u[-1, 0] - np.e))
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(16.0, rel=0.05)


def test_rk4_lv_step_refinement():
    system = lotka_volterra()
    grid = np.array([0.0, 3.0])
    coarse = rk4_integrate(system, grid, max_step=1e-3)
    fine = rk4_integrate(system, grid, max_step=5e-4)
    assert np.max(np.abs(coarse.u[-1] - fine.u[-1])) < 1e-8


def test_rk4_initial_condition_exact():
    system = lotka_volterra()
    ref = rk4_integrate(system, np.linspace(0, 3, 7))
    assert np.array_equal(ref.u[0], system.u0)


def test_rk4_blowup_reports_time():
    system = ode_system(lambda s: [s.u(0) * s.u(0)], [1.0], t_final=2.0)
    with pytest.raises(ht.NumericsError) as err:
        rk4_integrate(system, np.linspace(0, 2.0, 21),
                      rhs=lambda t, u: system.rhs_known(u))
    assert "time" in err.value.context


def test_rk4_requires_valid_grid():
    system = lotka_volterra()
    with pytest.raises(ConfigError):
        rk4_integrate(system, np.array([0.5, 1.0]))
    with pytest.raises(ConfigError):
        rk4_integrate(system, np.array([0.0, 1.0, 0.5]))


# ---------------------------------------------------------------------------
# Burgers reference
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def burgers_ref():
    return burgers_reference(nu=1.0 / (1000 * np.pi), nx=1024,
                             t_out=np.linspace(0, 1, 51))


def test_burgers_initial_slice_exact(burgers_ref):
    assert np.array_equal(burgers_ref.u[0], -np.sin(np.pi * burgers_ref.x))


def test_burgers_boundary_values_zero(burgers_ref):
    assert np.all(burgers_ref.u[1:, 0] == 0.0)
    assert np.all(burgers_ref.u[1:, -1] == 0.0)


def test_burgers_odd_symmetry(burgers_ref):
    flipped = -burgers_ref.u[:, ::-1]
    assert np.max(np.abs(burgers_ref.u - flipped)) < 1e-6


def test_burgers_grid_refinement_off_shock():
    t_out = np.linspace(0, 1, 26)
    fine = burgers_reference(nu=1.0 / (1000 * np.pi), nx=2048, t_out=t_out)
    coarse = burgers_reference(nu=1.0 / (1000 * np.pi), nx=1024, t_out=t_out)
    mask = np.abs(fine.x[::2]) > 0.05
    diff = np.max(np.abs(fine.u[:, ::2][:, mask] - coarse.u[:, mask]))
    assert diff < 1e-3


def test_burgers_rejects_bad_viscosity():
    with pytest.raises(ConfigError):
        burgers_reference(nu=0.0)


# ---------------------------------------------------------------------------
# Noise model
# ---------------------------------------------------------------------------


def make_dataset(u):
    u = np.asarray(u, dtype=np.float64)
    return Dataset(t=np.linspace(0, 1, len(u)), x=None, u=u)


def test_zero_noise_identity():
    ds = make_dataset(np.random.default_rng(0).normal(size=(20, 2)))
    noised = add_noise(ds, 0.0, seed=5)
    assert np.array_equal(noised.u, ds.u)


def test_noise_scale_matches_component_mean():
    # constant value 5, eps 0.1 -> std of noised values ~ 0.5 within 5%
    ds = make_dataset(np.full((100000, 1), 5.0))
    noised = add_noise(ds, 0.1, seed=7)
    assert np.std(noised.u[:, 0]) == pytest.approx(0.5, rel=0.05)


def test_noise_seed_determinism():
    ds = make_dataset(np.random.default_rng(1).normal(size=(50, 2)) + 3.0)
    a = add_noise(ds, 0.05, seed=11)
    b = add_noise(ds, 0.05, seed=11)
    c = add_noise(ds, 0.05, seed=12)
    assert np.array_equal(a.u, b.u)
    assert not np.array_equal(a.u, c.u)


def test_noise_requires_data():
    empty = Dataset(t=np.empty(0), x=None, u=np.empty((0, 2)))
    with pytest.raises(ConfigError):
        add_noise(empty, 0.1, seed=0)


# ---------------------------------------------------------------------------
# Latin hypercube sampling
# ---------------------------------------------------------------------------


def test_lhs_single_point_in_unit_square():
    pts = latin_hypercube(1, [(0.0, 1.0), (0.0, 1.0)], seed=0)
    assert pts.shape == (1, 2)
    assert np.all(pts >= 0.0) and np.all(pts < 1.0)


def test_lhs_four_points_one_per_quartile():
    pts = np.sort(latin_hypercube(4, [(0.0, 1.0)], seed=3)[:, 0])
    for k, v in enumerate(pts):
        assert 0.25 * k <= v < 0.25 * (k + 1)


@pytest.mark.parametrize("n", [1, 4, 100, 10000])
def test_lhs_stratification_exact(n):
    pts = latin_hypercube(n, [(-1.0, 1.0), (0.0, 1.0)], seed=9)
    for d, (lo, hi) in enumerate([(-1.0, 1.0), (0.0, 1.0)]):
        strata = np.floor((pts[:, d] - lo) / (hi - lo) * n).astype(int)
        assert np.array_equal(np.sort(strata), np.arange(n))


def test_lhs_deterministic_per_seed():
    a = latin_hypercube(64, [(0.0, 2.0)], seed=4)
    b = latin_hypercube(64, [(0.0, 2.0)], seed=4)
    c = latin_hypercube(64, [(0.0, 2.0)], seed=5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_collocation_membership_ode():
    system = lotka_volterra()
    cs = collocation_for(system, 500, 0, seed=1)
    t = cs.interior[:, 0]
    assert np.all(t > 0.0) and np.all(t <= 3.0)
    assert cs.boundary is None


def test_collocation_membership_pde():
    system = ht.viscous_burgers(nu=0.01)
    cs = collocation_for(system, 10000, 100, seed=2)
    x, t = cs.interior[:, 0], cs.interior[:, 1]
    assert np.all(x > -1.0) and np.all(x < 1.0)
    assert np.all(t > 0.0) and np.all(t <= 1.0)
    xb, tb = cs.boundary[:, 0], cs.boundary[:, 1]
    assert set(np.unique(xb)) == {-1.0, 1.0}
    assert np.sum(xb == -1.0) == 50
    assert np.all(tb > 0.0) and np.all(tb <= 1.0)


# ---------------------------------------------------------------------------
# Measurement schedules
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def lv_reference():
    system = lotka_volterra()
    times = np.unique(np.concatenate([
        Schedule.count(n).resolve_times(3.0) for n in (1, 5, 6, 10)]
        + [Schedule.by_spacing(0.6).resolve_times(3.0)]))
    return rk4_integrate(system, union_time_grid(3.0, times))


def test_schedule_single_point_is_initial_condition(lv_reference):
    ds = sample_measurements(lv_reference, Schedule.count(1))
    assert len(ds) == 1
    assert ds.t[0] == 0.0
    assert np.array_equal(ds.u[0], lotka_volterra().u0)


def test_schedule_spacing_endpoints(lv_reference):
    ds = sample_measurements(lv_reference, Schedule.by_spacing(0.6))
    assert len(ds) == 6
    assert np.allclose(ds.t, [0.0, 0.6, 1.2, 1.8, 2.4, 3.0])


def test_schedule_count_equispaced(lv_reference):
    ds = sample_measurements(lv_reference, Schedule.count(10))
    assert len(ds) == 10
    assert np.allclose(np.diff(ds.t), 3.0 / 9)


def test_schedule_time_outside_domain_rejected(lv_reference):
    with pytest.raises(ConfigError):
        sample_measurements(lv_reference, Schedule.at_times([0.0, 3.5]))


def test_burgers_two_time_slices(burgers_ref):
    ds = sample_measurements(burgers_ref, Schedule.at_times([0.0, 0.5]))
    assert len(ds) == 512
    assert set(np.unique(ds.t)) == {0.0, 0.5}
    assert ds.x.shape == (512, 1)
    # slice at t=0 must match the initial condition at the sampled nodes
    at0 = ds.t == 0.0
    assert np.array_equal(ds.u[at0, 0], -np.sin(np.pi * ds.x[at0, 0]))


# ---------------------------------------------------------------------------
# CSV round-trips
# ---------------------------------------------------------------------------


def test_dataset_csv_roundtrip(tmp_path, lv_reference):
    ds = sample_measurements(lv_reference, Schedule.count(10))
    path = tmp_path / "data.csv"
    dataset_to_csv(ds, path)
    header = path.read_text().splitlines()[0]
    assert header == "t,u0,u1"
    back = dataset_from_csv(path)
    assert np.array_equal(back.t, ds.t)
    assert np.array_equal(back.u, ds.u)
    assert back.x is None


def test_pde_dataset_csv_roundtrip(tmp_path, burgers_ref):
    ds = sample_measurements(burgers_ref, Schedule.at_times([0.0, 0.5],
                                                            spatial_subsample=32))
    path = tmp_path / "data.csv"
    dataset_to_csv(ds, path)
    assert path.read_text().splitlines()[0] == "t,x0,u0"
    back = dataset_from_csv(path)
    assert np.array_equal(back.x, ds.x)
    assert np.array_equal(back.u, ds.u)


def test_collocation_csv(tmp_path):
    system = ht.viscous_burgers(nu=0.01)
    cs = collocation_for(system, 10, 4, seed=0)
    path = tmp_path / "coll.csv"
    collocation_to_csv(cs, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "set,x0,t"
    assert sum(1 for l in lines if l.startswith("interior")) == 10
    assert sum(1 for l in lines if l.startswith("boundary")) == 4
