"""Built-in system definitions checked against closed forms and integrators."""

import numpy as np
import pytest

from hiddenterms import (ApoptosisParams, ConfigError, LvParams, StateJets,
                         build_system, cell_apoptosis, lotka_volterra,
                         rk4_integrate, viscous_burgers)


def test_lv_full_rhs_at_unit_state():
    system = lotka_volterra()
    rhs = system.rhs_full(np.array([1.0, 1.0]))
    assert rhs[0] == pytest.approx(1.3 - 0.9)
    assert rhs[1] == pytest.approx(-1.8 + 0.8)


def test_lv_hidden_vanishes_when_prey_absent():
    system = lotka_volterra()
    for y in (0.3, 1.0, 7.7):
        view = StateJets([0.0, y])
        f = system.f_true(view)
        assert f[0] == 0.0 and f[1] == 0.0


def test_lv_rhs_matches_trajectory_slope():
    # 4th-order one-sided difference of the integrated trajectory at t=0
    system = lotka_volterra()
    h = 1e-3
    ref = rk4_integrate(system, np.arange(5) * h, max_step=1e-4)
    u = ref.u
    slope = (-25 * u[0] + 48 * u[1] - 36 * u[2] + 16 * u[3] - 3 * u[4]) / (12 * h)
    rhs = system.rhs_full(system.u0)
    assert np.max(np.abs(slope - rhs)) < 1e-8


def test_lv_parameter_validation():
    with pytest.raises(ConfigError):
        LvParams(alpha=-1.0)
    with pytest.raises(ConfigError):
        LvParams(x0=0.0)


def test_lv_shared_mode_structure():
    system = lotka_volterra(hidden_mode="shared_scaled")
    assert system.f_arity == 1
    assert system.true_phi == pytest.approx(0.9 / 0.8)
    view = StateJets([2.0, 3.0])
    full = system.rhs_full(np.array([2.0, 3.0]))
    dec = lotka_volterra().rhs_full(np.array([2.0, 3.0]))
    assert np.allclose(full, dec, rtol=1e-12)


def test_apoptosis_conservation_exact():
    system = cell_apoptosis()
    rng = np.random.default_rng(0)
    for _ in range(50):
        state = rng.uniform(0.0, 1.0, size=3)
        rhs = system.rhs_full(state)
        assert rhs[1] + rhs[2] == 0.0
    # also with the other hidden target
    system2 = cell_apoptosis(hidden_target="v2")
    for _ in range(50):
        state = rng.uniform(0.0, 1.0, size=3)
        rhs = system2.rhs_full(state)
        assert rhs[1] + rhs[2] == 0.0


def test_apoptosis_zero_rates_zero_rhs():
    params = ApoptosisParams(k0=0, k1=0, km1=0, k2=0, km3=0, kd=0)
    system = cell_apoptosis(params)
    rhs = system.rhs_full(np.array([0.3, 0.2, 0.1]))
    assert np.all(rhs == 0.0)


def test_apoptosis_v2_vanishes_without_p53():
    system = cell_apoptosis(hidden_target="v2")
    for akts, akt in ((0.1, 0.4), (0.9, 0.01)):
        view = StateJets([0.0, akts, akt])
        assert system.f_true(view)[0] == 0.0


def test_apoptosis_offsets_must_be_positive():
    with pytest.raises(ConfigError):
        ApoptosisParams(j1=0.0)
    with pytest.raises(ConfigError):
        ApoptosisParams(jm3=-0.1)


def test_burgers_initial_condition():
    system = viscous_burgers(nu=1.0 / (1000 * np.pi))
    assert system.u0(0.0) == 0.0
    assert system.u0(-0.5) == pytest.approx(1.0)


def test_burgers_hidden_term_value():
    system = viscous_burgers(nu=0.01)
    view = StateJets([2.0], dx=[3.0])
    assert system.f_true(view)[0] == -6.0


def test_burgers_requires_positive_viscosity():
    with pytest.raises(ConfigError):
        viscous_burgers(nu=0.0)
    with pytest.raises(ConfigError):
        viscous_burgers(nu=-1e-3)


def test_burgers_input_variant():
    system = viscous_burgers(nu=0.01, hidden_inputs=("u0", "u0_x"))
    assert system.hidden_inputs == ("u0", "u0_x")
    assert system.hidden_input_labels == ("u", "u_x")
    assert system.symreg_targets == (((1, 1),),)


def test_hidden_descriptor_roundtrip_through_config():
    import json
    raw = json.loads(json.dumps({
        "nu": 0.01, "hidden_inputs": ["u0", "u0_x", "u0_t"]}))
    system = build_system("viscous_burgers", **raw)
    assert system.hidden_inputs == ("u0", "u0_x", "u0_t")


def test_bad_descriptor_rejected():
    with pytest.raises(ConfigError):
        viscous_burgers(nu=0.01, hidden_inputs=("u0", "u0_xxx"))


def test_unknown_system_rejected():
    with pytest.raises(ConfigError):
        build_system("heat_equation")


def test_closure_along_reference_trajectory():
    # n_k + hidden applied along the trajectory equals the numerical slope
    for system in (lotka_volterra(), cell_apoptosis()):
        T = system.domain.t_final
        grid = np.linspace(0.0, T, 601)
        ref = rk4_integrate(system, grid)
        h = grid[1] - grid[0]
        mid_slope = (ref.u[2:] - ref.u[:-2]) / (2 * h)
        rhs = np.stack([system.rhs_full(ref.u[k]) for k in range(1, len(grid) - 1)])
        err = np.max(np.abs(mid_slope - rhs))
        # central difference truncation dominates: O(h^2 * u''')
        assert err < 5e-4, system.name
