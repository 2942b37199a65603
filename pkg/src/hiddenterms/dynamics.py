"""Differential systems: domains, known/hidden operator parts, built-in models.

Operator callables receive a `StateJets` view and build expressions with
plain arithmetic operators, so the same system definition works on numpy
arrays (data synthesis, evaluation) and on autodiff tape nodes (training).
"""

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class DomainSpec:
    """Space-time domain: `spatial_dim` 0 means an ODE with no boundary."""

    spatial_dim: int
    bounds: tuple          # ((lo, hi), ...) per spatial dimension
    t_final: float

    def __post_init__(self):
        if self.t_final <= 0:
            raise ConfigError("time horizon must be positive")
        if len(self.bounds) != self.spatial_dim:
            raise ConfigError("one bounds pair per spatial dimension required")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ConfigError(f"degenerate spatial bounds ({lo}, {hi})")


class StateJets:
    """Component-wise access to state values and their tagged derivatives.

    Entries may be floats, numpy arrays, or tape nodes; operator callables
    stay agnostic to which.
    """

    def __init__(self, values, dx=None, dxx=None, dt=None):
        self.values = list(values)
        self._dx = list(dx) if dx is not None else None
        self._dxx = list(dxx) if dxx is not None else None
        self._dt = list(dt) if dt is not None else None

    def u(self, i):
        return self.values[i]

    def u_x(self, i):
        if self._dx is None:
            raise ConfigError("spatial derivative u_x not available for this state")
        return self._dx[i]

    def u_xx(self, i):
        if self._dxx is None:
            raise ConfigError("second spatial derivative u_xx not available")
        return self._dxx[i]

    def u_t(self, i):
        if self._dt is None:
            raise ConfigError("time derivative u_t not available for this state")
        return self._dt[i]


_DESC_RE = re.compile(r"^u(\d+)(?:_(x|xx|t))?$")


def parse_hidden_input(desc):
    """Parse a hidden-input descriptor like 'u0', 'u1', 'u0_x', 'u0_xx', 'u0_t'."""
    m = _DESC_RE.match(desc)
    if not m:
        raise ConfigError(
            f"bad hidden-input descriptor {desc!r} (expected u<i>[_x|_xx|_t])")
    return int(m.group(1)), m.group(2) or "u"


def hidden_input_exprs(view, descriptors):
    """Resolve descriptors against a StateJets view, in order."""
    out = []
    for desc in descriptors:
        comp, kind = parse_hidden_input(desc)
        if kind == "u":
            out.append(view.u(comp))
        elif kind == "x":
            out.append(view.u_x(comp))
        elif kind == "xx":
            out.append(view.u_xx(comp))
        else:
            out.append(view.u_t(comp))
    return out


@dataclass
class DifferentialSystem:
    """A problem definition: du/dt = n_k[u] + hidden[u] on a space-time domain.

    `n_k` maps a StateJets view to the known right-hand-side contribution per
    state component. `f_true` (when present, for synthetic benchmarks) maps
    the view to the true hidden function's outputs; `hidden_apply` embeds
    those outputs into per-component contributions (identity for decoupled
    hidden terms, sign/scale coupling otherwise).
    """

    name: str
    domain: DomainSpec
    state_dim: int
    n_k: callable
    hidden_apply: callable
    hidden_inputs: tuple
    f_arity: int
    f_true: callable = None
    boundary: str = "none"            # "none" | "dirichlet-known"
    u0: object = None                 # (m,) array for ODE, callable x->u for PDE
    params: dict = field(default_factory=dict)
    hidden_mode: str = "decoupled"    # "decoupled" | "shared_scaled"
    true_phi: float = None
    jet_tags: tuple = ()              # input axes (x..., t) carrying derivatives
    jet_pairs: tuple = ()             # second-order pairs needed by n_k
    hidden_input_labels: tuple = None  # readable names for symbolic output
    symreg_targets: tuple = None      # per hidden output: exponent tuples, or None

    def __post_init__(self):
        for desc in self.hidden_inputs:
            parse_hidden_input(desc)   # rejects orders above 2 by grammar
        if self.hidden_input_labels is None:
            self.hidden_input_labels = tuple(self.hidden_inputs)
        if self.boundary == "none" and self.domain.spatial_dim != 0:
            raise ConfigError("spatial systems must declare a boundary kind")
        if self.boundary != "none" and self.domain.spatial_dim == 0:
            raise ConfigError("ODE systems (spatial_dim 0) have no boundary")

    @property
    def input_dim(self):
        """Network input width: spatial coordinates then time."""
        return self.domain.spatial_dim + 1

    @property
    def time_axis(self):
        return self.domain.spatial_dim

    def rhs_full(self, u):
        """Known part plus true hidden part at ODE state `u` (numpy path)."""
        if self.f_true is None:
            raise ConfigError(f"system {self.name} has no true hidden term")
        view = StateJets([np.asarray(u, dtype=np.float64)[..., i]
                          for i in range(self.state_dim)])
        total = self.rhs_known_plus(view, self.f_true(view))
        return np.stack([np.asarray(c, dtype=np.float64) for c in total], axis=-1)

    def rhs_known(self, u):
        """Known part only at ODE state `u` (numpy path)."""
        view = StateJets([np.asarray(u, dtype=np.float64)[..., i]
                          for i in range(self.state_dim)])
        return np.stack([np.asarray(c, dtype=np.float64) for c in self.n_k(view)],
                        axis=-1)

    def rhs_known_plus(self, view, f_cols):
        """Per-component n_k(view) + hidden_apply(f_cols); expression-generic."""
        known = self.n_k(view)
        contrib = self.hidden_apply(f_cols, self.true_phi)
        return [k + c for k, c in zip(known, contrib)]


# ---------------------------------------------------------------------------
# Lotka-Volterra predator-prey model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LvParams:
    alpha: float = 1.3
    beta: float = 0.9
    gamma: float = 0.8
    delta: float = 1.8
    x0: float = 0.44249296
    y0: float = 4.6280594
    t_final: float = 3.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta", "x0", "y0"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"Lotka-Volterra parameter {name} must be positive")


def lotka_volterra(params=None, hidden_mode="decoupled"):
    """Predator-prey system with the interaction terms treated as hidden.

    Known part: (alpha*x, -delta*y). Hidden target: (-beta*x*y, gamma*x*y),
    learned either as two decoupled functions or, in "shared_scaled" mode, as
    a single function f with the pair represented as (-phi*f, f).
    """
    p = params or LvParams()
    a, b, g, d = p.alpha, p.beta, p.gamma, p.delta

    def n_k(s):
        return [a * s.u(0), -d * s.u(1)]

    if hidden_mode == "decoupled":
        def f_true(s):
            return [-b * (s.u(0) * s.u(1)), g * (s.u(0) * s.u(1))]

        def hidden_apply(f_cols, phi=None):
            return [f_cols[0], f_cols[1]]

        f_arity, true_phi = 2, None
    elif hidden_mode == "shared_scaled":
        def f_true(s):
            return [g * (s.u(0) * s.u(1))]

        def hidden_apply(f_cols, phi):
            return [-(phi * f_cols[0]), f_cols[0]]

        f_arity, true_phi = 1, b / g
    else:
        raise ConfigError(f"unknown hidden_mode {hidden_mode!r}")

    return DifferentialSystem(
        name="lotka_volterra",
        domain=DomainSpec(0, (), p.t_final),
        state_dim=2,
        n_k=n_k,
        f_true=f_true,
        hidden_apply=hidden_apply,
        hidden_inputs=("u0", "u1"),
        f_arity=f_arity,
        u0=np.array([p.x0, p.y0]),
        params={"alpha": a, "beta": b, "gamma": g, "delta": d,
                "x0": p.x0, "y0": p.y0, "t_final": p.t_final},
        hidden_mode=hidden_mode,
        true_phi=true_phi,
        jet_tags=(0,),
        jet_pairs=(),
        hidden_input_labels=("x", "y"),
        symreg_targets=tuple(((1, 1),) for _ in range(f_arity)),
    )


# ---------------------------------------------------------------------------
# Cell apoptosis model (three-state kinetic network)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ApoptosisParams:
    """Rate constants for the p53/Akt apoptosis switch.

    The defaults below are a documented stand-in calibrated to give smooth,
    bounded dynamics from the standard initial state; they are externally
    sourced rather than derived here, and every experiment should treat them
    as configuration. Michaelis-Menten offsets (j_*) must stay positive.
    """

    k0: float = 0.05
    k1: float = 0.9
    km1: float = 0.18
    k2: float = 0.6
    km3: float = 0.2
    kd: float = 0.2
    j1: float = 0.1
    jm1: float = 0.1
    j2: float = 0.3
    jm3: float = 0.1
    p53_0: float = 0.248
    akts_0: float = 0.0973
    akt_0: float = 0.0027
    t_final: float = 10.0

    def __post_init__(self):
        for name in ("k0", "k1", "km1", "k2", "km3", "kd"):
            if getattr(self, name) < 0:
                raise ConfigError(f"apoptosis rate {name} must be nonnegative")
        for name in ("j1", "jm1", "j2", "jm3"):
            if getattr(self, name) <= 0:
                raise ConfigError(
                    f"apoptosis offset {name} must be strictly positive "
                    "(Michaelis-Menten denominator)")


def cell_apoptosis(params=None, hidden_target="v1"):
    """Apoptosis kinetics with one interaction term (v1 or v2) treated as hidden.

    State ordering: (p53, Akt_s, Akt). The inactive-Akt equation is the exact
    negation of the active-Akt equation, so dAkt_s/dt + dAkt/dt == 0 holds
    bit-exactly for the full right-hand side.
    """
    p = params or ApoptosisParams()

    def v1(s):
        return p.k1 * (s.u(2) * (p.j1 + s.u(1)))

    def vm1(s):
        return p.km1 * (s.u(1) / (p.jm1 + s.u(1)))

    def v2(s):
        return p.k2 * ((s.u(1) * s.u(0)) / (p.j2 + s.u(0)))

    def vm3(s):
        return p.km3 * ((s.u(0) * s.u(1)) / (p.jm3 + s.u(1)))

    if hidden_target == "v1":
        def n_k(s):
            akts_known = vm1(s) + vm3(s)
            return [p.k0 - v2(s) - p.kd * s.u(0), -akts_known, akts_known]

        def f_true(s):
            return [v1(s)]

        def hidden_apply(f_cols, phi=None):
            return [0.0, f_cols[0], -f_cols[0]]
    elif hidden_target == "v2":
        def n_k(s):
            akts_rate = v1(s) - vm1(s) - vm3(s)
            return [p.k0 - p.kd * s.u(0), akts_rate, -akts_rate]

        def f_true(s):
            return [v2(s)]

        def hidden_apply(f_cols, phi=None):
            return [-f_cols[0], 0.0, 0.0]
    else:
        raise ConfigError(f"hidden_target must be 'v1' or 'v2', got {hidden_target!r}")

    return DifferentialSystem(
        name="cell_apoptosis",
        domain=DomainSpec(0, (), p.t_final),
        state_dim=3,
        n_k=n_k,
        f_true=f_true,
        hidden_apply=hidden_apply,
        hidden_inputs=("u0", "u1", "u2"),
        f_arity=1,
        u0=np.array([p.p53_0, p.akts_0, p.akt_0]),
        params={k: getattr(p, k) for k in (
            "k0", "k1", "km1", "k2", "km3", "kd", "j1", "jm1", "j2", "jm3",
            "p53_0", "akts_0", "akt_0", "t_final")},
        hidden_mode="decoupled",
        jet_tags=(0,),
        jet_pairs=(),
        hidden_input_labels=("p53", "akts", "akt"),
        symreg_targets=None,
    )


# ---------------------------------------------------------------------------
# Viscous Burgers equation
# ---------------------------------------------------------------------------


def viscous_burgers(nu, hidden_inputs=("u0", "u0_x", "u0_t")):
    """u_t = nu*u_xx + hidden, with the advection term -u*u_x hidden.

    Domain [-1, 1] x [0, 1], u(x, 0) = -sin(pi x), homogeneous Dirichlet
    boundaries. By default the hidden-term network sees (u, u_x, u_t); pass
    hidden_inputs=("u0", "u0_x") for the variant without the time derivative.
    """
    if nu <= 0:
        raise ConfigError("viscosity nu must be positive")

    def n_k(s):
        return [nu * s.u_xx(0)]

    def f_true(s):
        return [-(s.u(0) * s.u_x(0))]

    def hidden_apply(f_cols, phi=None):
        return [f_cols[0]]

    def u0(x):
        return -np.sin(np.pi * np.asarray(x, dtype=np.float64))

    label_map = {"u0": "u", "u0_x": "u_x", "u0_xx": "u_xx", "u0_t": "u_t"}
    labels = tuple(label_map.get(d, d) for d in hidden_inputs)
    target = None
    if "u0" in hidden_inputs and "u0_x" in hidden_inputs:
        target = ((tuple(1 if d in ("u0", "u0_x") else 0
                         for d in hidden_inputs),),)

    return DifferentialSystem(
        name="viscous_burgers",
        domain=DomainSpec(1, ((-1.0, 1.0),), 1.0),
        state_dim=1,
        n_k=n_k,
        f_true=f_true,
        hidden_apply=hidden_apply,
        hidden_inputs=tuple(hidden_inputs),
        f_arity=1,
        boundary="dirichlet-known",
        u0=u0,
        params={"nu": nu},
        hidden_mode="decoupled",
        jet_tags=(0, 1),
        jet_pairs=((0, 0),),
        hidden_input_labels=labels,
        symreg_targets=target,
    )


_BUILDERS = {
    "lotka_volterra": lambda kw: lotka_volterra(
        LvParams(**kw.get("params", {})), kw.get("hidden_mode", "decoupled")),
    "cell_apoptosis": lambda kw: cell_apoptosis(
        ApoptosisParams(**kw.get("params", {})), kw.get("hidden_target", "v1")),
    "viscous_burgers": lambda kw: viscous_burgers(
        kw.get("nu", 1.0 / (1000.0 * np.pi)),
        tuple(kw.get("hidden_inputs", ("u0", "u0_x", "u0_t")))),
}


def build_system(name, **kwargs):
    """Construct a registered system by name (used by experiment configs)."""
    if name not in _BUILDERS:
        raise ConfigError(
            f"unknown system {name!r}; registered: {sorted(_BUILDERS)}")
    return _BUILDERS[name](kwargs)
