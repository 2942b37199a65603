"""Distillation of a hidden-term network into a sparse symbolic formula.

Sequential thresholded least squares over a monomial library, with candidate
models from a threshold sweep ranked by Pareto non-domination on
(complexity, fit error).
"""

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditioningError, ConfigError
from .neural import forward


@dataclass(frozen=True)
class BasisLibrary:
    """Monomial terms over named inputs; exponent tuples align with names."""

    input_names: tuple
    exponents: tuple

    def __post_init__(self):
        seen = set()
        for e in self.exponents:
            if len(e) != len(self.input_names):
                raise ConfigError(f"exponent tuple {e} does not match inputs")
            if e in seen:
                raise ConfigError(f"duplicate basis term {e}")
            seen.add(e)

    @property
    def size(self):
        return len(self.exponents)

    def design_matrix(self, inputs):
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[1] != len(self.input_names):
            raise ConfigError(
                f"inputs shape {inputs.shape} does not match library over "
                f"{self.input_names}")
        cols = []
        for e in self.exponents:
            col = np.ones(inputs.shape[0])
            for j, p in enumerate(e):
                if p:
                    col = col * inputs[:, j] ** p
            cols.append(col)
        return np.column_stack(cols)

    def term_name(self, e):
        parts = []
        for name, p in zip(self.input_names, e):
            if p == 1:
                parts.append(name)
            elif p > 1:
                parts.append(f"{name}^{p}")
        return "*".join(parts) if parts else "1"


def polynomial_library(input_names, degree=3):
    """All monomials of total degree <= degree, including the constant."""
    if degree < 0:
        raise ConfigError("degree must be nonnegative")
    names = tuple(input_names)
    terms = []

    def rec(prefix, remaining, budget):
        if remaining == 0:
            terms.append(tuple(prefix))
            return
        for p in range(budget + 1):
            rec(prefix + [p], remaining - 1, budget - p)

    rec([], len(names), degree)
    terms.sort(key=lambda e: (sum(e), e))
    return BasisLibrary(names, tuple(terms))


@dataclass
class SymbolicModel:
    """Active basis terms with coefficients, plus fit diagnostics."""

    terms: list                      # (exponent tuple, coefficient) pairs
    mse: float
    library: BasisLibrary
    threshold: float = None
    recovered: bool = None
    meta: dict = field(default_factory=dict)

    @property
    def complexity(self):
        return len(self.terms)

    def expression(self):
        if not self.terms:
            return "0"
        parts = [f"{c:.6g}*{self.library.term_name(e)}" if e != _const(self.library)
                 else f"{c:.6g}" for e, c in self.terms]
        return " + ".join(parts).replace("+ -", "- ")

    def coefficient(self, exponents):
        for e, c in self.terms:
            if e == tuple(exponents):
                return c
        return None

    def to_dict(self):
        return {
            "inputs": list(self.library.input_names),
            "terms": [{"term": self.library.term_name(e),
                       "exponents": list(e), "coefficient": c}
                      for e, c in self.terms],
            "expression": self.expression(),
            "mse": self.mse,
            "complexity": self.complexity,
            "threshold": self.threshold,
            "recovered": self.recovered,
            "meta": self.meta,
        }


def _const(library):
    return tuple(0 for _ in library.input_names)


SampleTable = namedtuple("SampleTable", "inputs outputs")


def evaluate_network_on_data(f_net, states):
    """Evaluate a hidden-term network on state samples; the regression table."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != f_net.widths[0]:
        raise ConfigError(
            f"state samples of width {states.shape[-1]} do not match network "
            f"input width {f_net.widths[0]}")
    return SampleTable(states, forward(f_net, states))


def _solve(a, y, ridge):
    if ridge > 0:
        g = a.T @ a + ridge * np.eye(a.shape[1])
        return np.linalg.solve(g, a.T @ y)
    coef, _, rank, _ = np.linalg.lstsq(a, y, rcond=None)
    if rank < a.shape[1]:
        raise ConditioningError(
            f"design matrix rank {rank} < {a.shape[1]} terms; "
            "pass ridge > 0 to regularize", rank=rank, terms=a.shape[1])
    return coef


def sparse_fit(inputs, targets, library, threshold, ridge=0.0,
               target_terms=None):
    """Sequential thresholded least squares onto the monomial library.

    Alternates a least-squares fit with zeroing of coefficients below
    `threshold` until the active set is stable, then refits and reports the
    surviving terms. With fewer samples than library terms a positive
    `ridge` is required. When `target_terms` is given, the model's
    `recovered` flag records whether the active set is exactly that set.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if inputs.shape[0] != targets.shape[0]:
        raise ConfigError("inputs and targets disagree on sample count")
    a_full = library.design_matrix(inputs)
    if inputs.shape[0] < library.size and ridge <= 0:
        raise ConditioningError(
            f"{inputs.shape[0]} samples for {library.size} terms requires ridge",
            samples=inputs.shape[0], terms=library.size)

    active = np.ones(library.size, dtype=bool)
    for _ in range(library.size + 1):
        if not active.any():
            break
        coef = _solve(a_full[:, active], targets, ridge)
        keep = np.abs(coef) >= threshold
        new_active = active.copy()
        new_active[np.flatnonzero(active)[~keep]] = False
        if np.array_equal(new_active, active):
            break
        active = new_active

    if active.any():
        coef = _solve(a_full[:, active], targets, ridge)
        pred = a_full[:, active] @ coef
        terms = [(library.exponents[i], float(c))
                 for i, c in zip(np.flatnonzero(active), coef)]
    else:
        pred = np.zeros_like(targets)
        terms = []
    mse = float(np.mean((pred - targets) ** 2))

    recovered = None
    if target_terms is not None:
        recovered = {e for e, _ in terms} == {tuple(e) for e in target_terms}
    return SymbolicModel(terms=terms, mse=mse, library=library,
                         threshold=threshold, recovered=recovered,
                         meta={"ridge": ridge, "samples": int(inputs.shape[0])})


def _dominates(a, b):
    return (a.complexity <= b.complexity and a.mse <= b.mse
            and (a.complexity < b.complexity or a.mse < b.mse))


def pareto_rank(models):
    """Non-dominated sort on (complexity, mse); fronts ordered internally
    by lower complexity, then lower mse."""
    models = list(models)
    if not models:
        raise ConfigError("pareto_rank requires at least one model")
    remaining = list(range(len(models)))
    ranked = []
    while remaining:
        front = [i for i in remaining
                 if not any(_dominates(models[j], models[i])
                            for j in remaining if j != i)]
        front.sort(key=lambda i: (models[i].complexity, models[i].mse))
        ranked.extend(front)
        remaining = [i for i in remaining if i not in front]
    return [models[i] for i in ranked]


def threshold_sweep(inputs, targets, library, thresholds=(0.01, 0.05, 0.1, 0.2),
                    ridge=0.0, target_terms=None):
    """Fit at each threshold and return (ranked models, best model)."""
    models = [sparse_fit(inputs, targets, library, th, ridge=ridge,
                         target_terms=target_terms) for th in thresholds]
    unique = []
    seen = set()
    for m in models:
        key = tuple(sorted(m.terms))
        if key not in seen:
            seen.add(key)
            unique.append(m)
    ranked = pareto_rank(unique)
    return ranked, ranked[0]
