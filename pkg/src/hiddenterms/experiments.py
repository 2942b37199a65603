"""Config-driven experiment runner: single runs, sweeps, method comparisons.

An experiment config is one human-editable JSON object (see CONFIG_KEYS);
sweeps reference a base config plus axis overrides and write one aggregate
CSV. Every run directory contains a manifest with the full config and seeds,
and re-running with the same manifest reproduces every numeric artifact.
"""

import copy
import csv
import itertools
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .dynamics import build_system, hidden_input_exprs
from .errors import ConfigError, NumericsError
from .neural import forward, load_checkpoint, save_checkpoint
from .sampling import (Schedule, add_noise, burgers_reference, collocation_for,
                       dataset_from_csv, dataset_to_csv, collocation_to_csv,
                       rk4_integrate, sample_measurements, trajectory_states,
                       union_time_grid)
from .symreg import polynomial_library, threshold_sweep
from .trainer import (TrainConfig, TrainReport, train, evaluate_hidden_mse)
from .trainer import _pde_reference_jets
from .ude import UdeConfig, ude_solve, ude_train

CONFIG_KEYS = {
    "system": "system name: lotka_volterra | cell_apoptosis | viscous_burgers",
    "system_kwargs": "constructor options (params, hidden_mode, hidden_target, nu, hidden_inputs)",
    "schedule": "measurement schedule: {kind: count|spacing|times, n|spacing|times, spatial_subsample}",
    "noise": "noise level epsilon (0 for clean data)",
    "n_collocation": "number of interior collocation points",
    "n_boundary": "number of boundary collocation points (PDE only)",
    "train": "TrainConfig overrides (learning_rate, iterations, u_hidden, ...)",
    "ude": "UdeConfig overrides; presence enables the baseline in `compare`",
    "symreg": "symbolic regression: degree, thresholds, inputs: train|dense, ridge, auto_ridge",
    "seeds": "list of run seeds; medians are reported across them",
}


@dataclass
class ExperimentConfig:
    system: str
    system_kwargs: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=lambda: {"kind": "count", "n": 10})
    noise: float = 0.0
    n_collocation: int = 1000
    n_boundary: int = 0
    train: dict = field(default_factory=dict)
    ude: dict = None
    symreg: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.n_collocation < 1:
            raise ConfigError("n_collocation must be positive")
        if self.noise < 0:
            raise ConfigError("noise level must be nonnegative")
        self.build_system()          # fail early on bad system settings
        self.make_schedule()
        self.train_config(self.seeds[0])
        if self.ude is not None:
            self.ude_config(self.seeds[0])

    @staticmethod
    def from_dict(d):
        d = dict(d)
        unknown = set(d) - set(CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}; "
                              f"known: {sorted(CONFIG_KEYS)}")
        return ExperimentConfig(**d)

    @staticmethod
    def load(path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return ExperimentConfig.from_dict(raw)

    def to_dict(self):
        return asdict(self)

    def build_system(self):
        return build_system(self.system, **self.system_kwargs)

    def make_schedule(self):
        sd = dict(self.schedule)
        kind = sd.pop("kind", None)
        if kind == "count":
            return Schedule.count(sd["n"])
        if kind == "spacing":
            return Schedule.by_spacing(sd["spacing"])
        if kind == "times":
            return Schedule.at_times(sd["times"],
                                     sd.get("spatial_subsample", 256))
        raise ConfigError(f"schedule kind must be count|spacing|times, got {kind!r}")

    def train_config(self, seed):
        opts = dict(self.train)
        for key in ("u_hidden", "f_hidden", "b_hidden", "weights"):
            if key in opts:
                opts[key] = tuple(opts[key])
        system = self.build_system()
        opts.setdefault("hidden_mode", system.hidden_mode)
        return TrainConfig(seed=seed, **opts)

    def ude_config(self, seed):
        opts = dict(self.ude or {})
        if "hidden" in opts:
            opts["hidden"] = tuple(opts["hidden"])
        return UdeConfig(seed=seed, **opts)


# Sub-seeds for the independent random stages of one run.
def _noise_seed(seed):
    return 7919 * seed + 1


def _collocation_seed(seed):
    return 7919 * seed + 2


def make_problem(config, seed, reference=None):
    """Build (system, reference, dataset, collocation) for one seeded run."""
    system = config.build_system()
    schedule = config.make_schedule()
    if reference is None:
        reference = make_reference(config)
    dataset = sample_measurements(reference, schedule)
    if config.noise:
        dataset = add_noise(dataset, config.noise, _noise_seed(seed))
    colloc = collocation_for(system, config.n_collocation,
                             config.n_boundary, _collocation_seed(seed))
    return system, reference, dataset, colloc


def make_reference(config):
    system = config.build_system()
    schedule = config.make_schedule()
    if system.domain.spatial_dim == 0:
        times = schedule.resolve_times(system.domain.t_final)
        return rk4_integrate(system, union_time_grid(system.domain.t_final, times))
    return burgers_reference(system.params["nu"])


# ---------------------------------------------------------------------------
# Symbolic distillation protocol
# ---------------------------------------------------------------------------


def _symreg_samples(system, dataset, reference, mode, exclude_band=0.0):
    """Hidden-network input samples: measured states or dense reference states."""
    if mode == "train":
        if any("_" in d for d in system.hidden_inputs):
            raise ConfigError(
                "training-data symreg protocol needs state-only hidden inputs; "
                "use inputs='dense'")
        from .dynamics import StateJets
        view = StateJets([dataset.u[:, i] for i in range(system.state_dim)])
        return np.column_stack(hidden_input_exprs(view, system.hidden_inputs))
    if mode == "dense":
        if system.domain.spatial_dim == 0:
            _, states = trajectory_states(reference, 300)
            from .dynamics import StateJets
            view = StateJets([states[:, i] for i in range(system.state_dim)])
        else:
            view = _pde_reference_jets(reference, exclude_band)
        return np.column_stack(hidden_input_exprs(view, system.hidden_inputs))
    raise ConfigError(f"symreg inputs mode must be train|dense, got {mode!r}")


def symbolic_distill(f_net, system, dataset, reference, symreg_opts, phi=None):
    """Sweep thresholds per hidden output; returns rank-1 model dicts."""
    opts = dict(symreg_opts or {})
    degree = opts.get("degree", 3)
    thresholds = tuple(opts.get("thresholds", (0.01, 0.05, 0.1, 0.2)))
    mode = opts.get("inputs", "train")
    ridge = float(opts.get("ridge", 0.0))
    auto_ridge = float(opts.get("auto_ridge", 1e-8))
    band = float(opts.get("exclude_band", 0.0))

    samples = _symreg_samples(system, dataset, reference, mode, band)
    library = polynomial_library(system.hidden_input_labels, degree)
    ridge_used = ridge
    if samples.shape[0] < library.size and ridge_used <= 0:
        ridge_used = auto_ridge
    outputs = forward(f_net, samples)

    results = []
    for j in range(system.f_arity):
        target = None
        if system.symreg_targets is not None:
            target = system.symreg_targets[j]
        ranked, best = threshold_sweep(samples, outputs[:, j], library,
                                       thresholds, ridge=ridge_used,
                                       target_terms=target)
        entry = best.to_dict()
        entry["output"] = j
        entry["protocol"] = {"inputs": mode, "degree": degree,
                             "thresholds": list(thresholds),
                             "ridge": ridge_used,
                             "samples": int(samples.shape[0])}
        entry["candidates"] = [m.to_dict() for m in ranked]
        results.append(entry)
    return results


# ---------------------------------------------------------------------------
# Artifact writing
# ---------------------------------------------------------------------------


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def _hidden_eval_table(f_net, system, reference, phi, exclude_band=0.0):
    """Rows of (state grid, learned hidden output, true hidden output)."""
    from .dynamics import StateJets
    if system.domain.spatial_dim == 0:
        times, states = trajectory_states(reference, 300)
        view = StateJets([states[:, i] for i in range(system.state_dim)])
        lead = {"t": times}
        lead.update({f"u{i}": states[:, i] for i in range(system.state_dim)})
    else:
        view = _pde_reference_jets(reference, exclude_band)
        lead = {"u": np.asarray(view.u(0)), "u_x": np.asarray(view.u_x(0)),
                "u_t": np.asarray(view.u_t(0))}
    inputs = np.column_stack(hidden_input_exprs(view, system.hidden_inputs))
    pred = forward(f_net, inputs)
    true_cols = [np.asarray(c) for c in system.f_true(view)]
    cols = dict(lead)
    for j in range(system.f_arity):
        cols[f"f{j}_pred"] = pred[:, j]
        cols[f"f{j}_true"] = true_cols[j]
    return cols


def _write_csv_columns(path, cols):
    names = list(cols)
    n = len(np.asarray(cols[names[0]]))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for k in range(n):
            writer.writerow([repr(float(np.asarray(cols[c])[k])) for c in names])


def _write_burgers_grid(path, u_net, reference):
    xg, tg = np.meshgrid(reference.x, reference.t)
    pts = np.column_stack([xg.ravel(), tg.ravel()])
    pred = forward(u_net, pts).reshape(tg.shape)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "t", "u_ref", "u_pred"])
        for i in range(tg.shape[0]):
            for j in range(tg.shape[1]):
                writer.writerow([repr(float(reference.x[j])),
                                 repr(float(reference.t[i])),
                                 repr(float(reference.u[i, j])),
                                 repr(float(pred[i, j]))])


def run_experiment(config, out_dir, method="pinn", dry_run=False):
    """Execute every seed of a config; write artifacts and a summary.

    Artifacts per seed: data/collocation CSVs, network checkpoints, report
    JSON, loss-trace CSV, hidden-term evaluation CSV, symbolic-model JSON
    (and the solution grid CSV for the PDE system). The manifest records the
    full config, seed list, and package version.
    """
    if method not in ("pinn", "ude"):
        raise ConfigError(f"method must be pinn|ude, got {method!r}")
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "config": config.to_dict(),
        "method": method,
        "seeds": list(config.seeds),
        "version": __version__,
        "runs": {str(s): f"seed_{s}" for s in config.seeds},
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    if dry_run:
        return {"out_dir": out_dir, "dry_run": True, "manifest": manifest}

    reference = make_reference(config)
    per_seed = []
    for seed in config.seeds:
        run_dir = os.path.join(out_dir, f"seed_{seed}")
        os.makedirs(run_dir, exist_ok=True)
        system, _, dataset, colloc = make_problem(config, seed, reference)
        dataset_to_csv(dataset, os.path.join(run_dir, "dataset.csv"))
        collocation_to_csv(colloc, os.path.join(run_dir, "collocation.csv"))

        if method == "pinn":
            tc = config.train_config(seed)
            result = train(system, dataset, colloc, tc, reference=reference)
            u_net, f_net, b_net, phi, report = result
            save_checkpoint(u_net, os.path.join(run_dir, "u_net.json"),
                            init_seed=tc.seed, train_steps=tc.iterations)
            save_checkpoint(f_net, os.path.join(run_dir, "f_net.json"),
                            init_seed=tc.seed + 1, train_steps=tc.iterations)
            if b_net is not None:
                save_checkpoint(b_net, os.path.join(run_dir, "b_net.json"),
                                init_seed=tc.seed + 2, train_steps=tc.iterations)
            if system.domain.spatial_dim == 1:
                _write_burgers_grid(os.path.join(run_dir, "solution_grid.csv"),
                                    u_net, reference)
        else:
            uc = config.ude_config(seed)
            f_net, report = ude_train(system, dataset, uc, reference=reference)
            phi = None
            save_checkpoint(f_net, os.path.join(run_dir, "h_net.json"),
                            init_seed=uc.seed, train_steps=uc.iterations)

        report.traces_to_csv(os.path.join(run_dir, "loss_trace.csv"))
        _write_json(os.path.join(run_dir, "report.json"), report.to_dict())
        band = float(config.train.get("exclude_band", 0.0))
        _write_csv_columns(os.path.join(run_dir, "hidden_eval.csv"),
                           _hidden_eval_table(f_net, system, reference, phi,
                                              band))
        if config.symreg is not None:
            models = symbolic_distill(f_net, system, dataset, reference,
                                      config.symreg, phi=phi)
            _write_json(os.path.join(run_dir, "symbolic.json"), models)
        per_seed.append({"seed": seed, "hidden_mse": report.hidden_mse,
                         "surrogate_mse": report.surrogate_mse,
                         "phi": phi})

    summary = {
        "method": method,
        "per_seed": per_seed,
        "median_hidden_mse": float(np.median([r["hidden_mse"] for r in per_seed])),
        "median_surrogate_mse": float(np.median([r["surrogate_mse"]
                                                 for r in per_seed])),
    }
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    return {"out_dir": out_dir, "summary": summary, "manifest": manifest}


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def _apply_override(raw, path, value):
    parts = path.split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def load_sweep(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read sweep config {path}: {exc}") from exc
    if "base" in raw:
        base = raw["base"]
    elif "base_path" in raw:
        base_path = raw["base_path"]
        if not os.path.isabs(base_path):
            base_path = os.path.join(os.path.dirname(path), base_path)
        with open(base_path) as fh:
            base = json.load(fh)
    else:
        raise ConfigError("sweep config needs 'base' or 'base_path'")
    axes = raw.get("axes", {})
    if not axes:
        raise ConfigError("sweep config needs nonempty 'axes'")
    return base, axes


def sweep_cells(base, axes):
    """Cartesian product of axis overrides; yields (overrides, config)."""
    names = list(axes)
    cells = []
    for values in itertools.product(*(axes[n] for n in names)):
        raw = copy.deepcopy(base)
        overrides = dict(zip(names, values))
        for path, value in overrides.items():
            _apply_override(raw, path, value)
        cells.append((overrides, ExperimentConfig.from_dict(raw)))
    return cells


def _run_cell(args):
    idx, overrides, config, out_dir, method = args
    cell_dir = os.path.join(out_dir, f"cell_{idx:03d}")
    try:
        result = run_experiment(config, cell_dir, method=method)
        return {"cell": idx, "overrides": overrides, "status": "ok",
                **result["summary"]}
    except (ConfigError, NumericsError) as exc:
        return {"cell": idx, "overrides": overrides, "status": "failed",
                "error": str(exc)}


def run_sweep(base, axes, out_dir, method="pinn", workers=1):
    """Run every cell; aggregate per-cell medians into sweep.csv.

    Cell failures are recorded and the sweep continues; the returned dict's
    `failures` counts them.
    """
    os.makedirs(out_dir, exist_ok=True)
    cells = sweep_cells(base, axes)
    _write_json(os.path.join(out_dir, "sweep_manifest.json"),
                {"base": base, "axes": axes, "version": __version__,
                 "method": method, "n_cells": len(cells)})
    jobs = [(i, ov, cfg, out_dir, method) for i, (ov, cfg) in enumerate(cells)]
    if workers > 1:
        import multiprocessing as mp
        with mp.get_context("fork").Pool(workers) as pool:
            rows = pool.map(_run_cell, jobs)
    else:
        rows = [_run_cell(j) for j in jobs]

    axis_names = list(axes)
    csv_path = os.path.join(out_dir, "sweep.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(axis_names + ["status", "median_hidden_mse",
                                      "median_surrogate_mse"])
        for row in rows:
            writer.writerow(
                [row["overrides"][n] for n in axis_names]
                + [row["status"], row.get("median_hidden_mse", ""),
                   row.get("median_surrogate_mse", "")])
    failures = sum(1 for r in rows if r["status"] != "ok")
    return {"out_dir": out_dir, "rows": rows, "failures": failures,
            "csv": csv_path}


# ---------------------------------------------------------------------------
# Method comparison
# ---------------------------------------------------------------------------


def compare_methods(config, out_dir):
    """Train both methods on identical datasets/seeds; emit per-seed CSV.

    The summary reports median hidden-term MSEs and which method won. When
    symbolic regression is configured, each method's recovered coefficients
    are included (one row per seed and hidden output).
    """
    if config.ude is None:
        raise ConfigError("compare requires a 'ude' section in the config")
    os.makedirs(out_dir, exist_ok=True)
    pinn = run_experiment(config, os.path.join(out_dir, "pinn"), method="pinn")
    ude = run_experiment(config, os.path.join(out_dir, "ude"), method="ude")

    rows = []
    for rp, ru in zip(pinn["summary"]["per_seed"], ude["summary"]["per_seed"]):
        rows.append({"seed": rp["seed"], "pinn_hidden_mse": rp["hidden_mse"],
                     "ude_hidden_mse": ru["hidden_mse"]})
    csv_path = os.path.join(out_dir, "comparison.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "pinn_hidden_mse", "ude_hidden_mse"])
        for r in rows:
            writer.writerow([r["seed"], repr(r["pinn_hidden_mse"]),
                             repr(r["ude_hidden_mse"])])

    med_p = pinn["summary"]["median_hidden_mse"]
    med_u = ude["summary"]["median_hidden_mse"]
    summary = {
        "median_pinn_hidden_mse": med_p,
        "median_ude_hidden_mse": med_u,
        "winner": "pinn" if med_p < med_u else "ude",
        "per_seed": rows,
    }
    _write_json(os.path.join(out_dir, "compare_summary.json"), summary)
    return {"out_dir": out_dir, "summary": summary, "csv": csv_path}


def symfit_checkpoint(checkpoint_path, config, out_path):
    """Symbolic regression on a stored hidden-term network checkpoint."""
    f_net, _ = load_checkpoint(checkpoint_path)
    system = config.build_system()
    reference = make_reference(config)
    seed = config.seeds[0]
    _, _, dataset, _ = make_problem(config, seed, reference)
    models = symbolic_distill(f_net, system, dataset, reference, config.symreg)
    _write_json(out_path, models)
    return models
