"""Sweep orchestration: declarative JSON configs in, CSV tables out.

Subcommands
    curve     one-axis profile (parameter-wise or sample-wise)
    phase     full (N/D, P/D) grid
    agree     theory vs Monte Carlo gate; exit 3 when max |z| > 3
    realdata  random-feature runs on MNIST / CIFAR-10 pipelines
    kappa     print the equivalence constants for an activation

Exit codes: 0 success, 2 config error, 3 agreement-gate failure, 4 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (ConvergenceError, NumericalError, ParameterError,
                     ParseError, SingularityError)
from .gaussmoments import Activation, kappa_constants
from .montecarlo import (empirical_errors, logistic_fit, ridge_fit,
                         sample_dataset, sample_feature_map)
from .realdata import (binary_task, corrupt_labels, downscale, load_cifar10,
                       load_mnist, pca_apply, pca_fit, saliency_rescale)
from .replica import (BlockModel, Channel, OrderParams, SaddleSolution,
                      solve_saddle_point)

THEORY_COLUMNS = ["n_over_d", "p_over_d", "eps_g_theory", "eps_t_theory",
                  "rho", "m", "q", "v", "converged", "iterations"]
MC_COLUMNS = ["eps_g_mc_mean", "eps_g_mc_se", "eps_t_mc_mean", "eps_t_mc_se",
              "seeds_used"]
REALDATA_COLUMNS = ["n_over_d", "p_over_d", "alpha", "loss", "seeds_used",
                    "eps_t_mean", "eps_t_se", "eps_g_mean", "eps_g_se",
                    "eps_t_median", "eps_g_median"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Simulation:
    d: int = 100
    seeds: int = 10
    seed: int = 0
    test_samples: int = 4000

    def __post_init__(self):
        if self.d < 20:
            raise ConfigError("simulation.d must be at least 20")
        if self.seeds < 1:
            raise ConfigError("simulation.seeds must be at least 1")


@dataclass(frozen=True)
class Solver:
    tol: float = 1e-9
    damping: float = 0.5
    max_iter: int = 10000


@dataclass(frozen=True)
class RunConfig:
    model: BlockModel
    activation: Activation
    channel: Channel
    lam: float
    p_over_d: tuple[float, ...]
    n_over_d: tuple[float, ...]
    simulation: Simulation | None
    solver: Solver
    output_path: str

    def __post_init__(self):
        for name, grid in (("p_over_d", self.p_over_d), ("n_over_d", self.n_over_d)):
            if len(grid) == 0:
                raise ConfigError(f"grid.{name} must be non-empty")
            if any(g <= 0 for g in grid):
                raise ConfigError(f"grid.{name} entries must be positive")


def _parse_model(node) -> BlockModel:
    if "blocks" in node:
        return BlockModel(blocks=tuple(tuple(b) for b in node["blocks"]))
    if "strong_weak" in node:
        sw = node["strong_weak"]
        return BlockModel.strong_weak(sw["phi1"], sw["r_x"], sw["r_beta"])
    if node.get("isotropic", False):
        return BlockModel.isotropic()
    raise ConfigError("model needs 'blocks', 'strong_weak' or 'isotropic'")


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if overrides:
        doc.update({k: v for k, v in overrides.items() if v is not None})
    try:
        channel = doc["channel"]
        sim = doc.get("simulation")
        return RunConfig(
            model=_parse_model(doc["model"]),
            activation=Activation(doc.get("activation", "tanh")),
            channel=Channel(kind=channel["kind"], delta=channel.get("delta", 0.0)),
            lam=float(doc["lambda"]),
            p_over_d=tuple(float(v) for v in doc["grid"]["p_over_d"]),
            n_over_d=tuple(float(v) for v in doc["grid"]["n_over_d"]),
            simulation=Simulation(**sim) if sim is not None else None,
            solver=Solver(**doc.get("solver", {})),
            output_path=doc.get("output_path", "results.csv"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def _solve_theory(config: RunConfig, nod: float, pod: float,
                  init: OrderParams | None) -> SaddleSolution:
    return solve_saddle_point(
        model=config.model, channel=config.channel, activation=config.activation,
        alpha=nod / pod, gamma=1.0 / pod, lam=config.lam,
        damping=config.solver.damping, tol=config.solver.tol,
        max_iter=config.solver.max_iter, init=init)


def _mc_point(config: RunConfig, nod: float, pod: float, point_index: int):
    """Per-seed empirical errors at one grid point; deterministic in the config seed."""
    sim = config.simulation
    d = sim.d
    n = max(int(round(nod * d)), 1)
    p = max(int(round(pod * d)), 1)
    eps_t, eps_g = [], []
    for k in range(sim.seeds):
        state = np.random.SeedSequence([sim.seed, point_index, k]).generate_state(3)
        train = sample_dataset(config.model, config.channel, n, d, int(state[0]))
        test = sample_dataset(config.model, config.channel, sim.test_samples, d,
                              int(state[1]), teacher=train.teacher)
        fmap = sample_feature_map(p, d, config.activation, int(state[2]))
        z = fmap.features(train.inputs)
        if config.channel.loss == "logistic":
            student = logistic_fit(z, train.labels, config.lam)
        else:
            student = ridge_fit(z, train.labels, config.lam)
        et, eg = empirical_errors(student, fmap, train, test)
        eps_t.append(et)
        eps_g.append(eg)
    return np.asarray(eps_t), np.asarray(eps_g)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    if values.size < 2:
        return float(values.mean()), float("nan")
    return float(values.mean()), float(np.std(values, ddof=1) / np.sqrt(values.size))


def _theory_row(nod, pod, sol: SaddleSolution) -> dict:
    return {
        "n_over_d": nod, "p_over_d": pod,
        "eps_g_theory": sol.eps_g, "eps_t_theory": sol.eps_t,
        "rho": sol.stats.rho, "m": sol.stats.m, "q": sol.stats.q, "v": sol.stats.v,
        "converged": int(sol.converged), "iterations": sol.iterations,
    }


def _simulate_rows(config: RunConfig, rows: list[dict], points: list[tuple[float, float]],
                   threads: int) -> None:
    sim = config.simulation
    results: list = [None] * len(points)

    def work(idx: int):
        nod, pod = points[idx]
        return _mc_point(config, nod, pod, idx)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for idx, res in zip(range(len(points)), pool.map(work, range(len(points)))):
                results[idx] = res
    else:
        for idx in range(len(points)):
            results[idx] = work(idx)
    for row, res in zip(rows, results):
        eps_t, eps_g = res
        gm, gs = _mean_se(eps_g)
        tm, ts = _mean_se(eps_t)
        row["eps_g_mc_mean"] = gm
        row["eps_t_mc_mean"] = tm
        if sim.seeds >= 2:
            row["eps_g_mc_se"] = gs
            row["eps_t_mc_se"] = ts
        row["seeds_used"] = sim.seeds


def _columns(config: RunConfig) -> list[str]:
    cols = list(THEORY_COLUMNS)
    if config.simulation is not None:
        if config.simulation.seeds >= 2:
            cols += MC_COLUMNS
        else:
            cols += ["eps_g_mc_mean", "eps_t_mc_mean", "seeds_used"]
    return cols


def run_curve(config: RunConfig, axis: str, threads: int = 1) -> list[dict]:
    """One row per point along the varying axis; the fixed axis must be a single value."""
    if axis == "params":
        if len(config.n_over_d) != 1:
            raise ConfigError("parameter-wise curve needs exactly one n_over_d value")
        points = [(config.n_over_d[0], p) for p in config.p_over_d]
    elif axis == "samples":
        if len(config.p_over_d) != 1:
            raise ConfigError("sample-wise curve needs exactly one p_over_d value")
        points = [(n, config.p_over_d[0]) for n in config.n_over_d]
    else:
        raise ConfigError(f"axis must be 'params' or 'samples', got {axis!r}")
    rows = []
    init = None
    for nod, pod in points:
        sol = _solve_theory(config, nod, pod, init)
        init = sol.order          # warm start along the sweep direction
        rows.append(_theory_row(nod, pod, sol))
    if config.simulation is not None:
        _simulate_rows(config, rows, points, threads)
    return rows


def run_phase_space(config: RunConfig, threads: int = 1) -> list[dict]:
    """Cartesian grid, n outer and p inner, warm-started along increasing P/D."""
    if len(config.p_over_d) < 2 or len(config.n_over_d) < 2:
        raise ConfigError("phase space needs at least 2 points on each axis")
    points, rows = [], []
    for nod in config.n_over_d:
        init = None
        for pod in config.p_over_d:
            sol = _solve_theory(config, nod, pod, init)
            init = sol.order
            rows.append(_theory_row(nod, pod, sol))
            points.append((nod, pod))
    if config.simulation is not None:
        _simulate_rows(config, rows, points, threads)
    return rows


def agreement_zscores(rows: list[dict]) -> dict:
    """Per-point z-scores of theory against the Monte Carlo means."""
    zs = []
    for row in rows:
        for metric in ("eps_g", "eps_t"):
            se = row.get(f"{metric}_mc_se")
            if se is None or not np.isfinite(se):
                continue
            se = max(se, 1e-12)
            zs.append((row["n_over_d"], row["p_over_d"], metric,
                       (row[f"{metric}_mc_mean"] - row[f"{metric}_theory"]) / se))
    max_abs = max((abs(z) for *_, z in zs), default=0.0)
    return {"points": zs, "max_abs_z": max_abs, "passed": max_abs <= 3.0}


def run_agreement(config: RunConfig, axis: str = "params",
                  threads: int = 1) -> tuple[list[dict], dict]:
    if config.simulation is None:
        raise ConfigError("agreement runs need a simulation block")
    if config.simulation.seeds < 2:
        raise ConfigError("agreement needs at least 2 seeds for standard errors")
    rows = run_curve(config, axis, threads)
    return rows, agreement_zscores(rows)


def prepare_real_inputs(dataset: str, data_dir, out_hw: int = 10, keep: int = 100,
                        alpha: float = 1.0):
    """downscale -> PCA(keep) -> saliency rescale -> binary labels.

    Returns (x_train, y_train, x_test, y_test) with labels in {-1, +1}.
    """
    if dataset == "mnist":
        train, test = load_mnist(data_dir)
        task = "mnist_parity"
    elif dataset == "cifar10":
        train, test = load_cifar10(data_dir)
        task = "cifar_planes_vs_cars"
    else:
        raise ConfigError(f"unknown dataset {dataset!r}")
    y_train, keep_train = binary_task(train.labels, task)
    y_test, keep_test = binary_task(test.labels, task)
    small_train = downscale(train, out_hw, out_hw).data[keep_train]
    small_test = downscale(test, out_hw, out_hw).data[keep_test]
    flat_train = small_train.reshape(len(small_train), -1)
    flat_test = small_test.reshape(len(small_test), -1)
    basis = pca_fit(flat_train)
    x_train = pca_apply(basis, flat_train, keep)
    x_test = pca_apply(basis, flat_test, keep)
    stds = basis.stds[:keep]
    return (saliency_rescale(x_train, stds, alpha), y_train,
            saliency_rescale(x_test, stds, alpha), y_test)


def run_realdata(config: RunConfig, dataset: str, data_dir, alpha: float,
                 corruption: float = 0.0, threads: int = 1) -> list[dict]:
    """Random-feature students over the P/D grid on a preprocessed real task."""
    if not config.channel.is_classification:
        raise ConfigError("real-data runs are binary classification tasks")
    if len(config.n_over_d) != 1:
        raise ConfigError("real-data runs need exactly one n_over_d value")
    sim = config.simulation or Simulation()
    x_train, y_train, x_test, y_test = prepare_real_inputs(dataset, data_dir,
                                                           alpha=alpha)
    d = x_train.shape[1]
    n = max(int(round(config.n_over_d[0] * d)), 1)
    if n > len(x_train):
        raise ConfigError(f"requested {n} training samples, split has {len(x_train)}")
    loss = config.channel.loss
    rows = []
    for pi, pod in enumerate(config.p_over_d):
        p = max(int(round(pod * d)), 1)
        eps_t, eps_g = [], []
        for k in range(sim.seeds):
            state = np.random.SeedSequence([sim.seed, pi, k]).generate_state(3)
            picker = np.random.default_rng(int(state[0]))
            take = picker.choice(len(x_train), size=n, replace=False)
            x_n, y_n = x_train[take], y_train[take]
            if corruption > 0:
                y_n = corrupt_labels(y_n, corruption, int(state[1]))
            fmap = sample_feature_map(p, d, config.activation, int(state[2]))
            z = fmap.features(x_n)
            if loss == "logistic":
                student = logistic_fit(z, y_n, config.lam)
                u = z @ student.weights
                et = float(np.mean(np.logaddexp(0.0, -y_n * u)))
            else:
                student = ridge_fit(z, y_n, config.lam)
                et = 0.5 * float(np.mean((y_n - z @ student.weights) ** 2))
            pred = fmap.features(x_test) @ student.weights
            eg = float(np.mean(np.sign(pred) != y_test))
            eps_t.append(et)
            eps_g.append(eg)
        eps_t, eps_g = np.asarray(eps_t), np.asarray(eps_g)
        tm, ts = _mean_se(eps_t)
        gm, gs = _mean_se(eps_g)
        rows.append({
            "n_over_d": config.n_over_d[0], "p_over_d": pod, "alpha": alpha,
            "loss": loss, "seeds_used": sim.seeds,
            "eps_t_mean": tm, "eps_t_se": ts, "eps_g_mean": gm, "eps_g_se": gs,
            "eps_t_median": float(np.median(eps_t)),
            "eps_g_median": float(np.median(eps_g)),
        })
    return rows


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def write_csv(rows: list[dict], columns: list[str], path) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_format_cell(row.get(c, float("nan"))) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(rows: list[dict], path) -> None:
    Path(path).write_text(json.dumps(rows, indent=2, default=float) + "\n")


def _add_common(parser):
    parser.add_argument("--config", required=True)
    parser.add_argument("--output", default=None)
    parser.add_argument("--seeds", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--theory-only", action="store_true")
    parser.add_argument("--json", action="store_true")


def _resolve_threads(value) -> int:
    if value is not None:
        return max(int(value), 1)
    return max(int(os.environ.get("ANISORF_THREADS", "1")), 1)


def _load_for_run(args) -> RunConfig:
    config = load_config(args.config)
    if getattr(args, "seeds", None) is not None and config.simulation is not None:
        config = dataclasses.replace(
            config, simulation=dataclasses.replace(config.simulation, seeds=args.seeds))
    if getattr(args, "theory_only", False):
        config = dataclasses.replace(config, simulation=None)
    if getattr(args, "output", None):
        config = dataclasses.replace(config, output_path=args.output)
    return config


def _emit(rows, columns, config: RunConfig, as_json: bool) -> None:
    write_csv(rows, columns, config.output_path)
    if as_json:
        write_json(rows, Path(config.output_path).with_suffix(".json"))
    print(f"wrote {len(rows)} rows to {config.output_path}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="anisorf")
    sub = parser.add_subparsers(dest="command", required=True)

    curve = sub.add_parser("curve", help="one-axis error profile")
    _add_common(curve)
    curve.add_argument("--axis", choices=["params", "samples"], default="params")

    phase = sub.add_parser("phase", help="(N/D, P/D) grid")
    _add_common(phase)

    agree = sub.add_parser("agree", help="theory vs Monte Carlo gate")
    _add_common(agree)
    agree.add_argument("--axis", choices=["params", "samples"], default="params")

    real = sub.add_parser("realdata", help="random features on MNIST/CIFAR-10")
    _add_common(real)
    real.add_argument("--dataset", choices=["mnist", "cifar10"], required=True)
    real.add_argument("--data-dir", required=True)
    real.add_argument("--alpha", type=float, default=1.0)
    real.add_argument("--corruption", type=float, default=0.0)

    kappa = sub.add_parser("kappa", help="print equivalence constants")
    kappa.add_argument("--activation", default="tanh")
    kappa.add_argument("--r", type=float, default=1.0)

    args = parser.parse_args(argv)
    try:
        if args.command == "kappa":
            kset = kappa_constants(Activation(args.activation), args.r)
            print(f"activation={args.activation} r={kset.r}")
            print(f"kappa0={kset.kappa0:.12g} kappa1={kset.kappa1:.12g} "
                  f"kappa_star={kset.kappa_star:.12g}")
            return 0
        threads = _resolve_threads(args.threads)
        config = _load_for_run(args)
        if args.command == "curve":
            rows = run_curve(config, args.axis, threads)
            _emit(rows, _columns(config), config, args.json)
            return 0
        if args.command == "phase":
            rows = run_phase_space(config, threads)
            _emit(rows, _columns(config), config, args.json)
            return 0
        if args.command == "agree":
            rows, report = run_agreement(config, args.axis, threads)
            _emit(rows, _columns(config), config, args.json)
            print(f"max |z| = {report['max_abs_z']:.3f} over {len(report['points'])} checks")
            return 0 if report["passed"] else 3
        if args.command == "realdata":
            rows = run_realdata(config, args.dataset, args.data_dir, args.alpha,
                                corruption=args.corruption, threads=threads)
            _emit(rows, REALDATA_COLUMNS, config, args.json)
            return 0
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ParseError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4
    except (SingularityError, ConvergenceError, NumericalError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
