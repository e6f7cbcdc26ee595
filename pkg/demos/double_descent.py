"""Double descent, and how data structure bends it.

Sweeps the model-size axis at fixed sample budget for the three canonical
data scenarios and writes the theory curves to CSV (columns match the CLI
output). With --simulate, overlays a small finite-size Monte Carlo run so you
can see how tightly D=100 hugs the asymptotic curve.

    python demos/double_descent.py [--simulate] [--channel classification_square]
"""

import argparse

import numpy as np

from anisorf.cli import RunConfig, Simulation, Solver, _columns, run_curve, write_csv
from anisorf.gaussmoments import Activation
from anisorf.replica import BlockModel, Channel

SCENARIOS = {
    "isotropic": BlockModel.isotropic(),
    "misaligned": BlockModel.strong_weak(0.1, 10.0, 0.01),
    "aligned": BlockModel.strong_weak(0.1, 10.0, 100.0),
}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--channel", default="classification_square")
    parser.add_argument("--delta", type=float, default=0.3)
    parser.add_argument("--simulate", action="store_true")
    args = parser.parse_args()

    grid = tuple(np.logspace(np.log10(0.2), np.log10(50), 24))
    sim = Simulation(d=100, seeds=10, seed=0) if args.simulate else None
    for name, model in SCENARIOS.items():
        config = RunConfig(model=model, activation=Activation("tanh"),
                           channel=Channel(args.channel, args.delta), lam=1e-3,
                           p_over_d=grid, n_over_d=(1.0,), simulation=sim,
                           solver=Solver(), output_path=f"double_descent_{name}.csv")
        rows = run_curve(config, "params")
        write_csv(rows, _columns(config), config.output_path)
        peak = max(rows, key=lambda r: r["eps_g_theory"])
        tail = rows[-1]["eps_g_theory"]
        print(f"{name:>11}: peak eps_g = {peak['eps_g_theory']:.4f} at "
              f"P/D = {peak['p_over_d']:.2f}, kernel-limit tail = {tail:.4f} "
              f"-> {config.output_path}")
    print()
    print("the aligned scenario drops earliest and lands lowest: salient,")
    print("relevant directions make the task effectively low-dimensional.")


if __name__ == "__main__":
    main()
