"""Step-count convergence of the propagator on a conversion run.

For each step count the final state is compared with a run at the finest
count; successive error ratios near 4 confirm second-order accuracy. The
ideal (transport) evolution is checked the same way through its
intertwining residual.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from advq import serialization as io
from advq.adiaconvert import build_instance
from advq.adversary import solve_witness
from advq.propagator import PropagationConfig, ideal_propagate, intertwining_residual, propagate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="singlebit.json")
    ap.add_argument("--witness", default=None)
    ap.add_argument("--epsilon", type=float, default=0.3)
    ap.add_argument("--input", type=int, default=0)
    ap.add_argument("--steps", type=int, nargs="+", default=[256, 512, 1024, 2048, 4096])
    ap.add_argument("--reference", type=int, default=32768)
    ap.add_argument("--out", default="advq_out/convergence.csv")
    args = ap.parse_args()

    p = io.load_problem(io.resolve(args.problem))
    w = io.load_witness(io.resolve(args.witness)) if args.witness else solve_witness(p.rho, p.sigma)
    inst = build_instance(p.rho, p.sigma, w, args.epsilon, p.alphabet)
    i = args.input
    h, psi0, grid = inst.hamiltonian_fn(i), inst.initial_state(i), [0.0, 1.0]
    proj, pdot = inst.projector(i)
    s_grid = np.linspace(0, 1, 101)

    def final(steps):
        cfg = PropagationConfig(steps=steps, check_convergence=False)
        return propagate(h, inst.tau, psi0, cfg, grid).final_state

    ref = final(args.reference)
    rows, prev = [], None
    for n in args.steps:
        err = float(np.linalg.norm(final(n) - ref))
        inter = float(intertwining_residual(proj, ideal_propagate(proj, pdot, PropagationConfig(steps=n),
                                                                  s_grid)).max())
        ratio = prev[0] / err if prev else float("nan")
        iratio = prev[1] / inter if prev else float("nan")
        rows.append({"steps": n, "state_error": err, "ratio": ratio,
                     "intertwining": inter, "intertwining_ratio": iratio})
        print(f"steps={n:6d} error={err:.3e} ratio={ratio:5.2f} intertwining={inter:.3e} ratio={iratio:5.2f}")
        prev = (err, inter)
    io.write_csv(Path(args.out), rows)


if __name__ == "__main__":
    main()
