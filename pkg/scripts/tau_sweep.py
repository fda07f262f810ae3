"""Adiabatic error and final overlap as a function of the evolution time.

Sweeps ``tau`` over multiples of the gap-free bound and writes one CSV row per
(epsilon, factor, input). The error should fall roughly like ``1/tau``.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from advq import serialization as io
from advq.adiaconvert import build_instance, gapless_time_bound
from advq.adversary import solve_witness
from advq.propagator import PropagationConfig, adiabatic_error


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="singlebit.json")
    ap.add_argument("--witness", default=None)
    ap.add_argument("--epsilon", type=float, nargs="+", default=[0.2, 0.3, 0.5])
    ap.add_argument("--factors", type=float, nargs="+", default=list(np.geomspace(0.125, 8, 13)))
    ap.add_argument("--steps", type=int, default=4096)
    ap.add_argument("--out", default="advq_out/tau_sweep.csv")
    args = ap.parse_args()

    p = io.load_problem(io.resolve(args.problem))
    w = io.load_witness(io.resolve(args.witness)) if args.witness else solve_witness(p.rho, p.sigma)
    rows = []
    for eps in args.epsilon:
        inst = build_instance(p.rho, p.sigma, w, eps, p.alphabet)
        base = gapless_time_bound(inst.W, eps)
        for f in args.factors:
            tau = f * base
            # long runs need proportionally more steps to resolve the phase
            cfg = PropagationConfig(steps=max(args.steps, int(args.steps * f)))
            for i, x in enumerate(inst.labels):
                err = adiabatic_error(inst.adiabatic_run(i, tau, cfg))
                overlap = inst.run(i, cfg, tau=tau).overlap
                rows.append({"epsilon": eps, "x": x, "tau_factor": f, "tau": tau,
                             "eps_ap": err, "tau_times_eps_ap": tau * err, "overlap": overlap})
                print(f"eps={eps:.2f} x={x} tau={tau:8.2f} eps_ap={err:.4e} overlap={overlap:.5f}")
    io.write_csv(Path(args.out), rows)


if __name__ == "__main__":
    main()
