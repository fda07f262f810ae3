"""Batch front end.

Exit codes: 0 all checks pass, 1 a checked property failed, 2 malformed
input, 3 infeasible witness, 4 integrator did not converge.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import serialization as io
from .adiaconvert import (
    ConversionInstance,
    gapless_time_bound,
    overlap_threshold,
    time_scale,
    verify_proposition,
)
from .adversary import (
    AdversaryWitness,
    SolverConfig,
    solve_adversary,
    verify_certificate,
    verify_witness,
)
from .ehrenfest_lb import ProgressError, check_lower_bound, from_conversion, progress_trace
from .gram_core import GramMatrix, random_gram
from .propagator import PropagationConfig, PropagationError, adiabatic_error, default_grid
from .query_models import OracleSpec, check_oracle_equivalence

logger = logging.getLogger("advq")

EXIT_OK, EXIT_FAIL, EXIT_SCHEMA, EXIT_INFEASIBLE, EXIT_NOCONV = 0, 1, 2, 3, 4
ORACLE_TOL = 1e-10


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class RunManifest:
    problem: str
    witness: str | None = None
    epsilon: list[float] = field(default_factory=lambda: [0.3])
    tau_factor: float = 1.0
    steps: int = 4096
    seed: int = 0
    out_dir: str = "advq_out"
    grid: int = 101

    def __post_init__(self):
        if not self.epsilon:
            raise CliError("at least one epsilon is required", EXIT_SCHEMA)
        for e in self.epsilon:
            if not 0 < e <= 1:
                raise CliError(f"epsilon {e} outside (0, 1]", EXIT_SCHEMA)
        if self.tau_factor <= 0:
            raise CliError("tau factor must be positive", EXIT_SCHEMA)
        if self.steps < 2 or self.grid < 2:
            raise CliError("steps and grid must be >= 2", EXIT_SCHEMA)

    @property
    def s_grid(self) -> np.ndarray:
        return default_grid(self.grid)

    def propagation(self) -> PropagationConfig:
        return PropagationConfig(steps=self.steps, strict=True)


def threads() -> int:
    try:
        return max(1, int(os.environ.get("ADVQ_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Order-preserving map over a thread pool sized by ``ADVQ_THREADS``."""
    n = threads()
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# loading


def load_manifest(args: argparse.Namespace) -> RunManifest:
    base: dict = {}
    if getattr(args, "manifest", None):
        data = io.read_json(args.manifest)
        if not isinstance(data, dict):
            raise CliError("manifest must be a JSON object", EXIT_SCHEMA)
        base = {k.replace("-", "_"): v for k, v in data.items()}
        if "epsilon" in base and not isinstance(base["epsilon"], list):
            base["epsilon"] = [base["epsilon"]]
    for key in ("problem", "witness", "epsilon", "tau_factor", "steps", "seed", "out_dir", "grid"):
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    if "problem" not in base:
        raise CliError("--problem is required", EXIT_SCHEMA)
    try:
        return RunManifest(**base)
    except TypeError as exc:
        raise CliError(f"bad manifest: {exc}", EXIT_SCHEMA) from exc


def load_problem(name: str) -> io.Problem:
    try:
        return io.load_problem(io.resolve(name))
    except FileNotFoundError as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from exc
    except (io.SchemaError, ValueError) as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from exc


def load_witness(name: str, problem: io.Problem) -> AdversaryWitness:
    try:
        w = io.load_witness(io.resolve(name))
    except FileNotFoundError as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from exc
    except io.SchemaError as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from exc
    if w.labels != problem.labels:
        raise CliError("witness inputs differ from problem inputs", EXIT_SCHEMA)
    if w.n != problem.n:
        raise CliError(f"witness has {w.n} coordinates, problem has n={problem.n}", EXIT_SCHEMA)
    rep = verify_witness(problem.rho, problem.sigma, w)
    if not rep.feasible:
        raise CliError(f"witness infeasible: residual {rep.residual:.3e} at {rep.worst}", EXIT_INFEASIBLE)
    return w


def witness_for(m: RunManifest, problem: io.Problem) -> AdversaryWitness:
    if m.witness:
        return load_witness(m.witness, problem)
    logger.info("no witness supplied; solving the adversary bound (seed %d)", m.seed)
    return solve_adversary(problem.rho, problem.sigma, SolverConfig(seed=m.seed)).witness


def instance_for(problem: io.Problem, witness: AdversaryWitness, eps: float) -> ConversionInstance:
    return ConversionInstance(problem.rho, problem.sigma, witness, eps, problem.alphabet)


def out_dir(m: RunManifest) -> Path:
    p = Path(m.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


# --------------------------------------------------------------------------
# commands


def cmd_verify_witness(args) -> int:
    problem = load_problem(args.problem)
    if not args.witness:
        raise CliError("--witness is required", EXIT_SCHEMA)
    try:
        w = io.load_witness(io.resolve(args.witness))
    except (FileNotFoundError, io.SchemaError) as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from exc
    if w.labels != problem.labels:
        raise CliError("witness inputs differ from problem inputs", EXIT_SCHEMA)
    rep = verify_witness(problem.rho, problem.sigma, w)
    report = {"problem": problem.name, "feasible": rep.feasible, "residual": rep.residual,
              "value": rep.value, "worst_pair": list(rep.worst) if rep.worst else None}
    _emit(args, "verify_witness.json", report)
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def cmd_solve_adversary(args) -> int:
    problem = load_problem(args.problem)
    cfg = SolverConfig(seed=args.seed or 0, restarts=args.restarts)
    res = solve_adversary(problem.rho, problem.sigma, cfg)
    wrep = verify_witness(problem.rho, problem.sigma, res.witness)
    crep = verify_certificate(problem.rho, problem.sigma, res.certificate)
    d = Path(args.out_dir or ".")
    io.write_json(d / f"{problem.name}_witness.json", io.witness_to_dict(res.witness))
    io.write_json(d / f"{problem.name}_certificate.json", io.certificate_to_dict(res.certificate))
    summary = {"problem": problem.name, "upper": res.upper, "lower": res.lower, "gap": res.gap,
               "witness_feasible": wrep.feasible, "witness_residual": wrep.residual,
               "certificate_valid": crep.valid, "rank": res.witness.m}
    _emit(args, "solve_adversary.json", summary)
    return EXIT_OK if wrep.feasible and crep.valid else EXIT_FAIL


def cmd_run(args) -> int:
    m = load_manifest(args)
    problem = load_problem(m.problem)
    witness = witness_for(m, problem)
    d = out_dir(m)
    jobs = [(e, i) for e in m.epsilon for i in range(len(problem.labels))]
    insts = {e: instance_for(problem, witness, e) for e in m.epsilon}

    def job(item):
        e, i = item
        inst = insts[e]
        tau = m.tau_factor * inst.tau
        return e, inst.run(i, m.propagation(), tau=tau, s_grid=m.s_grid)

    try:
        results = parallel_map(job, jobs)
    except PropagationError as exc:
        raise CliError(str(exc), EXIT_NOCONV) from exc
    rows, ok = [], True
    for e, r in results:
        thr = overlap_threshold(e)
        passed = r.overlap >= thr
        ok &= passed
        rows.append({"x": r.label, "epsilon": e, "epsilon_prime": 9 * e * e, "tau": r.tau,
                     "witness_value": witness.value, "skipped": r.skipped,
                     "overlap": r.overlap, "threshold": thr, "pass": passed})
        if r.trace is not None:
            io.write_csv(d / "traces" / f"trace_{r.label}_eps{e:g}.csv", r.trace.rows())
    io.write_csv(d / "overlaps.csv", rows)
    _emit(args, "run.json", {"manifest": asdict(m), "rows": rows, "passed": ok}, d)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify_proposition(args) -> int:
    m = load_manifest(args)
    problem = load_problem(m.problem)
    witness = witness_for(m, problem)
    inst = instance_for(problem, witness, m.epsilon[0])
    rep = verify_proposition(inst, m.s_grid, m.epsilon)
    d = out_dir(m)
    io.write_csv(d / "proposition.csv", rep.rows)
    fails = [{"x": x, "s": s, "epsilon": e, "items": items} for x, s, e, items in rep.failures()]
    _emit(args, "proposition.json", {"passed": rep.passed, "worst": rep.worst(),
                                     "failures": fails, "points": len(rep.rows)}, d)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_sweep_tau(args) -> int:
    m = load_manifest(args)
    problem = load_problem(m.problem)
    witness = witness_for(m, problem)
    factors = args.factors or [0.25, 0.5, 1.0, 2.0]
    d = out_dir(m)
    jobs = [(e, f, i) for e in m.epsilon for f in factors for i in range(len(problem.labels))]
    insts = {e: instance_for(problem, witness, e) for e in m.epsilon}

    def job(item):
        e, f, i = item
        inst = insts[e]
        base = time_scale(inst.W, e)
        tau = f * base
        cfg = m.propagation()
        if inst.skips:
            return {"x": inst.labels[i], "epsilon": e, "tau_factor": f, "tau": 0.0,
                    "eps_ap": float("nan"), "overlap": inst.run(i).overlap, "skipped": True}
        eps_ap = adiabatic_error(inst.adiabatic_run(i, tau, cfg, m.s_grid))
        r = inst.run(i, cfg, tau=tau, s_grid=m.s_grid)
        return {"x": inst.labels[i], "epsilon": e, "tau_factor": f, "tau": tau,
                "gapless_tau": gapless_time_bound(inst.W, e), "eps_ap": eps_ap,
                "overlap": r.overlap, "skipped": False}

    try:
        rows = parallel_map(job, jobs)
    except PropagationError as exc:
        raise CliError(str(exc), EXIT_NOCONV) from exc
    ok = True
    for r in rows:
        r["violation"] = bool(r["tau_factor"] >= 1 and not r["skipped"] and r["eps_ap"] > r["epsilon"])
        ok &= not r["violation"]
    io.write_csv(d / "sweep_tau.csv", rows)
    _emit(args, "sweep_tau.json", {"rows": rows, "passed": ok}, d)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_lower_bound(args) -> int:
    m = load_manifest(args)
    problem = load_problem(m.problem)
    witness = witness_for(m, problem)
    if args.certificate:
        try:
            cert = io.certificate_from_dict(io.read_json(io.resolve(args.certificate)))
        except (FileNotFoundError, io.SchemaError) as exc:
            raise CliError(str(exc), EXIT_SCHEMA) from exc
    else:
        cert = solve_adversary(problem.rho, problem.sigma, SolverConfig(seed=m.seed)).certificate
    if not verify_certificate(problem.rho, problem.sigma, cert).valid:
        raise CliError("certificate violates its constraints", EXIT_FAIL)
    d = out_dir(m)

    def job(e):
        inst = instance_for(problem, witness, e)
        if inst.skips or inst.tau == 0:
            return e, None, None
        pinst = from_conversion(inst, cert, tau=m.tau_factor * inst.tau, dt=args.dt)
        trace = progress_trace(pinst)
        return e, trace, check_lower_bound(trace, problem.rho, problem.sigma, cert)

    try:
        results = parallel_map(job, list(m.epsilon))
    except ProgressError as exc:
        logger.error("%s", exc)
        return EXIT_FAIL
    reports = []
    ok = True
    for e, trace, rep in results:
        if trace is None:
            reports.append({"epsilon": e, "skipped": True})
            continue
        io.write_csv(d / f"progress_eps{e:g}.csv", trace.rows())
        passed = (rep.holds and trace.derivative_ok() and trace.change_ok()
                  and max(trace.factor_residuals) <= 1e-10 and max(trace.factor_gamma2) <= 2 + 1e-10)
        ok &= passed
        reports.append({"epsilon": e, "skipped": False, "lhs": rep.lhs, "rhs": rep.rhs,
                        "implied_t": rep.implied_t, "horizon": rep.horizon,
                        "measured_change": rep.measured_change, "max_dWdt": trace.max_derivative,
                        "bound": trace.bound, "fd_gap": trace.fd_gap,
                        "factor_residual": max(trace.factor_residuals),
                        "factor_gamma2": max(trace.factor_gamma2), "pass": passed})
    _emit(args, "lower_bound.json", {"certificate_value": cert.value, "reports": reports,
                                     "passed": ok}, d)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_oracle_check(args) -> int:
    problem = load_problem(args.problem)
    spec = OracleSpec(problem.n, problem.alphabet)
    rows = [{"x": x, "residual": check_oracle_equivalence(x, spec)} for x in problem.labels]
    ok = all(r["residual"] <= ORACLE_TOL for r in rows)
    for r in rows:
        r["pass"] = r["residual"] <= ORACLE_TOL
    if args.out_dir:
        io.write_csv(Path(args.out_dir) / "oracle_check.csv", rows)
    _emit(args, "oracle_check.json", {"rows": rows, "passed": ok})
    return EXIT_OK if ok else EXIT_FAIL


def cmd_random_problem(args) -> int:
    """Seeded random pair of Gram matrices on binary strings of length ``n``."""
    rng = np.random.default_rng(args.seed or 0)
    strings = [format(i, f"0{args.n}b") for i in range(2 ** args.n)]
    if not 2 <= args.size <= len(strings):
        raise CliError(f"size must lie in [2, {len(strings)}]", EXIT_SCHEMA)
    labels = sorted(rng.choice(strings, args.size, replace=False).tolist())
    r1, r2 = (int(r) for r in rng.integers(1, args.size + 1, 2))
    problem = io.Problem(2, args.n, GramMatrix(labels, random_gram(args.size, r1, rng)),
                         GramMatrix(labels, random_gram(args.size, r2, rng)), f"random_{args.seed or 0}")
    io.write_json(args.out, io.problem_to_dict(problem))
    print(args.out)
    return EXIT_OK


def _emit(args, name: str, obj: dict, directory: Path | None = None) -> None:
    import json

    target = directory or (Path(args.out_dir) if getattr(args, "out_dir", None) else None)
    if target is not None:
        io.write_json(target / name, obj)
    print(json.dumps(io._jsonable(obj), indent=2, sort_keys=True))


# --------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, witness: bool = True) -> None:
    p.add_argument("--problem", help="problem JSON path or bundled fixture name")
    if witness:
        p.add_argument("--witness", help="witness JSON path or bundled fixture name")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)


def _manifest_flags(p: argparse.ArgumentParser) -> None:
    _common(p)
    p.add_argument("--manifest", help="JSON run manifest; explicit flags override it")
    p.add_argument("--epsilon", type=float, action="append", help="repeatable")
    p.add_argument("--tau-factor", dest="tau_factor", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--grid", type=int, help="number of recorded s samples (default 101)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="advq", description="Adversary bounds and adiabatic state conversion.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-witness", help="check a witness against a problem")
    _common(p)
    p.set_defaults(func=cmd_verify_witness)

    p = sub.add_parser("solve-adversary", help="heuristic witness + certificate with duality gap")
    _common(p, witness=False)
    p.add_argument("--restarts", type=int, default=3)
    p.set_defaults(func=cmd_solve_adversary)

    p = sub.add_parser("run", help="end-to-end conversion for every input")
    _manifest_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify-proposition", help="structural checks on the s-grid")
    _manifest_flags(p)
    p.set_defaults(func=cmd_verify_proposition)

    p = sub.add_parser("sweep-tau", help="adiabatic error and overlap across time scales")
    _manifest_flags(p)
    p.add_argument("--factors", type=float, nargs="+", help="multiples of 15 W / eps^2")
    p.set_defaults(func=cmd_sweep_tau)

    p = sub.add_parser("lower-bound", help="progress-function trace and bound report")
    _manifest_flags(p)
    p.add_argument("--certificate", help="certificate JSON; solved when omitted")
    p.add_argument("--dt", type=float, default=0.01, help="time step of the recorded trajectories")
    p.set_defaults(func=cmd_lower_bound)

    p = sub.add_parser("oracle-check", help="discrete oracle vs exp(-i pi H_Q)")
    _common(p, witness=False)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("random-problem", help="write a seeded random problem file")
    p.add_argument("--size", type=int, default=4)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_random_problem)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "problem", "x") is None and args.command in ("verify-witness", "solve-adversary", "oracle-check"):
        print("error: --problem is required", file=sys.stderr)
        return EXIT_SCHEMA
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
