"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from advq.adiaconvert import (
    GAPLESS_CONSTANT,
    gapless_time_bound,
    overlap_threshold,
    verify_proposition,
)
from advq.adversary import (
    SolverConfig,
    column_witness,
    delta_masks,
    solve_adversary,
    solve_witness,
    verify_certificate,
    verify_witness,
)
from advq.ehrenfest_lb import check_lower_bound, from_conversion, progress_trace
from advq.gram_core import (
    all_ones,
    fidelity,
    gamma2_upper,
    hadamard,
    hadamard_distance,
    mask_by,
    matrix_inner_product,
    operator_norm,
    trace_distance,
)
from advq.propagator import PropagationConfig, adiabatic_error, ideal_propagate, intertwining_residual
from advq.query_models import OracleSpec, check_oracle_equivalence

from conftest import SINGLEBIT_GAMMA, SINGLEBIT_V, make_instance, random_pair, singlebit_pair


@pytest.fixture
def verdict(capsys):
    """Print one line per criterion, outside pytest's capture."""

    def report(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return report


def test_criterion_1_oracle_equivalence(verdict, singlebit, or2):
    t0 = time.perf_counter()
    worst = 0.0
    for p in (singlebit, or2):
        spec = OracleSpec(p.n, p.alphabet)
        worst = max(worst, max(check_oracle_equivalence(x, spec) for x in p.labels))
    elapsed = time.perf_counter() - t0
    verdict(1, worst <= 1e-10 and elapsed < 1.0,
            f"max ||O_x - exp(-i pi H_Q)|| = {worst:.2e} (<= 1e-10), {elapsed:.3f} s (< 1 s)")


def test_criterion_2_structural_identities(verdict, singlebit, singlebit_witness, or2, or2_witness):
    t0 = time.perf_counter()
    s_grid = np.linspace(0, 1, 101)
    failures, worst_eq, worst_margin, points = [], 0.0, np.inf, 0
    for p, w in ((singlebit, singlebit_witness), (or2, or2_witness)):
        for eps in (0.1, 0.2, 0.3):
            rep = verify_proposition(make_instance(p, w, eps), s_grid)
            points += len(rep.rows)
            failures += rep.failures()
            for row in rep.rows:
                worst_eq = max(worst_eq, max(row[k] for k in rep.EQUALITIES))
                worst_margin = min(worst_margin, min(row[k] for k in rep.MARGINS))
    elapsed = time.perf_counter() - t0
    verdict(2, not failures and elapsed < 30.0,
            f"{points} points, {len(failures)} failures, worst equality residual {worst_eq:.2e} (<= 1e-8), "
            f"smallest inequality margin {worst_margin:.2e} (>= -1e-10), {elapsed:.1f} s (< 30 s)")


def test_criterion_3_end_to_end(verdict, singlebit, singlebit_witness, or2, or2_witness):
    t0 = time.perf_counter()
    threshold = overlap_threshold(0.3)
    cfg = PropagationConfig(steps=4096)
    overlaps, taus = {}, set()
    for name, p, w in (("singlebit", singlebit, singlebit_witness), ("or2", or2, or2_witness)):
        inst = make_instance(p, w, 0.3)
        for x in p.labels:
            res = inst.run(x, cfg)
            overlaps[f"{name}:{x}"] = res.overlap
            taus.add(round(res.tau, 9))
    elapsed = time.perf_counter() - t0
    worst = min(overlaps.values())
    sb_tau_ok = math.isclose(make_instance(singlebit, singlebit_witness, 0.3).tau, 15 / 0.09, rel_tol=1e-12)
    verdict(3, worst >= threshold and sb_tau_ok and elapsed < 300.0,
            f"min Re<target|psi_f> = {worst:.5f} over {len(overlaps)} inputs (>= {threshold:.5f}), "
            f"singlebit tau = {15 / 0.09:.2f}, {elapsed:.1f} s (< 300 s)")


def test_criterion_4_gap_free_adiabatic(verdict, singlebit, singlebit_witness):
    cfg = PropagationConfig(steps=4096)
    s_grid = np.linspace(0, 1, 101)
    lines, ok = [], True
    for eps in (0.2, 0.3, 0.5):
        inst = make_instance(singlebit, singlebit_witness, eps)
        tau = gapless_time_bound(inst.W, eps)
        err = max(adiabatic_error(inst.adiabatic_run(x, f * tau, cfg)) for x in range(2) for f in (1, 2))
        const = inst.adiabatic_constant(s_grid)
        bound = GAPLESS_CONSTANT * inst.W / eps
        ok &= err <= eps and const <= 1.05 * bound
        lines.append(f"eps={eps}: eps_AP={err:.4f} for tau in [{tau:.1f}, {2 * tau:.1f}], max_s[2|X|+|X'P|]={const:.2f} vs {bound:.2f}")
    verdict(4, ok, "; ".join(lines))


@pytest.fixture(scope="module")
def progress_runs():
    from advq import serialization as io

    p = io.load_problem(io.fixture_path("singlebit.json"))
    w = io.load_witness(io.fixture_path("singlebit_witness.json"))
    runs = {}
    for eps in (0.3, 0.5):
        inst = make_instance(p, w, eps)
        runs[eps] = progress_trace(from_conversion(inst, (SINGLEBIT_GAMMA, SINGLEBIT_V), dt=0.01),
                                   factor_samples=21)
    return runs


def test_criterion_5_progress_bounds(verdict, progress_runs):
    ok, lines = True, []
    for eps, tr in progress_runs.items():
        rep = check_lower_bound(tr, *singlebit_pair(), (SINGLEBIT_GAMMA, SINGLEBIT_V))
        deriv = tr.derivative_ok(1e-6)
        change = tr.change_ok(1e-6)
        half = rep.implied_t == 0.5 or abs(rep.implied_t - 0.5) <= 4 * np.finfo(float).eps
        ok &= deriv and change and half and rep.holds
        lines.append(f"eps={eps}: max|dW/dt|={tr.max_derivative:.4f} <= {tr.bound:.1f}, "
                     f"|dW|={tr.total_change:.4f} <= {tr.horizon * tr.bound:.1f}, "
                     f"implied T={rep.implied_t:.15f}")
    verdict(5, ok, "; ".join(lines))


def test_criterion_6_factorization(verdict, progress_runs):
    ok, lines = True, []
    for eps, tr in progress_runs.items():
        res, g2 = max(tr.factor_residuals), max(tr.factor_gamma2)
        ok &= len(tr.factor_residuals) == 21 and res <= 1e-10 and g2 <= 2 + 1e-12
        lines.append(f"eps={eps}: {len(tr.factor_residuals)} times, residual {res:.1e}, gamma2 <= {g2:.4f}")
    verdict(6, ok, "; ".join(lines) + " (bounds 1e-10, 2)")


def test_criterion_7_intertwining(verdict, singlebit, singlebit_witness):
    s_grid = np.linspace(0, 1, 101)
    ok, lines = True, []
    for eps in (0.2, 0.3, 0.5):
        inst = make_instance(singlebit, singlebit_witness, eps)
        p, pdot = inst.projector(0)
        r = [intertwining_residual(p, ideal_propagate(p, pdot, PropagationConfig(steps=n), s_grid)).max()
             for n in (2048, 4096)]
        ratio = r[0] / r[1]
        ok &= r[0] <= 1e-4 and 3 <= ratio <= 5
        lines.append(f"eps={eps}: {r[0]:.2e} at 2048, {r[1]:.2e} at 4096, ratio {ratio:.2f}")
    verdict(7, ok, "; ".join(lines) + " (<= 1e-4, ratio in [3, 5])")


def test_criterion_8_norm_properties(verdict):
    worst = {"fuchs": 0.0, "adjoint": 0.0, "multiplier": 0.0, "coord": 0.0, "dh": -np.inf}
    for seed in range(100):
        rng = np.random.default_rng(seed)
        k = 2 + seed % 5
        rho, sigma = random_pair(rng, k)
        for _ in range(4):
            u = rng.normal(size=k) + 1j * rng.normal(size=k)
            u /= np.linalg.norm(u)
            r, s = mask_by(rho.matrix, u), mask_by(sigma.matrix, u)
            f, d = fidelity(r, s), trace_distance(r, s)
            worst["fuchs"] = max(worst["fuchs"], (1 - d) - f, f - math.sqrt(max(0.0, 1 - d * d)))
        a, b, c = (rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k)) for _ in range(3))
        lhs, rhs = matrix_inner_product(hadamard(a, c), b), matrix_inner_product(a, hadamard(b, c.conj()))
        worst["adjoint"] = max(worst["adjoint"], abs(lhs - rhs) / max(1.0, abs(lhs)))
        # Gram matrices come with their own factorization: vectors on both sides
        fu = np.linalg.cholesky(rho.matrix + 1e-12 * np.eye(k)).conj()
        fmat = fu.conj() @ fu.T
        bm = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
        worst["multiplier"] = max(worst["multiplier"], operator_norm(hadamard(fmat, bm))
                             - gamma2_upper(fu, fu, fmat, tol=1e-9) * operator_norm(bm))
        labels = rho.labels
        for i, dmask in enumerate(delta_masks(labels)):
            e = np.eye(2)
            uu = np.array([e[int(x[i])] for x in labels])
            worst["coord"] = max(worst["coord"], gamma2_upper(uu, uu, all_ones(k) - dmask))
        w = solve_witness(rho, sigma, SolverConfig(restarts=1, polish_iters=10)) if seed % 10 == 0 \
            else column_witness(rho, sigma)
        assert verify_witness(rho, sigma, w).feasible
        dh = hadamard_distance(rho, sigma, restarts=4, seed=seed).value
        worst["dh"] = max(worst["dh"], dh - w.value)
    ok = (worst["fuchs"] <= 1e-9 and worst["adjoint"] <= 1e-10 and worst["multiplier"] <= 1e-9
          and worst["coord"] <= 1 + 1e-12 and worst["dh"] <= 1e-8)
    verdict(8, ok, f"100 pairs: Fuchs violation {worst['fuchs']:.1e}, adjoint residual {worst['adjoint']:.1e}, "
                   f"multiplier excess {worst['multiplier']:.1e}, max gamma2(J - D_i) {worst['coord']:.6f}, "
                   f"max D_H - witness {worst['dh']:.3f}")


def test_criterion_9_solver(verdict, singlebit, or2, oracle_values):
    t0 = time.perf_counter()
    sb = solve_adversary(singlebit.rho, singlebit.sigma)
    o2 = solve_adversary(or2.rho, or2.sigma)
    elapsed = time.perf_counter() - t0
    exact_or2 = oracle_values["or2"]["adversary_value"]
    valid = (verify_witness(singlebit.rho, singlebit.sigma, sb.witness).feasible
             and verify_certificate(singlebit.rho, singlebit.sigma, sb.certificate).valid
             and verify_witness(or2.rho, or2.sigma, o2.witness).feasible)
    sb_gap = (sb.upper - sb.lower) / 1.0
    or2_err = abs(o2.upper - exact_or2) / exact_or2
    verdict(9, valid and sb_gap <= 0.05 and or2_err <= 0.10 and elapsed < 120.0,
            f"singlebit [{sb.lower:.4f}, {sb.upper:.4f}] gap {sb_gap:.2%} (<= 5%), "
            f"or2 witness {o2.upper:.5f} vs oracle {exact_or2:.5f} ({or2_err:.2%}, <= 10%), {elapsed:.1f} s (< 120 s)")
