"""Time-dependent Schrodinger integration in rescaled time ``s = t / tau``.

Physical evolution solves ``i d/ds U = tau H(s) U``; the idealised evolution
solves ``d/ds U_A = [P'(s), P(s)] U_A`` (the adiabatic Hamiltonian with a zero
eigenvalue), optionally times the phase ``exp(-i tau int_0^s lambda)``.

Both integrators use the exponential midpoint rule, which is exactly unitary
per step. A record grid is subdivided into ``ceil(steps * ds)`` equal
substeps per interval, so recorded points always sit on the step grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

Hamiltonian = Callable[[float], np.ndarray]


class PropagationError(RuntimeError):
    """Integration failed to converge or drifted from unitarity."""

    def __init__(self, message: str, trace: "EvolutionTrace | None" = None):
        super().__init__(message)
        self.trace = trace


@dataclass
class PropagationConfig:
    steps: int = 4096
    convergence_tol: float = 1e-6
    max_doublings: int = 6
    check_convergence: bool = True
    strict: bool = False

    def __post_init__(self):
        if self.steps < 2:
            raise ValueError("steps must be >= 2")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if self.max_doublings < 0:
            raise ValueError("max_doublings must be >= 0")


@dataclass(frozen=True)
class EvolutionTrace:
    s_grid: np.ndarray
    tau: float
    states: np.ndarray
    steps: int
    converged: bool = True
    convergence_gap: float = 0.0
    coarse_states: np.ndarray | None = field(default=None, repr=False)
    ideal_states: np.ndarray | None = field(default=None, repr=False)
    eps_ap: np.ndarray | None = field(default=None, repr=False)
    overlaps: np.ndarray | None = field(default=None, repr=False)
    progress: np.ndarray | None = field(default=None, repr=False)

    @property
    def t_grid(self) -> np.ndarray:
        return self.s_grid * self.tau

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def norm_drift(self) -> np.ndarray:
        return np.abs(np.linalg.norm(self.states, axis=1) - 1.0)

    def with_ideal(self, ideal_states: np.ndarray) -> "EvolutionTrace":
        ideal_states = np.asarray(ideal_states, dtype=complex)
        if ideal_states.shape != self.states.shape:
            raise ValueError(f"ideal states {ideal_states.shape} do not match {self.states.shape}")
        eps = np.linalg.norm(self.states - ideal_states, axis=1)
        return replace(self, ideal_states=ideal_states, eps_ap=eps)

    def with_overlaps(self, reference: Callable[[float], np.ndarray]) -> "EvolutionTrace":
        ov = np.array([np.vdot(reference(s), psi) for s, psi in zip(self.s_grid, self.states)])
        return replace(self, overlaps=ov)

    def rows(self) -> list[dict]:
        """CSV rows: s, t, overlap re/im, eps_ap, norm_drift."""
        out = []
        drift = self.norm_drift
        for i, s in enumerate(self.s_grid):
            row = {"s": float(s), "t": float(s * self.tau)}
            if self.overlaps is not None:
                row["overlap_re"] = float(self.overlaps[i].real)
                row["overlap_im"] = float(self.overlaps[i].imag)
            if self.eps_ap is not None:
                row["eps_ap"] = float(self.eps_ap[i])
            row["norm_drift"] = float(drift[i])
            out.append(row)
        return out


def default_grid(points: int = 101) -> np.ndarray:
    return np.linspace(0.0, 1.0, points)


def _check_grid(s_grid) -> np.ndarray:
    s = np.asarray(s_grid, dtype=float)
    if s.ndim != 1 or s.size < 1 or s[0] != 0.0 or np.any(np.diff(s) <= 0):
        raise ValueError("record grid must start at 0 and increase strictly")
    return s


def substeps(s_grid: np.ndarray, steps: int) -> list[int]:
    """Substep count per record interval for a nominal ``steps`` over [0, 1]."""
    return [max(1, math.ceil(steps * (b - a) - 1e-9)) for a, b in zip(s_grid[:-1], s_grid[1:])]


def hermitian_exp(h: np.ndarray, scale: float) -> np.ndarray:
    """``exp(-i scale h)`` for Hermitian ``h`` via eigendecomposition."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * scale * w)) @ v.conj().T


def _integrate(h: Hamiltonian, tau: float, psi0: np.ndarray, s_grid: np.ndarray, steps: int):
    states = np.empty((s_grid.size,) + psi0.shape, dtype=complex)
    states[0] = psi0
    psi = psi0.copy()
    bshape = (-1,) + (1,) * (psi0.ndim - 1)
    counts = substeps(s_grid, steps)
    for i, (a, b) in enumerate(zip(s_grid[:-1], s_grid[1:])):
        k = counts[i]
        ds = (b - a) / k
        if tau != 0.0:
            for q in range(k):
                w, v = np.linalg.eigh(h(a + (q + 0.5) * ds))
                phase = np.exp(-1j * tau * ds * w).reshape(bshape)
                psi = v @ (phase * (v.conj().T @ psi))
        states[i + 1] = psi
    return states, sum(counts)


def propagate(
    h: Hamiltonian,
    tau: float,
    psi0,
    config: PropagationConfig | None = None,
    s_grid: Sequence[float] | None = None,
) -> EvolutionTrace:
    """Evolve ``psi0`` under ``tau * H(s)`` over ``s in [0, 1]``.

    With ``config.check_convergence`` the run is repeated at doubled step
    counts until recorded states agree to ``convergence_tol`` or
    ``max_doublings`` is reached. The finest run is returned; on
    non-convergence the previous run is kept in ``coarse_states``.
    """
    cfg = config or PropagationConfig()
    s = _check_grid(default_grid() if s_grid is None else s_grid)
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValueError("initial state must be normalised")
    if tau < 0:
        raise ValueError("tau must be non-negative")

    states, used = _integrate(h, tau, psi0, s, cfg.steps)
    if not cfg.check_convergence or tau == 0.0:
        return EvolutionTrace(s, float(tau), states, used)

    steps, gap, prev = cfg.steps, np.inf, None
    for _ in range(cfg.max_doublings):
        # doubling below one substep per record interval changes nothing; skip ahead
        while True:
            steps *= 2
            if sum(substeps(s, steps)) > used:
                break
        finer, used = _integrate(h, tau, psi0, s, steps)
        gap = float(np.linalg.norm(finer - states, axis=-1).max())
        prev, states = states, finer
        if gap < cfg.convergence_tol:
            return EvolutionTrace(s, float(tau), states, used, True, gap)
    trace = EvolutionTrace(s, float(tau), states, used, False, gap, coarse_states=prev)
    msg = f"no convergence after {cfg.max_doublings} doublings (gap {gap:.3e})"
    if cfg.strict:
        raise PropagationError(msg, trace)
    logger.warning(msg)
    return trace


# --------------------------------------------------------------------------
# idealised evolution


@dataclass(frozen=True)
class IdealPath:
    s_grid: np.ndarray
    unitaries: np.ndarray = field(repr=False)
    steps: int

    def apply(self, psi) -> np.ndarray:
        """``U_A(s) psi`` for every recorded ``s``."""
        return self.unitaries @ np.asarray(psi, dtype=complex)


def ideal_propagate(
    projector: Callable[[float], np.ndarray],
    projector_dot: Callable[[float], np.ndarray],
    config: PropagationConfig | None = None,
    s_grid: Sequence[float] | None = None,
    *,
    eigenvalue: Callable[[float], float] | None = None,
    tau: float = 0.0,
    drift_tol: float = 1e-8,
) -> IdealPath:
    """Integrate ``d/ds U_A = [P', P] U_A`` from ``U_A(0) = 1``.

    ``[P', P]`` is anti-Hermitian, so ``i [P', P]`` is Hermitian and each step
    is an exact unitary. The optional eigenvalue contributes the global phase
    ``exp(-i tau int_0^s lambda)`` (trapezoid rule on the record grid).
    """
    cfg = config or PropagationConfig()
    s = _check_grid(default_grid() if s_grid is None else s_grid)
    dim = projector(0.0).shape[0]

    def generator(x: float) -> np.ndarray:
        p, pd = projector(x), projector_dot(x)
        k = pd @ p - p @ pd
        return 1j * k  # Hermitian; exp(-i ds (i K)) = exp(ds K)

    unitaries, used = _integrate(generator, 1.0, np.eye(dim, dtype=complex), s, cfg.steps)
    drift = max(np.abs(u.conj().T @ u - np.eye(dim)).max() for u in unitaries)
    if drift > drift_tol:
        raise PropagationError(f"ideal evolution lost unitarity (drift {drift:.3e})")
    if eigenvalue is not None and tau != 0.0:
        lam = np.array([eigenvalue(x) for x in s])
        integral = np.concatenate([[0.0], np.cumsum(0.5 * (lam[1:] + lam[:-1]) * np.diff(s))])
        unitaries = unitaries * np.exp(-1j * tau * integral)[:, None, None]
    return IdealPath(s, unitaries, used)


def intertwining_residual(projector: Callable[[float], np.ndarray], path: IdealPath) -> np.ndarray:
    """``||U_A(s) P(0) - P(s) U_A(s)||`` at each recorded ``s``."""
    p0 = projector(0.0)
    return np.array([np.linalg.norm(u @ p0 - projector(x) @ u, 2)
                     for x, u in zip(path.s_grid, path.unitaries)])


def projector_facts(projector, projector_dot, s_grid) -> tuple[float, float]:
    """Largest ``||P - P^2||`` and ``||P P' P||`` on the grid."""
    idem, sandwich = 0.0, 0.0
    for x in s_grid:
        p, pd = projector(x), projector_dot(x)
        idem = max(idem, float(np.linalg.norm(p - p @ p, 2)))
        sandwich = max(sandwich, float(np.linalg.norm(p @ pd @ p, 2)))
    return idem, sandwich


def adiabatic_error(trace: EvolutionTrace) -> float:
    """``||(U_tau(1) - U_A(1)) psi(0)||`` from a trace carrying ideal states."""
    if trace.ideal_states is None:
        raise ValueError("trace has no ideal states")
    if trace.ideal_states.shape != trace.states.shape:
        raise ValueError("physical and ideal grids differ")
    return float(np.linalg.norm(trace.states[-1] - trace.ideal_states[-1]))
