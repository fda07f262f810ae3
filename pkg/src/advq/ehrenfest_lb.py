"""Progress-function lower bound for continuous-time query algorithms.

For an ensemble ``|Phi_t> = sum_x v_x |x>|phi_x(t)>`` and a Hermitian
``Gamma`` over inputs, the progress function is

    W(t) = sum_{x,y} v_x conj(v_y) Gamma[y, x] <phi_y(t)|phi_x(t)>
         = v^* (Gamma o G(t)) v,      G[y, x] = <phi_y|phi_x>.

The ensemble vector is never formed; everything is assembled from per-input
trajectories and their pairwise overlaps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .adiaconvert import ConversionInstance
from .adversary import AdversaryCertificate, delta_masks
from .gram_core import GramMatrix, gamma2_upper, operator_norm
from .propagator import PropagationConfig, propagate
from .query_models import plus_minus_states

logger = logging.getLogger(__name__)

FACTOR_RESIDUAL_TOL = 1e-10
BOUND_TOL = 1e-6
FD_REL_TOL = 1e-5


class ProgressError(RuntimeError):
    pass


def certificate_bound(gamma: np.ndarray, labels: Sequence[str]) -> float:
    """``2 max_j ||Gamma o Delta_j||``."""
    masks = delta_masks(labels)
    return 2.0 * max((operator_norm(gamma * d) for d in masks), default=0.0)


@dataclass
class ProgressInstance:
    """Per-input trajectories of one algorithm plus the observable ``(Gamma, v)``.

    ``hamiltonians[x](t)`` is the full Hamiltonian for input ``x`` at physical
    time ``t``; ``oracle_blocks[x]`` has shape ``(n, D, D)`` and holds
    ``|j><j| (x) h(x_j)`` embedded in the algorithm's space, so that
    ``H_Q(x) = oracle_blocks[x].sum(0)`` and ``H_x(t) = H_D(t) + alpha(t) H_Q(x)``.
    """

    labels: tuple[str, ...]
    gamma: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    hamiltonians: Sequence[Callable[[float], np.ndarray]] = field(repr=False)
    oracle_blocks: np.ndarray = field(repr=False)
    alpha: Callable[[float], float] = field(repr=False)
    t_grid: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)  # (k, len(t_grid), D)

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=complex)
        self.v = np.asarray(self.v, dtype=complex)
        if np.abs(self.gamma - self.gamma.conj().T).max(initial=0.0) > 1e-12:
            raise ValueError("Gamma must be Hermitian")
        k = len(self.labels)
        if self.states.shape[:2] != (k, len(self.t_grid)):
            raise ValueError("states must have shape (|X|, len(t_grid), D)")

    @property
    def horizon(self) -> float:
        return float(self.t_grid[-1] - self.t_grid[0])

    @property
    def bound(self) -> float:
        return certificate_bound(self.gamma, self.labels)

    def oracle_hamiltonian(self, x: int) -> np.ndarray:
        return self.oracle_blocks[x].sum(axis=0)

    def check_shared_driver(self, samples: Sequence[float] | None = None) -> float:
        """Largest deviation of ``H_x - H_y`` from ``alpha (H_Q(x) - H_Q(y))``."""
        ts = self.t_grid[:: max(1, len(self.t_grid) // 8)] if samples is None else samples
        k = len(self.labels)
        worst = 0.0
        for t in ts:
            a = self.alpha(t)
            h0 = self.hamiltonians[0](t) - a * self.oracle_hamiltonian(0)
            for x in range(1, k):
                hx = self.hamiltonians[x](t) - a * self.oracle_hamiltonian(x)
                worst = max(worst, float(np.abs(hx - h0).max()))
        return worst

    # -- values ----------------------------------------------------------

    def overlaps(self, i: int) -> np.ndarray:
        """``G[y, x] = <phi_y|phi_x>`` at time sample ``i``."""
        s = self.states[:, i]
        return s.conj() @ s.T

    def progress_value(self, i: int) -> float:
        w = np.vdot(self.v, (self.gamma * self.overlaps(i)) @ self.v)
        if abs(w.imag) > 1e-12 * max(1.0, abs(w.real)):
            raise ProgressError(f"progress value not real: {w}")
        return float(w.real)

    def progress_derivative(self, i: int) -> float:
        """``-i <Phi|[Gamma (x) 1, H]|Phi>`` from the full Hamiltonians."""
        t = self.t_grid[i]
        s = self.states[:, i]
        hs = np.stack([self.hamiltonians[x](t) @ s[x] for x in range(len(self.labels))])
        # m[y, x] = <phi_y|H_x phi_x> - <H_y phi_y|phi_x>
        m = s.conj() @ hs.T - hs.conj() @ s.T
        d = -1j * np.vdot(self.v, (self.gamma * m) @ self.v)
        return float(d.real)

    def phi_j_matrices(self, i: int) -> np.ndarray:
        """``Phi^j[y, x] = <phi_y| P_j(x) - P_j(y) |phi_x>``, shape (n, k, k)."""
        s = self.states[:, i]
        pj_s = np.einsum("xjab,xb->jxa", self.oracle_blocks, s)  # P_j(x) phi_x
        # <phi_y|P_j(x) phi_x> - <P_j(y) phi_y|phi_x>
        return (np.einsum("ya,jxa->jyx", s.conj(), pj_s)
                - np.einsum("jya,xa->jyx", pj_s.conj(), s))

    def oracle_derivative(self, i: int) -> float:
        """``-i alpha v^* (Gamma o sum_j Phi^j) v``; equals :meth:`progress_derivative`."""
        phi = self.phi_j_matrices(i).sum(axis=0)
        a = self.alpha(self.t_grid[i])
        return float((-1j * a * np.vdot(self.v, (self.gamma * phi) @ self.v)).real)


# --------------------------------------------------------------------------
# factorizations


@dataclass(frozen=True)
class FactorizationCertificate:
    """``sum_j Phi^j[y, x] = <u_y|v_x>`` with its residual and norms."""

    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    residual: float
    gamma2_upper: float

    @property
    def max_u_norm_sq(self) -> float:
        return float((np.abs(self.u) ** 2).sum(axis=1).max())

    @property
    def max_v_norm_sq(self) -> float:
        return float((np.abs(self.v) ** 2).sum(axis=1).max())


def factorization(inst: ProgressInstance, i: int) -> FactorizationCertificate:
    """``u_x = (-H_Q(x) phi_x, phi_x)``, ``v_x = (phi_x, H_Q(x) phi_x)``."""
    s = inst.states[:, i]
    hq = np.stack([inst.oracle_hamiltonian(x) @ s[x] for x in range(len(inst.labels))])
    u = np.concatenate([-hq, s], axis=1)
    v = np.concatenate([s, hq], axis=1)
    target = inst.phi_j_matrices(i).sum(axis=0)
    resid = float(np.abs(u.conj() @ v.T - target).max(initial=0.0))
    return FactorizationCertificate(u, v, resid, gamma2_upper(u, v, target, tol=np.inf))


def per_coordinate_factorization(inst: ProgressInstance, i: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Per-``j`` vectors with ``Phi^j[y, x] = <a_{y,j}|b_{x,j}>``.

    ``a_{y,j} = (-P_j(y) phi_y, R_j phi_y)``, ``b_{x,j} = (R_j phi_x, P_j(x) phi_x)``
    where ``R_j`` is the support projector of coordinate ``j``. Both sides have
    ``sum_j ||.||^2 <= 2``, which is what bounds the derivative. Returns
    ``(a, b, residual)`` with ``a, b`` of shape (k, n, 2D).
    """
    s = inst.states[:, i]
    blocks = inst.oracle_blocks
    # coordinate support: union over inputs of the rows touched by P_j(x)
    r_diag = (np.abs(blocks).sum(axis=(0, 3)) > 0).astype(float)  # (n, D)
    r_s = np.einsum("jd,xd->xjd", r_diag, s)
    p_s = np.einsum("xjab,xb->xja", blocks, s)
    a = np.concatenate([-p_s, r_s], axis=2)
    b = np.concatenate([r_s, p_s], axis=2)
    target = inst.phi_j_matrices(i)
    resid = float(np.abs(np.einsum("yjc,xjc->jyx", a.conj(), b) - target).max(initial=0.0))
    return a, b, resid


# --------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class ProgressTrace:
    t_grid: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    bound: float
    fd_derivatives: np.ndarray | None = field(default=None, repr=False)
    factor_samples: tuple[int, ...] = ()
    factor_residuals: tuple[float, ...] = ()
    factor_gamma2: tuple[float, ...] = ()
    factor_norms: tuple[float, ...] = ()

    @property
    def horizon(self) -> float:
        return float(self.t_grid[-1] - self.t_grid[0])

    @property
    def max_derivative(self) -> float:
        return float(np.abs(self.derivatives).max(initial=0.0))

    @property
    def total_change(self) -> float:
        return float(abs(self.values[-1] - self.values[0]))

    @property
    def fd_gap(self) -> float:
        if self.fd_derivatives is None:
            return 0.0
        return float(np.abs(self.fd_derivatives - self.derivatives[1:-1]).max(initial=0.0))

    def derivative_ok(self, tol: float = BOUND_TOL) -> bool:
        return self.max_derivative <= self.bound + tol

    def change_ok(self, tol: float = BOUND_TOL) -> bool:
        return self.total_change <= self.horizon * self.bound + tol * max(1.0, self.bound * self.horizon)

    def rows(self) -> list[dict]:
        return [{"t": float(t), "W": float(w), "dWdt": float(d), "bound": self.bound}
                for t, w, d in zip(self.t_grid, self.values, self.derivatives)]


def progress_trace(inst: ProgressInstance, *, finite_difference: bool = True,
                   factor_samples: int = 21, fd_rel_tol: float = FD_REL_TOL) -> ProgressTrace:
    """Sample ``W`` and ``dW/dt`` on the whole grid and certify the factorization.

    With ``finite_difference`` the analytic derivative is compared with the
    centred difference of ``W`` at the grid spacing; a gap beyond
    ``fd_rel_tol * bound`` raises :class:`ProgressError`.
    """
    nt = len(inst.t_grid)
    vals = np.array([inst.progress_value(i) for i in range(nt)])
    ders = np.array([inst.progress_derivative(i) for i in range(nt)])
    bound = inst.bound
    fd = None
    if finite_difference and nt >= 3:
        t = inst.t_grid
        fd = (vals[2:] - vals[:-2]) / (t[2:] - t[:-2])
        gap = float(np.abs(fd - ders[1:-1]).max())
        if gap > fd_rel_tol * max(bound, 1e-300):
            raise ProgressError(f"finite-difference cross-check failed: gap {gap:.3e}")
    idx = tuple(int(i) for i in np.unique(np.linspace(0, nt - 1, max(1, factor_samples)).round()))
    certs = [factorization(inst, i) for i in idx]
    return ProgressTrace(
        inst.t_grid, vals, ders, bound, fd, idx,
        tuple(c.residual for c in certs),
        tuple(c.gamma2_upper for c in certs),
        tuple(max(c.max_u_norm_sq, c.max_v_norm_sq) for c in certs),
    )


@dataclass(frozen=True)
class LowerBoundReport:
    lhs: float
    rhs: float
    implied_t: float
    horizon: float
    measured_change: float
    holds: bool


def check_lower_bound(trace: ProgressTrace, rho: GramMatrix, sigma: GramMatrix,
                      certificate: AdversaryCertificate | tuple[np.ndarray, np.ndarray],
                      tol: float = BOUND_TOL) -> LowerBoundReport:
    """``|<Gamma o (sigma - rho), v v^*>| <= 2 T max_j ||Gamma o Delta_j||``.

    ``implied_t`` is the certified lower bound on the evolution time.
    """
    gamma, v = _gamma_v(certificate)
    diff = np.asarray(sigma.matrix) - np.asarray(rho.matrix)
    lhs = float(abs(np.vdot(v, (gamma * diff) @ v)))
    bound = certificate_bound(gamma, rho.labels)
    rhs = trace.horizon * bound
    implied = lhs / bound if bound > 0 else (0.0 if lhs == 0 else np.inf)
    holds = lhs <= rhs + tol and trace.change_ok(tol)
    if not holds:
        raise ProgressError(f"lower bound violated: lhs {lhs:.6g} > rhs {rhs:.6g}")
    return LowerBoundReport(lhs, rhs, float(implied), trace.horizon, trace.total_change, holds)


def _gamma_v(certificate) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(certificate, AdversaryCertificate):
        return np.asarray(certificate.gamma, dtype=complex), np.asarray(certificate.v, dtype=complex)
    g, v = certificate
    return np.asarray(g, dtype=complex), np.asarray(v, dtype=complex)


# --------------------------------------------------------------------------
# AdiaConvert as a continuous-time query algorithm


def conversion_oracle_blocks(inst: ConversionInstance) -> np.ndarray:
    """``|i><i| (x) |x_i^-><x_i^-| (x) 1_W`` for every input, shape (k, n, D, D)."""
    lay = inst.layout
    k = len(inst.labels)
    out = np.zeros((k, inst.n, lay.total, lay.total), dtype=complex)
    eye_w = np.eye(lay.m)
    for x, syms in enumerate(inst.symbols):
        for i, y in enumerate(syms):
            minus = plus_minus_states(y, inst.alphabet)[1]
            for w in range(lay.m):
                vec = lay.qw_state(i, minus, eye_w[w])
                out[x, i] += np.outer(vec, vec.conj())
    return out


def from_conversion(inst: ConversionInstance, certificate, *, tau: float | None = None,
                    steps: int | None = None, dt: float = 0.01) -> ProgressInstance:
    """Simulate AdiaConvert for every input and wrap the trajectories.

    Every integration step is recorded (``steps`` defaults to ``ceil(tau / dt)``)
    so the finite-difference check runs at the step spacing.
    """
    gamma, v = _gamma_v(certificate)
    t_total = inst.tau if tau is None else float(tau)
    if t_total <= 0:
        raise ValueError("progress traces need a positive evolution time")
    nsteps = steps or max(16, int(np.ceil(t_total / dt)))
    s_grid = np.linspace(0.0, 1.0, nsteps + 1)
    cfg = PropagationConfig(steps=nsteps, check_convergence=False)
    k = len(inst.labels)
    states = np.stack([
        propagate(inst.hamiltonian_fn(x), t_total, inst.initial_state(x), cfg, s_grid).states
        for x in range(k)
    ])
    hams = [_physical_time(inst.hamiltonian_fn(x), t_total) for x in range(k)]
    return ProgressInstance(inst.labels, gamma, v, hams, conversion_oracle_blocks(inst),
                            lambda t: -1.0, s_grid * t_total, states)


def _physical_time(h: Callable[[float], np.ndarray], tau: float) -> Callable[[float], np.ndarray]:
    return lambda t: h(t / tau)
