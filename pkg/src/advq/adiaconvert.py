"""The adiabatic state-conversion algorithm and its analytic certificates.

Hilbert space layout (direct sum, in this index order)::

    H_O  = C^2 (x) C^d          ancilla bit b, shared realization space
    H_QW = C^n (x) C^(|Sigma|+1) (x) C^m

``|rho_x>`` and ``|sigma_x>`` live in orthogonal coordinate blocks of C^d
(block-diagonal joint embedding), so ``<rho_x|sigma_y> = 0`` for all pairs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .adversary import AdversaryWitness, delta_masks, verify_witness
from .gram_core import GramMatrix, gram_factorize, operator_norm
from .propagator import (
    EvolutionTrace,
    PropagationConfig,
    adiabatic_error,
    default_grid,
    ideal_propagate,
    propagate,
)
from .query_models import parse_input, plus_minus_states

logger = logging.getLogger(__name__)

# (pi sqrt 5 + pi^2 / sqrt 2): max_s [2||X|| + ||X' P||] <= this * W / eps
GAPLESS_CONSTANT = math.pi * math.sqrt(5) + math.pi ** 2 / math.sqrt(2)
TIME_SCALE_CONSTANT = 15.0
LAMBDA_RANK_CUTOFF = 1e-10
COMMUTATOR_TOL = 1e-8


def theta(s: float) -> float:
    return 0.5 * math.pi * s


def xi(s: float) -> float:
    """``2 cos(theta) sin(theta) = sin(pi s)``."""
    return math.sin(math.pi * s)


def xi_dot(s: float) -> float:
    return math.pi * math.cos(math.pi * s)


def time_scale(w: float, epsilon: float) -> float:
    """``15 W / eps^2``."""
    _check_epsilon(epsilon)
    if w < 0:
        raise ValueError("witness value must be non-negative")
    return TIME_SCALE_CONSTANT * w / epsilon ** 2


def gapless_time_bound(w: float, epsilon: float) -> float:
    """``(pi sqrt 5 + pi^2 / sqrt 2) W / eps^2``, the time the adiabatic lemma needs."""
    _check_epsilon(epsilon)
    return GAPLESS_CONSTANT * w / epsilon ** 2


def overlap_threshold(epsilon: float) -> float:
    """``sqrt(1 - 9 eps^2)``, or 0 once the guarantee is vacuous."""
    return math.sqrt(max(0.0, 1 - 9 * epsilon ** 2))


def x_norm_bound(w: float, epsilon: float) -> float:
    """``(pi sqrt 5 / 2) W / eps`` bounds ``||X(s)||``."""
    return 0.5 * math.pi * math.sqrt(5) * w / epsilon


def xdot_p_norm_bound(w: float, epsilon: float) -> float:
    """``(pi / 2) sqrt(2) pi W / eps`` bounds ``||X'(s) P(s)||``."""
    return 0.5 * math.pi * math.sqrt(2) * math.pi * w / epsilon


def _check_epsilon(epsilon: float) -> None:
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")


@dataclass(frozen=True)
class HilbertLayout:
    d: int
    n: int
    sigma: int
    m: int

    @property
    def dim_o(self) -> int:
        return 2 * self.d

    @property
    def dim_q(self) -> int:
        return self.n * (self.sigma + 1)

    @property
    def dim_w(self) -> int:
        return self.m

    @property
    def total(self) -> int:
        return self.dim_o + self.dim_q * self.dim_w

    def o_index(self, b: int, k: int) -> int:
        return b * self.d + k

    def qw_index(self, i: int, slot: int, w: int) -> int:
        """``slot`` 0 is the blank symbol, ``1 + y`` is symbol ``y``."""
        return self.dim_o + (i * (self.sigma + 1) + slot) * self.m + w

    def o_state(self, b: int, vec: np.ndarray) -> np.ndarray:
        z = np.zeros(self.total, dtype=complex)
        z[b * self.d:(b + 1) * self.d] = vec
        return z

    def qw_state(self, i: int, register: np.ndarray, work: np.ndarray) -> np.ndarray:
        z = np.zeros(self.total, dtype=complex)
        q = np.zeros(self.dim_q, dtype=complex)
        r = self.sigma + 1
        q[i * r:(i + 1) * r] = register
        z[self.dim_o:] = np.kron(q, work)
        return z

    @property
    def o_block(self) -> slice:
        return slice(0, self.dim_o)

    @property
    def qw_block(self) -> slice:
        return slice(self.dim_o, self.total)


def joint_realization(rho: GramMatrix, sigma: GramMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``|rho_x>`` and ``|sigma_x>`` in one space with zero cross overlaps."""
    r = gram_factorize(rho).vectors
    s = gram_factorize(sigma).vectors
    k = rho.size
    dr, ds = r.shape[1], s.shape[1]
    rv = np.zeros((k, dr + ds), dtype=complex)
    sv = np.zeros((k, dr + ds), dtype=complex)
    rv[:, :dr] = r
    sv[:, dr:] = s
    return rv, sv


@dataclass(frozen=True)
class PsiStates:
    plus: np.ndarray
    minus: np.ndarray
    plus_normalized: np.ndarray
    norm: float


@dataclass(frozen=True)
class AvronElgart:
    x_op: np.ndarray = field(repr=False)
    xdot_p: np.ndarray = field(repr=False)
    commutator_residual: float

    @property
    def x_norm(self) -> float:
        return operator_norm(self.x_op)

    @property
    def xdot_p_norm(self) -> float:
        return operator_norm(self.xdot_p)


@dataclass(frozen=True)
class RunResult:
    label: str
    final_state: np.ndarray = field(repr=False)
    overlap: float
    trace: EvolutionTrace | None = field(repr=False)
    tau: float
    skipped: bool = False
    metadata: dict = field(default_factory=dict)


class ConversionInstance:
    """Everything needed to run the algorithm for one ``(rho, sigma, witness, eps)``."""

    def __init__(self, rho: GramMatrix, sigma: GramMatrix, witness: AdversaryWitness,
                 epsilon: float, alphabet: int):
        _check_epsilon(epsilon)
        if rho.labels != sigma.labels or witness.labels != rho.labels:
            raise ValueError("rho, sigma and witness must share labels")
        rep = verify_witness(rho, sigma, witness)
        if not rep.feasible:
            raise ValueError(f"witness infeasible (residual {rep.residual:.3e} at {rep.worst})")
        self.rho, self.sigma, self.witness = rho, sigma, witness
        self.epsilon = float(epsilon)
        self.alphabet = int(alphabet)
        self.labels = rho.labels
        self.W = witness.value
        self.symbols = [parse_input(x, alphabet) for x in self.labels]
        self.n = witness.n
        self.rho_vecs, self.sigma_vecs = joint_realization(rho, sigma)
        self.layout = HilbertLayout(self.rho_vecs.shape[1], self.n, alphabet, witness.m)
        lay = self.layout
        self._rho_o = [lay.o_state(0, r) for r in self.rho_vecs]
        self._sigma_o = [lay.o_state(1, s) for s in self.sigma_vecs]
        self._plus_part, self._minus_part = [], []
        for xi_, syms in enumerate(self.symbols):
            pp = np.zeros(lay.total, dtype=complex)
            mp = np.zeros(lay.total, dtype=complex)
            for i, y in enumerate(syms):
                plus, minus = plus_minus_states(y, alphabet)
                pp += lay.qw_state(i, plus, witness.u[xi_, i])
                mp += lay.qw_state(i, minus, witness.v[xi_, i])
            self._plus_part.append(pp)
            self._minus_part.append(mp)

    def with_epsilon(self, epsilon: float) -> "ConversionInstance":
        return ConversionInstance(self.rho, self.sigma, self.witness, epsilon, self.alphabet)

    def index(self, x) -> int:
        return x if isinstance(x, (int, np.integer)) else self.labels.index(x)

    @property
    def tau(self) -> float:
        return time_scale(self.W, self.epsilon)

    @property
    def skips(self) -> bool:
        """True when ``W < eps / 2`` and the algorithm does nothing."""
        return self.W < self.epsilon / 2

    # -- states ----------------------------------------------------------

    def initial_state(self, x) -> np.ndarray:
        return self._rho_o[self.index(x)].copy()

    def target_state(self, x) -> np.ndarray:
        return self._sigma_o[self.index(x)].copy()

    def path_states(self, x, s: float) -> tuple[np.ndarray, np.ndarray]:
        i = self.index(x)
        c, sn = math.cos(theta(s)), math.sin(theta(s))
        r, g = self._rho_o[i], self._sigma_o[i]
        return c * r + sn * g, -sn * r + c * g

    def _require_w(self) -> None:
        if self.W <= 0:
            raise ValueError("states undefined for a zero witness value")

    def norm_plus(self, x) -> float:
        """``N_x = ||Psi_x^+||``, independent of ``s``."""
        self._require_w()
        i = self.index(x)
        return math.sqrt(1 + self.epsilon ** 2 / self.W * float(self.witness.u_weights[i]))

    def psi_states(self, x, s: float) -> PsiStates:
        self._require_w()
        i = self.index(x)
        kp, km = self.path_states(i, s)
        big_p = kp + self.epsilon / math.sqrt(self.W) * self._plus_part[i]
        big_m = km + xi(s) * math.sqrt(self.W) / self.epsilon * self._minus_part[i]
        norm = float(np.linalg.norm(big_p))
        return PsiStates(big_p, big_m, big_p / norm, norm)

    def psi_plus(self, x, s: float) -> np.ndarray:
        return self.psi_states(x, s).plus_normalized

    def dpsi_minus(self, x, s: float) -> np.ndarray:
        """Analytic ``d/ds Psi_x^-``."""
        i = self.index(x)
        kp, _ = self.path_states(i, s)
        return -0.5 * math.pi * kp + xi_dot(s) * math.sqrt(self.W) / self.epsilon * self._minus_part[i]

    def dpsi_plus(self, x, s: float) -> np.ndarray:
        """Analytic ``d/ds psi_x^+ = (pi / 2N) k_x^-``."""
        _, km = self.path_states(x, s)
        return 0.5 * math.pi / self.norm_plus(x) * km

    # -- operators -------------------------------------------------------

    def minus_columns(self, s: float) -> np.ndarray:
        """``Psi_x^-(s)`` for every input, one per column."""
        self._require_w()
        if not hasattr(self, "_stack"):
            self._stack = (np.array(self._rho_o), np.array(self._sigma_o), np.array(self._minus_part))
        r, g, mp = self._stack
        c, sn = math.cos(theta(s)), math.sin(theta(s))
        return (-sn * r + c * g + xi(s) * math.sqrt(self.W) / self.epsilon * mp).T

    def lambda_projector(self, s: float, *, return_rank: bool = False):
        """Orthogonal projector onto ``span{Psi_x^-(s)}``."""
        u, sv, _ = np.linalg.svd(self.minus_columns(s), full_matrices=False)
        rank = int((sv > LAMBDA_RANK_CUTOFF * sv[0]).sum()) if sv.size and sv[0] > 0 else 0
        q = u[:, :rank]
        lam = q @ q.conj().T
        if rank < len(self.labels):
            logger.debug("Lambda rank %d < %d at s=%.6g", rank, len(self.labels), s)
        return (lam, rank) if return_rank else lam

    def pi_projector(self, x) -> np.ndarray:
        """``sum_i |i, x_i^-><i, x_i^-| (x) 1_W`` embedded in the full space."""
        lay = self.layout
        p = np.zeros((lay.total, lay.total), dtype=complex)
        eye_w = np.eye(lay.m)
        for i, y in enumerate(self.symbols[self.index(x)]):
            minus = plus_minus_states(y, self.alphabet)[1]
            for w in range(lay.m):
                vec = lay.qw_state(i, minus, eye_w[w])
                p += np.outer(vec, vec.conj())
        return p

    def oracle_part(self, x) -> np.ndarray:
        """``Pi_x`` viewed as an oracle Hamiltonian on the full space."""
        return self.pi_projector(x)

    def hamiltonian(self, x, s: float) -> np.ndarray:
        """``H_x(s) = Lambda(s) - Pi_x``."""
        return self.lambda_projector(s) - self.pi_projector(x)

    def hamiltonian_fn(self, x):
        pi_x = self.pi_projector(x)
        return lambda s: self.lambda_projector(s) - pi_x

    def projector(self, x):
        """``s -> |psi_x^+(s)><psi_x^+(s)|`` and its analytic derivative."""
        def p(s):
            v = self.psi_plus(x, s)
            return np.outer(v, v.conj())

        def pdot(s):
            v = self.psi_plus(x, s)
            _, km = self.path_states(x, s)
            c = 0.5 * math.pi / self.norm_plus(x)
            return c * (np.outer(km, v.conj()) + np.outer(v, km.conj()))

        return p, pdot

    def avron_elgart_operator(self, x, s: float, *, tol: float = COMMUTATOR_TOL) -> AvronElgart:
        """``X = (pi / 2N) |Psi^-><psi^+|`` and ``X' P``; checks ``[H, X] = P' P``."""
        st = self.psi_states(x, s)
        n = st.norm
        c = 0.5 * math.pi / n
        x_op = c * np.outer(st.minus, st.plus_normalized.conj())
        dpsi = self.dpsi_plus(x, s)
        xdot = c * (np.outer(self.dpsi_minus(x, s), st.plus_normalized.conj())
                    + np.outer(st.minus, dpsi.conj()))
        proj = np.outer(st.plus_normalized, st.plus_normalized.conj())
        xdot_p = xdot @ proj
        h = self.hamiltonian(x, s)
        p_fn, pdot_fn = self.projector(x)
        resid = operator_norm(h @ x_op - x_op @ h - pdot_fn(s) @ proj)
        if resid > tol:
            raise ValueError(f"commutator equation violated at s={s}: residual {resid:.3e}")
        return AvronElgart(x_op, xdot_p, resid)

    def adiabatic_constant(self, s_grid: Iterable[float] | None = None) -> float:
        """``max_{x, s} [2||X|| + ||X' P||]`` on the grid."""
        grid = default_grid() if s_grid is None else s_grid
        best = 0.0
        for i in range(len(self.labels)):
            for s in grid:
                ae = self.avron_elgart_operator(i, s)
                best = max(best, 2 * ae.x_norm + ae.xdot_p_norm)
        return best

    # -- dynamics --------------------------------------------------------

    def skip_metadata(self) -> dict:
        w, e = self.W, self.epsilon
        return {
            "branch": "skip",
            "witness_value": w,
            "hadamard_distance_upper": w,
            "hadamard_fidelity_lower": 1 - w,
            "fidelity_threshold": math.sqrt(1 - e) if e < 1 else 0.0,
            "condition_met": 1 - w > 1 - e / 2 > (math.sqrt(1 - e) if e < 1 else 0.0),
        }

    def run(self, x, config: PropagationConfig | None = None, *, tau: float | None = None,
            s_grid: Sequence[float] | None = None) -> RunResult:
        """Prepare ``|0, rho_x>`` and evolve under ``H_x(t / tau)`` for ``t in [0, tau]``.

        ``tau`` defaults to ``15 W / eps^2``. When ``W < eps / 2`` nothing is
        applied and the prepared state is returned.
        """
        i = self.index(x)
        label = self.labels[i]
        psi0 = self.initial_state(i)
        target = self.target_state(i)
        if self.skips:
            return RunResult(label, psi0, float(np.vdot(target, psi0).real), None, 0.0,
                             True, self.skip_metadata())
        t = self.tau if tau is None else float(tau)
        trace = propagate(self.hamiltonian_fn(i), t, psi0, config, s_grid)
        trace = trace.with_overlaps(lambda s: self.path_states(i, s)[0])
        final = trace.final_state
        meta = {"branch": "adiabatic", "epsilon_prime": 9 * self.epsilon ** 2}
        return RunResult(label, final, float(np.vdot(target, final).real), trace, t, False, meta)

    def adiabatic_run(self, x, tau: float, config: PropagationConfig | None = None,
                      s_grid: Sequence[float] | None = None) -> EvolutionTrace:
        """Evolve ``psi_x^+(0)`` physically and ideally; the trace carries ``eps_AP(s)``."""
        i = self.index(x)
        cfg = config or PropagationConfig()
        p, pdot = self.projector(i)
        psi0 = self.psi_plus(i, 0.0)
        trace = propagate(self.hamiltonian_fn(i), tau, psi0, cfg, s_grid)
        path = ideal_propagate(p, pdot, PropagationConfig(steps=cfg.steps), trace.s_grid)
        trace = trace.with_ideal(path.apply(psi0))
        return trace.with_overlaps(lambda s: self.psi_plus(i, s))

    def adiabatic_error(self, x, tau: float, config: PropagationConfig | None = None) -> float:
        return adiabatic_error(self.adiabatic_run(x, tau, config))


def build_instance(rho: GramMatrix, sigma: GramMatrix, witness: AdversaryWitness,
                   epsilon: float, alphabet: int | None = None) -> ConversionInstance:
    if alphabet is None:
        alphabet = 1 + max((int(c, 36) for x in rho.labels for c in x), default=0)
        alphabet = max(alphabet, 2)
    return ConversionInstance(rho, sigma, witness, epsilon, alphabet)


# --------------------------------------------------------------------------
# structural checks


EQUALITY_TOL = 1e-8
INEQUALITY_SLACK = 1e-10
FD_STEP = 1e-5


@dataclass
class PropositionReport:
    rows: list[dict]
    equality_tol: float = EQUALITY_TOL
    inequality_slack: float = INEQUALITY_SLACK

    EQUALITIES = ("item3", "item4", "item5", "item6", "item5_fd", "item6_fd", "item2_closed_form")
    MARGINS = ("item1_margin", "item1_sq_margin", "item2_margin", "item7_margin")

    def row_failures(self, row: dict) -> list[str]:
        bad = [k for k in self.EQUALITIES if row[k] > self.equality_tol]
        bad += [k for k in self.MARGINS if row[k] < -self.inequality_slack]
        return bad

    def failures(self) -> list[tuple[str, float, float, list[str]]]:
        out = []
        for r in self.rows:
            bad = self.row_failures(r)
            if bad:
                out.append((r["x"], r["s"], r["epsilon"], bad))
        return out

    @property
    def passed(self) -> bool:
        return not self.failures()

    def worst(self) -> dict:
        """Largest residual per equality item and smallest margin per inequality."""
        out = {k: max(r[k] for r in self.rows) for k in self.EQUALITIES}
        out.update({k: min(r[k] for r in self.rows) for k in self.MARGINS})
        return out


def proposition_row(inst: ConversionInstance, x, s: float, lam: np.ndarray) -> dict:
    i = inst.index(x)
    e, w = inst.epsilon, inst.W
    st = inst.psi_states(i, s)
    kp, km = inst.path_states(i, s)
    h = lam - inst.pi_projector(i)
    n = st.norm
    dist = float(np.linalg.norm(kp - st.plus_normalized))
    dpsi = inst.dpsi_plus(i, s)
    fd_psi = (inst.psi_plus(i, s + FD_STEP) - inst.psi_plus(i, s - FD_STEP)) / (2 * FD_STEP)
    dbig = 0.5 * math.pi * km
    fd_big = (inst.psi_states(i, s + FD_STEP).plus - inst.psi_states(i, s - FD_STEP).plus) / (2 * FD_STEP)
    target6 = 0.5 * math.pi * (h @ st.minus)
    return {
        "x": inst.labels[i],
        "s": float(s),
        "epsilon": e,
        "N": n,
        "item1_margin": 1 + e ** 2 / 2 - n,
        "item1_sq_margin": 1 + e ** 2 - n ** 2,
        "item2_distance": dist,
        "item2_margin": e - dist,
        "item2_closed_form": abs(dist - math.sqrt(max(0.0, 2 - 2 / n))),
        "item3": float(np.linalg.norm(lam @ st.plus_normalized)),
        "item4": float(np.linalg.norm(h @ st.plus_normalized)),
        "item5": abs(np.vdot(st.plus_normalized, dpsi)),
        "item5_fd": max(abs(np.vdot(st.plus_normalized, fd_psi)), float(np.linalg.norm(fd_psi - dpsi))),
        "item6": float(np.linalg.norm(dbig - target6)),
        "item6_fd": float(np.linalg.norm(fd_big - target6)),
        "item7_margin": 1 + w ** 2 / e ** 2 - float(np.linalg.norm(st.minus)) ** 2,
    }


def verify_proposition(inst: ConversionInstance, s_grid: Sequence[float] | None = None,
                       eps_set: Sequence[float] | None = None) -> PropositionReport:
    """Evaluate the seven structural properties on every ``(x, s, eps)``."""
    grid = default_grid() if s_grid is None else s_grid
    rows = []
    for e in (eps_set or [inst.epsilon]):
        ie = inst if e == inst.epsilon else inst.with_epsilon(e)
        for s in grid:
            lam = ie.lambda_projector(s)
            for i in range(len(ie.labels)):
                rows.append(proposition_row(ie, i, s, lam))
    return PropositionReport(rows)


def overlap_cross_identity(inst: ConversionInstance, u: np.ndarray, v: np.ndarray, s: float) -> float:
    """Largest deviation of ``<Psi_x^+|Psi_y^->`` from its closed form, for arbitrary ``u, v``.

    The closed form is ``-cos sin [rho - sigma - sum_{j: x_j != y_j} <u_xj|v_yj>]``
    and does not require the vectors to be a feasible witness.
    """
    e, w = inst.epsilon, inst.W
    lay = inst.layout
    masks = delta_masks(inst.labels)
    k = len(inst.labels)
    plus, minus = [], []
    for x in range(k):
        kp, km = inst.path_states(x, s)
        pp = np.zeros(lay.total, dtype=complex)
        mp = np.zeros(lay.total, dtype=complex)
        for i, y in enumerate(inst.symbols[x]):
            a, b = plus_minus_states(y, inst.alphabet)
            pp += lay.qw_state(i, a, u[x, i])
            mp += lay.qw_state(i, b, v[x, i])
        plus.append(kp + e / math.sqrt(w) * pp)
        minus.append(km + xi(s) * math.sqrt(w) / e * mp)
    numeric = np.array([[np.vdot(plus[x], minus[y]) for y in range(k)] for x in range(k)])
    cross = np.einsum("jxy,xjc,yjc->xy", masks, u.conj(), v)
    a = np.asarray(inst.rho.matrix) - np.asarray(inst.sigma.matrix)
    closed = -math.cos(theta(s)) * math.sin(theta(s)) * (a - cross)
    return float(np.abs(numeric - closed).max())
