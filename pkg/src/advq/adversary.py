"""Adversary-bound witnesses (upper bounds) and certificates (lower bounds).

A witness is a feasible point of the factorization ("min") form of the
filtered gamma_2 norm ``gamma_2(rho - sigma | Delta)``::

    (rho - sigma)[x, y] = sum_j Delta_j[x, y] <u_{x,j} | v_{y,j}>

with value ``max_x max(sum_j |u_{x,j}|^2, sum_j |v_{x,j}|^2)``. A certificate
is a Hermitian ``Gamma`` with ``||Gamma o Delta_j|| <= 1`` for all ``j``; its
value ``||Gamma o (rho - sigma)||`` lower bounds the same quantity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .gram_core import GramMatrix, operator_norm

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9
CONSTRAINT_TOL = 1e-9
MAX_INPUTS = 32
MAX_LENGTH = 6


def input_length(labels: Sequence[str]) -> int:
    lengths = {len(x) for x in labels}
    if len(lengths) != 1:
        raise ValueError(f"labels have ragged lengths {sorted(lengths)}")
    return lengths.pop()


def delta_masks(labels: Sequence[str]) -> np.ndarray:
    """Stack of ``n`` masks with ``masks[j, x, y] = 1 - delta(x_j, y_j)``."""
    n = input_length(labels)
    lab = list(labels)
    return np.array(
        [[[float(a[j] != b[j]) for b in lab] for a in lab] for j in range(n)]
    ).reshape(n, len(lab), len(lab))


@dataclass(frozen=True)
class AdversaryWitness:
    """Vectors ``u[x, j]`` and ``v[x, j]`` in C^m, arrays of shape (|X|, n, m)."""

    labels: tuple[str, ...]
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    def __post_init__(self):
        u = np.array(self.u, dtype=complex)
        v = np.array(self.v, dtype=complex)
        if u.ndim != 3 or u.shape != v.shape or u.shape[0] != len(self.labels):
            raise ValueError(f"witness arrays must share shape (|X|, n, m); got {u.shape}, {v.shape}")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def m(self) -> int:
        return self.u.shape[2]

    @property
    def n(self) -> int:
        return self.u.shape[1]

    @property
    def u_weights(self) -> np.ndarray:
        """``sum_j |u_{x,j}|^2`` per input."""
        return (np.abs(self.u) ** 2).sum(axis=(1, 2))

    @property
    def v_weights(self) -> np.ndarray:
        return (np.abs(self.v) ** 2).sum(axis=(1, 2))

    @property
    def value(self) -> float:
        if not self.labels:
            return 0.0
        return float(max(self.u_weights.max(), self.v_weights.max()))

    def scaled(self, t: float) -> "AdversaryWitness":
        """``u -> t u``, ``v -> v / t``; the represented matrix is unchanged."""
        return AdversaryWitness(self.labels, self.u * t, self.v / t)

    def balanced(self) -> "AdversaryWitness":
        """Rescale so that the u- and v-side weights have equal maxima."""
        a, b = self.u_weights.max(initial=0.0), self.v_weights.max(initial=0.0)
        if a <= 0 or b <= 0:
            return self
        return self.scaled((b / a) ** 0.25)

    @classmethod
    def zero(cls, labels: Sequence[str], n: int, m: int = 1) -> "AdversaryWitness":
        z = np.zeros((len(labels), n, m), dtype=complex)
        return cls(tuple(labels), z, z.copy())


def witness_matrix(masks: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``sum_j masks[j] o [<u_{x,j}|v_{y,j}>]_{x,y}``."""
    return np.einsum("jxy,xjc,yjc->xy", masks, u.conj(), v)


@dataclass(frozen=True)
class WitnessReport:
    feasible: bool
    residual: float
    value: float
    worst: tuple[str, str] | None


def _difference(rho: GramMatrix, sigma: GramMatrix) -> np.ndarray:
    if rho.labels != sigma.labels:
        raise ValueError("rho and sigma must share labels")
    return np.asarray(rho.matrix) - np.asarray(sigma.matrix)


def verify_witness(rho: GramMatrix, sigma: GramMatrix, w: AdversaryWitness,
                   tol: float = FEASIBILITY_TOL) -> WitnessReport:
    """Check the feasibility equation and recompute the witness value."""
    if w.labels != rho.labels:
        raise ValueError("witness labels differ from problem labels")
    masks = delta_masks(rho.labels)
    if masks.shape[0] != w.n:
        raise ValueError(f"witness has {w.n} coordinates, inputs have length {masks.shape[0]}")
    r = np.abs(witness_matrix(masks, w.u, w.v) - _difference(rho, sigma))
    res = float(r.max(initial=0.0))
    worst = None
    if r.size:
        i, j = np.unravel_index(int(np.argmax(r)), r.shape)
        worst = (rho.labels[i], rho.labels[j])
    return WitnessReport(res <= tol, res, w.value, worst)


@dataclass(frozen=True)
class AdversaryCertificate:
    """Hermitian ``gamma`` over the inputs, unit ``v``, and ``value = ||gamma o (rho - sigma)||``."""

    gamma: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    value: float


def top_eigenvector(m: np.ndarray) -> np.ndarray:
    """Unit eigenvector for the eigenvalue of largest magnitude, phase-normalised."""
    w, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    v = vecs[:, int(np.argmax(np.abs(w)))]
    i = int(np.argmax(np.abs(v)))
    return v * (abs(v[i]) / v[i]) if abs(v[i]) > 0 else v


def make_certificate(rho: GramMatrix, sigma: GramMatrix, gamma) -> AdversaryCertificate:
    gamma = np.array(gamma, dtype=complex)
    m = gamma * _difference(rho, sigma)
    return AdversaryCertificate(gamma, top_eigenvector(m), operator_norm(m))


@dataclass(frozen=True)
class CertificateReport:
    valid: bool
    value: float
    constraint_norms: tuple[float, ...]
    violations: tuple[int, ...]


def verify_certificate(rho: GramMatrix, sigma: GramMatrix, c: AdversaryCertificate,
                       tol: float = CONSTRAINT_TOL) -> CertificateReport:
    """Validate ``||gamma o Delta_j|| <= 1`` and return ``||gamma o (rho - sigma)||``."""
    gamma = np.asarray(c.gamma, dtype=complex)
    if np.abs(gamma - gamma.conj().T).max(initial=0.0) > 1e-12:
        raise ValueError("certificate matrix is not Hermitian")
    masks = delta_masks(rho.labels)
    norms = tuple(operator_norm(gamma * d) for d in masks)
    bad = tuple(j for j, s in enumerate(norms) if s > 1.0 + tol)
    value = operator_norm(gamma * _difference(rho, sigma))
    return CertificateReport(not bad, value, norms, bad)


# --------------------------------------------------------------------------
# constructions and solver


def column_witness(rho: GramMatrix, sigma: GramMatrix) -> AdversaryWitness:
    """A always-feasible (usually loose) witness.

    ``u_{x,j} = e_x`` and ``v_{y,j}`` carries column ``y`` of ``rho - sigma``
    restricted to pairs whose first differing coordinate is ``j``.
    """
    a = _difference(rho, sigma)
    labels = rho.labels
    k, n = len(labels), input_length(labels)
    u = np.zeros((k, n, k), dtype=complex)
    v = np.zeros((k, n, k), dtype=complex)
    for x in range(k):
        u[x, :, x] = 1.0
    for x, lx in enumerate(labels):
        for y, ly in enumerate(labels):
            if x == y:
                continue
            j = next(i for i in range(n) if lx[i] != ly[i])
            v[y, j, x] = a[x, y]
    return AdversaryWitness(labels, u, v).balanced()


def _min_norm_side(a: np.ndarray, masks: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Least-norm ``v`` solving the feasibility equation for fixed ``u``."""
    k, n, m = u.shape
    v = np.zeros((a.shape[1], n, m), dtype=complex)
    for y in range(a.shape[1]):
        rows = np.concatenate([masks[j][:, y, None] * u[:, j, :].conj() for j in range(n)], axis=1)
        sol = np.linalg.lstsq(rows, a[:, y], rcond=None)[0]
        v[y] = sol.reshape(n, m)
    return v


def repair(rho: GramMatrix, sigma: GramMatrix, u: np.ndarray) -> AdversaryWitness:
    """Keep ``u`` and replace ``v`` by the least-squares (least-norm) solution."""
    a = _difference(rho, sigma)
    v = _min_norm_side(a, delta_masks(rho.labels), u)
    return AdversaryWitness(rho.labels, u, v).balanced()


def _polish(rho, sigma, w: AdversaryWitness, iters: int) -> AdversaryWitness:
    # alternating exact minimisation of each side; never increases the balanced value
    a = _difference(rho, sigma)
    masks = delta_masks(rho.labels)
    masks_t = masks.transpose(0, 2, 1)
    best = w
    for _ in range(iters):
        v = _min_norm_side(a, masks, best.u)
        u = _min_norm_side(a.conj().T, masks_t, v)
        cand = AdversaryWitness(rho.labels, u, v).balanced()
        rep = verify_witness(rho, sigma, cand, tol=FEASIBILITY_TOL / 10)
        if not rep.feasible or cand.value >= best.value * (1 - 1e-10):
            break
        best = cand
    return best


@dataclass
class SolverConfig:
    restarts: int = 3
    max_rank: int | None = None
    outer_iters: int = 12
    inner_iters: int = 500
    penalty: float = 10.0
    polish_iters: int = 50
    certificate_restarts: int = 12
    certificate_iters: int = 300
    seed: int = 0


def _alm_witness(a: np.ndarray, masks: np.ndarray, m: int, rng: np.random.Generator,
                 cfg: SolverConfig) -> np.ndarray:
    """Penalised low-rank descent on the min form; returns the u-side only.

    The maximum over rows is smoothed by a p-norm whose exponent grows across
    augmented-Lagrangian rounds.
    """
    k = a.shape[0]
    n = masks.shape[0]
    shp = (k, n, m)
    size = k * n * m
    scale = np.sqrt(np.abs(a).max() / (n * m))
    u = scale * (rng.normal(size=shp) + 1j * rng.normal(size=shp))
    v = scale * (rng.normal(size=shp) + 1j * rng.normal(size=shp))
    lam = np.zeros_like(a)
    mu, p = cfg.penalty, 8.0

    def unpack(z):
        c = z[: 2 * size] + 1j * z[2 * size:]
        return c[:size].reshape(shp), c[size:].reshape(shp)

    def objective(z):
        uu, vv = unpack(z)
        c = np.concatenate([(np.abs(uu) ** 2).sum((1, 2)), (np.abs(vv) ** 2).sum((1, 2))])
        cmax = c.max()
        if cmax <= 0:
            smooth, weights = 0.0, np.zeros_like(c)
        else:
            smooth = cmax * ((c / cmax) ** p).sum() ** (1.0 / p)
            weights = (c / smooth) ** (p - 1)
        r = witness_matrix(masks, uu, vv) - a
        y = mu * r + lam
        val = smooth + 0.5 * mu * np.vdot(r, r).real + np.vdot(lam, r).real
        gu = 2 * weights[:k, None, None] * uu + np.einsum("jxy,xy,yjc->xjc", masks, y.conj(), vv)
        gv = 2 * weights[k:, None, None] * vv + np.einsum("jxy,xy,xjc->yjc", masks, y, uu)
        g = np.concatenate([gu.ravel(), gv.ravel()])
        return val, np.concatenate([g.real, g.imag])

    flat = np.concatenate([u.ravel(), v.ravel()])
    z = np.concatenate([flat.real, flat.imag])
    for _ in range(cfg.outer_iters):
        z = minimize(objective, z, jac=True, method="L-BFGS-B",
                     options={"maxiter": cfg.inner_iters}).x
        uu, vv = unpack(z)
        lam = lam + mu * (witness_matrix(masks, uu, vv) - a)
        mu = min(2 * mu, 1e4)
        p = min(1.5 * p, 256.0)
    return unpack(z)[0]


def _hermitian_params(k: int):
    iu = np.triu_indices(k, 1)
    di = np.diag_indices(k)
    h = len(iu[0])

    def build(z):
        s = np.zeros((k, k))
        s[di] = z[:k]
        s[iu] = z[k:k + h]
        s = s + np.triu(s, 1).T
        anti = np.zeros((k, k))
        anti[iu] = z[k + h:]
        return s + 1j * (anti - anti.T)

    def flatten(g):
        return np.concatenate([g.real[di], g.real[iu], g.imag[iu]])

    def grad(c):
        # d/dGamma of Re sum_xy c_xy Gamma_xy, in the parametrisation above
        gs = c.real + c.real.T
        gs[di] /= 2
        gk = -(c.imag - c.imag.T)
        return np.concatenate([gs[di], gs[iu], gk[iu]])

    return build, flatten, grad


def _top_singular(m: np.ndarray):
    w, s, zh = np.linalg.svd(m)
    return s[0], w[:, 0], zh[0].conj()


def _certificate_ascent(a: np.ndarray, masks: np.ndarray, g0: np.ndarray, iters: int) -> np.ndarray:
    """Maximise ``log ||G o A|| - log max_j ||G o Delta_j||`` over Hermitian ``G``."""
    k = a.shape[0]
    build, flatten, grad = _hermitian_params(k)

    def objective(z):
        g = build(z)
        s, l, r = _top_singular(g * a)
        tops = [_top_singular(g * d) for d in masks]
        jm = int(np.argmax([t[0] for t in tops]))
        t, l2, r2 = tops[jm]
        if s <= 1e-300 or t <= 1e-300:
            return 0.0, np.zeros_like(z)
        c1 = l.conj()[:, None] * a * r[None, :]
        c2 = l2.conj()[:, None] * masks[jm] * r2[None, :]
        return -(np.log(s) - np.log(t)), -(grad(c1) / s - grad(c2) / t)

    z = minimize(objective, flatten(g0), jac=True, method="L-BFGS-B",
                 options={"maxiter": iters}).x
    g = build(z)
    top = max(operator_norm(g * d) for d in masks)
    return g / top if top > 0 else g


@dataclass(frozen=True)
class AdversaryResult:
    witness: AdversaryWitness
    certificate: AdversaryCertificate
    gap: float

    @property
    def upper(self) -> float:
        return self.witness.value

    @property
    def lower(self) -> float:
        return self.certificate.value


def solve_certificate(rho: GramMatrix, sigma: GramMatrix, cfg: SolverConfig | None = None) -> AdversaryCertificate:
    cfg = cfg or SolverConfig()
    a = _difference(rho, sigma)
    masks = delta_masks(rho.labels)
    k = a.shape[0]
    rng = np.random.default_rng(cfg.seed + 7919)
    best = make_certificate(rho, sigma, np.zeros((k, k)))
    starts = [0.5 * (a + a.conj().T)]
    for _ in range(cfg.certificate_restarts):
        g = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
        starts.append(g + g.conj().T)
    for g0 in starts:
        if np.abs(g0).max() == 0:
            continue
        g = _certificate_ascent(a, masks, g0, cfg.certificate_iters)
        cand = make_certificate(rho, sigma, g)
        if verify_certificate(rho, sigma, cand).valid and cand.value > best.value + 1e-14:
            best = cand
    return best


def solve_witness(rho: GramMatrix, sigma: GramMatrix, cfg: SolverConfig | None = None) -> AdversaryWitness:
    """Best feasible witness found; falls back to :func:`column_witness`."""
    cfg = cfg or SolverConfig()
    a = _difference(rho, sigma)
    masks = delta_masks(rho.labels)
    k, n = a.shape[0], masks.shape[0]
    best = column_witness(rho, sigma)
    max_rank = cfg.max_rank or 2 * k
    rng = np.random.default_rng(cfg.seed)
    m, prev = 1, np.inf
    while m <= max_rank:
        for _ in range(cfg.restarts):
            u = _alm_witness(a, masks, m, rng, cfg)
            cand = repair(rho, sigma, u)
            if not verify_witness(rho, sigma, cand).feasible:
                logger.debug("rank %d start infeasible after repair", m)
                continue
            cand = _polish(rho, sigma, cand, cfg.polish_iters)
            if cand.value < best.value:
                best = cand
        if best.value > prev * (1 - 1e-6):
            break
        prev = best.value
        m *= 2
    return best


def solve_adversary(rho: GramMatrix, sigma: GramMatrix, cfg: SolverConfig | None = None) -> AdversaryResult:
    """Two-sided heuristic solve: a feasible witness, a valid certificate, and their gap."""
    cfg = cfg or SolverConfig()
    a = _difference(rho, sigma)
    k = a.shape[0]
    n = input_length(rho.labels)
    if k > MAX_INPUTS or n > MAX_LENGTH:
        raise ValueError(f"solver limited to |X| <= {MAX_INPUTS}, n <= {MAX_LENGTH}")
    if np.abs(a).max(initial=0.0) <= FEASIBILITY_TOL:
        zero = AdversaryWitness.zero(rho.labels, n)
        return AdversaryResult(zero, make_certificate(rho, sigma, np.zeros((k, k))), 0.0)
    witness = solve_witness(rho, sigma, cfg)
    cert = solve_certificate(rho, sigma, cfg)
    upper, lower = witness.value, cert.value
    gap = (upper - lower) / upper if upper > 0 else 0.0
    return AdversaryResult(witness, cert, float(gap))
