"""Dense complex linear algebra for Gram matrices and factorization norms.

Everything here works on plain ``numpy`` arrays of dtype ``complex128``.
Conventions: ``<A, B> = tr(A^dagger B)``, ``(A o B)_ij = A_ij B_ij``, and a Gram
matrix stores ``G[x, y] = <g_x | g_y>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
UNIT_DIAG_TOL = 1e-10
RANK_CUTOFF = 1e-10
FACTOR_TOL = 1e-9


class GramError(ValueError):
    """Raised when a matrix fails Gram-matrix validation."""


class InfeasibleFactorization(ValueError):
    """A claimed factorization does not reproduce its target matrix."""

    def __init__(self, residual: float, worst: tuple[int, int]):
        self.residual = residual
        self.worst = worst
        super().__init__(f"factorization residual {residual:.3e} at entry {worst}")


def as_complex_matrix(a, *, hermitian: bool = False) -> np.ndarray:
    """Coerce ``a`` to a finite 2-d complex array, optionally checking Hermiticity."""
    m = np.array(a, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    if hermitian:
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"Hermitian matrix must be square, got {m.shape}")
        dev = np.abs(m - m.conj().T).max(initial=0.0)
        if dev > HERMITIAN_TOL:
            raise ValueError(f"matrix is not Hermitian (max deviation {dev:.3e})")
    return m


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def matrix_inner_product(a, b) -> complex:
    """Return ``tr(A^dagger B)``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    _same_shape(a, b)
    return complex(np.vdot(a, b))


def hadamard(a, b) -> np.ndarray:
    """Entrywise product of two equally shaped matrices."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    _same_shape(a, b)
    return a * b


def operator_norm(a) -> float:
    """Largest singular value."""
    a = np.asarray(a, dtype=complex)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def trace_norm(a) -> float:
    """Sum of singular values."""
    a = np.asarray(a, dtype=complex)
    if a.size == 0:
        return 0.0
    return float(np.linalg.svd(a, compute_uv=False).sum())


def all_ones(k: int) -> np.ndarray:
    return np.ones((k, k), dtype=complex)


# --------------------------------------------------------------------------
# Gram matrices


@dataclass(frozen=True)
class GramMatrix:
    """A PSD, unit-diagonal matrix indexed by input strings."""

    labels: tuple[str, ...]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape != (len(labels), len(labels)):
            raise GramError(f"matrix shape {m.shape} does not match {len(labels)} labels")
        if len(set(labels)) != len(labels):
            raise GramError("labels must be distinct")
        if not np.all(np.isfinite(m)):
            raise GramError("matrix has non-finite entries")
        dev = np.abs(m - m.conj().T).max(initial=0.0)
        if dev > HERMITIAN_TOL:
            raise GramError(f"Gram matrix is not Hermitian (max deviation {dev:.3e})")
        m = 0.5 * (m + m.conj().T)
        diag_dev = np.abs(np.diag(m) - 1.0).max(initial=0.0)
        if diag_dev > UNIT_DIAG_TOL:
            raise GramError(f"diagonal deviates from 1 by {diag_dev:.3e}")
        if m.size:
            lo = np.linalg.eigvalsh(m).min()
            if lo < -PSD_TOL:
                raise GramError(f"Gram matrix is not PSD (min eigenvalue {lo:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "matrix", m)

    @property
    def size(self) -> int:
        return len(self.labels)

    @classmethod
    def ones(cls, labels: Sequence[str]) -> "GramMatrix":
        return cls(tuple(labels), all_ones(len(labels)))

    @classmethod
    def identity(cls, labels: Sequence[str]) -> "GramMatrix":
        return cls(tuple(labels), np.eye(len(labels), dtype=complex))

    @classmethod
    def from_function(cls, table: Mapping[str, object]) -> "GramMatrix":
        """``F[x, y] = 1`` if ``f(x) == f(y)`` else 0."""
        labels = tuple(table)
        vals = [table[x] for x in labels]
        m = np.array([[1.0 if a == b else 0.0 for b in vals] for a in vals], dtype=complex)
        return cls(labels, m)


@dataclass(frozen=True)
class StateRealization:
    """Unit vectors (rows of ``vectors``) whose Gram matrix is ``source``."""

    vectors: np.ndarray
    source: GramMatrix

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def vector(self, label: str) -> np.ndarray:
        return self.vectors[self.source.labels.index(label)]

    def gram(self) -> np.ndarray:
        return self.vectors.conj() @ self.vectors.T


def _psd_factor(m: np.ndarray) -> np.ndarray:
    """Rows ``r_x`` with ``<r_x|r_y> = m[x, y]``, one column per retained eigenvalue."""
    w, vecs = np.linalg.eigh(m)
    if w.size and w.min() < -PSD_TOL:
        raise GramError(f"matrix is not PSD (min eigenvalue {w.min():.3e})")
    order = np.argsort(-w, kind="stable")
    w, vecs = w[order], vecs[:, order]
    keep = w > RANK_CUTOFF
    w, vecs = w[keep], vecs[:, keep]
    # phase-fix each eigenvector so its largest entry is real positive
    for c in range(vecs.shape[1]):
        col = vecs[:, c]
        i = int(np.argmax(np.abs(col) > np.abs(col).max() - 1e-12))
        vecs[:, c] = col * (abs(col[i]) / col[i])
    return vecs.conj() * np.sqrt(w)


def gram_factorize(g: GramMatrix) -> StateRealization:
    """Realize ``g`` by vectors of dimension equal to its numerical rank."""
    vecs = _psd_factor(np.asarray(g.matrix))
    realized = vecs.conj() @ vecs.T
    err = np.abs(realized - g.matrix).max(initial=0.0)
    if err > FACTOR_TOL:
        raise GramError(f"factorization error {err:.3e} exceeds {FACTOR_TOL}")
    return StateRealization(vecs, g)


def random_gram(k: int, rank: int, rng: np.random.Generator, *, real: bool = False) -> np.ndarray:
    """Gram matrix of ``k`` random unit vectors in dimension ``rank``."""
    x = rng.normal(size=(k, rank))
    if not real:
        x = x + 1j * rng.normal(size=(k, rank))
    x = x / np.linalg.norm(x, axis=1, keepdims=True)
    g = x.conj() @ x.T
    g = 0.5 * (g + g.conj().T)
    g[np.diag_indices(k)] = 1.0
    return g


# --------------------------------------------------------------------------
# gamma_2 bounds


def gamma2_upper(u, v, a=None, *, tol: float = FACTOR_TOL) -> float:
    """gamma_2 upper bound from a factorization ``a[x, y] = <u_x|v_y>``.

    ``u`` and ``v`` hold one vector per row. When ``a`` is given the
    factorization is checked and :class:`InfeasibleFactorization` is raised if
    any entry is off by more than ``tol``.
    """
    u = np.atleast_2d(np.asarray(u, dtype=complex))
    v = np.atleast_2d(np.asarray(v, dtype=complex))
    if a is not None:
        a = np.asarray(a, dtype=complex)
        r = np.abs(u.conj() @ v.T - a)
        if r.size and r.max() > tol:
            worst = np.unravel_index(int(np.argmax(r)), r.shape)
            raise InfeasibleFactorization(float(r.max()), (int(worst[0]), int(worst[1])))
    nu = (np.abs(u) ** 2).sum(axis=1).max(initial=0.0)
    nv = (np.abs(v) ** 2).sum(axis=1).max(initial=0.0)
    return float(max(nu, nv))


def _unit(z: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(z)
    return z / n if n > 0 else z


def _gamma2_local(a: np.ndarray, u: np.ndarray, v: np.ndarray, iters: int, tol: float) -> float:
    # alternating maximisation of Re tr(Q^dagger diag(u) A diag(conj v)) over Q, u, v
    best = 0.0
    for _ in range(iters):
        m = u[:, None] * a * v.conj()[None, :]
        w, s, zh = np.linalg.svd(m)
        val = float(s.sum())
        q = w @ zh
        c = (q.conj() * a * v.conj()[None, :]).sum(axis=1)
        u = _unit(c.conj())
        d = (q.conj() * a * u[:, None]).sum(axis=0)
        v = _unit(d)
        if val - best <= tol * max(1.0, val):
            best = max(best, val)
            break
        best = val
    m = u[:, None] * a * v.conj()[None, :]
    return max(best, trace_norm(m))


def gamma2_lower(a, samples: int = 32, *, seed: int = 0, local_iters: int = 200) -> float:
    """Best sampled, locally ascended value of ``||A o u v^*||_tr`` over unit ``u, v``."""
    a = np.asarray(a, dtype=complex)
    k1, k2 = a.shape
    if a.size == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    best = 0.0
    for r in range(samples):
        if r == 0:
            u = np.ones(k1, dtype=complex) / np.sqrt(k1)
            v = np.ones(k2, dtype=complex) / np.sqrt(k2)
        else:
            u = _unit(rng.normal(size=k1) + 1j * rng.normal(size=k1))
            v = _unit(rng.normal(size=k2) + 1j * rng.normal(size=k2))
        best = max(best, _gamma2_local(a, u, v, local_iters, 1e-12))
    return best


# --------------------------------------------------------------------------
# fidelity / distance


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (vecs * np.sqrt(np.clip(w, 0.0, None))) @ vecs.conj().T


def fidelity(rho, sigma) -> float:
    """Root fidelity ``tr sqrt(sqrt(rho) sigma sqrt(rho))`` of two density matrices."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    return trace_norm(_psd_sqrt(rho) @ _psd_sqrt(sigma))


def trace_distance(rho, sigma) -> float:
    """Half the sum of absolute eigenvalues of ``rho - sigma``."""
    d = np.asarray(rho, dtype=complex) - np.asarray(sigma, dtype=complex)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())


def mask_by(g, u) -> np.ndarray:
    """``G o u u^*``, a density matrix when ``G`` is Gram and ``u`` is a unit vector."""
    g = np.asarray(g, dtype=complex)
    u = np.asarray(u, dtype=complex)
    return g * np.outer(u, u.conj())


@dataclass(frozen=True)
class HadamardBound:
    """One-sided optimizer result: ``value`` is attained at ``u``."""

    value: float
    u: np.ndarray


def _check_pair(rho: GramMatrix, sigma: GramMatrix) -> None:
    if rho.labels != sigma.labels:
        raise GramError("rho and sigma must share labels")


def _random_unit(k: int, rng: np.random.Generator) -> np.ndarray:
    return _unit(rng.normal(size=k) + 1j * rng.normal(size=k))


def hadamard_fidelity(
    rho: GramMatrix,
    sigma: GramMatrix,
    *,
    restarts: int = 32,
    tol: float = 1e-8,
    seed: int = 0,
) -> HadamardBound:
    """Multi-start minimisation of ``F(rho o uu^*, sigma o uu^*)`` over unit ``u``.

    The returned value is evaluated at the returned ``u`` and therefore upper
    bounds the true minimum.
    """
    _check_pair(rho, sigma)
    k = rho.size
    r_m, s_m = np.asarray(rho.matrix), np.asarray(sigma.matrix)

    def objective(z):
        u = _unit(z[:k] + 1j * z[k:])
        return fidelity(mask_by(r_m, u), mask_by(s_m, u))

    rng = np.random.default_rng(seed)
    best_val, best_u = np.inf, None
    for r in range(restarts):
        u0 = np.ones(k, dtype=complex) / np.sqrt(k) if r == 0 else _random_unit(k, rng)
        res = minimize(objective, np.concatenate([u0.real, u0.imag]), method="L-BFGS-B",
                       options={"ftol": tol, "gtol": tol})
        u = _unit(res.x[:k] + 1j * res.x[k:])
        val = fidelity(mask_by(r_m, u), mask_by(s_m, u))
        if val < best_val - 1e-14:
            best_val, best_u = val, u
    return HadamardBound(float(best_val), best_u)


def _distance_ascent(a: np.ndarray, u: np.ndarray, iters: int, tol: float) -> tuple[float, np.ndarray]:
    # tr(P (A o uu^*)) = u^dagger (P o A^T) u, maximised alternately over P and u
    best = 0.5 * trace_norm(mask_by(a, u))
    for _ in range(iters):
        m = mask_by(a, u)
        w, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
        p = (vecs * np.sign(w)) @ vecs.conj().T
        b = p * a.T
        w2, v2 = np.linalg.eigh(0.5 * (b + b.conj().T))
        u_new = v2[:, -1]
        val = 0.5 * trace_norm(mask_by(a, u_new))
        if val <= best + tol:
            if val > best:
                best, u = val, u_new
            break
        best, u = val, u_new
    return best, u


def hadamard_distance(
    rho: GramMatrix,
    sigma: GramMatrix,
    *,
    restarts: int = 32,
    tol: float = 1e-8,
    seed: int = 0,
    iters: int = 500,
) -> HadamardBound:
    """Multi-start maximisation of ``D(rho o uu^*, sigma o uu^*)`` over unit ``u``.

    The value is attained at the returned ``u``, so it lower bounds the
    Hadamard product distance.
    """
    _check_pair(rho, sigma)
    k = rho.size
    a = np.asarray(rho.matrix) - np.asarray(sigma.matrix)
    rng = np.random.default_rng(seed)
    best_val, best_u = -np.inf, None
    for r in range(restarts):
        u0 = np.ones(k, dtype=complex) / np.sqrt(k) if r == 0 else _random_unit(k, rng)
        val, u = _distance_ascent(a, u0, iters, tol)
        val = trace_distance(mask_by(rho.matrix, u), mask_by(sigma.matrix, u))
        if val > best_val + 1e-14:
            best_val, best_u = val, u
    return HadamardBound(float(best_val), best_u)
