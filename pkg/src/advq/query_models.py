"""Discrete and Hamiltonian query oracles.

The output register has dimension ``|Sigma| + 1`` with basis order
``(blank, 0, 1, ..., |Sigma|-1)``; the query register is ``C^n`` tensored with
it, index ``j * (|Sigma| + 1) + slot``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .gram_core import operator_norm


def symbol_index(c: str) -> int:
    """Alphabet symbols are single characters ``0-9a-z``."""
    return int(c, 36)


def parse_input(x, sigma: int) -> tuple[int, ...]:
    if isinstance(x, str):
        syms = tuple(symbol_index(c) for c in x)
    else:
        syms = tuple(int(c) for c in x)
    if any(not 0 <= s < sigma for s in syms):
        raise ValueError(f"input {x!r} has symbols outside an alphabet of size {sigma}")
    return syms


def plus_minus_states(y: int, sigma: int) -> tuple[np.ndarray, np.ndarray]:
    """``|y+-> = (|blank> +- |y>) / sqrt(2)`` in C^(sigma + 1)."""
    if not 0 <= y < sigma:
        raise ValueError(f"symbol {y} outside alphabet of size {sigma}")
    plus = np.zeros(sigma + 1, dtype=complex)
    minus = np.zeros(sigma + 1, dtype=complex)
    plus[0] = minus[0] = 1 / np.sqrt(2)
    plus[1 + y] = 1 / np.sqrt(2)
    minus[1 + y] = -1 / np.sqrt(2)
    return plus, minus


def default_h(sigma: int) -> np.ndarray:
    """``h(y) = |y-><y-|`` for every symbol, shape (sigma, sigma + 1, sigma + 1)."""
    out = np.zeros((sigma, sigma + 1, sigma + 1), dtype=complex)
    for y in range(sigma):
        m = plus_minus_states(y, sigma)[1]
        out[y] = np.outer(m, m.conj())
    return out


@dataclass(frozen=True)
class OracleSpec:
    """Input length, alphabet size, and the per-symbol Hermitian family ``h``."""

    n: int
    sigma: int
    h: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.n < 0 or self.sigma < 1:
            raise ValueError("need n >= 0 and sigma >= 1")
        if self.h is not None:
            h = np.array(self.h, dtype=complex)
            if h.shape != (self.sigma, self.sigma + 1, self.sigma + 1):
                raise ValueError(f"h must have shape {(self.sigma, self.sigma + 1, self.sigma + 1)}")
            for y, hy in enumerate(h):
                if np.abs(hy - hy.conj().T).max() > 1e-12:
                    raise ValueError(f"h({y}) is not Hermitian")
                if operator_norm(hy) > 1 + 1e-12:
                    raise ValueError(f"||h({y})|| exceeds 1")
            object.__setattr__(self, "h", h)

    @property
    def is_default(self) -> bool:
        return self.h is None

    @property
    def family(self) -> np.ndarray:
        return default_h(self.sigma) if self.h is None else self.h

    @property
    def register_dim(self) -> int:
        return self.sigma + 1

    @property
    def query_dim(self) -> int:
        return self.n * (self.sigma + 1)


def discrete_oracle(x, sigma: int) -> np.ndarray:
    """Swap ``|j>|blank>`` and ``|j>|x_j>`` for every ``j``; fix everything else."""
    syms = parse_input(x, sigma)
    d = sigma + 1
    o = np.eye(len(syms) * d, dtype=complex)
    for j, y in enumerate(syms):
        a, b = j * d, j * d + 1 + y
        o[[a, b]] = o[[b, a]]
    return o


def hamiltonian_oracle(x, spec: OracleSpec) -> np.ndarray:
    """Block-diagonal ``sum_j |j><j| (x) h(x_j)``."""
    syms = parse_input(x, spec.sigma)
    if len(syms) != spec.n:
        raise ValueError(f"input length {len(syms)} != n={spec.n}")
    fam = spec.family
    d = spec.register_dim
    hq = np.zeros((spec.query_dim, spec.query_dim), dtype=complex)
    for j, y in enumerate(syms):
        hq[j * d:(j + 1) * d, j * d:(j + 1) * d] = fam[y]
    return hq


def oracle_exponential(x, spec: OracleSpec, duration: float = np.pi) -> np.ndarray:
    """``exp(-i duration H_Q(x))``.

    For the default projector family at ``duration = pi`` this is ``I - 2 H_Q``.
    """
    hq = hamiltonian_oracle(x, spec)
    if spec.is_default and duration == np.pi:
        return np.eye(hq.shape[0], dtype=complex) - 2 * hq
    w, v = np.linalg.eigh(hq)
    return (v * np.exp(-1j * duration * w)) @ v.conj().T


def check_oracle_equivalence(x, spec: OracleSpec) -> float:
    """``||O_x - exp(-i pi H_Q(x))||``; zero up to rounding for the default family."""
    return operator_norm(discrete_oracle(x, spec.sigma) - oracle_exponential(x, spec))


@dataclass
class DriverSchedule:
    """Input-independent driver ``H_D(t)``, coupling ``alpha(t)``, horizon ``T``."""

    driver: Callable[[float], np.ndarray]
    alpha: Callable[[float], float]
    horizon: float

    def check(self, grid: Sequence[float]) -> float:
        """Largest ``|alpha(t)|`` on the grid; raises if it exceeds 1."""
        worst = max((abs(self.alpha(t)) for t in grid), default=0.0)
        if worst > 1 + 1e-12:
            raise ValueError(f"|alpha(t)| reaches {worst:.6g} > 1")
        return worst

    def hamiltonian(self, oracle: np.ndarray) -> Callable[[float], np.ndarray]:
        """``t -> H_D(t) + alpha(t) oracle``."""
        def h(t: float) -> np.ndarray:
            return self.driver(t) + self.alpha(t) * oracle
        return h
