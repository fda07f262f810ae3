"""Reference SDP value of the adversary bound via cvxpy.

Used only as an independent check of :mod:`advq.adversary` by the tests and
scripts; the library never imports it. Needs the ``oracle`` extra (cvxpy).
"""

from __future__ import annotations

import numpy as np

from .adversary import delta_masks
from .gram_core import GramMatrix


def adversary_sdp(rho: GramMatrix, sigma: GramMatrix, solver: str = "CLARABEL") -> float:
    """Minimise ``t`` over per-coordinate PSD blocks ``Z_j = [[U U*, U V*], [V U*, V V*]]``.

    Constraints: ``sum_j Delta_j o Z_j[:k, k:] = rho - sigma`` and both diagonal
    sums bounded by ``t``.
    """
    import cvxpy as cp

    a = np.asarray(rho.matrix) - np.asarray(sigma.matrix)
    masks = delta_masks(rho.labels)
    k, n = a.shape[0], masks.shape[0]
    if np.abs(a).max() == 0:
        return 0.0
    t = cp.Variable()
    z = [cp.Variable((2 * k, 2 * k), hermitian=True) for _ in range(n)]
    cons = [zj >> 0 for zj in z]
    cons.append(sum(cp.multiply(masks[j], z[j][:k, k:]) for j in range(n)) == a)
    cons.append(cp.real(cp.diag(sum(zj[:k, :k] for zj in z))) <= t)
    cons.append(cp.real(cp.diag(sum(zj[k:, k:] for zj in z))) <= t)
    prob = cp.Problem(cp.Minimize(t), cons)
    prob.solve(solver=solver)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"SDP solver status {prob.status}")
    return float(t.value)
