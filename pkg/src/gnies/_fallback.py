"""Pure-Python/numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` loop for loop so both backends orient edges in
the same order and agree on MLE iterates up to floating-point rounding.
"""

import numpy as np
from scipy.linalg import cho_solve

from .exceptions import SingularSystem

RIDGE = 1e-12


def _rule_fires(M, p, a, b):
    # M[a][b] and M[b][a] are both set: a - b is undirected
    for c in range(p):
        if c == a or c == b:
            continue
        # R1: c -> a - b, c and b non-adjacent
        if M[c][a] and not M[a][c] and not M[c][b] and not M[b][c]:
            return True
        # R2: a -> c -> b
        if M[a][c] and not M[c][a] and M[c][b] and not M[b][c]:
            return True
    for c in range(p):
        if c == a or c == b:
            continue
        for d in range(p):
            if d == a or d == b or d == c:
                continue
            # R3: a - c -> b, a - d -> b, c and d non-adjacent
            if (c < d and M[a][c] and M[c][a] and M[a][d] and M[d][a]
                    and M[c][b] and not M[b][c] and M[d][b] and not M[b][d]
                    and not M[c][d] and not M[d][c]):
                return True
            # R4: c -> d -> b, c and b non-adjacent, a adjacent to c and d
            if (M[c][d] and not M[d][c] and M[d][b] and not M[b][d]
                    and not M[c][b] and not M[b][c]
                    and (M[a][c] or M[c][a]) and (M[a][d] or M[d][a])):
                return True
    return False


def meek_closure_inplace(A):
    """Orient edges of the int8 adjacency ``A`` until no Meek rule fires.

    Returns the number of edges oriented.
    """
    p = A.shape[0]
    M = A.tolist()
    oriented = 0
    changed = True
    while changed:
        changed = False
        for a in range(p):
            Ma = M[a]
            for b in range(p):
                if Ma[b] and M[b][a] and _rule_fires(M, p, a, b):
                    M[b][a] = 0
                    oriented += 1
                    changed = True
    if oriented:
        A[:, :] = np.asarray(M, dtype=A.dtype)
    return oriented


def solve_spd(A, c):
    """Solve ``A x = c`` by Cholesky, retrying once with a trace-scaled ridge."""
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        k = A.shape[0]
        ridge = max(RIDGE * np.trace(A), np.finfo(float).tiny)
        try:
            L = np.linalg.cholesky(A + ridge * np.eye(k))
        except np.linalg.LinAlgError:
            raise SingularSystem("normal equations are singular") from None
    return cho_solve((L, True), c)


def residual_variances(sss, ssi, sii, b):
    """q_e(b) = s_ii - 2 b's_Si + b'S_SS b for every environment."""
    if b.shape[0] == 0:
        return sii.copy()
    return sii - 2.0 * (ssi @ b) + np.einsum("i,eij,j->e", b, sss, b)


def _objective(ns, omegas, q):
    return float(np.sum(ns * (np.log(omegas) + q / omegas)))


def alternating_mle(sss, ssi, sii, ns, rel_tol, max_iter, floor, w0=None):
    """Maximise the per-environment-variance likelihood of one node.

    Alternates a weighted least-squares step for the shared coefficients with
    closed-form per-environment variances. The first coefficient fit uses
    environment weights ``w0`` (default ``ns``, the pooled solution).
    Returns ``(b, omegas, iterations, converged, history)`` where ``history``
    holds the objective sum_e n_e (ln w_e + q_e / w_e) after each update.
    """
    k = sss.shape[1]
    if k == 0:
        omegas = np.maximum(sii, floor)
        return np.zeros(0), omegas, 0, True, [_objective(ns, omegas, sii)]
    w = ns if w0 is None else np.asarray(w0, dtype=float)
    b = solve_spd(np.einsum("e,eij->ij", w, sss), w @ ssi)
    q = residual_variances(sss, ssi, sii, b)
    omegas = np.maximum(q, floor)
    obj = _objective(ns, omegas, q)
    history = [obj]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        w = ns / omegas
        b = solve_spd(np.einsum("e,eij->ij", w, sss), w @ ssi)
        q = residual_variances(sss, ssi, sii, b)
        omegas = np.maximum(q, floor)
        new = _objective(ns, omegas, q)
        history.append(new)
        if abs(obj - new) <= rel_tol * max(abs(obj), 1.0):
            converged = True
            break
        obj = new
    return b, omegas, it, converged, history

