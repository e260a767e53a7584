# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; see ``_fallback.py`` for the reference."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, fabs

from .exceptions import SingularSystem

cnp.import_array()

cdef double RIDGE = 1e-12
cdef double TINY = 2.2250738585072014e-308


cdef inline bint _adj(signed char[:, ::1] M, Py_ssize_t i, Py_ssize_t j) nogil:
    return M[i, j] != 0 or M[j, i] != 0


cdef inline bint _dir(signed char[:, ::1] M, Py_ssize_t i, Py_ssize_t j) nogil:
    return M[i, j] != 0 and M[j, i] == 0


cdef inline bint _und(signed char[:, ::1] M, Py_ssize_t i, Py_ssize_t j) nogil:
    return M[i, j] != 0 and M[j, i] != 0


cdef bint _rule_fires(signed char[:, ::1] M, Py_ssize_t p,
                      Py_ssize_t a, Py_ssize_t b) nogil:
    cdef Py_ssize_t c, d
    for c in range(p):
        if c == a or c == b:
            continue
        if _dir(M, c, a) and not _adj(M, c, b):
            return True
        if _dir(M, a, c) and _dir(M, c, b):
            return True
    for c in range(p):
        if c == a or c == b:
            continue
        for d in range(p):
            if d == a or d == b or d == c:
                continue
            if (c < d and _und(M, a, c) and _und(M, a, d)
                    and _dir(M, c, b) and _dir(M, d, b) and not _adj(M, c, d)):
                return True
            if (_dir(M, c, d) and _dir(M, d, b) and not _adj(M, c, b)
                    and _adj(M, a, c) and _adj(M, a, d)):
                return True
    return False


def meek_closure_inplace(cnp.ndarray A):
    """Orient edges of the int8 adjacency ``A`` until no Meek rule fires."""
    cdef signed char[:, ::1] M = A
    cdef Py_ssize_t p = M.shape[0]
    cdef Py_ssize_t a, b
    cdef long oriented = 0
    cdef bint changed = True
    with nogil:
        while changed:
            changed = False
            for a in range(p):
                for b in range(p):
                    if M[a, b] != 0 and M[b, a] != 0 and _rule_fires(M, p, a, b):
                        M[b, a] = 0
                        oriented += 1
                        changed = True
    return oriented


cdef bint _cholesky(double[:, ::1] A, double[:, ::1] L, Py_ssize_t k, double ridge) nogil:
    cdef Py_ssize_t i, j, m
    cdef double s
    for j in range(k):
        s = A[j, j] + ridge
        for m in range(j):
            s -= L[j, m] * L[j, m]
        if not (s > 0.0):
            return False
        L[j, j] = sqrt(s)
        for i in range(j + 1, k):
            s = A[i, j]
            for m in range(j):
                s -= L[i, m] * L[j, m]
            L[i, j] = s / L[j, j]
    return True


cdef int _solve_spd(double[:, ::1] A, double[::1] c, double[::1] x,
                    double[:, ::1] L, Py_ssize_t k) nogil:
    cdef Py_ssize_t i, m
    cdef double s, tr = 0.0, ridge
    if not _cholesky(A, L, k, 0.0):
        for i in range(k):
            tr += A[i, i]
        ridge = RIDGE * tr
        if ridge < TINY:
            ridge = TINY
        if not _cholesky(A, L, k, ridge):
            return -1
    for i in range(k):
        s = c[i]
        for m in range(i):
            s -= L[i, m] * x[m]
        x[i] = s / L[i, i]
    for i in range(k - 1, -1, -1):
        s = x[i]
        for m in range(i + 1, k):
            s -= L[m, i] * x[m]
        x[i] = s / L[i, i]
    return 0


def solve_spd(A, c):
    cdef double[:, ::1] Am = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[::1] cm = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t k = Am.shape[0]
    x = np.empty(k)
    cdef double[::1] xm = x
    cdef double[:, ::1] L = np.zeros((k, k))
    if _solve_spd(Am, cm, xm, L, k) != 0:
        raise SingularSystem("normal equations are singular")
    return x


cdef void _residuals(double[:, :, ::1] sss, double[:, ::1] ssi, double[::1] sii,
                     double[::1] b, double[::1] q, Py_ssize_t E, Py_ssize_t k) nogil:
    cdef Py_ssize_t e, i, j
    cdef double s, quad
    for e in range(E):
        s = sii[e]
        for i in range(k):
            s -= 2.0 * b[i] * ssi[e, i]
        quad = 0.0
        for i in range(k):
            for j in range(k):
                quad += b[i] * sss[e, i, j] * b[j]
        q[e] = s + quad


cdef double _update(double[:, :, ::1] sss, double[:, ::1] ssi, double[::1] sii,
                    double[::1] ns, double[::1] w, double[::1] b, double[::1] q,
                    double[::1] omegas, double floor,
                    double[:, ::1] A, double[::1] c, double[:, ::1] L,
                    Py_ssize_t E, Py_ssize_t k, int* status) nogil:
    """One weighted-LS step for b given weights ``w``, then the variance step."""
    cdef Py_ssize_t e, i, j
    cdef double obj = 0.0
    for i in range(k):
        c[i] = 0.0
        for j in range(k):
            A[i, j] = 0.0
    for e in range(E):
        for i in range(k):
            c[i] += w[e] * ssi[e, i]
            for j in range(k):
                A[i, j] += w[e] * sss[e, i, j]
    status[0] = _solve_spd(A, c, b, L, k)
    if status[0] != 0:
        return 0.0
    _residuals(sss, ssi, sii, b, q, E, k)
    for e in range(E):
        omegas[e] = q[e] if q[e] > floor else floor
        obj += ns[e] * (log(omegas[e]) + q[e] / omegas[e])
    return obj


def alternating_mle(sss, ssi, sii, ns, double rel_tol, int max_iter, double floor,
                    w0=None):
    """Compiled twin of ``_fallback.alternating_mle`` with the same return tuple."""
    cdef double[:, :, ::1] S = np.ascontiguousarray(sss, dtype=np.float64)
    cdef double[:, ::1] Si = np.ascontiguousarray(ssi, dtype=np.float64)
    cdef double[::1] sd = np.ascontiguousarray(sii, dtype=np.float64)
    cdef double[::1] n = np.ascontiguousarray(ns, dtype=np.float64)
    cdef Py_ssize_t E = S.shape[0]
    cdef Py_ssize_t k = S.shape[1]
    cdef Py_ssize_t e
    b_arr = np.zeros(k)
    om_arr = np.empty(E)
    cdef double[::1] b = b_arr
    cdef double[::1] omegas = om_arr
    cdef double[::1] q = np.empty(E)
    cdef double[::1] w = np.empty(E)
    cdef double[:, ::1] A = np.empty((k, k))
    cdef double[::1] c = np.empty(k)
    cdef double[:, ::1] L = np.zeros((k, k))
    cdef int status = 0
    cdef int it = 0
    cdef bint converged = False
    cdef double obj, new
    if k == 0:
        obj = 0.0
        for e in range(E):
            omegas[e] = sd[e] if sd[e] > floor else floor
            obj += n[e] * (log(omegas[e]) + sd[e] / omegas[e])
        return b_arr, om_arr, 0, True, [obj]
    cdef double[::1] w_init = n if w0 is None else np.ascontiguousarray(w0, dtype=np.float64)
    for e in range(E):
        w[e] = w_init[e]
    obj = _update(S, Si, sd, n, w, b, q, omegas, floor, A, c, L, E, k, &status)
    if status != 0:
        raise SingularSystem("normal equations are singular")
    history = [obj]
    while it < max_iter:
        it += 1
        for e in range(E):
            w[e] = n[e] / omegas[e]
        new = _update(S, Si, sd, n, w, b, q, omegas, floor, A, c, L, E, k, &status)
        if status != 0:
            raise SingularSystem("normal equations are singular")
        history.append(new)
        if fabs(obj - new) <= rel_tol * max(fabs(obj), 1.0):
            converged = True
            break
        obj = new
    return b_arr, om_arr, it, converged, history
