# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled SMO and Lloyd loops; see ``_pykernels`` for the reference."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY
from libc.stdint cimport uint64_t

cnp.import_array()


cdef inline uint64_t _splitmix(uint64_t *state) noexcept nogil:
    cdef uint64_t z
    state[0] += 0x9E3779B97F4A7C15ULL
    z = state[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef void _fresh_errors(const double[:, ::1] K, const double[::1] y,
                        const double[::1] alpha, double b, double[::1] E,
                        double[::1] g) noexcept nogil:
    cdef Py_ssize_t n = y.shape[0], s, t
    cdef double acc
    for s in range(n):
        acc = 0.0
        for t in range(n):
            acc = acc + K[s, t] * (alpha[t] * y[t])
        g[s] = acc
        E[s] = acc + b - y[s]


cdef double _optimal_bias(const double[:, ::1] K, const double[::1] y,
                          const double[::1] alpha, double C, double[::1] E,
                          double[::1] g) noexcept nogil:
    cdef Py_ssize_t n = y.shape[0], t, nfree = 0
    cdef double acc = 0.0, lo = -INFINITY, hi = INFINITY, bound, b
    _fresh_errors(K, y, alpha, 0.0, E, g)
    for t in range(n):
        if alpha[t] > 0.0 and alpha[t] < C:
            acc = acc + (y[t] - g[t])
            nfree += 1
    if nfree > 0:
        b = acc / nfree
    else:
        for t in range(n):
            bound = y[t] - g[t]
            if (y[t] > 0) == (alpha[t] <= 0.0):
                if bound > lo:
                    lo = bound
            else:
                if bound < hi:
                    hi = bound
        if lo == -INFINITY and hi == INFINITY:
            b = 0.0
        elif lo == -INFINITY:
            b = hi
        elif hi == INFINITY:
            b = lo
        else:
            b = 0.5 * (lo + hi)
    for t in range(n):
        E[t] = g[t] + b - y[t]
    return b


cdef inline bint _violates(double r, double a, double C, double tol) noexcept nogil:
    return (r < -tol and a < C) or (r > tol and a > 0.0)


cdef bint _take_step(Py_ssize_t i, Py_ssize_t j, const double[:, ::1] K,
                     const double[::1] y, double[::1] alpha, double[::1] E,
                     double C, double *b) noexcept nogil:
    cdef double yi, yj, ai_old, aj_old, Ei, Ej, L, H, Kii, Kjj, Kij, eta
    cdef double ai, aj, dai, daj, b1, b2, b_new, ci, cj, db, snap
    cdef double eps = 1e-12
    cdef Py_ssize_t t, n = y.shape[0]
    if i == j:
        return False
    yi = y[i]
    yj = y[j]
    ai_old = alpha[i]
    aj_old = alpha[j]
    Ei = E[i]
    Ej = E[j]
    if yi != yj:
        L = aj_old - ai_old
        if L < 0.0:
            L = 0.0
        H = C + aj_old - ai_old
        if H > C:
            H = C
    else:
        L = ai_old + aj_old - C
        if L < 0.0:
            L = 0.0
        H = ai_old + aj_old
        if H > C:
            H = C
    if L >= H:
        return False
    Kii = K[i, i]
    Kjj = K[j, j]
    Kij = K[i, j]
    eta = 2.0 * Kij - Kii - Kjj
    if eta >= 0.0:
        return False
    aj = aj_old - yj * (Ei - Ej) / eta
    if aj > H:
        aj = H
    elif aj < L:
        aj = L
    if fabs(aj - aj_old) < eps * (aj + aj_old + eps):
        return False
    snap = 1e-10 * C
    if aj < snap:
        aj = 0.0
    elif aj > C - snap:
        aj = C
    ai = ai_old + yi * yj * (aj_old - aj)
    if ai < snap:
        ai = 0.0
    elif ai > C - snap:
        ai = C
    dai = ai - ai_old
    daj = aj - aj_old
    b1 = b[0] - Ei - yi * dai * Kii - yj * daj * Kij
    b2 = b[0] - Ej - yi * dai * Kij - yj * daj * Kjj
    if 0.0 < ai and ai < C:
        b_new = b1
    elif 0.0 < aj and aj < C:
        b_new = b2
    else:
        b_new = 0.5 * (b1 + b2)
    alpha[i] = ai
    alpha[j] = aj
    ci = yi * dai
    cj = yj * daj
    db = b_new - b[0]
    for t in range(n):
        E[t] = E[t] + ((ci * K[i, t] + cj * K[j, t]) + db)
    b[0] = b_new
    return True


def smo_solve(K, y, double C, double tol, int max_passes, seed, int max_iter):
    cdef const double[:, ::1] Kv = np.ascontiguousarray(K, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0], i, j, jj, off
    alpha_arr = np.zeros(n)
    E_arr = -np.asarray(yv).copy()
    g_arr = np.zeros(n)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] E = E_arr
    cdef double[::1] g = g_arr
    cdef double b = 0.0, b_opt, r
    cdef uint64_t state = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef int idle = 0, n_pass = 0, changed, violators
    cdef bint converged = False, ok
    with nogil:
        while idle < max_passes and n_pass < max_iter:
            n_pass += 1
            changed = 0
            violators = 0
            for i in range(n):
                r = E[i] * yv[i]
                if not _violates(r, alpha[i], C, tol):
                    continue
                violators += 1
                j = <Py_ssize_t>(_splitmix(&state) % <uint64_t>(n - 1))
                if j >= i:
                    j += 1
                ok = _take_step(i, j, Kv, yv, alpha, E, C, &b)
                if not ok:
                    for off in range(1, n):
                        jj = (j + off) % n
                        if jj == i:
                            continue
                        ok = _take_step(i, jj, Kv, yv, alpha, E, C, &b)
                        if ok:
                            break
                if ok:
                    changed += 1
            if violators == 0:
                _fresh_errors(Kv, yv, alpha, b, E, g)
                violators = 0
                for i in range(n):
                    if _violates(E[i] * yv[i], alpha[i], C, tol):
                        violators += 1
                if violators == 0:
                    converged = True
                    # prefer the canonical bias when it stays KKT-clean
                    b_opt = _optimal_bias(Kv, yv, alpha, C, E, g)
                    for i in range(n):
                        if _violates(E[i] * yv[i], alpha[i], C, tol):
                            violators += 1
                    if violators == 0:
                        b = b_opt
                    break
                continue
            if changed == 0:
                idle += 1
                b = _optimal_bias(Kv, yv, alpha, C, E, g)
            else:
                idle = 0
    return alpha_arr, float(b), n_pass, bool(converged)


cdef double _assign(const double[:, ::1] X, const double[:, ::1] C,
                    long long[::1] labels, double[::1] mind) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], k = C.shape[0]
    cdef Py_ssize_t p, c, q, best
    cdef double acc, diff, bestd, total = 0.0
    for p in range(n):
        best = 0
        bestd = INFINITY
        for c in range(k):
            acc = 0.0
            for q in range(d):
                diff = X[p, q] - C[c, q]
                acc = acc + diff * diff
            if acc < bestd:
                bestd = acc
                best = c
        labels[p] = best
        mind[p] = bestd
        total = total + bestd
    return total


def lloyd(X, centroids, int max_iter):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    C_arr = np.array(centroids, dtype=np.float64, copy=True, order="C")
    cdef double[:, ::1] C = C_arr
    cdef Py_ssize_t n = Xv.shape[0], d = Xv.shape[1], k = C.shape[0]
    labels_arr = np.empty(n, dtype=np.int64)
    new_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] labels = labels_arr
    cdef long long[::1] new_labels = new_arr
    cdef double[::1] mind = np.empty(n)
    cdef double[::1] dist = np.empty(n)
    cdef double[:, ::1] sums = np.empty((k, d))
    cdef long long[::1] counts = np.empty(k, dtype=np.int64)
    cdef Py_ssize_t p, c, q, far, it
    cdef double inertia, diff, acc, fard
    cdef bint same, any_empty
    cdef int n_iter = 0
    history = []
    inertia = _assign(Xv, C, labels, mind)
    history.append(inertia)
    for it in range(max_iter):
        n_iter += 1
        with nogil:
            for c in range(k):
                counts[c] = 0
                for q in range(d):
                    sums[c, q] = 0.0
            for p in range(n):
                c = labels[p]
                counts[c] += 1
                for q in range(d):
                    sums[c, q] = sums[c, q] + Xv[p, q]
            any_empty = False
            for c in range(k):
                if counts[c] > 0:
                    for q in range(d):
                        C[c, q] = sums[c, q] / counts[c]
                else:
                    any_empty = True
            if any_empty:
                for p in range(n):
                    acc = 0.0
                    for q in range(d):
                        diff = Xv[p, q] - C[labels[p], q]
                        acc = acc + diff * diff
                    dist[p] = acc
                for c in range(k):
                    if counts[c] == 0:
                        far = 0
                        fard = dist[0]
                        for p in range(1, n):
                            if dist[p] > fard:
                                fard = dist[p]
                                far = p
                        for q in range(d):
                            C[c, q] = Xv[far, q]
                        dist[far] = 0.0
            inertia = _assign(Xv, C, new_labels, mind)
            same = True
            for p in range(n):
                if new_labels[p] != labels[p]:
                    same = False
                labels[p] = new_labels[p]
        history.append(inertia)
        if same:
            break
    return C_arr, labels_arr, float(inertia), n_iter, history
