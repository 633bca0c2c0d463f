"""Pure-Python/numpy implementations of the hot loops.

Mirrors ``_ckernels.pyx`` operation for operation so both backends walk the
same optimisation path; results agree to rounding.
"""
import numpy as np

_MASK = (1 << 64) - 1


class SplitMix64:
    """Tiny deterministic generator, identical in both backends."""

    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def below(self, n):
        return self.next() % n


def _optimal_bias(K, y, alpha, C):
    g = K @ (alpha * y)
    free = (alpha > 0.0) & (alpha < C)
    if free.any():
        return float(np.mean(y[free] - g[free])), g
    lo, hi = -np.inf, np.inf
    for t in range(len(y)):
        bound = y[t] - g[t]
        at_zero = alpha[t] <= 0.0
        # alpha=0 needs y*f >= 1, alpha=C needs y*f <= 1
        if (y[t] > 0) == at_zero:
            lo = max(lo, bound)
        else:
            hi = min(hi, bound)
    if np.isinf(lo) and np.isinf(hi):
        return 0.0, g
    if np.isinf(lo):
        return float(hi), g
    if np.isinf(hi):
        return float(lo), g
    return 0.5 * (lo + hi), g


def _count_violators(E, y, alpha, C, tol):
    r = E * y
    return int(np.count_nonzero(((r < -tol) & (alpha < C)) | ((r > tol) & (alpha > 0.0))))


def smo_solve(K, y, C, tol, max_passes, seed, max_iter):
    """Simplified SMO on a precomputed Gram matrix.

    Returns ``(alpha, b, n_pass, converged)``.  ``converged`` is true only
    when a full pass over freshly recomputed errors found no KKT violator.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.shape[0]
    alpha = np.zeros(n)
    b = 0.0
    E = -y.copy()
    rng = SplitMix64(seed)
    idle = 0
    n_pass = 0
    converged = False
    eps = 1e-12

    def take_step(i, j, b):
        if i == j:
            return False, b
        yi, yj = y[i], y[j]
        ai_old, aj_old = alpha[i], alpha[j]
        Ei, Ej = E[i], E[j]
        if yi != yj:
            L = max(0.0, aj_old - ai_old)
            H = min(C, C + aj_old - ai_old)
        else:
            L = max(0.0, ai_old + aj_old - C)
            H = min(C, ai_old + aj_old)
        if L >= H:
            return False, b
        Kii, Kjj, Kij = K[i, i], K[j, j], K[i, j]
        eta = 2.0 * Kij - Kii - Kjj
        if eta >= 0.0:
            return False, b
        aj = aj_old - yj * (Ei - Ej) / eta
        if aj > H:
            aj = H
        elif aj < L:
            aj = L
        if abs(aj - aj_old) < eps * (aj + aj_old + eps):
            return False, b
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
        b1 = b - Ei - yi * dai * Kii - yj * daj * Kij
        b2 = b - Ej - yi * dai * Kij - yj * daj * Kjj
        if 0.0 < ai < C:
            b_new = b1
        elif 0.0 < aj < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        alpha[i] = ai
        alpha[j] = aj
        ci = yi * dai
        cj = yj * daj
        db = b_new - b
        E[:] = E + ((ci * K[i] + cj * K[j]) + db)
        return True, b_new

    while idle < max_passes and n_pass < max_iter:
        n_pass += 1
        changed = 0
        violators = 0
        for i in range(n):
            r = E[i] * y[i]
            if not ((r < -tol and alpha[i] < C) or (r > tol and alpha[i] > 0.0)):
                continue
            violators += 1
            j = rng.below(n - 1)
            if j >= i:
                j += 1
            ok, b = take_step(i, j, b)
            if not ok:
                # random start, then sweep the remaining candidates
                for off in range(1, n):
                    jj = (j + off) % n
                    if jj == i:
                        continue
                    ok, b = take_step(i, jj, b)
                    if ok:
                        break
            if ok:
                changed += 1
        if violators == 0:
            g = K @ (alpha * y)
            E[:] = g + b - y
            if _count_violators(E, y, alpha, C, tol) == 0:
                converged = True
                # prefer the canonical bias (free-multiplier mean, else the
                # midpoint of the feasible interval) when it stays KKT-clean
                b_opt, _ = _optimal_bias(K, y, alpha, C)
                if _count_violators(g + b_opt - y, y, alpha, C, tol) == 0:
                    b = b_opt
                break
            continue
        if changed == 0:
            idle += 1
            b, g = _optimal_bias(K, y, alpha, C)
            E[:] = g + b - y
        else:
            idle = 0
    return alpha, float(b), n_pass, converged


def _assign(X, C):
    diff = X[:, None, :] - C[None, :, :]
    d2 = (diff * diff).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    mind = d2[np.arange(X.shape[0]), labels]
    return labels.astype(np.int64), mind


def lloyd(X, centroids, max_iter):
    """Lloyd iterations from the given centroids.

    Returns ``(centroids, labels, inertia, n_iter, history)`` where
    ``history`` holds the inertia after every assignment step.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    C = np.array(centroids, dtype=np.float64, copy=True)
    k = C.shape[0]
    labels, mind = _assign(X, C)
    inertia = float(np.add.reduce(mind))
    history = [inertia]
    n_iter = 0
    for _ in range(max_iter):
        n_iter += 1
        sums = np.zeros_like(C)
        np.add.at(sums, labels, X)
        counts = np.bincount(labels, minlength=k)
        for c in range(k):
            if counts[c] > 0:
                C[c] = sums[c] / counts[c]
        if (counts == 0).any():
            diff = X - C[labels]
            dist = (diff * diff).sum(axis=1)
            for c in range(k):
                if counts[c] == 0:
                    p = int(np.argmax(dist))
                    C[c] = X[p]
                    dist[p] = 0.0
        new_labels, mind = _assign(X, C)
        inertia = float(np.add.reduce(mind))
        history.append(inertia)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return C, labels, inertia, n_iter, history
