"""Slow, independent reference implementations used only by the tests.

None of these import the package's numerical code paths.
"""
import itertools
import math

import numpy as np


def naive_dct(f):
    f = np.asarray(f, dtype=float)
    N = len(f)
    out = np.zeros(N)
    for k in range(N):
        w = math.sqrt(1.0 / N) if k == 0 else math.sqrt(2.0 / N)
        out[k] = w * sum(f[n] * math.cos(math.pi * (2 * n + 1) * k / (2 * N)) for n in range(N))
    return out


def naive_idct(F):
    F = np.asarray(F, dtype=float)
    N = len(F)
    out = np.zeros(N)
    for n in range(N):
        total = 0.0
        for k in range(N):
            w = math.sqrt(1.0 / N) if k == 0 else math.sqrt(2.0 / N)
            total += w * F[k] * math.cos(math.pi * (2 * n + 1) * k / (2 * N))
        out[n] = total
    return out


def naive_smooth(f, h):
    F = naive_dct(f)
    F[h:] = 0.0
    return naive_idct(F)


def eig_pca_denoise(X, drop_fraction):
    """Reconstruction from the eigendecomposition of the smaller Gram matrix.

    Returns (reconstruction, sum of dropped squared singular values).
    """
    X = np.asarray(X, dtype=float)
    m, p = X.shape
    r = min(m, p)
    d = math.floor(drop_fraction * r)
    if p <= m:
        lam, V = np.linalg.eigh(X.T @ X)          # ascending
        keep = V[:, d:]
        recon = X @ keep @ keep.T
    else:
        lam, U = np.linalg.eigh(X @ X.T)
        keep = U[:, d:]
        recon = keep @ keep.T @ X
    dropped = float(np.sum(np.clip(lam[:d], 0, None)))
    return recon, dropped


def gaussian_gram(X, sigma):
    X = np.asarray(X, dtype=float)
    n = len(X)
    K = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            d = X[i] - X[j]
            K[i, j] = math.exp(-float(d @ d) / (2 * sigma ** 2))
    return K


def brute_force_dual(K, y, C, tol=1e-9):
    """Exact soft-margin SVM dual by enumerating every active set.

    Each variable is pinned at 0, pinned at C, or free; the free block is solved
    from the stationarity + equality system. The best feasible candidate is the
    global optimum of the concave dual. Returns (alpha, bias, objective).
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    Q = np.outer(y, y) * K
    best = None
    for states in itertools.product((0, 1, 2), repeat=n):
        st = np.array(states)
        alpha = np.where(st == 1, C, 0.0)
        free = np.flatnonzero(st == 2)
        fixed = np.flatnonzero(st != 2)
        if free.size:
            # [Q_FF  y_F][a_F]   [1 - Q_FB a_B]
            # [y_F^T  0 ][ nu] = [-y_B^T a_B  ]   nu: equality multiplier
            A = np.zeros((free.size + 1, free.size + 1))
            A[:-1, :-1] = Q[np.ix_(free, free)]
            A[:-1, -1] = y[free]
            A[-1, :-1] = y[free]
            rhs = np.empty(free.size + 1)
            rhs[:-1] = 1.0 - Q[np.ix_(free, fixed)] @ alpha[fixed]
            rhs[-1] = -y[fixed] @ alpha[fixed]
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(sol)):
                continue
            alpha[free] = sol[:-1]
            if np.any(alpha[free] <= 0) or np.any(alpha[free] >= C):
                continue
        elif abs(y @ alpha) > tol:
            continue
        if abs(y @ alpha) > 1e-8:
            continue
        obj = alpha.sum() - 0.5 * alpha @ Q @ alpha
        if best is None or obj > best[2] + 1e-12:
            best = (alpha.copy(), None, obj)
    alpha, _, obj = best
    return alpha, _bias(Q, alpha, y, C), obj


def _bias(Q, alpha, y, C):
    grad = Q @ alpha - 1.0
    free = (alpha > 1e-9) & (alpha < C - 1e-9)
    if free.any():
        return float(np.mean(-y[free] * grad[free]))
    # any b in the KKT-feasible interval works; take its midpoint
    lo, hi = -np.inf, np.inf
    for i in range(len(y)):
        # y_i f_i = grad_i + 1 + y_i b
        if alpha[i] <= 1e-9:      # need y_i f_i >= 1  ->  y_i b >= -grad_i
            bound = -grad[i]
            if y[i] > 0:
                lo = max(lo, bound)
            else:
                hi = min(hi, -bound)
        else:                     # at C: y_i f_i <= 1  ->  y_i b <= -grad_i
            bound = -grad[i]
            if y[i] > 0:
                hi = min(hi, bound)
            else:
                lo = max(lo, -bound)
    if not np.isfinite(lo):
        return float(hi)
    if not np.isfinite(hi):
        return float(lo)
    return float((lo + hi) / 2)


def direct_decision(train_X, coef, bias, sigma, x):
    """f(x) = sum_i coef_i exp(-|x_i - x|^2 / 2 sigma^2) + b by explicit summation."""
    total = 0.0
    for xi, c in zip(train_X, coef):
        d = np.asarray(xi, dtype=float) - np.asarray(x, dtype=float)
        total += c * math.exp(-float(d @ d) / (2 * sigma ** 2))
    return total + bias
