"""Independent reference computations used by the tests.

Nothing here imports the package: the fixed-point equations are written
out element by element and handed to a generic root finder.
"""

import numpy as np
from scipy.optimize import root


def weighted_fa_fixed_point(Y, col, d, groups, tau, alpha, x0_W, J):
    """Fixed point of the weighted factor-analysis updates with frozen
    precisions, for a single latent factor (K = 1).

    Unknowns: loadings w (D), means M (D x J), latent means mu (N), latent
    variance s_z, and one loading variance per group. Solved as
    ``x = T(x)`` with ``scipy.optimize.root``.
    """
    N, D = Y.shape
    G = len(groups)
    g_of = np.empty(D, dtype=int)
    for m, g in enumerate(groups):
        g_of[list(g)] = m

    def unpack(x):
        w = x[:D]
        M = x[D:D + D * J].reshape(D, J)
        mu = x[D + D * J:D + D * J + N]
        s_z = x[D + D * J + N]
        wc = x[D + D * J + N + 1:]
        return w, M, mu, s_z, wc

    def T(x):
        w, M, mu, s_z, wc = unpack(x)
        prec = 1.0
        for m, g in enumerate(groups):
            prec += tau[m] * (sum(w[i] ** 2 for i in g) + len(g) * wc[m])
        s_new = 1.0 / prec
        mu_new = np.empty(N)
        for n in range(N):
            acc = 0.0
            for i in range(D):
                acc += tau[g_of[i]] * w[i] * (Y[n, i] - M[i, col[n]])
            mu_new[n] = s_new * acc
        S = sum(d[n] * (mu_new[n] ** 2 + s_new) for n in range(N))
        wc_new = np.array([1.0 / (alpha[m] + tau[m] * S) for m in range(G)])
        w_new = np.empty(D)
        for i in range(D):
            acc = sum(d[n] * (Y[n, i] - M[i, col[n]]) * mu_new[n] for n in range(N))
            w_new[i] = wc_new[g_of[i]] * tau[g_of[i]] * acc
        M_new = np.empty((D, J))
        for i in range(D):
            for j in range(J):
                num = sum(d[n] * (Y[n, i] - w_new[i] * mu_new[n]) for n in range(N) if col[n] == j)
                den = sum(d[n] for n in range(N) if col[n] == j)
                M_new[i, j] = num / den
        return np.concatenate([w_new, M_new.ravel(), mu_new, [s_new], wc_new])

    M0 = np.array([[np.average(Y[col == j, i], weights=d[col == j]) for j in range(J)] for i in range(D)])
    # start the latents on the projection onto x0_W so the solver avoids w = 0
    mu0 = (Y - M0[:, col].T) @ x0_W / (x0_W @ x0_W)
    x0 = np.concatenate([x0_W, M0.ravel(), mu0, [0.5], 0.1 * np.ones(G)])
    sol = root(lambda x: x - T(x), x0, method="hybr", tol=1e-13)
    resid = np.max(np.abs(sol.x - T(sol.x)))
    if resid > 1e-10:
        raise RuntimeError(f"{sol.message} (residual {resid:.3g})")
    return unpack(sol.x)


def weighted_column_lstsq(Y, col, d, Zmean, W, J):
    """Per column j: argmin_m sum_n d_n ||y_n - W z_n - m||^2 via lstsq."""
    D = Y.shape[1]
    M = np.empty((D, J))
    for j in range(J):
        idx = np.flatnonzero(col == j)
        sw = np.sqrt(d[idx])
        A = np.repeat(sw, D)[:, None] * np.tile(np.eye(D), (len(idx), 1))
        b = ((Y[idx] - Zmean[idx] @ W.T) * sw[:, None]).ravel()
        M[:, j] = np.linalg.lstsq(A, b, rcond=None)[0]
    return M


def ess(weights):
    w = np.asarray(weights, dtype=float)
    return w.sum() ** 2 / (w ** 2).sum()
