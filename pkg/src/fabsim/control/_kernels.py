"""Compiled backward pass for the constrained SLQ solver."""
import numpy as np
from numba import njit


@njit(cache=True)
def backward_pass(A, B, lx, lu, lxx, luu, lux, lfx, lfxx, C, D, e, p_rows, reg):
    """Riccati-like sweep with control-space projection of equality constraints.

    At step t the control update solves the equality-constrained QP
        min 1/2 du' Quu du + du' (Qux dx + Qu)   s.t.  C du + D dx + e = 0
    via its KKT system, giving ``du = K dx + k``.  ``p_rows[t]`` is the number
    of valid constraint rows at step t (arrays are padded).  ``reg`` is added
    to the diagonal of Quu for the gain computation only.

    Returns ok flag, gains K, feedforward k, value Hessians S, gradients s and
    the expected-decrease terms (sum k'Qu, sum 1/2 k'Quu k).
    """
    N, n, m = B.shape
    K = np.zeros((N, m, n))
    k = np.zeros((N, m))
    S = np.zeros((N + 1, n, n))
    s = np.zeros((N + 1, n))
    S[N] = lfxx
    s[N] = lfx
    dv1 = 0.0
    dv2 = 0.0
    for t in range(N - 1, -1, -1):
        At = A[t]
        Bt = B[t]
        Sn = S[t + 1]
        sn = s[t + 1]
        SA = Sn @ At
        SB = Sn @ Bt
        Qx = lx[t] + At.T @ sn
        Qu = lu[t] + Bt.T @ sn
        Qxx = lxx[t] + At.T @ SA
        Quu = luu[t] + Bt.T @ SB
        Qux = lux[t] + Bt.T @ SA
        Quu = 0.5 * (Quu + Quu.T)
        Hr = Quu + reg * np.eye(m)
        if np.linalg.eigvalsh(Hr)[0] <= 0.0:
            return False, K, k, S, s, dv1, dv2
        p = p_rows[t]
        if p == 0:
            rhs = np.empty((m, n + 1))
            rhs[:, :n] = -Qux
            rhs[:, n] = -Qu
            sol = np.linalg.solve(Hr, rhs)
            Kt = sol[:, :n].copy()
            kt = sol[:, n].copy()
        else:
            M = np.zeros((m + p, m + p))
            M[:m, :m] = Hr
            M[:m, m:] = C[t, :p].T
            M[m:, :m] = C[t, :p]
            rhs = np.zeros((m + p, n + 1))
            rhs[:m, :n] = -Qux
            rhs[:m, n] = -Qu
            rhs[m:, :n] = -D[t, :p]
            rhs[m:, n] = -e[t, :p]
            sol = np.linalg.solve(M, rhs)
            Kt = sol[:m, :n].copy()
            kt = sol[:m, n].copy()
        K[t] = Kt
        k[t] = kt
        QuuK = Quu @ Kt
        St = Qxx + Kt.T @ QuuK + Kt.T @ Qux + Qux.T @ Kt
        S[t] = 0.5 * (St + St.T)
        s[t] = Qx + Kt.T @ (Quu @ kt) + Kt.T @ Qu + Qux.T @ kt
        dv1 += kt @ Qu
        dv2 += 0.5 * kt @ (Quu @ kt)
    return True, K, k, S, s, dv1, dv2
