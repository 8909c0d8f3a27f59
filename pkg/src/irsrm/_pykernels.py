"""Pure numpy implementations of the iteration loops.

These mirror ``_kernels.pyx`` line for line in what they compute; they are
used when the compiled extension is unavailable and as the reference in
the equivalence tests.
"""
import numpy as np

CONVERGED = 0
MAX_ITER = 1
INFEASIBLE = 2
NONFINITE = 3


def prox_group_box(Z, a, r):
    """argmin_W a*||W||_F + 0.5*||W - Z||_F^2  s.t. |W[i, k]| <= r[k].

    ``Z`` is (L, K), ``r`` is (K,). The group is zeroed iff ||Z|| <= a
    (zero lies inside the box, so the box never changes that test).
    """
    nz = np.linalg.norm(Z)
    if nz <= a:
        return np.zeros_like(Z)
    W = (1.0 - a / nz) * Z
    absz = np.abs(Z)
    if np.all(np.abs(W) <= r[None, :]):
        return W
    # |W_i| = min(r_i, |Z_i| * nu / (nu + a)) with nu = ||W||; the ratio
    # ||W(nu)|| / nu is decreasing so the positive root is unique
    rr = np.broadcast_to(r[None, :], Z.shape)
    lo, hi = 0.0, np.linalg.norm(np.minimum(rr, absz))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.linalg.norm(np.minimum(rr, absz * (mid / (mid + a)))) > mid:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    nu = 0.5 * (lo + hi)
    mag = np.minimum(rr, absz * (nu / (nu + a)))
    phase = np.where(absz > 0, Z / np.where(absz > 0, absz, 1.0), 0.0)
    return mag * phase


def project_rows_unit(R, imag_free=True):
    """Project each row of R (K, K+1) onto {Re R[k,k] >= ||R[k, -k]||}.

    The signal entry of row k is column k. With ``imag_free`` the imaginary
    part of the signal entry is left untouched; otherwise it is zeroed.
    """
    K = R.shape[0]
    out = R.copy()
    for k in range(K):
        x0 = R[k, k].real
        v = np.concatenate([R[k, :k], R[k, k + 1:]])
        nv = np.linalg.norm(v)
        im = R[k, k].imag if imag_free else 0.0
        if x0 >= nv:
            out[k, k] = x0 + 1j * im
            continue
        if nv <= -x0:
            out[k, k] = 1j * im
            out[k, :k] = 0.0
            out[k, k + 1:] = 0.0
            continue
        eps = 0.5 * (nv - x0)
        out[k, k] = x0 + eps + 1j * im
        f = (nv - eps) / nv
        out[k, :k] = R[k, :k] * f
        out[k, k + 1:] = R[k, k + 1:] * f
    return out


def _cert_value(v, rowmap, radius, nz):
    """Farkas value of a separating candidate ``v`` (K, K).

    ``rowmap(v)`` returns the (n,) or (N, K) array of dual weights on the
    box variables; the return is negative only if no point of the box maps
    into the cones.
    """
    K = v.shape[0]
    S = float(np.sum(np.abs(rowmap(v)) * radius))
    for k in range(K):
        v0 = v[k, k].real
        nv = np.sqrt(np.sum(np.abs(v[k]) ** 2) - np.abs(v[k, k]) ** 2)
        if v0 <= 0 or nv > v0:
            return np.inf
        S -= np.sqrt(max(v0 * v0 - nv * nv, 0.0)) * nz[k]
    return S


def admm_run(G, V, d, X, W, F, Lam, Psi, nz, r, alpha_eff, c, L, tol,
             max_iter, min_iter, cert_window, trace):
    """Group-sparse cone ADMM with the per-entry cap inside the group prox.

    Column k of X couples to row space through ``B[:, k] = G[k]^H X[:, k]``;
    rows of ``[B, nz]`` must lie in unit cones. Iterates are updated in
    place. Returns (iterations, status).
    """
    N, K = X.shape
    M = N // L
    Gh = np.conj(np.transpose(G, (0, 2, 1)))          # (K, K, N)
    Vh = np.conj(np.transpose(V, (0, 2, 1)))
    B = np.empty((K, K + 1), dtype=complex)
    B[:, K] = nz
    Psi_snap = None
    t_snap = 0
    for t in range(max_iter):
        W_old = W.copy()
        F_old = F.copy()
        # column-wise linear solve with the cached low-rank inverse
        rhs = Lam + c * W + np.einsum("knj,jk->nk", G, Psi[:, :K] + c * F[:, :K])
        proj = np.einsum("kjn,nk->kj", Vh, rhs) * d
        X[:] = (rhs - np.einsum("knj,kj->nk", V, proj)) / c
        B[:, :K] = np.einsum("kjn,nk->jk", Gh, X)
        # group prox with the cap
        Xi = c * X - Lam
        for m in range(M):
            sl = slice(m * L, (m + 1) * L)
            W[sl] = prox_group_box(Xi[sl] / c, alpha_eff / c, r)
        F[:] = project_rows_unit(B - Psi / c)
        Lam += c * (W - X)
        Psi += c * (F - B)
        r1 = np.linalg.norm(W - X)
        r2 = np.linalg.norm(F - B)
        s1 = c * np.linalg.norm(W - W_old)
        s2 = c * np.linalg.norm(F - F_old)
        if trace is not None:
            obj = alpha_eff * sum(np.linalg.norm(W[m * L:(m + 1) * L]) for m in range(M))
            trace[t] = (r1, r2, s1, s2, obj)
        if not np.isfinite(r1 + r2 + s1 + s2):
            return t + 1, NONFINITE
        scale = tol * max(1.0, np.linalg.norm(X))
        if t + 1 >= min_iter and max(r1, r2, s1, s2) <= scale:
            return t + 1, CONVERGED
        if cert_window > 0 and (t + 1) % cert_window == 0:
            if Psi_snap is not None:
                v = (Psi[:, :K] - Psi_snap) / (t + 1 - t_snap)
                v = v.copy()
                v[np.arange(K), np.arange(K)] = v.diagonal().real
                val = _cert_value(v, lambda vv: np.einsum("knj,jk->nk", G, vv), r[None, :], nz)
                if val < 0:
                    return t + 1, INFEASIBLE
            Psi_snap = Psi[:, :K].copy()
            t_snap = t + 1
    return max_iter, MAX_ITER


def _cert_projected(v, A2h, Uh, nz, anorm):
    """Smallest Farkas value over ``v`` with its leading q components along
    the range of A removed, q = 0..rank, plus a round-off guard."""
    K = v.shape[0]
    vq = v.reshape(-1).copy()
    cq = Uh @ vq
    best = np.inf
    for q in range(Uh.shape[0] + 1):
        if q > 0:
            vq -= np.conj(Uh[q - 1]) * cq[q - 1]
        V = vq.reshape(K, K)
        val = 0.0
        for j in range(K):
            v0 = V[j, j].real
            vn = np.sum(np.abs(V[j]) ** 2) - np.abs(V[j, j]) ** 2
            if v0 <= 0 or vn > v0 * v0:
                val = np.inf
                break
            val -= np.sqrt(v0 * v0 - vn) * nz[j]
        if not np.isfinite(val):
            continue
        val += 1e-13 * anorm * np.linalg.norm(vq) + np.sum(np.abs(A2h @ vq))
        best = min(best, val)
    return best


def phase_run(A, Uh, Vh, d, C, w, y, lw, ly, nz, sigma2, gamma, relax, max_iter,
              check_every, cert_window):
    """Consensus splitting for {|w_n| <= 1, rows of [A w, nz] in unit cones}.

    ``A`` is (K, K, n) with ``(A w)[k, j] = sum_n A[k, j, n] w[n]``; the
    inverse ``(I + A^H A)^-1 = I - Vh^H diag(d) Vh``. Rows of ``Uh`` are the
    conjugated left singular vectors of A, used to sharpen the
    infeasibility certificate. ``C`` holds the
    unscaled rows used for the exact SINR certificate. Returns
    (iterations, status).
    """
    K = A.shape[0]
    n = A.shape[2]
    A2 = A.reshape(K * K, n)
    A2h = np.conj(A2.T)
    Vhh = np.conj(Vh.T)
    anorm = np.linalg.norm(A)
    By = np.empty((K, K + 1), dtype=complex)
    ly_snap = None
    t_snap = 0
    for t in range(max_iter):
        q = (w - lw) + A2h @ (y[:, :K] - ly[:, :K]).reshape(-1)
        phi = q - Vhh @ (d * (Vh @ q))
        Aphi = (A2 @ phi).reshape(K, K)
        # over-relaxed consensus targets
        phi_r = relax * phi + (1.0 - relax) * w
        By[:, :K] = relax * Aphi + (1.0 - relax) * y[:, :K]
        By[:, K] = relax * nz + (1.0 - relax) * y[:, K]
        u = phi_r + lw
        w[:] = u / np.maximum(1.0, np.abs(u))
        y[:] = project_rows_unit(By + ly, imag_free=False)
        lw += phi_r - w
        ly += By - y
        if (t + 1) % check_every == 0 or t == 0:
            if not np.all(np.isfinite(w)):
                return t + 1, NONFINITE
            cw = np.abs(C @ w) ** 2                 # (K, K): [k, j]
            sig = np.diag(cw)
            if np.all(sig >= gamma * (cw.sum(axis=1) - sig + sigma2)):
                return t + 1, CONVERGED
        if cert_window > 0 and (t + 1) % cert_window == 0:
            if ly_snap is not None:
                v = -(ly[:, :K] - ly_snap) / (t + 1 - t_snap)
                if _cert_projected(v, A2h, Uh, nz, anorm) < 0:
                    return t + 1, INFEASIBLE
            ly_snap = ly[:, :K].copy()
            t_snap = t + 1
    return max_iter, MAX_ITER
