# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled iteration loops; see ``_pykernels`` for the numpy twin."""
import numpy as np
from libc.math cimport sqrt, isfinite

ctypedef double complex cplx

cdef enum:
    CONVERGED = 0
    MAX_ITER = 1
    INFEASIBLE = 2
    NONFINITE = 3


cdef inline double abs2(cplx z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef inline double cabs_(cplx z) noexcept nogil:
    return sqrt(z.real * z.real + z.imag * z.imag)


cdef double prox_block(const cplx[:, ::1] Xi, Py_ssize_t r0, Py_ssize_t L,
                       Py_ssize_t K, double c, double alpha_eff,
                       const double[::1] r, cplx[:, ::1] W) noexcept nogil:
    """Group prox with cap on rows r0:r0+L; writes W, returns ||dW||^2."""
    cdef Py_ssize_t i, k
    cdef double a = alpha_eff / c
    cdef double nz2 = 0.0, nzn, f, z, m, tot, lo, hi, mid, nu, ds = 0.0
    cdef bint capped = False
    cdef cplx wn
    for i in range(r0, r0 + L):
        for k in range(K):
            nz2 += abs2(Xi[i, k])
    nzn = sqrt(nz2) / c
    if nzn <= a:
        for i in range(r0, r0 + L):
            for k in range(K):
                ds += abs2(W[i, k])
                W[i, k] = 0.0
        return ds
    f = 1.0 - a / nzn
    for i in range(r0, r0 + L):
        for k in range(K):
            if f * cabs_(Xi[i, k]) / c > r[k]:
                capped = True
    if not capped:
        for i in range(r0, r0 + L):
            for k in range(K):
                wn = Xi[i, k] * (f / c)
                ds += abs2(wn - W[i, k])
                W[i, k] = wn
        return ds
    hi = 0.0
    for i in range(r0, r0 + L):
        for k in range(K):
            z = cabs_(Xi[i, k]) / c
            m = z if z < r[k] else r[k]
            hi += m * m
    hi = sqrt(hi)
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        tot = 0.0
        for i in range(r0, r0 + L):
            for k in range(K):
                z = cabs_(Xi[i, k]) / c * (mid / (mid + a))
                m = z if z < r[k] else r[k]
                tot += m * m
        if sqrt(tot) > mid:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    nu = 0.5 * (lo + hi)
    for i in range(r0, r0 + L):
        for k in range(K):
            z = cabs_(Xi[i, k])
            if z > 0:
                m = z / c * (nu / (nu + a))
                if m > r[k]:
                    m = r[k]
                wn = Xi[i, k] * (m / z)
            else:
                wn = 0.0
            ds += abs2(wn - W[i, k])
            W[i, k] = wn
    return ds


cdef double project_row(cplx[:, ::1] R, Py_ssize_t k, Py_ssize_t K,
                        bint imag_free, cplx[:, ::1] out) noexcept nogil:
    """Project row k of R onto the unit cone; writes out[k], returns ||d||^2."""
    cdef Py_ssize_t j
    cdef double x0 = R[k, k].real
    cdef double im = R[k, k].imag if imag_free else 0.0
    cdef double nv = 0.0, eps, f, ds = 0.0
    cdef cplx val
    for j in range(K + 1):
        if j != k:
            nv += abs2(R[k, j])
    nv = sqrt(nv)
    if x0 >= nv:
        val = x0 + 1j * im
        ds += abs2(val - out[k, k])
        out[k, k] = val
        for j in range(K + 1):
            if j != k:
                ds += abs2(R[k, j] - out[k, j])
                out[k, j] = R[k, j]
        return ds
    if nv <= -x0:
        val = 1j * im
        ds += abs2(val - out[k, k])
        out[k, k] = val
        for j in range(K + 1):
            if j != k:
                ds += abs2(out[k, j])
                out[k, j] = 0.0
        return ds
    eps = 0.5 * (nv - x0)
    val = (x0 + eps) + 1j * im
    ds += abs2(val - out[k, k])
    out[k, k] = val
    f = (nv - eps) / nv
    for j in range(K + 1):
        if j != k:
            val = R[k, j] * f
            ds += abs2(val - out[k, j])
            out[k, j] = val
    return ds


cdef double cert_rows(const cplx[:, ::1] v, const double[::1] nz, Py_ssize_t K) noexcept nogil:
    """Cone part of the Farkas value; +inf if v is outside the polar set."""
    cdef Py_ssize_t j, k
    cdef double v0, nv, S = 0.0
    for j in range(K):
        v0 = v[j, j].real
        nv = 0.0
        for k in range(K):
            if k != j:
                nv += abs2(v[j, k])
        if v0 <= 0 or nv > v0 * v0:
            return 1e308
        S -= sqrt(v0 * v0 - nv) * nz[j]
    return S


cdef double cert_projected(cplx[:, ::1] vc, const cplx[:, :, ::1] A,
                           const cplx[:, ::1] Uh, const double[::1] nz,
                           double anorm, cplx[::1] vq, cplx[::1] cq) noexcept nogil:
    """Smallest Farkas value over ``v`` with its leading q components along
    the range of A removed, q = 0..rank. Includes a round-off guard."""
    cdef Py_ssize_t K = A.shape[0], n = A.shape[2], R = Uh.shape[0]
    cdef Py_ssize_t k, j, i, q, m
    cdef double best = 1e308, val, vn, v0
    cdef cplx acc
    for m in range(K * K):
        vq[m] = vc[m // K, m % K]
    for q in range(R):
        acc = 0.0
        for m in range(K * K):
            acc = acc + Uh[q, m] * vq[m]
        cq[q] = acc
    for q in range(R + 1):
        if q > 0:
            for m in range(K * K):
                vq[m] = vq[m] - Uh[q - 1, m].conjugate() * cq[q - 1]
        val = 0.0
        for j in range(K):
            v0 = vq[j * K + j].real
            vn = 0.0
            for k in range(K):
                if k != j:
                    vn += abs2(vq[j * K + k])
            if v0 <= 0 or vn > v0 * v0:
                val = 1e308
                break
            val -= sqrt(v0 * v0 - vn) * nz[j]
        if val >= 1e300:
            continue
        vn = 0.0
        for m in range(K * K):
            vn += abs2(vq[m])
        val += 1e-13 * anorm * sqrt(vn)
        for i in range(n):
            acc = 0.0
            for k in range(K):
                for j in range(K):
                    acc = acc + A[k, j, i].conjugate() * vq[k * K + j]
            val += cabs_(acc)
        if val < best:
            best = val
    return best


def admm_run(const cplx[:, :, ::1] G, const cplx[:, :, ::1] V, const double[:, ::1] d,
             cplx[:, ::1] X, cplx[:, ::1] W, cplx[:, ::1] F, cplx[:, ::1] Lam,
             cplx[:, ::1] Psi, const double[::1] nz, const double[::1] r,
             double alpha_eff, double c, Py_ssize_t L, double tol,
             Py_ssize_t max_iter, Py_ssize_t min_iter, Py_ssize_t cert_window,
             trace):
    cdef Py_ssize_t N = X.shape[0], K = X.shape[1], R = V.shape[2]
    cdef Py_ssize_t M = N // L
    cdef Py_ssize_t t, k, j, n, q, m, t_snap = 0
    cdef cplx acc
    cdef double r1, r2, s1, s2, xn, obj, bn, val
    cdef bint have_snap = False, want_trace = trace is not None
    cdef int status = MAX_ITER
    cdef Py_ssize_t iters = max_iter
    cdef cplx[:, ::1] B = np.empty((K, K + 1), dtype=np.complex128)
    cdef cplx[:, ::1] Xi = np.empty((N, K), dtype=np.complex128)
    cdef cplx[:, ::1] Rm = np.empty((K, K + 1), dtype=np.complex128)
    cdef cplx[:, ::1] snap = np.zeros((K, K), dtype=np.complex128)
    cdef cplx[:, ::1] vc = np.zeros((K, K), dtype=np.complex128)
    cdef cplx[::1] rhs = np.empty(N, dtype=np.complex128)
    cdef cplx[::1] tmp = np.empty(K, dtype=np.complex128)
    cdef cplx[::1] pq = np.empty(R, dtype=np.complex128)
    cdef double[:, ::1] tr
    if want_trace:
        tr = trace
    for k in range(K):
        B[k, K] = nz[k]
    with nogil:
        for t in range(max_iter):
            # linear step, one column at a time
            for k in range(K):
                for j in range(K):
                    tmp[j] = Psi[j, k] + c * F[j, k]
                for n in range(N):
                    acc = Lam[n, k] + c * W[n, k]
                    for j in range(K):
                        acc = acc + G[k, n, j] * tmp[j]
                    rhs[n] = acc
                for q in range(R):
                    acc = 0.0
                    for n in range(N):
                        acc = acc + V[k, n, q].conjugate() * rhs[n]
                    pq[q] = acc * d[k, q]
                for n in range(N):
                    acc = rhs[n]
                    for q in range(R):
                        acc = acc - V[k, n, q] * pq[q]
                    X[n, k] = acc / c
                for j in range(K):
                    acc = 0.0
                    for n in range(N):
                        acc = acc + G[k, n, j].conjugate() * X[n, k]
                    B[j, k] = acc
            # group prox
            for n in range(N):
                for k in range(K):
                    Xi[n, k] = c * X[n, k] - Lam[n, k]
            s1 = 0.0
            for m in range(M):
                s1 += prox_block(Xi, m * L, L, K, c, alpha_eff, r, W)
            s1 = c * sqrt(s1)
            # cone rows
            for k in range(K):
                for j in range(K + 1):
                    Rm[k, j] = B[k, j] - Psi[k, j] / c
            s2 = 0.0
            for k in range(K):
                s2 += project_row(Rm, k, K, True, F)
            s2 = c * sqrt(s2)
            # multipliers and residuals
            r1 = 0.0
            xn = 0.0
            for n in range(N):
                for k in range(K):
                    acc = W[n, k] - X[n, k]
                    r1 += abs2(acc)
                    xn += abs2(X[n, k])
                    Lam[n, k] = Lam[n, k] + c * acc
            r2 = 0.0
            for k in range(K):
                for j in range(K + 1):
                    acc = F[k, j] - B[k, j]
                    r2 += abs2(acc)
                    Psi[k, j] = Psi[k, j] + c * acc
            r1 = sqrt(r1)
            r2 = sqrt(r2)
            xn = sqrt(xn)
            if want_trace:
                obj = 0.0
                for m in range(M):
                    bn = 0.0
                    for n in range(m * L, (m + 1) * L):
                        for k in range(K):
                            bn += abs2(W[n, k])
                    obj += sqrt(bn)
                tr[t, 0] = r1
                tr[t, 1] = r2
                tr[t, 2] = s1
                tr[t, 3] = s2
                tr[t, 4] = alpha_eff * obj
            if not isfinite(r1 + r2 + s1 + s2):
                status = NONFINITE
                iters = t + 1
                break
            if t + 1 >= min_iter and r1 <= tol * (xn if xn > 1.0 else 1.0) \
                    and r2 <= tol * (xn if xn > 1.0 else 1.0) \
                    and s1 <= tol * (xn if xn > 1.0 else 1.0) \
                    and s2 <= tol * (xn if xn > 1.0 else 1.0):
                status = CONVERGED
                iters = t + 1
                break
            if cert_window > 0 and (t + 1) % cert_window == 0:
                if have_snap:
                    for j in range(K):
                        for k in range(K):
                            vc[j, k] = (Psi[j, k] - snap[j, k]) / <double>(t + 1 - t_snap)
                        vc[j, j] = vc[j, j].real
                    val = cert_rows(vc, nz, K)
                    if val < 1e300:
                        for k in range(K):
                            for n in range(N):
                                acc = 0.0
                                for j in range(K):
                                    acc = acc + G[k, n, j] * vc[j, k]
                                val += r[k] * cabs_(acc)
                        if val < 0:
                            status = INFEASIBLE
                            iters = t + 1
                            break
                for j in range(K):
                    for k in range(K):
                        snap[j, k] = Psi[j, k]
                have_snap = True
                t_snap = t + 1
    return iters, status


def phase_run(const cplx[:, :, ::1] A, const cplx[:, ::1] Uh, const cplx[:, ::1] Vh,
              const double[::1] d,
              const cplx[:, :, ::1] C, cplx[::1] w, cplx[:, ::1] y, cplx[::1] lw,
              cplx[:, ::1] ly, const double[::1] nz, double sigma2, double gamma,
              double relax, Py_ssize_t max_iter, Py_ssize_t check_every,
              Py_ssize_t cert_window):
    cdef Py_ssize_t K = A.shape[0], n = A.shape[2], R = Vh.shape[0]
    cdef Py_ssize_t t, k, j, i, q, t_snap = 0
    cdef cplx acc, u
    cdef double au, sig, interf, val
    cdef bint ok, have_snap = False
    cdef int status = MAX_ITER
    cdef Py_ssize_t iters = max_iter
    cdef cplx[::1] qv = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] phi = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] pq = np.empty(R, dtype=np.complex128)
    cdef cplx[:, ::1] By = np.empty((K, K + 1), dtype=np.complex128)
    cdef cplx[:, ::1] Rm = np.empty((K, K + 1), dtype=np.complex128)
    cdef cplx[:, ::1] snap = np.zeros((K, K), dtype=np.complex128)
    cdef cplx[:, ::1] vc = np.zeros((K, K), dtype=np.complex128)
    cdef cplx[::1] vq = np.empty(K * K, dtype=np.complex128)
    cdef cplx[::1] cq = np.empty(Uh.shape[0], dtype=np.complex128)
    cdef double anorm = np.linalg.norm(np.asarray(A))
    with nogil:
        for t in range(max_iter):
            # consensus least squares
            for i in range(n):
                acc = w[i] - lw[i]
                for k in range(K):
                    for j in range(K):
                        acc = acc + A[k, j, i].conjugate() * (y[k, j] - ly[k, j])
                qv[i] = acc
            for q in range(R):
                acc = 0.0
                for i in range(n):
                    acc = acc + Vh[q, i] * qv[i]
                pq[q] = acc * d[q]
            for i in range(n):
                acc = qv[i]
                for q in range(R):
                    acc = acc - Vh[q, i].conjugate() * pq[q]
                phi[i] = acc
            # relaxed targets
            for k in range(K):
                for j in range(K):
                    acc = 0.0
                    for i in range(n):
                        acc = acc + A[k, j, i] * phi[i]
                    By[k, j] = relax * acc + (1.0 - relax) * y[k, j]
                By[k, K] = relax * nz[k] + (1.0 - relax) * y[k, K]
            for i in range(n):
                u = relax * phi[i] + (1.0 - relax) * w[i]
                phi[i] = u
                u = u + lw[i]
                au = cabs_(u)
                if au > 1.0:
                    w[i] = u / au
                else:
                    w[i] = u
                lw[i] = lw[i] + phi[i] - w[i]
            for k in range(K):
                for j in range(K + 1):
                    Rm[k, j] = By[k, j] + ly[k, j]
            for k in range(K):
                project_row(Rm, k, K, False, y)
            for k in range(K):
                for j in range(K + 1):
                    ly[k, j] = ly[k, j] + By[k, j] - y[k, j]
            if (t + 1) % check_every == 0 or t == 0:
                ok = True
                for k in range(K):
                    sig = 0.0
                    interf = sigma2
                    for j in range(K):
                        acc = 0.0
                        for i in range(n):
                            acc = acc + C[k, j, i] * w[i]
                        if j == k:
                            sig = abs2(acc)
                        else:
                            interf += abs2(acc)
                    if not isfinite(sig + interf):
                        status = NONFINITE
                        ok = False
                    elif sig < gamma * interf:
                        ok = False
                if status == NONFINITE:
                    iters = t + 1
                    break
                if ok:
                    status = CONVERGED
                    iters = t + 1
                    break
            if cert_window > 0 and (t + 1) % cert_window == 0:
                if have_snap:
                    for k in range(K):
                        for j in range(K):
                            vc[k, j] = -(ly[k, j] - snap[k, j]) / <double>(t + 1 - t_snap)
                    val = cert_projected(vc, A, Uh, nz, anorm, vq, cq)
                    if val < 0:
                        status = INFEASIBLE
                        iters = t + 1
                        break
                for k in range(K):
                    for j in range(K):
                        snap[k, j] = ly[k, j]
                have_snap = True
                t_snap = t + 1
    return iters, status
