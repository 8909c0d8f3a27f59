"""Convex feasibility tests used inside the bisections.

* ``soc_project``: projection onto a scaled second-order cone.
* ``power_min_fixed_point``: least power meeting a common SINR target for a
  fixed beam.
* ``soc_feasibility_phase``: does some beam with |phi_n| <= 1 meet a common
  SINR target for fixed powers? Decided by consensus splitting with exact
  certificates in both directions.
* ``bisect``: bisection on a monotone predicate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import sinr_all, sinr_from_gains

log = logging.getLogger(__name__)


def soc_project(x0, xrest, a):
    """Euclidean projection of ``(x0, xrest)`` onto {a*x0 >= ||xrest||}.

    Parameters
    ----------
    x0 : float
    xrest : array_like
    a : float
        Cone slope, must be positive.

    Returns
    -------
    (float, ndarray)
    """
    if not a > 0:
        raise ValueError("cone slope must be positive")
    x0 = float(x0)
    xrest = np.asarray(xrest)
    nv = float(np.linalg.norm(xrest))
    if a * x0 >= nv:
        return x0, xrest.copy()
    if nv <= -x0 / a:
        return 0.0, np.zeros_like(xrest)
    # move along the normal until a*x0' = ||xrest'||
    eps = (nv - a * x0) / (1.0 + a * a)
    return x0 + a * eps, xrest * ((nv - eps) / nv)


def power_min_fixed_point(gamma, b, sigma2, p_max, max_iter=500, rtol=1e-12):
    """Componentwise least powers with every SINR >= gamma, or None.

    Iterates ``p_k <- gamma * (sum_{j != k} p_j b[j, k] + sigma2) / b[k, k]``
    from zero. The iterates increase monotonically towards the least fixed
    point, so crossing ``p_max`` proves infeasibility. When the contraction
    factor is close to one (interference-limited links) the iteration is
    finished with the equivalent linear solve ``(I - gamma C) p = gamma u``;
    a positive solution exists exactly when the spectral radius of
    ``gamma C`` is below one.

    Parameters
    ----------
    gamma : float
    b : ndarray, shape (K, K)
        ``b[j, k]`` is the gain of source j at destination k.
    sigma2 : float
    p_max : array_like, shape (K,)

    Returns
    -------
    ndarray or None
    """
    b = np.asarray(b, dtype=float)
    K = b.shape[0]
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (K,))
    if gamma <= 0:
        return np.zeros(K)
    diag = np.diag(b).copy()
    if np.any(diag <= 0):
        return None
    C = (b.T / diag[:, None]).copy()      # C[k, j] = b[j, k] / b[k, k]
    np.fill_diagonal(C, 0.0)
    u = sigma2 / diag
    p = np.zeros(K)
    for _ in range(max_iter):
        p_new = gamma * (C @ p + u)
        if np.any(p_new > p_max * (1 + 1e-12)):
            return None
        done = np.max(np.abs(p_new - p)) <= rtol * np.max(p_new)
        p = p_new
        if done:
            return np.minimum(p, p_max)
    A = np.eye(K) - gamma * C
    try:
        q = np.linalg.solve(A, gamma * u)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(q)) or np.any(q <= 0):
        return None
    # least fixed point dominates every iterate from zero
    q = np.maximum(q, p)
    if np.any(q > p_max * (1 + 1e-12)):
        return None
    return np.minimum(q, p_max)


@dataclass
class BisectResult:
    lo: float
    hi: float
    calls: int
    payload: object = None
    hi_feasible: bool = False
    exhausted: bool = False     # float spacing stopped the search

    @property
    def value(self):
        return self.lo

    @property
    def width(self):
        return self.hi - self.lo


def _width_ok(lo, hi, eps, mode):
    if mode == "absolute":
        return hi - lo <= eps
    if mode == "relative":
        return hi - lo <= eps * max(1.0, abs(lo))
    raise ValueError(f"unknown eps mode {mode!r}")


def bisect(predicate, lo, hi, eps, mode="absolute", check_hi=True, payload_lo=None):
    """Bisection on a monotone predicate (true below the threshold).

    ``predicate(g)`` returns a bool, or ``(ok, payload)``, or
    ``(ok, payload, level)`` where ``level >= g`` is a value already proven
    feasible by the payload; the lower end then jumps to ``level``.

    Parameters
    ----------
    lo, hi : float
        ``predicate(lo)`` is assumed true (zero-solution convention).
    eps : float
        Target width; absolute or scaled by ``max(1, lo)`` depending on
        ``mode``.
    check_hi : bool
        Evaluate ``hi`` first and return it when feasible.

    Returns
    -------
    BisectResult
    """
    if not hi > lo:
        raise ValueError("need hi > lo")
    if not eps > 0:
        raise ValueError("eps must be positive")

    def call(g):
        out = predicate(g)
        if isinstance(out, tuple):
            ok = bool(out[0])
            pay = out[1] if len(out) > 1 else None
            level = out[2] if len(out) > 2 else g
            return ok, pay, max(level, g) if ok else g
        return bool(out), None, g

    calls = 0
    if check_hi:
        ok, pay, _ = call(hi)
        calls += 1
        if ok:
            log.info("bisection upper bound %g is feasible", hi)
            return BisectResult(hi, hi, calls, pay, hi_feasible=True)
    exhausted = False
    while not _width_ok(lo, hi, eps, mode):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            exhausted = True
            break
        ok, pay, level = call(mid)
        calls += 1
        if ok:
            lo = min(level, hi)
            payload_lo = pay
        else:
            hi = mid
    return BisectResult(lo, hi, calls, payload_lo, exhausted=exhausted)


def bracket_up(predicate, lo, hi, step=1e-2, payload_lo=None):
    """Grow a bracket upward from a feasible ``lo``.

    Probes ``lo * (1 + step)`` and doubles ``step`` after every success,
    so probes above the threshold are rare; returns ``(lo, hi, payload,
    calls)`` with the first failure (or the original ``hi``) as upper end.
    Predicate conventions follow ``bisect``.
    """
    calls = 0
    base = lo if lo > 0 else hi * 1e-12
    while True:
        g = min(base * (1.0 + step), hi)
        if not lo < g:
            return lo, hi, payload_lo, calls
        out = predicate(g)
        calls += 1
        ok = out[0] if isinstance(out, tuple) else out
        if not ok:
            return lo, g, payload_lo, calls
        if isinstance(out, tuple):
            payload_lo = out[1] if len(out) > 1 else None
            g = max(g, out[2]) if len(out) > 2 else g
        lo = min(g, hi)
        base = lo
        if lo >= hi:
            return lo, hi, payload_lo, calls
        step *= 2.0


@dataclass
class PhaseFeasibility:
    feasible: bool
    phi: np.ndarray | None
    status: str
    iterations: int
    level: float = 0.0      # min SINR of the certificate when feasible
    extra: dict = field(default_factory=dict)


def _row_scale(gamma_t, p, hbar_sub, sigma):
    K = len(p)
    S = np.array([np.abs(hbar_sub[k, k]).sum() for k in range(K)])
    with np.errstate(divide="ignore"):
        r = 100.0 * np.sqrt(gamma_t) / (np.sqrt(p) * S)
    return np.minimum(r, 1.0 / sigma)


def soc_feasibility_phase(gamma, p, hbar, sigma2, mask=None, tol_feas=1e-7,
                          max_iter=20000, relax=1.6, check_every=10,
                          cert_window=200, phi0=None, backend=None):
    """Decide whether a beam on the unmasked elements reaches SINR gamma.

    The cone rows ``sqrt(p_k/gamma) hbar_kk^H phi >= ||[sqrt(p_j)
    hbar_jk^H phi]_{j != k}, sigma||`` are each rescaled by a positive
    factor (cones are invariant to it) so that the signal entry is O(1) at
    the solution, or so that the noise entry is 1 for noise-limited links.
    The target is inflated by ``1 + 10*tol_feas``. ``Feasible`` is declared
    only when the disk iterate passes an exact ``sinr_all`` check;
    ``infeasible`` only when averaged multiplier increments form a Farkas
    certificate; otherwise ``undecided`` after ``max_iter``. The
    certificate candidate is also tried with its components along the
    dominant singular directions of the coupling removed, which is what
    proves infeasibility when interference rather than noise is binding.

    Returns
    -------
    PhaseFeasibility
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    hbar = np.asarray(hbar)
    K, _, N = hbar.shape
    p = np.asarray(p, dtype=float)
    idx = np.arange(N) if mask is None else np.flatnonzero(mask)
    if idx.size == 0 or np.any(p <= 0):
        return PhaseFeasibility(False, None, "infeasible", 0)
    sigma = np.sqrt(sigma2)
    hsub = hbar[:, :, idx]
    if np.any(np.abs(hsub[np.arange(K), np.arange(K)]).sum(axis=1) == 0):
        return PhaseFeasibility(False, None, "infeasible", 0)
    gamma_t = gamma * (1.0 + 10.0 * tol_feas)
    r = _row_scale(gamma_t, p, hsub, sigma)
    sq = np.sqrt(p)
    C = np.empty((K, K, idx.size), dtype=complex)
    for k in range(K):
        for j in range(K):
            C[k, j] = sq[j] * np.conj(hsub[j, k])
    A = C * r[:, None, None]
    A[np.arange(K), np.arange(K)] /= np.sqrt(gamma_t)
    nz = sigma * r
    U, s, Vh = np.linalg.svd(A.reshape(K * K, idx.size), full_matrices=False)
    d = s * s / (1.0 + s * s)
    w = np.zeros(idx.size, dtype=complex)
    if phi0 is not None:
        w[:] = np.asarray(phi0)[idx]
        w /= np.maximum(1.0, np.abs(w))
    y = np.zeros((K, K + 1), dtype=complex)
    y[:, :K] = (A.reshape(K * K, -1) @ w).reshape(K, K)
    y[:, K] = nz
    lw = np.zeros(idx.size, dtype=complex)
    ly = np.zeros((K, K + 1), dtype=complex)
    args = (np.ascontiguousarray(A), np.ascontiguousarray(U.conj().T),
            np.ascontiguousarray(Vh), np.ascontiguousarray(d),
            np.ascontiguousarray(C), w, y, lw, ly, np.ascontiguousarray(nz),
            float(sigma2), float(gamma), float(relax), int(max_iter),
            int(check_every), int(cert_window))
    iters, status = kernels.phase_run(*args, backend=backend)
    if status == kernels.CONVERGED:
        phi = np.zeros(N, dtype=complex)
        phi[idx] = w
        level = float(np.min(sinr_all(phi, p, hbar, sigma2)))
        return PhaseFeasibility(True, phi, "feasible", iters, level)
    name = {kernels.INFEASIBLE: "infeasible", kernels.MAX_ITER: "undecided",
            kernels.NONFINITE: "nonfinite"}[status]
    return PhaseFeasibility(False, None, name, iters)


def power_sinr_level(p, b, sigma2):
    return float(np.min(sinr_from_gains(b, p, sigma2)))
