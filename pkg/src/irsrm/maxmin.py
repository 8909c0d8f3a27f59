"""Max-min SINR on a fixed module subset by alternating beam and power steps.

Each step is a bisection on the common SINR target. The beam step tests
targets with ``soc_feasibility_phase`` on the subset coordinates, and the
power step uses ``power_min_fixed_point``. Each bisection starts from the
incumbent, whose SINR is a proven lower end, so the sequence of certified
levels never decreases.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .feasibility import bisect, bracket_up, power_min_fixed_point, soc_feasibility_phase
from .model import gains, sinr_all, sinr_from_gains

log = logging.getLogger(__name__)


@dataclass
class PhaseSettings:
    tol_feas: float = 1e-7
    max_iter: int = 20000
    relax: float = 1.6
    check_every: int = 10
    cert_window: int = 200


@dataclass
class MaxMinSolution:
    phi: np.ndarray
    p: np.ndarray
    gamma: float
    trace: list = field(default_factory=list)    # (gamma_out, gamma_in) per round
    outer_iters: int = 0
    converged: bool = True
    warnings: list = field(default_factory=list)
    intervals: list = field(default_factory=list)  # (lo, hi) of every bisection


def _interference_free_bound(p, hbar, sigma2, mask):
    K = hbar.shape[0]
    s = np.abs(hbar[np.arange(K), np.arange(K)][:, mask]).sum(axis=1)
    return float(np.min(np.asarray(p) * s * s / sigma2))


def optimize_phase(p, hbar, sigma2, mask, eps=1e-4, eps_mode="relative", phi_init=None,
                   settings=None, backend=None):
    """Best beam for fixed powers.

    Returns
    -------
    phi : ndarray
        Certificate of the lower end, zero outside ``mask``.
    gamma_out : float
        Its min SINR.
    interval : (float, float)
    """
    settings = settings or PhaseSettings()
    hbar = np.asarray(hbar)
    N = hbar.shape[2]
    mask = np.ones(N, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    p = np.asarray(p, dtype=float)
    if not mask.any() or np.all(p == 0):
        return np.zeros(N, dtype=complex), 0.0, (0.0, 0.0)
    lo, phi_lo = 0.0, np.zeros(N, dtype=complex)
    if phi_init is not None:
        phi_lo = np.where(mask, phi_init, 0)
        lo = float(np.min(sinr_all(phi_lo, p, hbar, sigma2)))
    hi = _interference_free_bound(p, hbar, sigma2, mask)
    if not hi > lo:
        return phi_lo, lo, (lo, lo)

    # cold starts: seeding the splitting with the incumbent beam stalls it
    def pred(g):
        r = soc_feasibility_phase(g, p, hbar, sigma2, mask, settings.tol_feas,
                                  settings.max_iter, settings.relax, settings.check_every,
                                  settings.cert_window, backend=backend)
        if r.feasible:
            return True, r.phi, r.level
        return False, None

    lo, hi, phi_lo, _ = bracket_up(pred, lo, hi, payload_lo=phi_lo)
    if not hi > lo:
        return phi_lo, lo, (lo, hi)
    res = bisect(pred, lo, hi, eps, mode=eps_mode, check_hi=False, payload_lo=phi_lo)
    return res.payload, res.lo, (res.lo, res.hi)


def maxmin_power_gains(b, sigma2, p_max, eps=1e-4, eps_mode="relative", p_init=None):
    """Max-min SINR over powers for a fixed gain matrix ``b[j, k]``.

    Returns
    -------
    p : ndarray
        Least powers meeting the lower end.
    gamma : float
    interval : (float, float)
    """
    b = np.asarray(b, dtype=float)
    K = b.shape[0]
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (K,))
    if np.any(np.diag(b) <= 0):
        return np.zeros(K), 0.0, (0.0, 0.0)
    lo, p_lo = 0.0, np.zeros(K)
    if p_init is not None:
        p_lo = np.asarray(p_init, dtype=float)
        lo = float(np.min(sinr_from_gains(b, p_lo, sigma2)))
    hi = float(np.min(p_max * np.diag(b) / sigma2))
    if not hi > lo:
        return p_lo, lo, (lo, lo)

    def pred(g):
        q = power_min_fixed_point(g, b, sigma2, p_max)
        if q is None:
            return False, None
        return True, q, float(np.min(sinr_from_gains(b, q, sigma2)))

    res = bisect(pred, lo, hi, eps, mode=eps_mode, check_hi=True, payload_lo=p_lo)
    return res.payload, res.lo, (res.lo, res.hi)


def optimize_power(phi, hbar, sigma2, p_max, eps=1e-4, eps_mode="relative", p_init=None):
    """Best powers for a fixed beam; see ``maxmin_power_gains``."""
    return maxmin_power_gains(gains(phi, hbar), sigma2, p_max, eps, eps_mode, p_init)


def _gap_closed(g_out, g_in, eps, mode):
    tol = eps if mode == "absolute" else eps * max(1.0, abs(g_in))
    return abs(g_out - g_in) <= tol


def alternate(hbar, sigma2, p_max, mask=None, eps=1e-4, max_outer=50, seed=0,
              eps_mode="relative", settings=None, backend=None):
    """Alternate beam and power bisections until the two levels meet.

    The beam starts as random unit-modulus phases on the subset (drawn
    from ``seed``) and the powers at ``p_max``.

    Returns
    -------
    MaxMinSolution
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    hbar = np.asarray(hbar)
    K, _, N = hbar.shape
    mask = np.ones(N, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (K,)).copy()
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, N)
    phi = np.where(mask, np.exp(1j * theta), 0)
    p = p_max.copy()
    if not mask.any():
        return MaxMinSolution(np.zeros(N, dtype=complex), np.zeros(K), 0.0)
    trace, intervals, warns = [], [], []
    converged = False
    tau = 0
    for tau in range(1, max_outer + 1):
        phi, g_out, iv = optimize_phase(p, hbar, sigma2, mask, eps, eps_mode, phi_init=phi,
                                        settings=settings, backend=backend)
        intervals.append(iv)
        p, g_in, iv = optimize_power(phi, hbar, sigma2, p_max, eps, eps_mode, p_init=p)
        intervals.append(iv)
        trace.append((g_out, g_in))
        if _gap_closed(g_out, g_in, eps, eps_mode):
            converged = True
            break
    if not converged:
        warns.append("max_outer")
        log.warning("alternating loop hit max_outer=%d", max_outer)
    phi = np.where(mask, phi, 0)
    gamma = float(np.min(sinr_all(phi, p, hbar, sigma2)))
    return MaxMinSolution(phi, p, gamma, trace, tau, converged, warns, intervals)
