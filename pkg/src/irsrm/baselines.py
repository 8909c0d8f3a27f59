"""Reference schemes: exhaustive and random module choice, direct links only,
and a zero-forcing amplify-and-forward relay."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .admm import subset_mask
from .feasibility import bisect
from .maxmin import MaxMinSolution, alternate, maxmin_power_gains

MES_MAX_MODULES = 12


def mes(hbar, sigma2, p_max, M, L, cardinality, eps=1e-4, seed=0, known=None, **kw):
    """Best subset of the given size by running ``alternate`` on every one.

    ``known`` maps already solved subsets (frozensets) to their solutions
    so they are not recomputed; since the same seed is used for every
    subset, a reused solution is identical to a fresh one.

    Returns
    -------
    subset : frozenset
    solution : MaxMinSolution
    runs : dict
        Every evaluated subset with its solution.
    """
    if M > MES_MAX_MODULES:
        raise ValueError(f"exhaustive search limited to M <= {MES_MAX_MODULES}, got {M}")
    if not 0 <= cardinality <= M:
        raise ValueError("cardinality must lie in [0, M]")
    runs = {}
    for combo in itertools.combinations(range(M), cardinality):
        key = frozenset(combo)
        if known is not None and key in known:
            runs[key] = known[key]
            continue
        runs[key] = alternate(hbar, sigma2, p_max, subset_mask(key, M, L), eps=eps, seed=seed, **kw)
    # first maximum in enumeration order keeps ties deterministic
    best_gamma = max(r.gamma for r in runs.values())
    best = next(s for s in runs if runs[s].gamma == best_gamma)
    return best, runs[best], runs


def random_subset(M, cardinality, seed):
    if not 0 <= cardinality <= M:
        raise ValueError("cardinality must lie in [0, M]")
    rng = np.random.default_rng(seed)
    return frozenset(int(m) for m in rng.choice(M, size=cardinality, replace=False))


def mrs(hbar, sigma2, p_max, M, L, cardinality, seed, eps=1e-4, alt_seed=None, **kw):
    """Uniformly random subset of the given size, then ``alternate``."""
    subset = random_subset(M, cardinality, seed)
    sol = alternate(hbar, sigma2, p_max, subset_mask(subset, M, L), eps=eps,
                    seed=seed if alt_seed is None else alt_seed, **kw)
    return subset, sol


def direct_gains(d_direct):
    """``b[j, k] = |d[k, j]|^2`` from ``d_direct[k, j]`` (source j -> destination k)."""
    return np.abs(np.asarray(d_direct).T) ** 2


def no_irs_maxmin(d_direct, sigma2, p_max, eps=1e-4, eps_mode="relative"):
    """Power-only max-min SINR over the direct links."""
    b = direct_gains(d_direct)
    p, gamma, iv = maxmin_power_gains(b, sigma2, p_max, eps, eps_mode)
    return MaxMinSolution(np.zeros(0, dtype=complex), p, gamma, [(gamma, gamma)], 1,
                          intervals=[iv])


@dataclass(frozen=True)
class AfConfig:
    """Relay budget equal to the summed source budgets, relay noise
    ``sigma_v2`` and the antenna count."""

    p_max: tuple
    sigma_v2: float
    sigma2: float
    antenna_count: int

    def __post_init__(self):
        object.__setattr__(self, "p_max", tuple(float(x) for x in np.atleast_1d(self.p_max)))
        if self.sigma_v2 < 0 or not self.sigma2 > 0:
            raise ValueError("noise powers must be nonnegative (relay) and positive (destination)")

    @property
    def P_r_max(self):
        return float(sum(self.p_max))


def _gram_inverses(H, G):
    H = np.asarray(H)
    G = np.asarray(G)
    N, K = H.shape
    if N < K:
        raise np.linalg.LinAlgError(f"zero forcing needs N >= K, got N={N}, K={K}")
    HtH = H.conj().T @ H
    GGt = G @ G.conj().T
    if np.linalg.cond(HtH) > 1e14 or np.linalg.cond(GGt) > 1e14:
        raise np.linalg.LinAlgError("singular Gram matrix")
    return np.linalg.inv(HtH), np.linalg.inv(GGt)


def zf_relay_beam(H, G):
    """Relay matrix ``V = G^H (G G^H)^-1 (H^H H)^-1 H^H`` so that ``G V H = I``.

    ``H`` is N x K (sources to relay antennas), ``G`` is K x N (relay
    antennas to destinations).
    """
    iHH, iGG = _gram_inverses(H, G)
    V_R = iHH @ np.asarray(H).conj().T          # receive pseudo-inverse, K x N
    V_T = np.asarray(G).conj().T @ iGG          # transmit pseudo-inverse, N x K
    return V_T @ V_R


def af_amplify_all(H, G, p, P_r_max, sigma_v2):
    """Per-pair amplification for every pair.

    With ``a_k = p_k + sigma_v2 [(H^H H)^-1]_kk`` and ``b_k = [(G G^H)^-1]_kk``
    the factors are ``sqrt(P_r a_k b_k / sum_j a_j^2 b_j^2)``.
    """
    iHH, iGG = _gram_inverses(H, G)
    a = np.asarray(p, dtype=float) + sigma_v2 * np.real(np.diag(iHH))
    b = np.real(np.diag(iGG))
    return np.sqrt(P_r_max * a * b / np.sum(a * a * b * b))


def af_amplify_factor(k, H, G, p, P_r_max, sigma_v2):
    return float(af_amplify_all(H, G, p, P_r_max, sigma_v2)[k])


def relay_power(zeta, H, G, p, sigma_v2):
    """Relay transmit power in the per-stream model ``sum_k zeta_k^2 a_k b_k``."""
    iHH, iGG = _gram_inverses(H, G)
    a = np.asarray(p, dtype=float) + sigma_v2 * np.real(np.diag(iHH))
    b = np.real(np.diag(iGG))
    return float(np.sum(np.asarray(zeta) ** 2 * a * b))


def af_sinr_all(H, G, p, zeta, sigma_v2, sigma2):
    iHH, _ = _gram_inverses(H, G)
    # ||e_k^H (H^H H)^-1 H^H||^2 is the k-th diagonal entry of (H^H H)^-1
    c = np.real(np.diag(iHH))
    z2 = np.asarray(zeta) ** 2
    return np.asarray(p, dtype=float) * z2 / (z2 * sigma_v2 * c + sigma2)


def af_sinr(k, H, G, p, zeta, sigma_v2, sigma2):
    return float(af_sinr_all(H, G, p, zeta, sigma_v2, sigma2)[k])


@dataclass
class AfSolution:
    p: np.ndarray
    zeta: np.ndarray
    gamma: float
    P_r: float
    sinr: np.ndarray
    interval: tuple = (0.0, 0.0)
    warnings: list = field(default_factory=list)


def _af_min_power(gamma, H, G, cfg, max_sweeps=1000, rtol=1e-12):
    """Least powers with every relayed SINR >= gamma, or None.

    With ``a_k = p_k + sigma_v2 c_k`` the SINR constraint reads
    ``p_k >= gamma (sigma_v2 c_k + sigma2 S / (P_r a_k b_k))`` where
    ``S = sum_j a_j^2 b_j^2`` couples the pairs. For a fixed value ``t`` of
    ``S`` each constraint is a scalar quadratic whose least root ``p_k(t)``
    grows with ``t``, and ``a_k(t)^2 / t`` falls with ``t``. Hence gamma is
    feasible exactly when ``S(p(t)) <= t`` at the largest ``t`` allowed by
    ``p_max``. From there ``t <- S(p(t))`` decreases monotonically, every
    iterate staying feasible, towards the least powers.
    """
    iHH, iGG = _gram_inverses(H, G)
    c = np.real(np.diag(iHH))
    b = np.real(np.diag(iGG))
    p_max = np.asarray(cfg.p_max)
    e = cfg.sigma_v2 * c
    if np.any(p_max < gamma * e):
        return None
    beta = gamma * cfg.sigma2 / (cfg.P_r_max * b)

    def powers(t):
        # a (a - (1 + gamma) e) = beta t, positive root
        s = (1.0 + gamma) * e
        a = 0.5 * (s + np.sqrt(s * s + 4.0 * beta * t))
        return np.maximum(a - e, 0.0), a

    t = float(np.min((p_max + e) * (p_max - gamma * e) / beta))
    p, a = powers(t)
    S = float(np.sum(a * a * b * b))
    if S > t * (1 + 1e-12):
        return None
    floor = 1e-12 * t
    for _ in range(max_sweeps):
        if S >= t * (1 - rtol) or S <= floor:
            break
        t = S
        p, a = powers(t)
        S = float(np.sum(a * a * b * b))
    return np.minimum(p, p_max)


def af_maxmin_power(H, G, cfg: AfConfig, eps=1e-4, eps_mode="relative", max_sweeps=1000):
    """Bisection on the common SINR with the relay power fixed point as test."""
    p_max = np.asarray(cfg.p_max)
    warns = []

    def level(p):
        z = af_amplify_all(H, G, p, cfg.P_r_max, cfg.sigma_v2)
        return float(np.min(af_sinr_all(H, G, p, z, cfg.sigma_v2, cfg.sigma2)))

    def pred(g):
        p = _af_min_power(g, H, G, cfg, max_sweeps)
        if p is None:
            return False, None
        return True, p, level(p)

    # zeta_k^2 <= P_r / (a_k b_k) gives sinr_k <= P_r / (b_k sigma2), and the
    # relay noise alone caps sinr_k below p_k / (sigma_v2 c_k)
    iHH, iGG = _gram_inverses(H, G)
    bound = cfg.P_r_max / (np.real(np.diag(iGG)) * cfg.sigma2)
    if cfg.sigma_v2 > 0:
        bound = np.minimum(bound, p_max / (cfg.sigma_v2 * np.real(np.diag(iHH))))
    hi = float(np.min(bound))
    lo, p_lo = level(p_max), p_max.copy()
    if hi > lo:
        res = bisect(pred, lo, hi, eps, mode=eps_mode, check_hi=True, payload_lo=p_lo)
        p_lo, lo, iv = res.payload, res.lo, (res.lo, res.hi)
        if res.hi_feasible:
            warns.append("upper bound feasible")
    else:
        iv = (lo, lo)
    z = af_amplify_all(H, G, p_lo, cfg.P_r_max, cfg.sigma_v2)
    sinr = af_sinr_all(H, G, p_lo, z, cfg.sigma_v2, cfg.sigma2)
    return AfSolution(p_lo, z, float(np.min(sinr)), relay_power(z, H, G, p_lo, cfg.sigma_v2),
                      sinr, iv, warns)


def af_channels(h, g, subset, L):
    """Relay hop matrices on the antennas of ``subset``: H (N x K), G (K x N)."""
    idx = np.flatnonzero(subset_mask(subset, h.shape[1] // L, L))
    return np.ascontiguousarray(h[:, idx].T), np.ascontiguousarray(np.conj(g[:, idx]))
