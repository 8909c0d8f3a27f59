"""Module selection by group-sparse ADMM inside a bisection on the SINR target.

For a target gamma the relaxed problem gives every source its own beam
column ``phibar_k`` (an N-vector with per-entry cap ``|phibar_k[n]|^2 <=
p_max[k]``). It minimizes ``alpha * sum_m ||Phibar^m||_F`` over module blocks
subject to one second-order cone per destination:

    sqrt(1/gamma) * Re(hbar_kk^H phibar_k) >= ||[hbar_jk^H phibar_j]_{j != k}, sigma||

A target is accepted when this minimum is at most ``delta``. The block
norms at the largest accepted target reveal which modules to trigger.

Internally the variables are normalized. ``X = Phibar / s`` with ``s =
sqrt(max p_max) * kappa`` and cone rows divided by sigma. The coupling
matrices ``G_k`` (N x K) then have column ``j`` equal to ``s * hbar[k, j]
/ sigma``, and column ``k`` is further divided by ``sqrt(gamma)``. Every
cone becomes a unit cone with noise entry 1 and the cap becomes ``|X[n,
k]| <= sqrt(p_max[k]) / s``.

``kappa = min(1, sqrt(gamma / bound))``, with ``bound`` the
interference-free SINR bound, keeps X of order one at small targets,
where the solution shrinks like ``sqrt(gamma)``. The group weight is
``alpha * s / kappa``: scaling weight and penalty together by ``kappa``
would not change the primal iterates, so the common factor is dropped
and only the reported objective carries it.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _pykernels, kernels
from .feasibility import bisect

log = logging.getLogger(__name__)

MU_MODES = ("prox", "dual-ascent", "paper-literal")


def delta_upper_bound(M, K, N, p_max_max):
    """Sparsity budget above which every module is always triggered.

    Any capped ``Phibar`` has ``sum_m ||Phibar^m||_F <= sqrt(M K N p_max)``,
    and ``alpha * that <= delta`` with ``alpha = 1/(delta + 0.01)`` solves to
    the returned root.
    """
    if M < 0 or K < 0 or N < 0 or p_max_max < 0:
        raise ValueError("arguments must be nonnegative")
    return (-0.01 + np.sqrt(0.01 ** 2 + np.sqrt(16.0 * M * K * N * p_max_max))) / 2.0


@dataclass
class AdmmParams:
    """Solver settings.

    ``mu_mode`` picks how the per-entry cap is enforced. ``prox`` puts the
    cap inside the group proximal step, which is exact and runs in the
    compiled loop. ``dual-ascent`` uses projected ascent on box multipliers
    with step ``rho_mu`` (default ``c``). ``paper-literal`` uses
    ``mu = (p_max - |phibar|^2)^+``. The last two run in Python.
    """

    delta: float = 1.0
    c: float = 1.0
    alpha: float | None = None
    tol_primal: float = 1e-4
    max_inner_iter: int = 5000
    min_inner_iter: int = 10
    gamma_lo: float = 0.0
    gamma_hi: float | None = None
    eps_bisect: float = 1e-4
    eps_mode: str = "relative"
    zero_threshold: float = 1e-3
    mu_mode: str = "prox"
    rho_mu: float | None = None
    cert_window: int = 200

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.alpha is None:
            self.alpha = 1.0 / (self.delta + 0.01)
        for name in ("c", "tol_primal", "eps_bisect"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.zero_threshold < 1:
            raise ValueError("zero_threshold must lie in (0, 1)")
        if self.mu_mode not in MU_MODES:
            raise ValueError(f"mu_mode must be one of {MU_MODES}")
        if self.eps_mode not in ("absolute", "relative"):
            raise ValueError("eps_mode must be 'absolute' or 'relative'")
        if self.rho_mu is None:
            self.rho_mu = self.c


@dataclass
class AdmmState:
    """Iterates in normalized units (see module docstring).

    ``Phibar`` holds X. ``Hbar[k]`` is the N x K coupling ``G_k``. ``radius``
    is the per-column cap, ``noise`` the cone noise entries and ``kappa``
    the target-dependent factor in ``scale``.
    """

    Phibar: np.ndarray
    W: np.ndarray
    F: np.ndarray
    Lambda: np.ndarray
    Psi: np.ndarray
    mu: np.ndarray
    gamma: float
    Hbar: np.ndarray
    c: float
    alpha: float
    radius: np.ndarray
    noise: np.ndarray
    scale: float
    L: int
    kappa: float = 1.0

    @property
    def K(self):
        return self.Phibar.shape[1]

    def coupled(self):
        """Rows of ``[B, noise]`` with ``B[j, k] = G_k[:, j]^H x_k``."""
        K = self.K
        B = np.empty((K, K + 1), dtype=complex)
        for k in range(K):
            B[:, k] = self.Hbar[k].conj().T @ self.Phibar[:, k]
        B[:, K] = self.noise
        return B

    def objective(self):
        """``alpha * sum_m ||W^m||_F`` in original units."""
        return self.alpha * self.kappa * float(np.sum(block_norms(self.W, self.L)))


def block_norms(W, L):
    N, K = W.shape
    return np.linalg.norm(W.reshape(N // L, L * K), axis=1)


def coupling_matrices(gamma, hbar, sigma2, scale):
    """``G_k`` stacked as (K, N, K)."""
    K = hbar.shape[0]
    G = np.transpose(hbar, (0, 2, 1)) * (scale / np.sqrt(sigma2))
    G = np.ascontiguousarray(G)
    G[np.arange(K), :, np.arange(K)] /= np.sqrt(gamma)
    return G


def init_state(gamma, hbar, sigma2, p_max, params, L):
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    hbar = np.asarray(hbar)
    K, _, N = hbar.shape
    if N % L:
        raise ValueError("N is not a multiple of L")
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (K,))
    # far below the interference-free bound the solution shrinks like
    # sqrt(gamma / bound); rescaling by that factor keeps the iterates O(1)
    ref = gamma_upper_bound(hbar, sigma2, p_max)
    kappa = min(1.0, np.sqrt(gamma / ref)) if ref > 0 else 1.0
    s = float(np.sqrt(p_max.max())) * kappa
    G = coupling_matrices(gamma, hbar, sigma2, s)
    F = np.zeros((K, K + 1), dtype=complex)
    F[:, K] = 1.0
    return AdmmState(
        Phibar=np.zeros((N, K), dtype=complex), W=np.zeros((N, K), dtype=complex),
        F=F, Lambda=np.zeros((N, K), dtype=complex), Psi=np.zeros((K, K + 1), dtype=complex),
        mu=np.zeros((N, K)), gamma=float(gamma), Hbar=G, c=float(params.c),
        alpha=float(params.alpha) * s / kappa, radius=np.sqrt(p_max) / s, noise=np.ones(K),
        scale=s, L=int(L), kappa=kappa)


def update_phibar(state, k):
    """Exact minimizer of the augmented Lagrangian over column k.

    Solves ``(c I + c G G^H + 2 diag(mu_k)) x = lambda_k + c w_k + G psi_k +
    c G f_k`` where ``psi_k`` and ``f_k`` are column k of the first K
    columns of Psi and F.
    """
    G = state.Hbar[k]
    c = state.c
    N = G.shape[0]
    K = state.K
    A = c * np.eye(N) + c * (G @ G.conj().T) + 2.0 * np.diag(state.mu[:, k])
    rhs = (state.Lambda[:, k] + c * state.W[:, k]
           + G @ (state.Psi[:K, k] + c * state.F[:K, k]))
    x = np.linalg.solve(A, rhs)
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite column update for source {k}")
    return x


def update_w_block(Xi_m, alpha, c):
    """Block soft threshold: minimizer of ``alpha ||W|| + c/2 ||W - Xi/c||^2``."""
    if alpha < 0 or not c > 0:
        raise ValueError("need alpha >= 0 and c > 0")
    nrm = np.linalg.norm(Xi_m)
    if nrm <= alpha:
        return np.zeros_like(Xi_m)
    return ((nrm - alpha) / (c * nrm)) * Xi_m


def update_w_block_capped(Xi_m, alpha, c, radius):
    """Block soft threshold with the per-entry cap ``|W[:, k]| <= radius[k]``."""
    return _pykernels.prox_group_box(np.asarray(Xi_m) / c, alpha / c, np.asarray(radius, dtype=float))


def update_f_row(b_k, psi_k, gamma, c, k):
    """Minimize ``c/2 ||f - (b_k - psi_k/c)||^2`` over the SINR cone of row k.

    The cone is ``sqrt(1/gamma) Re f[k] >= ||f[-k]||``, where the norm runs
    over every other entry including the noise entry. The imaginary part
    of ``f[k]`` is not constrained and passes through.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    b_k = np.asarray(b_k, dtype=complex)
    psi_k = np.asarray(psi_k, dtype=complex)
    s = c * b_k[k] - psi_k[k]
    v = np.delete(c * b_k - psi_k, k)
    nv = np.linalg.norm(v)
    rg = np.sqrt(gamma)
    out = np.empty_like(b_k)
    if s.real / rg >= nv:
        out[:] = (c * b_k - psi_k) / c
        return out
    if nv <= -rg * s.real:
        out[:] = 0.0
        out[k] = 1j * s.imag / c
        return out
    eps = (gamma * nv - rg * s.real) / (1.0 + gamma)
    out[k] = (s + eps / rg) / c
    rest = v * ((nv - eps) / (c * nv))
    out[:k] = rest[:k]
    out[k + 1:] = rest[k:]
    return out


def update_mu(state, k, mode="dual-ascent", rho=None):
    """Box multipliers of column k in normalized units."""
    x2 = np.abs(state.Phibar[:, k]) ** 2
    r2 = state.radius[k] ** 2
    if mode == "dual-ascent":
        rho = state.c if rho is None else rho
        return np.maximum(0.0, state.mu[:, k] + rho * (x2 - r2))
    if mode == "paper-literal":
        return np.maximum(0.0, r2 - x2)
    raise ValueError(f"unknown mu mode {mode!r}")


def update_multipliers(state, B=None):
    if B is None:
        B = state.coupled()
    state.Lambda += state.c * (state.W - state.Phibar)
    state.Psi += state.c * (state.F - B)
    return state.Lambda, state.Psi


def admm_iteration(state, mu_mode="dual-ascent", rho_mu=None):
    """One pass of the composed updates; returns (r1, r2, s1, s2)."""
    K, L, c = state.K, state.L, state.c
    W_old = state.W.copy()
    F_old = state.F.copy()
    for k in range(K):
        state.Phibar[:, k] = update_phibar(state, k)
    if mu_mode != "prox":
        for k in range(K):
            state.mu[:, k] = update_mu(state, k, mu_mode, rho_mu)
    Xi = c * state.Phibar - state.Lambda
    M = state.Phibar.shape[0] // L
    for m in range(M):
        sl = slice(m * L, (m + 1) * L)
        if mu_mode == "prox":
            state.W[sl] = update_w_block_capped(Xi[sl], state.alpha, c, state.radius)
        else:
            state.W[sl] = update_w_block(Xi[sl], state.alpha, c)
    B = state.coupled()
    for k in range(K):
        state.F[k] = update_f_row(B[k], state.Psi[k], 1.0, c, k)
    update_multipliers(state, B)
    return (np.linalg.norm(state.W - state.Phibar), np.linalg.norm(state.F - B),
            c * np.linalg.norm(state.W - W_old), c * np.linalg.norm(state.F - F_old))


@dataclass
class InnerResult:
    Phibar: np.ndarray
    W: np.ndarray
    objective: float
    residuals: tuple
    iters: int
    status: str
    trace: np.ndarray | None = None
    state: AdmmState | None = None

    @property
    def converged(self):
        return self.status == "converged"


def _svd_factors(G):
    K, N, _ = G.shape
    V = np.empty((K, N, K), dtype=complex)
    d = np.empty((K, K))
    for k in range(K):
        U, s, _ = np.linalg.svd(G[k], full_matrices=False)
        V[k] = U
        d[k] = s * s / (1.0 + s * s)
    return V, d


def _rotate_columns(state):
    """Make the desired-signal term of every column real nonnegative."""
    for k in range(state.K):
        a = np.vdot(state.Hbar[k][:, k], state.W[:, k])
        if a != 0:
            rot = np.conj(a) / abs(a)
            state.W[:, k] *= rot
            state.Phibar[:, k] *= rot


def admm_inner_solve(gamma, hbar, sigma2, p_max, params, L, trace=False, backend=None):
    """Minimum group norm at SINR target ``gamma``.

    Returns
    -------
    InnerResult
        ``Phibar`` and ``W`` in original units; ``residuals`` are the final
        primal residuals ``||W - Phibar||`` and ``||F - [B, noise]||`` in
        normalized units; ``trace`` rows are
        (primal W, primal F, dual W, dual F, objective) when requested.
    """
    st = init_state(gamma, hbar, sigma2, p_max, params, L)
    tr = np.zeros((params.max_inner_iter, 5)) if trace else None
    if params.mu_mode == "prox":
        V, d = _svd_factors(st.Hbar)
        iters, code = kernels.admm_run(
            st.Hbar, V, d, st.Phibar, st.W, st.F, st.Lambda, st.Psi, st.noise,
            st.radius, st.alpha, st.c, st.L, params.tol_primal, params.max_inner_iter,
            params.min_inner_iter, params.cert_window, tr, backend=backend)
        status = kernels.STATUS_NAMES[code]
        if tr is not None:
            tr = tr[:iters]
    else:
        status = "max_iter"
        iters = 0
        for t in range(params.max_inner_iter):
            try:
                res = admm_iteration(st, params.mu_mode, params.rho_mu)
            except FloatingPointError:
                status = "nonfinite"
                iters = t + 1
                break
            iters = t + 1
            if tr is not None:
                tr[t] = (*res, st.objective())
            if not np.all(np.isfinite(res)):
                status = "nonfinite"
                break
            if iters >= params.min_inner_iter and max(res) <= params.tol_primal * max(1.0, np.linalg.norm(st.Phibar)):
                status = "converged"
                break
        if tr is not None:
            tr = tr[:iters]
    B = st.coupled()
    res = (float(np.linalg.norm(st.W - st.Phibar)), float(np.linalg.norm(st.F - B)))
    _rotate_columns(st)
    s = st.scale
    return InnerResult(st.Phibar * s, st.W * s, st.objective(), res, iters, status, tr, st)


def extract_subset(W, L, zero_threshold=1e-3):
    """Modules whose block norm exceeds ``zero_threshold`` times the largest."""
    if not 0 < zero_threshold < 1:
        raise ValueError("zero_threshold must lie in (0, 1)")
    bn = block_norms(np.asarray(W), L)
    top = bn.max() if bn.size else 0.0
    if not top > 0:
        return frozenset()
    return frozenset(int(m) for m in np.flatnonzero(bn > zero_threshold * top))


def subset_mask(subset, M, L):
    mask = np.zeros(M * L, dtype=bool)
    for m in subset:
        mask[m * L:(m + 1) * L] = True
    return mask


@dataclass
class SelectionResult:
    subset: frozenset
    gamma_star: float
    block_norms: np.ndarray
    objective: float
    iterations: int
    probes: list = field(default_factory=list)   # (gamma, objective, iters, status)
    gamma_interval: tuple = (0.0, 0.0)
    residual_trace: np.ndarray | None = None
    W: np.ndarray | None = None

    @property
    def triggered_count(self):
        return len(self.subset)


def gamma_upper_bound(hbar, sigma2, p_max):
    """Interference-free bound ``min_k p_k (sum_n |hbar_kk[n]|)^2 / sigma2``."""
    K = hbar.shape[0]
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (K,))
    s = np.abs(hbar[np.arange(K), np.arange(K)]).sum(axis=1)
    return float(np.min(p_max * s * s / sigma2))


def bisection_identify(hbar, sigma2, p_max, params, L, trace=False, backend=None):
    """Largest SINR target whose minimum group norm stays within ``delta``.

    A probe is accepted only when the inner solve converged and its
    objective is at most ``delta``. The subset is read from the block
    norms of the accepted probe at the lower end.
    """
    hbar = np.asarray(hbar)
    lo = float(params.gamma_lo)
    hi = params.gamma_hi if params.gamma_hi is not None else gamma_upper_bound(hbar, sigma2, p_max)
    if not hi > lo >= 0:
        raise ValueError("need gamma_hi > gamma_lo >= 0")
    probes = []
    total = [0]

    def pred(g):
        r = admm_inner_solve(g, hbar, sigma2, p_max, params, L, trace=trace, backend=backend)
        total[0] += r.iters
        probes.append((g, r.objective, r.iters, r.status))
        ok = r.converged and r.objective <= params.delta
        return ok, r

    res = bisect(pred, lo, hi, params.eps_bisect, mode=params.eps_mode, check_hi=True)
    best = res.payload
    N = hbar.shape[2]
    if best is None:
        W = np.zeros((N, hbar.shape[0]), dtype=complex)
        obj, rt = 0.0, None
    else:
        W, obj, rt = best.W, best.objective, best.trace
    bn = block_norms(W, L)
    return SelectionResult(
        subset=extract_subset(W, L, params.zero_threshold), gamma_star=res.lo,
        block_norms=bn, objective=obj, iterations=total[0], probes=probes,
        gamma_interval=(res.lo, res.hi), residual_trace=rt, W=W)


def write_trace_csv(path, trace):
    """Dump an inner-iteration trace (rows of r1, r2, s1, s2, objective)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "primal_w", "primal_f", "dual_w", "dual_f", "objective"])
        for i, row in enumerate(np.asarray(trace)):
            w.writerow([i + 1] + [f"{x:.9g}" for x in row])
