"""Signal model: effective channels, SINR, rates and power accounting.

Beam vector convention: ``phi[n]`` is the conjugate of the reflection
coefficient applied by element n, i.e. the reflection matrix is
``diag(conj(phi))``. With this choice the cascaded gain of pair (j, k) is
``g_k^H diag(conj(phi)) h_j = phi^H hbar[j, k]`` and every power term is
``|hbar[j, k]^H phi|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def dbm_to_watt(dbm):
    return _scalar_or_array(10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0))


def watt_to_dbm(w):
    return _scalar_or_array(10.0 * np.log10(w) + 30.0)


def db_to_linear(db):
    return _scalar_or_array(10.0 ** (np.asarray(db, dtype=float) / 10.0))


def linear_to_db(x):
    return _scalar_or_array(10.0 * np.log10(x))


def effective_channel(g_k, h_j):
    """Entrywise ``conj(g_k) * h_j``."""
    g_k = np.asarray(g_k)
    h_j = np.asarray(h_j)
    if g_k.shape != h_j.shape:
        raise ValueError(f"length mismatch: {g_k.shape} vs {h_j.shape}")
    return np.conj(g_k) * h_j


def effective_channels(h, g):
    """All cascaded channels, ``hbar[j, k] = conj(g[k]) * h[j]``, shape (K, K, N)."""
    h = np.asarray(h)
    g = np.asarray(g)
    if h.shape != g.shape:
        raise ValueError("h and g must have the same shape")
    return np.conj(g)[None, :, :] * h[:, None, :]


def reflection_matrix(phi):
    return np.diag(np.conj(phi))


def gains(phi, hbar):
    """``b[j, k] = |hbar[j, k]^H phi|^2`` (source j seen at destination k)."""
    return np.abs(np.einsum("jkn,n->jk", np.conj(hbar), phi)) ** 2


def sinr_from_gains(b, p, sigma2):
    p = np.asarray(p, dtype=float)
    rx = p[:, None] * b                     # rx[j, k]: power of source j at k
    signal = np.diag(rx)
    interference = rx.sum(axis=0) - signal
    return signal / (interference + sigma2)


def sinr_all(phi, p, hbar, sigma2):
    """SINR at every destination for beam ``phi`` and powers ``p``."""
    return sinr_from_gains(gains(phi, hbar), p, sigma2)


def sum_rate(sinrs):
    """Sum of per-user rates in bit/s/Hz."""
    return float(np.sum(np.log2(1.0 + np.asarray(sinrs, dtype=float))))


@dataclass(frozen=True)
class PowerModelParams:
    P_ST: float = 0.01
    P_DT: float = 0.01
    xi_ST: float = 1.2
    xi_AF: float = 1.2
    P_element: float = 0.01
    P_antenna: float = 0.01

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not v > 0:
                raise ValueError(f"{name} must be positive")

    def P_module(self, L: int) -> float:
        return self.P_element * L


def total_power_irs(p, triggered_count: int, L: int, params: PowerModelParams = PowerModelParams()):
    p = np.asarray(p, dtype=float)
    K = p.size
    return (params.xi_ST * float(p.sum()) + K * params.P_ST + K * params.P_DT
            + triggered_count * params.P_module(L))


def total_power_af(p, P_r: float, antenna_count: int, params: PowerModelParams = PowerModelParams()):
    p = np.asarray(p, dtype=float)
    K = p.size
    return (params.xi_AF * P_r + params.xi_ST * float(p.sum()) + K * params.P_ST
            + K * params.P_DT + antenna_count * params.P_antenna)


def energy_efficiency(sinrs, total_power: float) -> float:
    """Sum rate per Hz over consumed power, in bit/Joule/Hz."""
    if not total_power > 0:
        raise ValueError("total power must be positive")
    return sum_rate(sinrs) / total_power
