"""Network geometry, Rayleigh channels and imperfect-CSI draws.

Every random quantity is a pure function of an integer seed so that trials
can run in any order (or in parallel) and still reproduce bit for bit.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .model import dbm_to_watt

# Reference distance of the variance law (200/d)^exp.
REF_DISTANCE = 200.0
# Direct ST-DT link: 30 dB loss at 1 m, then d^-exp.
DIRECT_LOSS_1M = 1e-3


@dataclass(frozen=True)
class Scenario:
    """Static description of one network.

    ``p_max`` accepts a scalar (same cap for every source) or a length-K
    sequence; it is stored as a tuple of floats in watts.
    """

    K: int = 4
    M: int = 5
    L: int = 20
    p_max: tuple = 0.1
    sigma2: float = field(default_factory=lambda: dbm_to_watt(-90.0))
    st_center: tuple = (0.0, 0.0)
    dt_center: tuple = (200.0, 0.0)
    irs_pos: tuple = (120.0, 50.0)
    cell_radius: float = 2.0
    pathloss_exp_uplink: float = 2.0
    pathloss_exp_downlink: float = 2.1
    pathloss_exp_direct: float = 3.5

    def __post_init__(self):
        for name in ("K", "M", "L"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        p = np.broadcast_to(np.asarray(self.p_max, dtype=float), (self.K,))
        if np.any(~np.isfinite(p)) or np.any(p <= 0):
            raise ValueError("p_max entries must be positive")
        object.__setattr__(self, "p_max", tuple(float(x) for x in p))
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not self.cell_radius > 0:
            raise ValueError("cell_radius must be positive")
        for name in ("st_center", "dt_center", "irs_pos"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))

    @property
    def N(self) -> int:
        return self.M * self.L

    @property
    def p_max_array(self) -> np.ndarray:
        return np.array(self.p_max)


@dataclass(frozen=True)
class Geometry:
    st_pos: np.ndarray    # (K, 2)
    dt_pos: np.ndarray    # (K, 2)
    irs_pos: np.ndarray   # (2,)
    d_h: np.ndarray       # (K,) source k -> IRS
    d_g: np.ndarray       # (K,) IRS -> destination k
    d_direct: np.ndarray  # (K, K) [k, j] = source j -> destination k


@dataclass(frozen=True)
class ChannelSet:
    """Per-pair channels. ``h[k]`` is source k -> IRS, ``g[k]`` is IRS ->
    destination k and ``d_direct[k, j]`` is the direct link source j ->
    destination k. Distances are carried along for CSI perturbation."""

    h: np.ndarray
    g: np.ndarray
    d_direct: np.ndarray
    d_h: np.ndarray
    d_g: np.ndarray

    def __post_init__(self):
        if self.h.shape != self.g.shape or self.h.ndim != 2:
            raise ValueError("h and g must both be (K, N)")
        if not (np.all(np.isfinite(self.h)) and np.all(np.isfinite(self.g))):
            raise ValueError("non-finite channel entries")

    @property
    def K(self) -> int:
        return self.h.shape[0]

    @property
    def N(self) -> int:
        return self.h.shape[1]

    def blocks(self, L: int) -> tuple[np.ndarray, np.ndarray]:
        """Return h and g reshaped to (K, M, L) module blocks."""
        K, N = self.h.shape
        if N % L:
            raise ValueError("N is not a multiple of L")
        return self.h.reshape(K, N // L, L), self.g.reshape(K, N // L, L)


def derive_seed(master: int, trial: int, tag: str) -> int:
    """Split a master seed into an independent 64-bit stream seed.

    The rule is ``sha256(f"{master}:{trial}:{tag}")`` truncated to 8 bytes,
    so any (master, trial, tag) triple maps to the same stream on every
    platform and in every execution order.
    """
    digest = hashlib.sha256(f"{int(master)}:{int(trial)}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _disk_uniform(rng, center, radius, count):
    # sqrt of a uniform radius gives uniform density over the disk area
    r = radius * np.sqrt(rng.random(count))
    t = 2.0 * np.pi * rng.random(count)
    return np.column_stack([center[0] + r * np.cos(t), center[1] + r * np.sin(t)])


def sample_positions(scenario: Scenario, seed: int) -> Geometry:
    rng = np.random.default_rng(seed)
    st = _disk_uniform(rng, scenario.st_center, scenario.cell_radius, scenario.K)
    dt = _disk_uniform(rng, scenario.dt_center, scenario.cell_radius, scenario.K)
    irs = np.array(scenario.irs_pos)
    d_h = np.linalg.norm(st - irs, axis=1)
    d_g = np.linalg.norm(dt - irs, axis=1)
    d_direct = np.linalg.norm(dt[:, None, :] - st[None, :, :], axis=2)
    return Geometry(st, dt, irs, d_h, d_g, d_direct)


def pathloss_variance(distance, exponent):
    """Per-entry channel variance ``(200 / distance) ** exponent``."""
    d = np.asarray(distance, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("distance must be positive")
    out = (REF_DISTANCE / d) ** exponent
    return float(out) if out.ndim == 0 else out


def direct_variance(distance, exponent):
    d = np.asarray(distance, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("distance must be positive")
    return DIRECT_LOSS_1M * d ** (-exponent)


def complex_gaussian(rng, shape, variance=1.0):
    """Circularly symmetric CN(0, variance): real and imaginary parts each
    carry half the variance."""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def generate_channels(scenario: Scenario, geometry: Geometry, seed: int) -> ChannelSet:
    rng = np.random.default_rng(seed)
    K, N = scenario.K, scenario.N
    var_h = pathloss_variance(geometry.d_h, scenario.pathloss_exp_uplink)
    var_g = pathloss_variance(geometry.d_g, scenario.pathloss_exp_downlink)
    h = complex_gaussian(rng, (K, N), var_h[:, None])
    g = complex_gaussian(rng, (K, N), var_g[:, None])
    var_d = direct_variance(geometry.d_direct, scenario.pathloss_exp_direct)
    d = complex_gaussian(rng, (K, K), var_d)
    return ChannelSet(h, g, d, geometry.d_h.copy(), geometry.d_g.copy())


def perturb_csi(channels: ChannelSet, xi: float, seed: int,
                exp_uplink: float = 2.0, exp_downlink: float = 2.1) -> ChannelSet:
    """Imperfect estimate ``xi * h + sqrt(1 - xi^2) * dh``.

    The error variance uses the shortest distance of each hop, so it is a
    single scalar per hop.
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError("xi must lie in [0, 1]")
    if xi == 1.0:
        return channels
    rng = np.random.default_rng(seed)
    var_dh = pathloss_variance(np.min(channels.d_h), exp_uplink)
    var_dg = pathloss_variance(np.min(channels.d_g), exp_downlink)
    e = np.sqrt(1.0 - xi * xi)
    h = xi * channels.h + e * complex_gaussian(rng, channels.h.shape, var_dh)
    g = xi * channels.g + e * complex_gaussian(rng, channels.g.shape, var_dg)
    return ChannelSet(h, g, channels.d_direct, channels.d_h, channels.d_g)


def draw_instance(scenario: Scenario, seed: int) -> tuple[Geometry, ChannelSet]:
    """Positions and channels from one seed (two derived substreams)."""
    geo = sample_positions(scenario, derive_seed(seed, 0, "geometry"))
    ch = generate_channels(scenario, geo, derive_seed(seed, 0, "channels"))
    return geo, ch
