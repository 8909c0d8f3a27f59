"""Monte Carlo sweeps: configuration, per-trial runs, CSV output and summaries."""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import os
import time
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import admm, baselines, maxmin
from .model import (PowerModelParams, dbm_to_watt, effective_channels, energy_efficiency,
                    linear_to_db, sinr_all, sinr_from_gains, sum_rate, total_power_af,
                    total_power_irs)
from .scenario import Scenario, derive_seed, draw_instance, perturb_csi

METHODS = ("admm", "mes", "mrs", "no_irs", "af")
SWEEPABLE = ("K", "M", "L", "p_max_dbm", "sigma2_dbm", "sigma_v2_dbm", "delta",
             "delta_scale", "csi_xi", "c")


@dataclass(frozen=True)
class ExperimentConfig:
    K: int = 4
    M: int = 5
    L: int = 4
    p_max_dbm: float = 20.0
    sigma2_dbm: float = -90.0
    sigma_v2_dbm: float = -90.0
    sweep_param: str = ""
    sweep_values: tuple = ()
    methods: tuple = METHODS
    trials: int = 50
    master_seed: int = 0
    c: float = 1.0
    delta: float = 2.0
    delta_scale: float = 0.0       # > 0 overrides delta with delta_scale * bound
    tol_primal: float = 1e-4
    eps_bisect: float = 1e-4
    eps_mode: str = "relative"
    tol_feas: float = 1e-7
    max_inner_iter: int = 5000
    phase_max_iter: int = 20000
    max_outer: int = 50
    mu_mode: str = "prox"
    zero_threshold: float = 1e-3
    csi_xi: float = 1.0
    timing: bool = False

    def __post_init__(self):
        if not self.methods:
            raise ValueError("methods must be non-empty")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for name in ("tol_primal", "eps_bisect", "tol_feas", "c", "delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sweep_param and self.sweep_param not in SWEEPABLE:
            raise ValueError(f"cannot sweep {self.sweep_param!r}; choose from {SWEEPABLE}")
        if self.sweep_param and not self.sweep_values:
            raise ValueError("sweep_param given without sweep_values")
        if not 0.0 <= self.csi_xi <= 1.0:
            raise ValueError("csi_xi must lie in [0, 1]")

    def scenario(self):
        return Scenario(K=self.K, M=self.M, L=self.L, p_max=dbm_to_watt(self.p_max_dbm),
                        sigma2=dbm_to_watt(self.sigma2_dbm))

    def effective_delta(self):
        if self.delta_scale > 0:
            N = self.M * self.L
            return self.delta_scale * admm.delta_upper_bound(self.M, self.K, N, dbm_to_watt(self.p_max_dbm))
        return self.delta

    def admm_params(self):
        return admm.AdmmParams(delta=self.effective_delta(), c=self.c, tol_primal=self.tol_primal,
                               max_inner_iter=self.max_inner_iter, eps_bisect=self.eps_bisect,
                               eps_mode=self.eps_mode, zero_threshold=self.zero_threshold,
                               mu_mode=self.mu_mode)

    def phase_settings(self):
        return maxmin.PhaseSettings(tol_feas=self.tol_feas, max_iter=self.phase_max_iter)

    def points(self):
        """(swept value, config at that value); a single point when not sweeping."""
        if not self.sweep_param:
            return [(math.nan, self)]
        out = []
        for v in self.sweep_values:
            cur = getattr(self, self.sweep_param)
            out.append((v, dataclasses.replace(self, **{self.sweep_param: type(cur)(v)})))
        return out


def _parse_bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_value(name, typ, raw):
    if typ is bool:
        return _parse_bool(raw)
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    if typ is str:
        return raw.strip()
    if typ is tuple:
        items = [x.strip() for x in raw.split(",") if x.strip()]
        if name == "sweep_values":
            return tuple(float(x) for x in items)
        return tuple(items)
    raise TypeError(f"unsupported field type for {name}")


def parse_config(text, _defaults=None, **overrides):
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    Keys are ``ExperimentConfig`` field names; lists are comma separated.
    Unknown or repeated keys raise ``ValueError``. ``_defaults`` is applied
    below the file and ``overrides`` (when not None) above it.
    """
    hints = typing.get_type_hints(ExperimentConfig)
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, raw = (x.strip() for x in line.split("=", 1))
        if key not in hints:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _parse_value(key, hints[key], raw)
        except ValueError as e:
            raise ValueError(f"line {lineno}: bad value for {key}: {e}") from None
    values = {**(_defaults or {}), **values}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path, _defaults=None, **overrides):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), _defaults, **overrides)


@dataclass
class TrialRecord:
    trial: int
    method: str
    value: float
    min_sinr_db: float
    per_user_sinr: tuple
    triggered_count: int
    subset: int
    total_tx_power_w: float
    sum_rate_bph: float
    ee_bpjphz: float
    phase1_iters: int
    outer_iters: int
    runtime_ms: float | None
    warnings: tuple = ()


FIELDS = [f.name for f in dataclasses.fields(TrialRecord)]


def subset_bits(subset):
    return sum(1 << int(m) for m in subset)


def _record(trial, method, value, sinr, count, bits, tx, total, p1, outer, t_ms, warns):
    sinr = np.asarray(sinr, dtype=float)
    mn = float(np.min(sinr)) if sinr.size else math.nan
    return TrialRecord(
        trial=trial, method=method, value=value,
        min_sinr_db=linear_to_db(mn) if mn > 0 else -math.inf,
        per_user_sinr=tuple(float(x) for x in sinr), triggered_count=count, subset=bits,
        total_tx_power_w=float(tx), sum_rate_bph=sum_rate(sinr),
        ee_bpjphz=energy_efficiency(sinr, total), phase1_iters=p1, outer_iters=outer,
        runtime_ms=t_ms, warnings=tuple(warns))


def run_trial(cfg: ExperimentConfig, value, trial, trace_dir=None):
    """All requested methods on one channel draw."""
    sc = cfg.scenario()
    K, M, L = sc.K, sc.M, sc.L
    pm = sc.p_max_array
    s2 = sc.sigma2
    _, ch = draw_instance(sc, derive_seed(cfg.master_seed, trial, "instance"))
    est = ch
    if cfg.csi_xi < 1.0:
        est = perturb_csi(ch, cfg.csi_xi, derive_seed(cfg.master_seed, trial, "csi"))
    hb_true = effective_channels(ch.h, ch.g)
    hb = effective_channels(est.h, est.g)
    init_seed = derive_seed(cfg.master_seed, trial, "init")
    settings = cfg.phase_settings()
    alt_kw = dict(eps=cfg.eps_bisect, eps_mode=cfg.eps_mode, max_outer=cfg.max_outer,
                  settings=settings)
    pw = PowerModelParams()
    out = []
    clock = time.perf_counter

    def ms(t0):
        return (clock() - t0) * 1e3 if cfg.timing else None

    need_card = any(m in cfg.methods for m in ("admm", "mes", "mrs", "af"))
    sel, sol_admm, t_admm, err = None, None, None, ""
    if need_card:
        t0 = clock()
        try:
            sel = admm.bisection_identify(hb, s2, pm, cfg.admm_params(), L, trace=trace_dir is not None)
        except FloatingPointError as e:
            sel = None
            err = f"phase1:{e}"
        if sel is not None:
            sol_admm = maxmin.alternate(hb, s2, pm, admm.subset_mask(sel.subset, M, L),
                                        seed=init_seed, **alt_kw)
        t_admm = ms(t0)
        if trace_dir is not None and sel is not None and sel.residual_trace is not None:
            os.makedirs(trace_dir, exist_ok=True)
            admm.write_trace_csv(os.path.join(trace_dir, f"admm_v{value:g}_t{trial}.csv"),
                                 sel.residual_trace)
    card = sel.triggered_count if sel is not None else 0

    def irs_record(method, subset, sol, p1, t_ms, extra=()):
        sinr = sinr_all(sol.phi, sol.p, hb_true, s2)
        total = total_power_irs(sol.p, len(subset), L, pw)
        return _record(trial, method, value, sinr, len(subset), subset_bits(subset),
                       float(np.sum(sol.p)), total, p1, sol.outer_iters, t_ms,
                       list(extra) + list(sol.warnings))

    def failed(method, msg):
        nan = math.nan
        return TrialRecord(trial, method, value, nan, (), 0, 0, nan, nan, nan, 0, 0, None, (msg,))

    for method in cfg.methods:
        if method == "admm":
            if sel is None:
                out.append(failed("admm", err))
                continue
            out.append(irs_record("admm", sel.subset, sol_admm, sel.iterations, t_admm))
        elif method == "mes":
            if sel is None:
                out.append(failed("mes", err))
                continue
            t0 = clock()
            subset, sol, _ = baselines.mes(hb, s2, pm, M, L, card, seed=init_seed,
                                           known={sel.subset: sol_admm}, **alt_kw)
            out.append(irs_record("mes", subset, sol, 0, ms(t0)))
        elif method == "mrs":
            if sel is None:
                out.append(failed("mrs", err))
                continue
            t0 = clock()
            subset, sol = baselines.mrs(hb, s2, pm, M, L, card,
                                        derive_seed(cfg.master_seed, trial, "mrs"),
                                        alt_seed=init_seed, **alt_kw)
            out.append(irs_record("mrs", subset, sol, 0, ms(t0)))
        elif method == "no_irs":
            t0 = clock()
            sol = baselines.no_irs_maxmin(ch.d_direct, s2, pm, cfg.eps_bisect, cfg.eps_mode)
            sinr = sinr_from_gains(baselines.direct_gains(ch.d_direct), sol.p, s2)
            total = total_power_irs(sol.p, 0, L, pw)
            out.append(_record(trial, "no_irs", value, sinr, 0, 0, float(np.sum(sol.p)), total,
                               0, 1, ms(t0), []))
        elif method == "af":
            if sel is None or card * L < K:
                out.append(failed("af", "too_few_relay_antennas" if sel is not None else err))
                continue
            t0 = clock()
            H, G = baselines.af_channels(ch.h, ch.g, sel.subset, L)
            acfg = baselines.AfConfig(tuple(pm), dbm_to_watt(cfg.sigma_v2_dbm), s2, card * L)
            try:
                sol = baselines.af_maxmin_power(H, G, acfg, cfg.eps_bisect, cfg.eps_mode)
            except np.linalg.LinAlgError as e:
                out.append(failed("af", f"af:{e}"))
                continue
            total = total_power_af(sol.p, sol.P_r, acfg.antenna_count, pw)
            out.append(_record(trial, "af", value, sol.sinr, card, subset_bits(sel.subset),
                               float(np.sum(sol.p)) + sol.P_r, total, 0, 1, ms(t0), sol.warnings))
    return out


def _run_point(args):
    cfg, value, trial, trace_dir = args
    return run_trial(cfg, value, trial, trace_dir)


def _order_key(rec):
    v = -math.inf if math.isnan(rec.value) else rec.value
    return (v, rec.trial, METHODS.index(rec.method))


def run_experiment(config: ExperimentConfig, workers=1, trace_dir=None, trial_order=None):
    """One record per (swept value, trial, method), sorted deterministically.

    ``trial_order`` permutes execution order (the output does not depend
    on it).
    """
    trials = list(range(config.trials)) if trial_order is None else list(trial_order)
    if sorted(trials) != list(range(config.trials)):
        raise ValueError("trial_order must be a permutation of range(trials)")
    jobs = [(cfg, v, t, trace_dir) for v, cfg in config.points() for t in trials]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(_run_point, jobs))
    else:
        chunks = [_run_point(j) for j in jobs]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=_order_key)
    return records


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    return str(x)


def record_row(rec: TrialRecord):
    row = []
    for name in FIELDS:
        v = getattr(rec, name)
        if name == "per_user_sinr":
            row.append(";".join(_fmt(x) for x in v))
        elif name == "subset":
            row.append(hex(v))
        elif name == "warnings":
            row.append(";".join(v))
        elif name == "value" and math.isnan(v):
            row.append("")
        else:
            row.append(_fmt(v))
    return row


def records_to_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in records:
        w.writerow(record_row(r))
    return buf.getvalue()


def write_csv(records, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(records_to_csv(records))


AGG_METRICS = ("min_sinr_db", "triggered_count", "total_tx_power_w", "ee_bpjphz")


def aggregate(records):
    """Mean and standard error per (method, swept value).

    Rows carrying warnings or non-finite metrics are left out of the
    statistics and counted in ``excluded``.

    Returns
    -------
    list of dict
    """
    if not records:
        raise ValueError("no records to aggregate")
    groups = {}
    for r in records:
        groups.setdefault((r.method, r.value if not math.isnan(r.value) else None), []).append(r)
    rows = []
    for (method, value), recs in sorted(groups.items(), key=lambda kv: (
            METHODS.index(kv[0][0]), -math.inf if kv[0][1] is None else kv[0][1])):
        good = [r for r in recs if not r.warnings
                and all(np.isfinite(getattr(r, m)) for m in AGG_METRICS)]
        row = {"method": method, "value": math.nan if value is None else value,
               "n": len(good), "excluded": len(recs) - len(good)}
        if not good:
            row["note"] = "empty group"
            rows.append(row)
            continue
        for m in AGG_METRICS:
            x = np.array([getattr(r, m) for r in good], dtype=float)
            row[f"{m}_mean"] = float(x.mean())
            row[f"{m}_stderr"] = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
        rows.append(row)
    return rows


def summary_to_csv(rows):
    keys = ["method", "value", "n", "excluded"]
    for m in AGG_METRICS:
        keys += [f"{m}_mean", f"{m}_stderr"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for row in rows:
        w.writerow([_fmt(row.get(k)) for k in keys])
    return buf.getvalue()
