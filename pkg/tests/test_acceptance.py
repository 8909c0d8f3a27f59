"""Acceptance checks; each prints one pass/fail line (also collected in the
terminal summary)."""
import time

import numpy as np
import pytest

from irsrm import cli
from irsrm.admm import (AdmmParams, AdmmState, bisection_identify,
                        block_norms, delta_upper_bound, extract_subset, update_f_row,
                        update_phibar, update_w_block)
from irsrm.baselines import (AfConfig, af_amplify_all, af_channels, af_maxmin_power, af_sinr_all,
                             direct_gains, no_irs_maxmin, relay_power, zf_relay_beam)
from irsrm.experiments import ExperimentConfig, run_experiment
from irsrm.feasibility import power_min_fixed_point
from irsrm.maxmin import alternate
from irsrm.model import effective_channels, sinr_all, sinr_from_gains
from irsrm.scenario import Scenario, derive_seed, draw_instance

from conftest import crandn, make_instance, report
from oracles import (af_signal_chain, column_lagrangian, fd_gradient, ref_phase1,
                     soc_row_objective, soc_row_pg)

K0, M0, L0 = 4, 5, 4
DELTA_BAR = delta_upper_bound(M0, K0, M0 * L0, 0.1)


def test_01_group_prox():
    rng = np.random.default_rng(1)
    cases = []
    for _ in range(1000):
        shape = (int(rng.integers(1, 6)), int(rng.integers(1, 6)))
        Xi = crandn(rng, *shape) * rng.uniform(0.01, 10)
        cases.append((Xi, rng.uniform(0, 5), rng.uniform(0.05, 20)))
    t0 = time.perf_counter()
    outs = [update_w_block(Xi, a, c) for Xi, a, c in cases]
    elapsed = time.perf_counter() - t0
    worst, zero_ok = 0.0, True
    for (Xi, a, c), W in zip(cases, outs):
        nx, nw = np.linalg.norm(Xi), np.linalg.norm(W)
        zero_ok &= (nw == 0) == (nx <= a)
        if nw > 0:
            worst = max(worst, np.abs(a * W / nw + c * W - Xi).max() / max(1.0, nx))
        else:
            # zero is optimal iff Xi lies in the alpha-ball of the subdifferential
            worst = max(worst, max(0.0, nx - a))
    ok = worst <= 1e-10 and zero_ok and elapsed < 1.0
    report(1, ok, f"max subgradient residual {worst:.2e}, zero rule {'ok' if zero_ok else 'broken'}, "
                  f"{elapsed * 1e3:.0f} ms")
    assert ok


def test_02_cone_row():
    rng = np.random.default_rng(2)
    gap_max = slack_max = 0.0
    for _ in range(1000):
        K = int(rng.integers(1, 6))
        k = int(rng.integers(K))
        b, psi = crandn(rng, K + 1) * rng.uniform(0.1, 5), crandn(rng, K + 1)
        g, c = rng.uniform(0.05, 20), rng.uniform(0.1, 10)
        f = update_f_row(b, psi, g, c, k)
        ref = soc_row_pg(b, psi, g, c, k)
        gap_max = max(gap_max, soc_row_objective(f, b, psi, c) - soc_row_objective(ref, b, psi, c))
        slack = f[k].real / np.sqrt(g) - np.linalg.norm(np.delete(f, k))
        v = np.delete(c * b - psi, k)
        mult = max(0.0, np.linalg.norm(v) - c * np.linalg.norm(np.delete(f, k)))
        slack_max = max(slack_max, abs(mult * slack), max(0.0, -slack))
    ok = gap_max <= 1e-6 and slack_max <= 1e-8
    report(2, ok, f"max objective gap {gap_max:.2e}, complementary slackness {slack_max:.2e}")
    assert ok


def test_03_column_stationarity():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        K, L = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        N = L * int(rng.integers(1, 4))
        st = AdmmState(Phibar=crandn(rng, N, K), W=crandn(rng, N, K), F=crandn(rng, K, K + 1),
                       Lambda=crandn(rng, N, K), Psi=crandn(rng, K, K + 1),
                       mu=rng.uniform(0, 1, (N, K)), gamma=1.0, Hbar=crandn(rng, K, N, K),
                       c=rng.uniform(0.2, 5), alpha=0.5, radius=np.ones(K), noise=np.ones(K),
                       scale=1.0, L=L)
        k = int(rng.integers(K))
        x = update_phibar(st, k)
        grad = fd_gradient(lambda z: column_lagrangian(z, st, k), x)
        scale = (np.linalg.norm(st.Lambda[:, k]) + st.c * np.linalg.norm(st.W[:, k])
                 + np.linalg.norm(st.Psi[:, k]) + st.c * np.linalg.norm(st.F[:K, k]))
        worst = max(worst, np.linalg.norm(grad) / scale)
    ok = worst <= 1e-6
    report(3, ok, f"max relative gradient {worst:.2e}")
    assert ok


def test_04_budget_bound():
    rng = np.random.default_rng(4)
    viol = 0
    for _ in range(1000):
        M, L, K = (int(x) for x in rng.integers(1, 8, 3))
        pm = rng.uniform(1e-3, 2.0)
        delta = delta_upper_bound(M, K, M * L, pm) * rng.uniform(1.0, 3.0)
        # caps attained with probability one half per entry, otherwise inside
        mag = np.sqrt(pm) * np.where(rng.uniform(size=(M * L, K)) < 0.5, 1.0,
                                     rng.uniform(size=(M * L, K)))
        Phibar = mag * np.exp(2j * np.pi * rng.uniform(size=(M * L, K)))
        alpha = AdmmParams(delta=delta).alpha
        viol += alpha * block_norms(Phibar, L).sum() > delta
    full = 0
    for seed in range(20):
        hb, s2, pm, _ = make_instance(K=K0, M=M0, L=L0, seed=seed)
        sel = bisection_identify(hb, s2, pm, AdmmParams(delta=DELTA_BAR), L0)
        full += sel.triggered_count == M0
    ok = viol == 0 and full == 20
    report(4, ok, f"{viol} budget violations in 1000, all modules on {full}/20")
    assert ok


def test_05_bound_values():
    a = delta_upper_bound(5, 5, 100, 0.1)
    b = delta_upper_bound(15, 10, 300, 0.1)
    ok = 3.9 <= a <= 4.05 and 8.0 <= b <= 8.3
    report(5, ok, f"bounds {a:.4f} and {b:.4f}")
    assert ok


@pytest.mark.slow
def test_06_selection_matches_conic_reference():
    P = AdmmParams(delta=0.5 * DELTA_BAR)
    rel, same = [], 0
    for seed in range(50):
        hb, s2, pm, _ = make_instance(K=K0, M=M0, L=L0, seed=1000 + seed)
        sel = bisection_identify(hb, s2, pm, P, L0)
        ref, Phibar, status = ref_phase1(hb, sel.gamma_star, s2, pm, P.alpha, M0, L0)
        assert status == "optimal"
        rel.append(abs(sel.objective - ref) / ref)
        same += extract_subset(Phibar, L0, P.zero_threshold) == sel.subset
    worst = max(rel)
    ok = worst <= 1e-3 and same >= 45
    report(6, ok, f"max objective gap {worst:.2e} relative, subsets agree on {same}/50")
    assert ok


@pytest.mark.slow
def test_07_exhaustive_dominates():
    cfg = ExperimentConfig(K=K0, M=M0, L=L0, trials=50, delta_scale=0.5,
                           methods=("admm", "mes", "mrs"), master_seed=7)
    t0 = time.perf_counter()
    recs = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    g = {m: np.array([min(r.per_user_sinr) for r in recs if r.method == m])
         for m in ("admm", "mes", "mrs")}
    # the solutions sit near 1e12, so the 1e-3 band is read as relative
    worst = float(np.max((g["admm"] - g["mes"]) / g["admm"]))
    strict = [r.triggered_count for r in recs if r.method == "admm"]
    mean_admm, mean_mrs = g["admm"].mean(), g["mrs"].mean()
    ok = worst <= 1e-3 and mean_admm > mean_mrs and elapsed < 300
    report(7, ok, f"worst MES shortfall {max(worst, 0):.1e}, mean ADMM/MRS "
                  f"{mean_admm / mean_mrs:.3f}, {sum(c < M0 for c in strict)}/50 strict subsets, "
                  f"{elapsed:.0f} s")
    assert ok


def test_08_power_fixed_point():
    rng = np.random.default_rng(8)
    worst, feas_n, mism, skipped = 0.0, 0, 0, 0
    while feas_n < 1000:
        K = int(rng.integers(1, 7))
        b = rng.uniform(0.0, 0.5, (K, K)) + np.diag(rng.uniform(0.5, 2.0, K))
        s2 = rng.uniform(0.01, 1.0)
        C = (b.T / np.diag(b)[:, None]).copy()
        np.fill_diagonal(C, 0.0)
        rho = max(abs(np.linalg.eigvals(C))) if K > 1 else 0.0
        g = rng.uniform(0.05, 0.95) / rho if rho > 0 else rng.uniform(0.1, 10)
        pstar = np.linalg.solve(np.eye(K) - g * C, g * s2 / np.diag(b))
        pm = pstar * rng.uniform(1.0001, 3.0, K)
        p = power_min_fixed_point(g, b, s2, pm)
        feas_n += 1
        if p is None:
            worst = np.inf
            continue
        worst = max(worst, np.max(np.abs(p - pstar) / pstar))
    for _ in range(1000):
        K = int(rng.integers(2, 6))
        b = rng.uniform(0.0, 0.8, (K, K)) + np.diag(rng.uniform(0.3, 2.0, K))
        s2 = rng.uniform(0.01, 1.0)
        C = (b.T / np.diag(b)[:, None]).copy()
        np.fill_diagonal(C, 0.0)
        rho = max(abs(np.linalg.eigvals(C)))
        g = rng.uniform(0.2, 2.0) / rho
        pm = rng.uniform(0.1, 5.0, K)
        if abs(g * rho - 1) < 1e-9:
            skipped += 1
            continue
        if g * rho >= 1:
            expect = False
        else:
            pstar = np.linalg.solve(np.eye(K) - g * C, g * s2 / np.diag(b))
            margin = np.min(np.abs(pstar / pm - 1))
            if margin < 1e-9:
                skipped += 1
                continue
            expect = bool(np.all(pstar <= pm))
        mism += (power_min_fixed_point(g, b, s2, pm) is not None) != expect
    ok = worst <= 1e-8 and mism == 0
    report(8, ok, f"max relative power gap {worst:.1e}, {mism} feasibility mismatches in "
                  f"{1000 - skipped} decided cases")
    assert ok


def test_09_zero_forcing_relay():
    rng = np.random.default_rng(9)
    null = budget = chain = 0.0
    for _ in range(200):
        K = int(rng.integers(1, 5))
        N = K + int(rng.integers(0, 5))
        H, G = crandn(rng, N, K), crandn(rng, K, N)
        T = G @ zf_relay_beam(H, G) @ H
        null = max(null, np.abs(T - np.diag(np.diag(T))).max() / np.linalg.norm(T))
        p = rng.uniform(0.01, 1.0, K)
        sv2, s2, Pr = rng.uniform(0, 0.1), rng.uniform(0.01, 0.1), rng.uniform(0.1, 5)
        z = af_amplify_all(H, G, p, Pr, sv2)
        budget = max(budget, abs(relay_power(z, H, G, p, sv2) / Pr - 1))
        ref = af_signal_chain(H, G, p, z, sv2, s2)[0]
        chain = max(chain, np.max(np.abs(af_sinr_all(H, G, p, z, sv2, s2) / ref - 1)))
    ok = null <= 1e-8 and budget <= 1e-8 and chain <= 1e-6
    report(9, ok, f"nulling {null:.1e}, relay budget {budget:.1e}, signal chain {chain:.1e}")
    assert ok


@pytest.mark.slow
def test_10_module_count_trend():
    sc = Scenario(K=K0, M=M0, L=L0)
    scales = (0.5, 0.7, 0.9, 1.1)
    counts = {s: [] for s in scales}
    for trial in range(100):
        _, ch = draw_instance(sc, derive_seed(0, trial, "instance"))
        hb = effective_channels(ch.h, ch.g)
        for s in scales:
            sel = bisection_identify(hb, sc.sigma2, sc.p_max_array,
                                     AdmmParams(delta=s * DELTA_BAR), L0)
            counts[s].append(sel.triggered_count)
    means = [float(np.mean(counts[s])) for s in scales]
    ok = all(b >= a for a, b in zip(means, means[1:])) and means[-1] == M0
    report(10, ok, "mean module counts " + ", ".join(f"{m:.2f}" for m in means))
    assert ok


def test_11_byte_identical_csv(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("K = 2\nM = 3\nL = 2\ntrials = 3\ndelta_scale = 0.5\n"
                   "sweep_param = p_max_dbm\nsweep_values = 10, 20\n", encoding="utf-8")
    outs = []
    for i, workers in enumerate((1, 1, 2)):
        out = tmp_path / f"o{i}.csv"
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(out),
                         "--workers", str(workers)]) == 0
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1] == outs[2]
    report(11, ok, f"{len(outs)} runs, {len(outs[0])} bytes each")
    assert ok


def _gap(sinr, lo):
    """Relative shortfall of a certificate below the lower end."""
    return max(0.0, 1 - float(np.min(sinr)) / lo) if lo > 0 else 0.0


def _bisection_checks(hb, s2, pm, mask, L, eps, mode):
    """Widths and certificate gaps of every interval returned by the
    max-min solvers on one instance."""
    widths, gaps = [], []
    sol = alternate(hb, s2, pm, mask, eps=eps, eps_mode=mode, seed=0)
    widths += [hi - lo for lo, hi in sol.intervals]
    lo_last = sol.intervals[-1][0]
    gaps.append(_gap(sinr_all(sol.phi, sol.p, hb, s2), lo_last))
    return widths, gaps, sol


def _direct_and_relay_checks(ch, s2, pm, subset, L, eps, mode, sv2, s2_direct=None):
    widths, gaps = [], []
    s2d = s2 if s2_direct is None else s2_direct
    sol = no_irs_maxmin(ch.d_direct, s2d, pm, eps, mode)
    widths += [hi - lo for lo, hi in sol.intervals]
    lo = sol.intervals[0][0]
    assert lo > 0
    gaps.append(_gap(sinr_from_gains(direct_gains(ch.d_direct), sol.p, s2d), lo))
    H, G = af_channels(ch.h, ch.g, subset, L)
    af = af_maxmin_power(H, G, AfConfig(tuple(pm), sv2, s2, H.shape[0]), eps, mode)
    widths.append(af.interval[1] - af.interval[0])
    assert af.interval[0] > 0
    gaps.append(_gap(af_sinr_all(H, G, af.p, af.zeta, sv2, s2), af.interval[0]))
    return widths, gaps


def test_12_bisection_contract_representable_scale():
    # noise raised so the SINR levels are O(1e2) and a width of 1e-4 is
    # representable in double precision
    widths, gaps = [], []
    for seed in range(4):
        hb, _, pm, ch = make_instance(K=3, M=3, L=2, seed=seed)
        s2 = 1e-12 * 10 ** 10.5
        mask = np.ones(6, dtype=bool)
        w, g, _ = _bisection_checks(hb, s2, pm, mask, 2, 1e-4, "absolute")
        widths += w
        gaps += g
        # direct links are far weaker; give them their own noise for SINRs near 1e2
        s2d = pm[0] * np.min(np.abs(np.diag(ch.d_direct)) ** 2) / 1e2
        w, g = _direct_and_relay_checks(ch, s2 * 1e-2, pm, {0, 1, 2}, 2, 1e-4, "absolute", s2,
                                        s2_direct=s2d)
        widths += w
        gaps += g
    ok = max(widths) <= 1e-4 and max(gaps) <= 1e-6
    report(12, ok, f"moderate SINR scale: {len(widths)} intervals, max width {max(widths):.1e}, "
                   f"max certificate gap {max(gaps):.1e}")
    assert ok


def _default_scale_run(mode, eps):
    widths, gaps, rel, ulps = [], [], [], []
    for seed in range(2):
        hb, s2, pm, ch = make_instance(K=K0, M=M0, L=L0, seed=seed)
        w, g, sol = _bisection_checks(hb, s2, pm, None, L0, eps, mode)
        widths += w
        gaps += g
        rel += [(hi - lo) / max(1.0, lo) for lo, hi in sol.intervals]
        ulps += [(hi - lo) / np.spacing(lo) for lo, hi in sol.intervals if lo > 0]
        w, g = _direct_and_relay_checks(ch, s2, pm, set(range(M0)), L0, eps, mode, s2)
        widths += w
        gaps += g
    return widths, gaps, rel, ulps


def test_12_bisection_contract_default_scale_relative():
    widths, gaps, rel, _ = _default_scale_run("relative", 1e-4)
    ok = max(rel) <= 1e-4 and max(gaps) <= 1e-6
    report(12, ok, f"default scale, relative width: max {max(rel):.1e}, "
                   f"max certificate gap {max(gaps):.1e}")
    assert ok


@pytest.mark.xfail(strict=True, reason="SINR levels above about 5.5e11 have a float64 spacing "
                                       "above 1e-4, so an absolute width of 1e-4 cannot be represented")
def test_12_bisection_contract_default_scale_absolute():
    widths, gaps, _, ulps = _default_scale_run("absolute", 1e-4)
    ok = max(widths) <= 1e-4 and max(gaps) <= 1e-6
    report(12, ok, f"default scale, absolute width: max {max(widths):.1e} "
                   f"(at most {max(ulps):.0f} float spacing), max certificate gap {max(gaps):.1e}")
    assert ok
