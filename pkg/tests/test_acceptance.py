"""Acceptance criteria, each run at its stated tolerance.

Every test prints exactly one ``criterion N: PASS/FAIL`` line (also
repeated in the pytest terminal summary). The full-size Monte Carlo run
in criterion 10 is opt-in through ``WAGERLEARN_FULL_SCALE=1``.
"""

import math
import os
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import pytest

from wagerlearn.audit import (AuditConfig, ELFXForward, Verdict, forward_audit,
                              gd_expected_weight, gd_manipulation, mwu_manipulation,
                              wsu_forward_values)
from wagerlearn.bandit import estimator_moments_check, sampled_estimator_moments, tuned_values
from wagerlearn.core import ForecastPanel, RngStream
from wagerlearn.harness import (SimulationSpec, alternating_leader_panel, emit_outputs,
                                make_series, run_benchmark, run_monte_carlo)
from wagerlearn.harness.bench import Series, run_cells
from wagerlearn.harness.cli import bundled_path, main
from wagerlearn.harness.simulate import generate_panel
from wagerlearn.wagering import wswm_payoffs_array

SEED = 20240601
FULL_SCALE = os.environ.get("WAGERLEARN_FULL_SCALE") == "1"


# ---------------------------------------------------------------- helpers

@dataclass
class _RandomPanels:
    num_experts: int
    horizon: int

    def __call__(self, index, cell):
        g = cell.derive(0).generator()
        return ForecastPanel(g.random((self.horizon, self.num_experts)),
                             (g.random(self.horizon) < 0.5).astype(np.int8))


@dataclass
class _SpecPanels:
    spec: SimulationSpec

    def __call__(self, index, cell):
        return generate_panel(self.spec, cell.derive(0))


def _emit_bytes(ensembles, out_dir):
    paths = emit_outputs(ensembles, ["csv", "json"], out_dir, stem="acceptance", per_trace=True)
    return {p.name: p.read_bytes() for p in paths}


def _wsu_series(k, horizon):
    return [Series("WSU", "select", {"eta": math.sqrt(math.log(k) / horizon)})]


# ------------------------------------------------------------- workloads

def run_regret_bound(seed=SEED):
    """WSU SelectOne over random and simulated panels; 200 runs per cell."""
    out = {}
    horizon, runs = 267, 200
    for k in (5, 10, 25):
        rng = RngStream(seed, k)
        series = _wsu_series(k, horizon)
        ens = run_cells(_RandomPanels(k, horizon), runs, series, rng.derive(0))
        out[f"random/K{k}"] = ens["WSU/select"]
        spec = SimulationSpec(num_experts=k, horizon=horizon, repetitions=runs,
                              allow_remainder=True)
        ens = run_cells(_SpecPanels(spec), runs, series, rng.derive(1))
        out[f"montecarlo/K{k}"] = ens["WSU/select"]
    return out


def wsux_params(k=10, horizon=2000):
    return tuned_values(k, horizon)


def run_wsux(seed=SEED):
    k, horizon = 10, 2000
    eta, gamma = wsux_params(k, horizon)
    spec = SimulationSpec(num_experts=k, horizon=horizon, repetitions=100, allow_remainder=True)
    series = [Series("WSU-UX", "bandit", {"eta": eta, "gamma": gamma})]
    # run_series validates every pi_t and pi_tilde_t and raises on failure
    return run_monte_carlo(spec, series, RngStream(seed, 3), validate=True)


def run_alternating(seed=SEED):
    panel = alternating_leader_panel(500)
    series = [Series("ELF", "select"), Series("WSU", "select")]
    return run_benchmark([panel], series, 100, RngStream(seed, 9))


DESK_SPEC = SimulationSpec(num_experts=12, horizon=600, repetitions=20)
FULL_SPEC = SimulationSpec()


def run_monte_carlo_figure(spec=DESK_SPEC, seed=SEED):
    series = make_series(["WSU", "MWU", "Hedge", "ELF-X", "ELF"], ["select", "aggregate"])
    workers = min(os.cpu_count() or 1, 8)
    return run_monte_carlo(spec, series, RngStream(seed, 10), workers=workers)


_CACHE = {}


def cached(fn):
    if fn.__name__ not in _CACHE:
        _CACHE[fn.__name__] = fn()
    return _CACHE[fn.__name__]


# ------------------------------------------------------------ criteria

def test_criterion_01_wswm_properties(record_criterion):
    t0 = time.perf_counter()
    g = np.random.default_rng(SEED)
    worst_balance, min_payoff, n = 0.0, np.inf, 0
    for k in range(1, 11):
        m = 10_000
        reports = g.random((m, k))
        # wagers live on the simplex; about a tenth of them are zero
        wagers = g.random((m, k)) * (g.random((m, k)) > 0.1)
        wagers[wagers.sum(1) == 0, 0] = 1.0
        wagers /= wagers.sum(1, keepdims=True)
        outcome = g.integers(0, 2, m)
        pay = wswm_payoffs_array(reports, wagers, outcome)
        worst_balance = max(worst_balance, float(np.abs(pay.sum(1) - wagers.sum(1)).max()))
        min_payoff = min(min_payoff, float(pay.min()))
        n += m
    # incentive grid: expected payoff of expert i over reports, per belief
    report_grid = np.linspace(0.0, 1.0, 1001)
    beliefs = np.linspace(0.0, 1.0, 101)
    worst_gain = -np.inf
    for _ in range(50):
        k = int(g.integers(2, 11))
        i = int(g.integers(k))
        wagers = g.dirichlet(np.ones(k))
        base = g.random(k)
        prof = np.tile(base, (report_grid.size, 1))
        prof[:, i] = report_grid
        pay1 = wswm_payoffs_array(prof, wagers, 1)[:, i]
        pay0 = wswm_payoffs_array(prof, wagers, 0)[:, i]
        for b in beliefs:
            truthful = base.copy()
            truthful[i] = b
            tv = (b * wswm_payoffs_array(truthful, wagers, 1)[i]
                  + (1 - b) * wswm_payoffs_array(truthful, wagers, 0)[i])
            best = np.max(b * pay1 + (1 - b) * pay0)
            worst_gain = max(worst_gain, float(best - tv))
    elapsed = time.perf_counter() - t0
    ok = (worst_balance <= 1e-12 and min_payoff >= 0 and worst_gain <= 1e-12 and elapsed < 60)
    record_criterion(1, ok, f"{n} profiles, max |balance| {worst_balance:.2e}, min payoff "
                     f"{min_payoff:.3g}, max grid gain {worst_gain:.2e}, {elapsed:.1f}s")
    assert ok


def test_criterion_02_wsu_regret_bound(record_criterion):
    t0 = time.perf_counter()
    ens = cached(run_regret_bound)
    elapsed = time.perf_counter() - t0
    horizon = 267
    parts, ok = [], elapsed < 120
    for name, e in ens.items():
        k = int(name.split("K")[1])
        bound = 2 * math.sqrt(horizon * math.log(k))
        ok &= e.final_mean <= bound and e.num_traces == 200
        parts.append(f"{name} {e.final_mean:.2f}<={bound:.2f}")
    record_criterion(2, ok, "; ".join(parts) + f"; {elapsed:.1f}s")
    assert ok


def test_criterion_03_wsux_validity_and_regret(record_criterion):
    t0 = time.perf_counter()
    ens = cached(run_wsux)["WSU-UX/bandit"]
    elapsed = time.perf_counter() - t0
    k, horizon = 10, 2000
    bound = 2 * (4 * horizon) ** (2 / 3) * (k * math.log(k)) ** (1 / 3)
    eta, gamma = wsux_params(k, horizon)
    ok = (horizon >= k * math.log(k) and eta * k / gamma <= 0.5 and ens.num_traces == 100
          and ens.final_mean <= bound and elapsed < 180)
    record_criterion(3, ok, f"100 runs validated (eta={eta:.4g}, gamma={gamma:.4g}); mean regret "
                     f"{ens.final_mean:.2f} <= {bound:.1f}; {elapsed:.1f}s")
    assert ok


def test_criterion_04_estimator_moments(record_criterion):
    g = np.random.default_rng(SEED + 4)
    worst_first = worst_second = 0.0
    for _ in range(10_000):
        k = int(g.integers(2, 11))
        gamma = float(g.uniform(0.05, 0.5))
        tilde = (1 - gamma) * g.dirichlet(np.ones(k)) + gamma / k
        ell = g.random(k)
        first, second = estimator_moments_check(tilde, ell)
        worst_first = max(worst_first, float(np.abs(first - ell).max()))
        worst_second = max(worst_second, float(np.abs(second - ell ** 2 / tilde).max()))
    k = 10
    tilde = 0.8 * g.dirichlet(np.ones(k)) + 0.02
    ell = g.random(k)
    mean, se = sampled_estimator_moments(tilde, ell, 1_000_000, g)
    z = float(np.max(np.abs(mean - ell) / se))
    ok = worst_first <= 1e-12 and worst_second <= 1e-12 and z <= 3
    record_criterion(4, ok, f"exact first {worst_first:.1e}, second {worst_second:.1e}; "
                     f"sampled max |z| {z:.2f} over 1e6 draws")
    assert ok


def test_criterion_05_mwu_violation(record_criterion):
    rep = mwu_manipulation(3, 100, 0.5)
    d = rep.details["derivative_at_half"]
    ok = rep.verdict is Verdict.VIOLATION and rep.best_deviation_reports[0] > 0.5 and d > 0
    record_criterion(5, ok, f"{rep.verdict.value}, best report {rep.best_deviation_reports[0]}, "
                     f"gap {rep.gap:.3e}, derivative at 0.5 {d:.3e}")
    assert ok


def test_criterion_06_gd_violation(record_criterion):
    rep = gd_manipulation(pi=0.1, belief=0.6, eta=0.1)
    gain = float(gd_expected_weight(0.61, 0.1, 0.6, 0.1) - gd_expected_weight(0.6, 0.1, 0.6, 0.1))
    ok = rep.verdict is Verdict.VIOLATION and gain > 0 and rep.gap > 0
    record_criterion(6, ok, f"{rep.verdict.value}, E[w](0.61) - E[w](0.6) = {gain:.3e}, "
                     f"grid gap {rep.gap:.3e}")
    assert ok


def test_criterion_07_wsu_forward_values(record_criterion):
    etas = (0.1, 0.2, 0.3, 0.4, 0.5)
    # polynomials exactly as stated in the criterion
    def stated_truthful(eta):
        return 0.5 + 0.1125 * eta - 0.00188325 * eta ** 2

    def stated_deviation(eta):
        return 0.5 + 0.112499944 * eta - 0.0018719238 * eta ** 3

    err_t = max(abs(wsu_forward_values(e)[0] - stated_truthful(e)) for e in etas)
    err_d = max(abs(wsu_forward_values(e)[1] - stated_deviation(e)) for e in etas)
    t, d = wsu_forward_values(0.1)
    wins = d > t
    ok = err_t <= 1e-6 and err_d <= 1e-6 and wins
    record_criterion(7, ok, f"truthful max err {err_t:.2e}, deviation max err {err_d:.2e} "
                     f"(tol 1e-6); at eta=0.1 deviation {d:.12f} vs truthful {t:.12f} "
                     f"-> deviation wins: {wins}")
    assert ok


def test_criterion_08_elfx_forward_ic(record_criterion):
    g = np.random.default_rng(SEED + 8)
    config = AuditConfig()
    worst, verdicts = -np.inf, set()
    for _ in range(50):
        history = g.random((int(g.integers(0, 4)), 2))
        model = ELFXForward(history, 2)
        rep = forward_audit(model, g.random(2), g.random((2, 2)), int(g.integers(2)), config)
        worst = max(worst, rep.gap)
        verdicts.add(rep.verdict)
    ok = verdicts == {Verdict.IC_ON_GRID} and worst <= 1e-9
    record_criterion(8, ok, f"50 contexts, verdicts {sorted(v.value for v in verdicts)}, "
                     f"max gap {worst:.2e}")
    assert ok


def test_criterion_09_elf_linear_regret(record_criterion):
    ens = cached(run_alternating)
    elf, wsu = ens["ELF/select"], ens["WSU/select"]
    t = np.arange(1, elf.horizon + 1, dtype=np.float64)
    slope = float(np.polyfit(t, elf.mean, 1)[0])
    bound = 2 * math.sqrt(500 * math.log(2))
    ok = slope >= 0.1 and wsu.final_mean <= bound and elf.num_traces == 100
    record_criterion(9, ok, f"ELF slope {slope:.3f} (>= 0.1), final {elf.final_mean:.1f}; "
                     f"WSU final {wsu.final_mean:.2f} <= {bound:.2f}")
    assert ok


def _figure_checks(ens):
    aggr = {n: e.final_mean for n, e in ens.items() if n.endswith("/aggregate")}
    wsu = ens["WSU/select"]
    T = wsu.horizon
    q = int(0.75 * T)
    t = np.arange(q + 1, T + 1, dtype=np.float64)
    avg = wsu.mean[q:] / t
    slope = float(np.polyfit(t, avg, 1)[0])
    decreasing = slope < 0 and avg[-1] < avg[0]
    # the criterion names no mode, so both must satisfy it
    rel = {}
    for mode in ("select", "aggregate"):
        w = ens[f"WSU/{mode}"].mean
        rel[mode] = float(np.max(np.abs(ens[f"MWU/{mode}"].mean - w)) / abs(w[-1]))
    ok = all(v < 0 for v in aggr.values()) and decreasing and max(rel.values()) < 0.1
    agg_text = ", ".join(f"{n.split('/')[0]} {v:.2f}" for n, v in aggr.items())
    rel_text = ", ".join(f"{m} {v:.3f}" for m, v in rel.items())
    detail = (f"aggregate finals [{agg_text}]; WSU regret/t final-quartile slope {slope:.2e}; "
              f"max |WSU-MWU| / |WSU final| [{rel_text}] (< 0.1)")
    return ok, detail


def test_criterion_10_monte_carlo(record_criterion):
    t0 = time.perf_counter()
    ens = cached(run_monte_carlo_figure)
    ok, detail = _figure_checks(ens)
    elapsed = time.perf_counter() - t0
    record_criterion(10, ok, f"K=12 T=600 20 reps: {detail}; {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
@pytest.mark.skipif(not FULL_SCALE, reason="set WAGERLEARN_FULL_SCALE=1 for the full-size run")
def test_criterion_10_full_scale(record_criterion):
    t0 = time.perf_counter()
    ens = run_monte_carlo_figure(FULL_SPEC)
    elapsed = time.perf_counter() - t0
    ok, detail = _figure_checks(ens)
    ok &= elapsed < 1800
    record_criterion(10, ok, f"full K=50 T=2500 50 reps: {detail}; {elapsed:.0f}s (< 1800s)")
    assert ok


def test_criterion_11_bench_pipeline(record_criterion, tmp_path):
    panel = str(bundled_path("synthetic_panel.csv"))
    args = ["bench", "--panel", panel, "--algorithms", "WSU,MWU,Hedge,ELF-X,ELF,WSU-UX,EXP3",
            "--modes", "select,aggregate", "--group-size", "10", "--num-groups", "2",
            "--repetitions", "3", "--seed", "11", "--formats", "csv,json"]
    codes = [main(["ingest", "--normalized", panel])]
    outputs = []
    for run in ("a", "b"):
        codes.append(main(args + ["--output-dir", str(tmp_path / run)]))
        outputs.append({p.name: p.read_bytes() for p in (tmp_path / run).iterdir()})
    codes.append(main(args[:-4] + ["--seed", "12", "--formats", "csv",
                                   "--output-dir", str(tmp_path / "c")]))
    other = (tmp_path / "c" / "bench.csv").read_bytes()
    # exit code 0 means every per-round pi (and pi_tilde) passed simplex validation
    ok = (codes == [0, 0, 0, 0] and outputs[0] == outputs[1] and len(outputs[0]) == 13
          and other != outputs[0]["bench.csv"])
    record_criterion(11, ok, f"exit codes {codes}; {len(outputs[0])} files byte-identical "
                     f"across reruns: {outputs[0] == outputs[1]}; other seed differs: "
                     f"{other != outputs[0]['bench.csv']}")
    assert ok


def test_criterion_12_determinism(record_criterion, tmp_path):
    runs = [run_regret_bound, run_wsux, run_alternating, run_monte_carlo_figure]
    same = {}
    for fn in runs:
        first = _emit_bytes(cached(fn), tmp_path / fn.__name__ / "1")
        second = _emit_bytes(fn(), tmp_path / fn.__name__ / "2")
        same[fn.__name__] = first == second
    ok = all(same.values())
    record_criterion(12, ok, ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}"
                                       for k, v in same.items()))
    assert ok
