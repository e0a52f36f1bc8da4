"""One test per acceptance criterion; each records a pass/fail line for the terminal summary."""
import math
import os
import time

import numpy as np
import pytest

from conftest import record
from diqkd.bounds import NetConfig, compute_bound_curve, default_workers
from diqkd.entropy import delta_trace_norm, refined_pinsker, relative_entropy, pinching
from diqkd.io import load_experiments
from diqkd.keyrate import critical_chsh, evaluate_experiments, optimize_basis_bias
from diqkd.protocol import ProtocolConfig, asymptotic_prediction, run_protocol
from diqkd.quantum import TSIRELSON, ChannelPoint, depolarizing_qber, singlet, werner_state
from diqkd.sdp import build_chsh_decomposition, chsh_norm_bound, solve_weighted_delta_sdp

import oracles

RUNTIME_LIMIT = 30 * 60


@pytest.fixture(scope="module")
def fresh_curves():
    """Recompute the two headline curves with default nets, timing each."""
    out = {}
    for lam in (0.5, 1.0):
        start = time.perf_counter()
        curve = compute_bound_curve(lam, NetConfig(), workers=default_workers())
        out[lam] = (curve, time.perf_counter() - start)
    return out


class _OneCurve:
    """Minimal library wrapper so the key-rate functions use a fresh curve."""

    def __init__(self, curve):
        self.curve_ = curve

    def bound(self, lam, s):
        return float(self.curve_(s))


def test_criterion_1_critical_chsh(fresh_curves):
    results = {lam: (critical_chsh(lam, _OneCurve(c)), t) for lam, (c, t) in fresh_curves.items()}
    targets = {0.5: 2.362, 1.0: 2.423}
    ok = all(abs(results[l][0] - targets[l]) <= 0.01 for l in targets)
    runtime = sum(t for _, t in results.values())
    detail = ", ".join(f"S*(lambda={l:g})={results[l][0]:.4f} (target {targets[l]} +- 0.01)" for l in targets)
    record(1, ok and runtime <= RUNTIME_LIMIT, f"{detail}; runtime {runtime:.0f}s for both curves (limit {RUNTIME_LIMIT}s)")
    assert ok and runtime <= RUNTIME_LIMIT


def test_criterion_2_critical_qber(fresh_curves):
    q = {lam: depolarizing_qber(critical_chsh(lam, _OneCurve(c))) for lam, (c, _) in fresh_curves.items()}
    targets = {0.5: 0.082, 1.0: 0.071}
    ok = all(abs(q[l] - targets[l]) <= 0.003 for l in targets)
    record(2, ok, ", ".join(f"Q*(lambda={l:g})={q[l]:.4f} (target {targets[l]} +- 0.003)" for l in targets))
    assert ok


def test_criterion_3_endpoints(fresh_curves, library):
    at_two = [float(c(2.0)) for c, _ in fresh_curves.values()] + [library.bound(l, 2.0) for l in library.lambdas]
    top = float(fresh_curves[0.5][0](TSIRELSON))
    ok = max(abs(v) for v in at_two) <= 1e-4 and 0.99 <= top <= 1.0
    record(3, ok, f"max |C*(2)| = {max(abs(v) for v in at_two):.2e} over {len(at_two)} curves; C*(2 sqrt 2, 1/2) = {top:.5f}")
    assert ok


def test_criterion_4_single_basis_consistency(fresh_curves):
    curve = fresh_curves[1.0][0]
    s_vals = np.round(np.arange(2.1, 2.80001, 0.1), 10)
    err = max(abs(float(curve(s)) - oracles.analytic_single_basis(s)) for s in s_vals)
    record(4, err <= 0.01, f"max deviation from the analytic single-basis curve {err:.4f} bits (tolerance 0.01)")
    assert err <= 0.01


def test_criterion_5_soundness(library):
    rng = np.random.default_rng(5)
    lams = library.lambdas
    rhos, phis = oracles.random_config_batch(10_000, rng)
    worst, violating = np.inf, 0
    for lam in lams:
        ent, s = oracles.batch_entropy_and_chsh(rhos, phis, lam)
        bound = np.array([library.bound(lam, min(max(v, 2.0), TSIRELSON)) for v in s])
        margin = ent - bound
        worst = min(worst, margin.min())
        violating = max(violating, int((s > 2).sum()))
    ok = worst >= -1e-6
    record(5, ok, f"10^4 configurations x {len(lams)} lambdas ({violating} with S > 2): min(entropy - bound) = {worst:.3e}")
    assert ok


def test_criterion_6_near_tightness(library):
    rng = np.random.default_rng(6)
    gaps = {}
    for s in (2.2, 2.4, 2.6):
        gaps[s] = oracles.local_minimum(s, 0.5, 40, rng) - library.bound(0.5, s)
    ok = all(0 - 1e-6 <= g <= 0.05 for g in gaps.values())
    record(6, ok, "best two-qubit entropy minus bound: " + ", ".join(f"S={s}: {g:.4f}" for s, g in gaps.items())
           + " (tolerance 0.05 bits)")
    assert ok


def test_criterion_7_refined_pinsker():
    rng = np.random.default_rng(7)
    worst = np.inf
    for _ in range(10_000):
        rho = oracles.random_state(rng, rank=int(rng.integers(1, 5)))
        phi = rng.uniform(0, math.pi / 2)
        d = relative_entropy(rho, pinching(rho, phi))
        worst = min(worst, d - float(refined_pinsker(min(delta_trace_norm(rho, phi), 1.0))))
    plus = np.kron(np.array([[1, 1], [1, 1]]) / 2, np.diag([1.0, 0.0]))
    witness = abs(relative_entropy(plus, pinching(plus, 0.0)) - float(refined_pinsker(delta_trace_norm(plus, 0.0))))
    ok = worst >= -1e-9 and witness <= 1e-9
    record(7, ok, f"min D - g(delta) over 10^4 samples = {worst:.3e}; witness |D - g| = {witness:.1e}")
    assert ok


def _feasible_states(phi, b, lam, s, rng, n):
    op = build_chsh_decomposition(phi).operator(b)
    top = chsh_norm_bound(phi, b)
    anchors = [solve_weighted_delta_sdp(phi, b, lam, min(s + d, top - 1e-6), sense="ge").rho for d in (0.01, 0.05, 0.15)]
    out = []
    while len(out) < n:
        t = rng.uniform(0, 0.3) ** 2
        rho = (1 - t) * anchors[len(out) % 3] + t * oracles.random_state(rng)
        if np.real(np.trace(rho @ op)) >= s:
            out.append(rho)
    return out


def test_criterion_8_sdp_certification(library):
    max_gap = max(p.gap for lam in library.lambdas for p in library.curve(lam).points)
    rng = np.random.default_rng(8)
    worst = np.inf
    instances = [(0.9, 0.6, 0.5, 2.3), (1.3, 0.8, 0.8, 2.6), (1.5, 0.7, 0.5, 2.7)]
    for phi, om, lam, s in instances:
        b = (math.cos(om), math.sin(om))
        sol = solve_weighted_delta_sdp(phi, b, lam, s, sense="ge")
        for rho in _feasible_states(phi, b, lam, s, rng, 1000):
            val = lam * delta_trace_norm(rho, 0.0) + (1 - lam) * delta_trace_norm(rho, phi)
            worst = min(worst, val - sol.dual_value)
    ok = max_gap <= 1e-6 and worst >= -1e-9
    record(8, ok, f"largest stored duality gap {max_gap:.1e}; min(objective - dual) over 3 x 10^3 states = {worst:.2e}")
    assert ok


def test_criterion_9_basis_bias_switch(library):
    low = optimize_basis_bias(ChannelPoint.depolarizing(2.3), library=library).best_lambda
    high = optimize_basis_bias(ChannelPoint.depolarizing(2.75), library=library).best_lambda
    ok = low == 0.5 and high == 1.0
    record(9, ok, f"best lambda {low:g} at S=2.3, {high:g} at S=2.75")
    assert ok


def test_criterion_10_hull_properties(library):
    from diqkd.bounds import qubit_bound_at

    grid = np.linspace(2.0, TSIRELSON, 2001)
    worst_inc, worst_conv = 0.0, 0.0
    for lam in library.lambdas:
        v = library.curve(lam)(grid)
        worst_inc = min(worst_inc, np.diff(v).min())
        worst_conv = min(worst_conv, np.diff(v, 2).min())
    cfg = NetConfig()
    drops = []
    for s in (2.3, 2.6):
        coarse = qubit_bound_at(s, 0.5, cfg, adaptive=False).t_star
        fine = qubit_bound_at(s, 0.5, cfg.refined(), adaptive=False).t_star
        drops.append(coarse - fine)
    ok = worst_inc >= -1e-12 and worst_conv >= -1e-9 and max(drops) <= 1e-12
    record(10, ok, f"min increment {worst_inc:.1e}, min second difference {worst_conv:.1e}, "
                   f"largest drop under refinement {max(drops):.1e}")
    assert ok


def test_criterion_11_simulator(library):
    cfg = ProtocolConfig(n=200_000, p=0.5, q=0.95, state=singlet(), s_tol=2.7, seed=11)
    res = run_protocol(cfg, library)
    pred = asymptotic_prediction(cfg, library)
    rel = abs(res.empirical_rate - pred) / pred
    runs = 100
    aborted = sum(run_protocol(ProtocolConfig(n=200_000, p=0.5, q=0.95, state=werner_state(0.7), s_tol=2.7,
                                              seed=k), library).aborted for k in range(runs))
    ok = rel <= 0.1 and not res.aborted and aborted / runs >= 0.99
    record(11, ok, f"singlet rate {res.empirical_rate:.4f} vs prediction {pred:.4f} ({100 * rel:.2f}% off); "
                   f"werner(0.7) aborted {aborted}/{runs}")
    assert ok


def test_criterion_12_experiment_table(library):
    path = os.environ.get("DIQKD_EXPERIMENTS")
    if not path:
        record(12, None, "set DIQKD_EXPERIMENTS to a CSV of the published (S, QBER) table")
        pytest.skip("no experiment table supplied")
    records = load_experiments(path)
    rates = {r.label.strip("() "): r.rate for r in evaluate_experiments(records, library=library)}
    expected = {"1": 0.004, "2": 0.118, "7": 0.057, "8": 0.019}
    zeros = [k for k in ("3", "4", "5", "6") if k in rates]
    ok = all(k in rates and abs(rates[k] - v) <= 0.005 for k, v in expected.items())
    ok = ok and all(rates[k] == 0.0 for k in zeros)
    record(12, ok, ", ".join(f"({k}) {rates.get(k, float('nan')):.3f} vs {v}" for k, v in expected.items()))
    assert ok
