"""Acceptance criteria 1-9.

Each criterion records one PASS/FAIL line (printed in the terminal summary).
Clauses that the reference runs do not meet are asserted at their stated
thresholds and marked xfail(strict=True): if a change makes them pass, the
suite flags it.
"""

import time

import numpy as np
import pytest

from fprinciple import experiment as ex
from fprinciple.grad import (
    LossKind,
    central_difference,
    empirical_dataset,
    fd_check,
    grad_output,
    max_relative_error,
    min_preactivation_margin,
)
from fprinciple.nnet import BumpFunction, NetworkSpec, TargetFunction, forward, init_theta
from fprinciple.spectral import BandMask, Grid, band_split, dft, dft_oracle, idft, total_energy

EPS = np.finfo(float).eps


def _runs_checkpoints(res):
    return len(res.record.checkpoints)


@pytest.fixture(scope="module")
def mse_run():
    t0 = time.perf_counter()
    res = ex.run(ex.load_preset("accept-mse"))
    res.elapsed = time.perf_counter() - t0
    return res


@pytest.fixture(scope="module")
def p2_run():
    cfg = ex.load_preset("accept-mse")
    cfg.loss = ex.LossConfig("power", 2.0)
    return ex.run(cfg)


@pytest.fixture(scope="module")
def p4_run():
    return ex.run(ex.load_preset("accept-p4"))


@pytest.fixture(scope="module")
def flow_run():
    cfg = ex.load_preset("smoke")
    cfg.flow.steps = 500
    cfg.flow.stride = 5
    return ex.run(cfg)


# -- 1: gradients ----------------------------------------------------------------

def _random_case(rng, activation):
    hidden = [int(rng.integers(1, 17))]
    if rng.random() < 0.5:
        hidden.append(int(rng.integers(1, 9)))
    spec = NetworkSpec([1] + hidden + [1], activation)
    chi = BumpFunction()
    target = TargetFunction("tone_sum", ((1.0, 1.0), (3.0, 1 / 3)))
    while True:
        theta = init_theta(spec, int(rng.integers(2**32)))
        x = rng.uniform(-3.4, 3.4, 12)
        if activation != "relu" or min_preactivation_margin(spec, theta, x) > 1e-3:
            return spec, theta, x, empirical_dataset(x, target, chi)


def test_criterion_1_gradients(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = {"tanh": 0.0, "sigmoid": 0.0, "relu": 0.0}
    acts = ["tanh", "sigmoid", "relu"]
    for case in range(50):
        act = acts[case % 3]
        spec, theta, x, data = _random_case(rng, act)
        loss = LossKind() if case % 2 else LossKind("power", 4.0)
        xi = x[:1]
        gh = grad_output(spec, theta, xi)[0]
        fh = central_difference(lambda th: forward(spec, th, xi)[0], theta)
        err = max(max_relative_error(gh, fh), fd_check(spec, theta, loss, data))
        worst[act] = max(worst[act], err)
    elapsed = time.perf_counter() - t0
    ok = worst["tanh"] < 1e-6 and worst["sigmoid"] < 1e-6 and worst["relu"] < 1e-5 and elapsed < 10
    verdict(1, ok, "max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f} s")
    assert ok


# -- 2: spectral identities ------------------------------------------------------------

def test_criterion_2_spectral(verdict):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    e_oracle = e_parseval = e_round = 0.0
    additive = True
    for M in (2, 4, 8, 16, 32, 64, 128, 256):
        for _ in range(4):
            a = rng.uniform(-10, 10)
            g = Grid(a, a + rng.uniform(0.5, 20), M)
            v = rng.standard_normal(M)
            s = dft(v, g)
            ref = dft_oracle(v, g)
            e_oracle = max(e_oracle, np.max(np.abs(s.coeffs - ref)) / np.max(np.abs(ref)))
            lhs = np.sum(v * v) * g.dx
            rhs = np.sum(np.abs(s.coeffs) ** 2) * g.dxi
            e_parseval = max(e_parseval, abs(lhs - rhs) / lhs)
            e_round = max(e_round, np.max(np.abs(idft(s).values - v)))
            q = np.abs(s.coeffs) ** 2
            tot = total_energy(q, g)
            for eta in rng.uniform(0, g.nyquist, 5):
                m = BandMask(g, eta)
                lm, lp = band_split(q, m)
                additive &= bool(np.all(m.low ^ m.high)) and abs(lm + lp - tot) <= 4 * EPS * tot
    elapsed = time.perf_counter() - t0
    ok = e_oracle < 1e-10 and e_parseval < 1e-10 and e_round < 1e-12 and additive and elapsed < 5
    verdict(2, ok, f"oracle {e_oracle:.1e}, parseval {e_parseval:.1e}, round trip {e_round:.1e}, "
                   f"bands partition {'yes' if additive else 'no'}; {elapsed:.2f} s")
    assert ok


# -- 3: dynamics identity -------------------------------------------------------------------

def test_criterion_3_dynamics_identity(flow_run, verdict):
    c = flow_run.summary["checks"]["dynamics_identity"]
    assert flow_run.config.network.widths == [1, 8, 1] and flow_run.record.checkpoints[-1].step == 500
    verdict(3, c["passed"], f"max rel err {c['max_rel_err']:.1e} over {_runs_checkpoints(flow_run)} checkpoints")
    assert c["passed"]


# -- 4: initial stage ---------------------------------------------------------------------

def test_criterion_4_decay_fit(mse_run, verdict):
    c = mse_run.summary["checks"]["initial_decay_fit"]
    verdict(4, c["passed"], f"eta-decay slope {c['slope']:.2f}, R2 {c['r2']:.2f}; run {mse_run.elapsed:.0f} s")
    assert c["passed"] and mse_run.elapsed < 120


@pytest.mark.xfail(strict=True, reason="first half-life is spent removing the initial DC offset; lowest peak not yet learned")
def test_criterion_4_peak_errors(mse_run, verdict):
    c = mse_run.summary["checks"]["initial_peak_errors"]
    verdict(4, c["passed"], f"peak errors at T2: lowest {c['lowest']:.2f} (<0.3), highest {c['highest']:.2f} (>0.8)")
    assert c["passed"]


# -- 5: dissipation --------------------------------------------------------------------

def test_criterion_5_dissipation(mse_run, verdict):
    c = mse_run.summary["checks"]["dissipation"]
    verdict(5, c["passed"], f"min fraction {c['min_fraction']:.3f} over eta above the largest tone")
    assert c["passed"]


# -- 6: intermediate stage -------------------------------------------------------------------

def test_criterion_6_eta_ordering(mse_run, verdict):
    c = mse_run.summary["checks"]["intermediate_eta_ordering"]
    verdict(6, c["passed"], f"Spearman(eta, ratio) {c['spearman']:.2f} over {len(mse_run.summary['windows'])} windows")
    assert c["passed"]


@pytest.mark.xfail(strict=True, reason="ratio at the 4th peak is not monotone in half-life window length")
def test_criterion_6_window_length(mse_run, verdict):
    c = mse_run.summary["checks"]["intermediate_window_length"]
    seq = ", ".join(f"{r:.1e}" for r in c["ratios"])
    verdict(6, c["passed"], f"ratio by increasing window length [{seq}]")
    assert c["passed"]


# -- 7: general loss --------------------------------------------------------------------------

def test_criterion_7_p2_matches_mse(mse_run, p2_run, verdict):
    a = mse_run.csv_text.splitlines()
    b = p2_run.csv_text.splitlines()
    header = a[0].split(",")
    assert len(a) == len(b) and a[0] == b[0]
    worst = 0.0
    same_text = True
    for la, lb in zip(a[1:], b[1:]):
        for col, x, y in zip(header, la.split(","), lb.split(",")):
            if col == "flags" or x == y:
                same_text &= x == y
                continue
            fx, fy = float(x), float(y)
            worst = max(worst, abs(fx - fy) / max(1.0, abs(fy)))
    ok = same_text and worst <= 1e-10
    verdict(7, ok, f"p=2 vs mse CSV max columnwise diff {worst:.1e}")
    assert ok


def test_criterion_7_p4_fit_and_ordering(p4_run, verdict):
    checks = p4_run.summary["checks"]
    fit, order = checks["initial_decay_fit"], checks["intermediate_eta_ordering"]
    ok = fit["passed"] and order["passed"]
    verdict(7, ok, f"p=4 decay slope {fit['slope']:.2f} R2 {fit['r2']:.2f}, Spearman {order['spearman']:.2f}")
    assert ok


@pytest.mark.xfail(strict=True, reason="p=4: same DC-offset first window as the mse run")
def test_criterion_7_p4_peak_errors(p4_run, verdict):
    c = p4_run.summary["checks"]["initial_peak_errors"]
    verdict(7, c["passed"], f"p=4 peak errors at T2: lowest {c['lowest']:.2f}, highest {c['highest']:.2f}")
    assert c["passed"]


@pytest.mark.xfail(strict=True, reason="the quadratic residual is not a Lyapunov quantity of the L^4 flow")
def test_criterion_7_p4_dissipation(p4_run, verdict):
    c = p4_run.summary["checks"]["dissipation"]
    verdict(7, c["passed"], f"p=4 dissipation min fraction {c['min_fraction']:.3f}")
    assert c["passed"]


@pytest.mark.xfail(strict=True, reason="p=4: ratio at the 4th peak is not monotone in window length")
def test_criterion_7_p4_window_length(p4_run, verdict):
    c = p4_run.summary["checks"]["intermediate_window_length"]
    seq = ", ".join(f"{r:.1e}" for r in c["ratios"])
    verdict(7, c["passed"], f"p=4 ratio by window length [{seq}]")
    assert c["passed"]


# -- 8: output-change split -------------------------------------------------------------------

def test_criterion_8_output_split(flow_run, mse_run, p2_run, p4_run, verdict):
    runs = {"smoke-500": flow_run, "accept-mse": mse_run, "accept-mse-p2": p2_run, "accept-p4": p4_run}
    worst = {k: r.summary["checks"]["output_change_split"]["max_abs_err"] for k, r in runs.items()}
    ok = all(v <= 1e-10 for v in worst.values())
    verdict(8, ok, "max |low^2+high^2-1| " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


# -- 9: determinism ---------------------------------------------------------------------------

def test_criterion_9_determinism(tmp_path, verdict):
    a = ex.run(ex.load_preset("smoke"), tmp_path / "a")
    b = ex.run(ex.load_preset("smoke"), tmp_path / "b")
    ok = (tmp_path / "a" / "diagnostics.csv").read_bytes() == (tmp_path / "b" / "diagnostics.csv").read_bytes()
    verdict(9, ok, f"smoke CSV byte-identical across two runs ({len(a.csv_text)} bytes)")
    assert ok and a.csv_text == b.csv_text
