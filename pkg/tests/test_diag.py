import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fprinciple import diag
from fprinciple.flow import FlowConfig, integrate
from fprinciple.grad import LossKind, empirical_dataset, grad_output, quadrature_dataset
from fprinciple.nnet import BumpFunction, NetworkSpec, PopulationDensity, TargetFunction, init_theta
from fprinciple.spectral import Grid, Spectrum, dft, japanese_bracket_norm

TARGET = TargetFunction.harmonics({1: 1.0, 3: 1 / 3, 10: 0.1})
CHI = BumpFunction()


def make_probe(widths=(1, 8, 1), M=256, etas=None, density=None):
    spec = NetworkSpec(widths, "tanh")
    g = Grid(-3.5, 3.5, M)
    base = diag.Probe(spec, g, CHI, TARGET, [], density)
    etas = etas if etas is not None else diag.default_eta_sweep(g, base.peaks)
    return diag.Probe(spec, g, CHI, TARGET, etas, density, base.peaks)


def short_run(widths=(1, 8, 1), steps=200, dt=0.02, stride=10, seed=0):
    spec = NetworkSpec(widths, "tanh")
    data = empirical_dataset(np.linspace(-3.14, 3.14, 120), TARGET, CHI)
    return integrate(spec, init_theta(spec, seed), LossKind(), data, FlowConfig(dt=dt, steps=steps, stride=stride))


# -- peaks ---------------------------------------------------------------------

def test_detect_peaks_three_tones():
    p = make_probe()
    # tones at j/(2 pi) cycles, bins of width 1/7
    expect = [round(j / (2 * math.pi) * 7) for j in (1, 3, 10)]
    # sidelobes of neighbouring tones may move a maximum by one bin
    assert len(p.peaks) == 3
    assert all(abs(a - b) <= 1 for a, b in zip(p.peaks, expect))


def test_detect_single_tone_exact_bin():
    g = Grid(-3.5, 3.5, 256)
    f = TargetFunction.harmonics({3: 1.0})(g.nodes) * CHI(g.nodes)
    assert diag.detect_peaks(dft(f, g)) == [3]


def test_peak_errors_identity_and_zero():
    p = make_probe()
    assert diag.peak_relative_errors(p.fhat, p.fhat, p.peaks) == [0.0] * 3
    zero = Spectrum(p.grid, np.zeros(p.grid.M, dtype=complex))
    np.testing.assert_allclose(diag.peak_relative_errors(zero, p.fhat, p.peaks), 1.0, rtol=1e-15)
    with pytest.raises(ValueError):
        diag.peak_relative_errors(zero, zero, [1])


def test_default_eta_sweep():
    g = Grid(-3.5, 3.5, 256)
    etas = diag.default_eta_sweep(g, [1, 4, 11])
    assert len(etas) == 11 and etas == sorted(etas)
    assert etas[0] == pytest.approx(g.dxi) and etas[-1] == pytest.approx(g.nyquist / 2)


# -- per-checkpoint quantities -------------------------------------------------

def test_nyquist_band_takes_everything(rng):
    p = make_probe(etas=[Grid(-3.5, 3.5, 256).nyquist])
    theta = rng.standard_normal(p.spec.size)
    g = grad_output(p.spec, theta, np.linspace(-3, 3, 40)).sum(axis=0)
    (lo, hi), = diag.loss_rate_ratios(p, theta, -g, g)
    assert lo == pytest.approx(1.0, rel=1e-12) and hi == 0.0


def test_residual_only_in_low_band_gives_zero_high_ratio(rng):
    p = make_probe(etas=[0.5])
    theta = rng.standard_normal(p.spec.size)
    h, _ = p.fields(theta, np.zeros(p.spec.size))
    c = dft(h, p.grid).coeffs.copy()
    mid = p.grid.M // 2
    c[mid + 2] += 0.3 - 0.1j
    c[mid - 2] += 0.3 + 0.1j
    p.fhat = Spectrum(p.grid, c)  # residual lives at |xi| = 2/7 only
    v = rng.standard_normal(p.spec.size)
    (lo, hi), = diag.loss_rate_ratios(p, theta, v)
    assert hi == 0.0 and lo == pytest.approx(1.0, rel=1e-12)


def test_degenerate_gradient_is_flagged(rng):
    p = make_probe()
    theta = rng.standard_normal(p.spec.size)
    z = np.zeros(p.spec.size)
    cd = diag.checkpoint_diagnostics(p, theta, z, z)
    assert cd.degenerate and all("degenerate_gradient" in r.flags for r in cd.rows)
    assert all("zero_output_change" in r.flags for r in cd.rows)
    with pytest.raises(ValueError):
        diag.loss_rate_ratios(p, theta, z, z)
    with pytest.raises(ValueError):
        diag.output_change_ratios(p, theta, z)


@given(st.integers(0, 10_000))
def test_band_rates_add_up_and_output_split_is_pythagorean(seed):
    rng = np.random.default_rng(seed)
    p = make_probe(M=128)
    theta, v = rng.standard_normal((2, p.spec.size))
    cd = diag.checkpoint_diagnostics(p, theta, v)
    for r in cd.rows:
        assert abs(r.dL_minus_dt + r.dL_plus_dt - r.dL_dt) <= 1e-10 * max(abs(r.dL_dt), 1e-300)
        assert abs(r.L_minus + r.L_plus - cd.L) <= 1e-12 * cd.L
        assert abs(r.out_ratio_low**2 + r.out_ratio_high**2 - 1.0) <= 1e-10
        assert r.ratio_low >= 0 and r.ratio_high >= 0


@given(st.integers(0, 10_000))
def test_band_quantities_monotone_in_eta(seed):
    rng = np.random.default_rng(seed)
    p = make_probe(M=128, etas=sorted(rng.uniform(0, 10, 6)))
    theta, v = rng.standard_normal((2, p.spec.size))
    rows = diag.checkpoint_diagnostics(p, theta, v).rows
    for a, b in zip(rows, rows[1:]):
        assert a.L_minus <= b.L_minus and a.L_plus >= b.L_plus
        assert a.out_ratio_high >= b.out_ratio_high


def test_single_parameter_low_tone_output_change(rng):
    p = make_probe(etas=[3.0])
    theta = rng.standard_normal(p.spec.size)
    v = np.zeros(p.spec.size)
    v[-1] = 1.0  # output bias: dh/dt = chi, a smooth bump concentrated near xi = 0
    (lo, hi), = diag.output_change_ratios(p, theta, v)
    assert lo > 0.9999 and hi < 0.01


def test_chain_rule_rate_matches_time_difference():
    spec = NetworkSpec((1, 8, 1), "tanh")
    data = empirical_dataset(np.linspace(-3.14, 3.14, 120), TARGET, CHI)
    dt = 1e-3
    rec = integrate(spec, init_theta(spec, 0), LossKind(), data, FlowConfig(dt=dt, steps=400, stride=1))
    p = make_probe(M=128)
    for n in (50, 200, 399):
        c = rec.checkpoints[n]
        cd = diag.checkpoint_diagnostics(p, c.theta, c.dtheta_dt, c.grad)
        fd = (p.plain_residual(rec.checkpoints[n + 1].theta) - p.plain_residual(rec.checkpoints[n - 1].theta)) / (2 * dt)
        assert cd.dL_dt == pytest.approx(fd, rel=0.02)


def test_quadrature_rate_identity():
    spec = NetworkSpec((1, 8, 1), "tanh")
    g = Grid(-3.5, 3.5, 128)
    rho = PopulationDensity("truncated_constant", chi=CHI)
    data = quadrature_dataset(g, TARGET, CHI, rho)
    rec = integrate(spec, init_theta(spec, 0), LossKind(), data, FlowConfig(dt=0.05, steps=100, stride=20))
    p = diag.Probe(spec, g, CHI, TARGET, [0.5, 2.0], rho)
    for c in rec.checkpoints:
        cd = diag.checkpoint_diagnostics(p, c.theta, c.dtheta_dt, c.grad)
        assert cd.L_rho == pytest.approx(c.loss, rel=1e-10)
        assert cd.dL_rho_dt == pytest.approx(-float(c.grad @ c.grad), rel=1e-10)


def test_dissipation_full_band_and_low_band_only():
    spec = NetworkSpec((1, 8, 1), "tanh")
    g = Grid(-3.5, 3.5, 128)
    rho = PopulationDensity("uniform_on")
    data = quadrature_dataset(g, TARGET, CHI, rho)
    rec = integrate(spec, init_theta(spec, 0), LossKind(), data, FlowConfig(dt=0.05, steps=100, stride=10))
    p = diag.Probe(spec, g, CHI, TARGET, [g.nyquist], rho)
    diags = diag.trajectory_diagnostics(p, rec)
    assert diag.dissipation_check(diags, 0) == 1.0
    for d in diags:
        r = d.rows[0]
        assert r.dL_rho_minus_dt == pytest.approx(d.dL_rho_dt, rel=1e-12) and r.dL_rho_minus_dt <= 0


def test_initial_stage_orderings():
    # early in a 1-40-40-1 run the highest tone trails the lowest
    spec = NetworkSpec((1, 40, 40, 1), "tanh")
    data = empirical_dataset(np.linspace(-3.14, 3.14, 300), TARGET, CHI)
    rec = integrate(spec, init_theta(spec, 0), LossKind(), data, FlowConfig(dt=0.01, steps=100, stride=100))
    p = diag.Probe(spec, Grid(-3.5, 3.5, 256), CHI, TARGET, [1 / 7, 11 / 7])
    start = diag.checkpoint_diagnostics(p, rec.checkpoints[0].theta, rec.checkpoints[0].dtheta_dt)
    assert start.rows[1].out_ratio_high < start.rows[0].out_ratio_high
    end = diag.checkpoint_diagnostics(p, rec.checkpoints[-1].theta, rec.checkpoints[-1].dtheta_dt)
    assert end.peak_errors[0] < end.peak_errors[-1]


# -- windows ---------------------------------------------------------------------

def _synthetic(Ls, Lplus, rates, plus_rates, t=None):
    t = t if t is not None else list(range(len(Ls)))
    out = []
    for k, (L, lp, r, pr) in enumerate(zip(Ls, Lplus, rates, plus_rates)):
        row = diag.DiagnosticsRow(k, t[k], 1.0, L, L - lp, lp, r, r - pr, pr, 0, 0, 0, 1)
        out.append(diag.CheckpointDiagnostics(k, t[k], L, r, math.nan, math.nan, 1.0, [row], [], 0.0, False))
    return out


def test_stationary_window_rejected():
    d = _synthetic([1.0, 1.0, 1.0], [0.2] * 3, [0.0] * 3, [0.0] * 3)
    with pytest.raises(ValueError):
        diag.window_ratios(d, (0, 2), 0)


def test_constant_high_band_gives_zero_ratio():
    d = _synthetic([1.0, 0.7, 0.4], [0.1] * 3, [-0.3, -0.3, -0.3], [0.0] * 3)
    w = diag.window_ratios(d, (0, 2), 0)
    assert w.difference_ratio == 0.0 and w.integrated_ratio == 0.0 and w.half_life


def test_window_integrals_trapezoid():
    d = _synthetic([1.0, 0.6, 0.4], [0.3, 0.2, 0.15], [-1.0, -0.5, -0.2], [-0.2, -0.1, -0.05], t=[0.0, 1.0, 3.0])
    w = diag.window_ratios(d, (0, 2), 0)
    assert w.integrated_denominator == pytest.approx(0.75 + 0.7)
    assert w.integrated_numerator == pytest.approx(0.15 + 0.15)
    assert w.difference_ratio == pytest.approx(0.15 / 0.6)


def test_window_relaxed_and_too_short():
    d = _synthetic([1.0, 0.7, 0.6], [0.1, 0.1, 0.05], [-1] * 3, [-0.1] * 3)
    with pytest.raises(ValueError):
        diag.window_ratios(d, (0, 2), 0)
    assert not diag.window_ratios(d, (0, 2), 0, relax=0.6).half_life
    with pytest.raises(ValueError):
        diag.window_ratios(d, (1, 1), 0)


# -- fits ----------------------------------------------------------------------

def test_fit_recovers_power_law():
    etas = np.geomspace(0.1, 10, 9)
    f = diag.eta_decay_fit(etas, 3.0 * etas**-2.0)
    assert abs(f.slope + 2.0) < 1e-9 and f.r2 == pytest.approx(1.0)


@given(st.floats(-6, 3), st.floats(0.01, 100))
def test_fit_planted_slopes(m, c):
    etas = np.geomspace(0.2, 20, 7)
    assert abs(diag.eta_decay_fit(etas, c * etas**m).slope - m) < 1e-9


def test_fit_constant_and_too_few():
    etas = [0.5, 1.0, 2.0, 4.0]
    assert abs(diag.eta_decay_fit(etas, [0.3] * 4).slope) < 1e-12
    assert diag.eta_decay_fit(etas, [0.3, 0.0, -1.0, 0.1]) is None


# -- weighted norms --------------------------------------------------------------

def test_weighted_norms_match_per_parameter_transform(rng):
    p = make_probe(M=64)
    theta = rng.standard_normal(p.spec.size)
    norms = diag.weighted_gradient_norms(p, theta, [0, 2])
    J = grad_output(p.spec, theta, p.x, p.chi)
    per = np.stack([dft(J[:, i], p.grid).coeffs for i in range(p.spec.size)], axis=-1)
    assert norms[0][0] == pytest.approx(japanese_bracket_norm(per, p.grid, 0), rel=1e-12)
    assert norms[2][0] == pytest.approx(japanese_bracket_norm(per, p.grid, 2), rel=1e-12)
    assert norms[2][1] >= norms[0][1] > 0


# -- CSV -------------------------------------------------------------------------

def test_csv_layout_and_roundtrip():
    rec = short_run(steps=40)
    p = make_probe()
    diags = diag.trajectory_diagnostics(p, rec)
    text = diag.diagnostics_csv(diags, len(p.peaks))
    header, rows = diag.read_diagnostics_csv(text)
    for col in ("t", "eta", "L", "L_minus", "L_plus", "dL_minus_dt", "dL_plus_dt", "ratio_low",
                "ratio_high", "out_ratio_low", "out_ratio_high", "peak_err_1", "peak_err_3", "flags"):
        assert col in header
    assert len(rows) == len(diags) * len(p.etas)
    first = diags[0].rows[0]
    assert float(rows[0]["L_plus"]) == first.L_plus  # 17 digits round-trip exactly
