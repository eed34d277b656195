"""Frequency-resolved diagnostics of a training trajectory.

For a checkpoint (theta, dtheta/dt) the hypothesis h = h^(H) chi and its
time derivative dh/dt = grad_theta h . dtheta/dt are sampled on the grid.
By linearity of the transform, d h_hat/dt is the transform of dh/dt, so

    dq/dt(xi) = 2 Re[ d h_hat/dt(xi) * conj(h_hat(xi) - f_hat(xi)) ]

equals (grad_theta q) . dtheta/dt without forming one transform per
parameter.  Band sums of q and dq/dt give L^-_eta, L^+_eta and their rates.
The same is done for the density-weighted fields h sqrt(rho), f sqrt(rho)
when the run uses a density rather than an empirical sample.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .flow import TrajectoryRecord, half_life_window_indices
from .grad import grad_output
from .nnet import BumpFunction, NetworkSpec, PopulationDensity, TargetFunction, forward_tangent
from .spectral import BandMask, Grid, Spectrum, band_split, dft, japanese_bracket, residual_energy

GRAD_GUARD = 1e-12
PEAK_THRESHOLD = 0.05


def detect_peaks(fhat: Spectrum, threshold: float = PEAK_THRESHOLD) -> list[int]:
    """Frequency indices k > 0 where |f_hat| is a strict local maximum above
    `threshold` times its largest positive-frequency value."""
    grid = fhat.grid
    half = grid.M // 2
    mag = np.abs(fhat.coeffs[half:])  # k = 0 .. M/2-1
    top = mag[1:].max() if mag.size > 1 else 0.0
    if top == 0:
        return []
    peaks = []
    for k in range(1, mag.size - 1):
        if mag[k] > mag[k - 1] and mag[k] >= mag[k + 1] and mag[k] >= threshold * top:
            peaks.append(k)
    return peaks


def peak_relative_errors(hhat: Spectrum, fhat: Spectrum, peaks) -> list[float]:
    out = []
    for k in peaks:
        f = fhat.at(k)
        if abs(f) == 0:
            raise ValueError(f"|f_hat| vanishes at requested peak k={k}")
        out.append(float(abs(hhat.at(k) - f) / abs(f)))
    return out


def default_eta_sweep(grid: Grid, peaks: list[int], n_log: int = 8) -> list[float]:
    """Peak frequencies plus log-spaced values from 2 dxi to nyquist/2."""
    etas = [k * grid.dxi for k in peaks]
    if n_log > 0:
        etas += list(np.geomspace(2 * grid.dxi, grid.nyquist / 2, n_log))
    return sorted(set(float(e) for e in etas))


@dataclass
class Probe:
    """Fixed discretization shared by all checkpoints of a run."""

    spec: NetworkSpec
    grid: Grid
    chi: BumpFunction
    target: TargetFunction
    etas: list[float]
    density: PopulationDensity | None = None
    peaks: list[int] | None = None

    def __post_init__(self):
        g = self.grid
        x = g.nodes
        self.x = x
        self.chi_x = self.chi(x)
        self.f = self.target(x) * self.chi_x
        self.fhat = dft(self.f, g)
        if self.peaks is None:
            self.peaks = detect_peaks(self.fhat)
        if self.density is not None:
            rho = self.density.normalized_on(x, g.dx)
            self.sqrt_rho = np.sqrt(rho(x))
            self.frho_hat = dft(self.f * self.sqrt_rho, g)
        else:
            self.sqrt_rho = None
            self.frho_hat = None
        self.masks = [BandMask(g, e) for e in self.etas]

    def fields(self, theta, dtheta_dt):
        h, dh = forward_tangent(self.spec, theta, self.x, dtheta_dt)
        return h * self.chi_x, dh * self.chi_x

    def plain_residual(self, theta) -> float:
        """L(theta) = sum |h_hat - f_hat|^2 dxi on the grid."""
        h, _ = self.fields(theta, np.zeros(self.spec.size))
        q = residual_energy(dft(h, self.grid), self.fhat)
        return float(np.sum(q) * self.grid.dxi)


@dataclass
class DiagnosticsRow:
    step: int
    t: float
    eta: float
    L: float
    L_minus: float
    L_plus: float
    dL_dt: float
    dL_minus_dt: float
    dL_plus_dt: float
    ratio_low: float
    ratio_high: float
    out_ratio_low: float
    out_ratio_high: float
    L_rho: float = math.nan
    L_rho_minus: float = math.nan
    L_rho_plus: float = math.nan
    dL_rho_dt: float = math.nan
    dL_rho_minus_dt: float = math.nan
    dL_rho_plus_dt: float = math.nan
    ratio_rho_low: float = math.nan
    ratio_rho_high: float = math.nan
    grad_norm_sq: float = math.nan
    peak_errors: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)


@dataclass
class CheckpointDiagnostics:
    step: int
    t: float
    L: float
    dL_dt: float
    L_rho: float
    dL_rho_dt: float
    grad_norm_sq: float
    rows: list[DiagnosticsRow]
    peak_errors: list[float]
    top_octave_fraction: float
    degenerate: bool


def _ratio(num: float, den: float) -> float:
    return abs(num) / abs(den) if den != 0 else math.nan


def _band_rates(q, dq, mask: BandMask):
    lm, lp = band_split(q, mask)
    rm, rp = band_split(dq, mask)
    return lm, lp, rm, rp


def checkpoint_diagnostics(probe: Probe, theta, dtheta_dt, grad=None, t: float = 0.0, step: int = 0) -> CheckpointDiagnostics:
    g = probe.grid
    theta = np.asarray(theta, dtype=float)
    dtheta_dt = np.asarray(dtheta_dt, dtype=float)
    h, dh = probe.fields(theta, dtheta_dt)
    hhat = dft(h, g)
    dhhat = dft(dh, g).coeffs
    res = hhat.coeffs - probe.fhat.coeffs
    q = res.real ** 2 + res.imag ** 2
    dq = 2.0 * (dhhat * np.conj(res)).real
    L = float(np.sum(q) * g.dxi)
    dL = float(np.sum(dq) * g.dxi)
    dh2 = dhhat.real ** 2 + dhhat.imag ** 2

    if probe.sqrt_rho is not None:
        hr = dft(h * probe.sqrt_rho, g).coeffs
        dhr = dft(dh * probe.sqrt_rho, g).coeffs
        rr = hr - probe.frho_hat.coeffs
        qr = rr.real ** 2 + rr.imag ** 2
        dqr = 2.0 * (dhr * np.conj(rr)).real
        L_rho = float(np.sum(qr) * g.dxi)
        dL_rho = float(np.sum(dqr) * g.dxi)
    else:
        qr = dqr = None
        L_rho = dL_rho = math.nan

    gn2 = float(np.dot(grad, grad)) if grad is not None else math.nan
    base_flags = []
    degenerate = grad is not None and math.sqrt(gn2) <= GRAD_GUARD
    if degenerate:
        base_flags.append("degenerate_gradient")
    peak_err = peak_relative_errors(hhat, probe.fhat, probe.peaks)
    top = float(np.sum(q[np.abs(g.xi) > g.nyquist / 2])) / float(np.sum(q)) if np.sum(q) > 0 else 0.0

    rows = []
    for mask in probe.masks:
        flags = list(base_flags)
        lm, lp, rm, rp = _band_rates(q, dq, mask)
        olo, ohi = band_split(dh2, mask)
        onorm = olo + ohi
        if onorm <= 0:
            flags.append("zero_output_change")
            out_lo = out_hi = math.nan
        else:
            out_lo, out_hi = math.sqrt(olo / onorm), math.sqrt(ohi / onorm)
        row = DiagnosticsRow(
            step, t, mask.eta, lm + lp, lm, lp, dL, rm, rp, _ratio(rm, dL), _ratio(rp, dL), out_lo, out_hi,
            grad_norm_sq=gn2, peak_errors=peak_err, flags=flags,
        )
        if qr is not None:
            a, b, c, d = _band_rates(qr, dqr, mask)
            row.L_rho, row.L_rho_minus, row.L_rho_plus = a + b, a, b
            row.dL_rho_dt, row.dL_rho_minus_dt, row.dL_rho_plus_dt = dL_rho, c, d
            row.ratio_rho_low, row.ratio_rho_high = _ratio(c, dL_rho), _ratio(d, dL_rho)
        rows.append(row)
    return CheckpointDiagnostics(step, t, L, dL, L_rho, dL_rho, gn2, rows, peak_err, top, degenerate)


def trajectory_diagnostics(probe: Probe, record: TrajectoryRecord) -> list[CheckpointDiagnostics]:
    return [
        checkpoint_diagnostics(probe, c.theta, c.dtheta_dt, c.grad, c.t, c.step)
        for c in record.checkpoints
    ]


# ---------------------------------------------------------------------------
# loss-rate and output-change ratios at one checkpoint


def loss_rate_ratios(probe: Probe, theta, dtheta_dt, grad=None) -> list[tuple[float, float]]:
    """Per eta: (|dL^-/dt| / |dL/dt|, |dL^+/dt| / |dL/dt|), density-weighted when the probe has a density."""
    cd = checkpoint_diagnostics(probe, theta, dtheta_dt, grad)
    if cd.degenerate:
        raise ValueError("gradient below guard; ratios are degenerate")
    if probe.density is not None:
        return [(r.ratio_rho_low, r.ratio_rho_high) for r in cd.rows]
    return [(r.ratio_low, r.ratio_high) for r in cd.rows]


def output_change_ratios(probe: Probe, theta, dtheta_dt) -> list[tuple[float, float]]:
    """Per eta: band fractions of ||d h_hat/dt||_2 over B_eta and its complement."""
    cd = checkpoint_diagnostics(probe, theta, dtheta_dt)
    if any("zero_output_change" in r.flags for r in cd.rows):
        raise ValueError("d h_hat/dt vanishes; output-change ratios are degenerate")
    return [(r.out_ratio_low, r.out_ratio_high) for r in cd.rows]


# ---------------------------------------------------------------------------
# windows


@dataclass(frozen=True)
class WindowDiagnostics:
    T1: float
    T2: float
    eta: float
    integrated_numerator: float
    integrated_denominator: float
    integrated_ratio: float
    difference_ratio: float
    half_life: bool


def half_life_windows_from(diags: list[CheckpointDiagnostics]) -> list[tuple[int, int]]:
    return half_life_window_indices([d.L for d in diags])


def window_ratios(
    diags: list[CheckpointDiagnostics], window: tuple[int, int], eta_index: int, relax: float | None = None
) -> WindowDiagnostics:
    """Time-integrated and difference-quotient high-band ratios over checkpoints i..j.

    The window must satisfy L(T2) <= L(T1)/2, or L(T2) <= relax * L(T1) when
    `relax` is given.
    """
    i, j = window
    if j - i < 1 or i < 0 or j >= len(diags):
        raise ValueError("window must span at least two checkpoints")
    seg = diags[i:j + 1]
    L1, L2 = seg[0].L, seg[-1].L
    delta = 0.5 if relax is None else relax
    if not L2 <= delta * L1 or L1 == L2:
        raise ValueError(f"window does not satisfy L(T2) <= {delta} L(T1)")
    t = np.array([d.t for d in seg])
    num = np.abs([d.rows[eta_index].dL_plus_dt for d in seg])
    den = np.abs([d.dL_dt for d in seg])
    inum = float(np.trapezoid(num, t))
    iden = float(np.trapezoid(den, t))
    lp1, lp2 = seg[0].rows[eta_index].L_plus, seg[-1].rows[eta_index].L_plus
    return WindowDiagnostics(
        float(t[0]), float(t[-1]), seg[0].rows[eta_index].eta, inum, iden,
        inum / iden if iden > 0 else math.nan,
        abs(lp1 - lp2) / abs(L1 - L2),
        relax is None,
    )


# ---------------------------------------------------------------------------
# eta decay fit and dissipation


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r2: float
    n: int


def eta_decay_fit(etas, ratios) -> DecayFit | None:
    """Least squares of log(ratio) on log(eta); None with fewer than 3 positive ratios."""
    etas = np.asarray(etas, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    ok = (ratios > 0) & (etas > 0) & np.isfinite(ratios)
    if ok.sum() < 3:
        return None
    lx, ly = np.log(etas[ok]), np.log(ratios[ok])
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ np.array([slope, intercept])
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(slope), float(intercept), r2, int(ok.sum()))


def dissipation_check(diags: list[CheckpointDiagnostics], eta_index: int, rel_tol: float = 1e-8) -> float:
    """Fraction of checkpoints where the low-band loss rate is <= rel_tol * |dL/dt|.

    Uses the density-weighted rate when available.
    """
    if not diags:
        return math.nan
    hits = 0
    for d in diags:
        r = d.rows[eta_index]
        if math.isnan(r.dL_rho_minus_dt):
            rate, scale = r.dL_minus_dt, d.dL_dt
        else:
            rate, scale = r.dL_rho_minus_dt, d.dL_rho_dt
        hits += rate <= rel_tol * abs(scale)
    return hits / len(diags)


# ---------------------------------------------------------------------------
# weighted norms


def weighted_gradient_norms(probe: Probe, theta, m_values) -> dict[int, tuple[float, float]]:
    """Per m: (|| <xi>^m grad_theta h_hat ||_{L^2}, || <xi>^m |grad_theta q| ||_{L^1}).

    Transforms each parameter's gradient field separately, O(N M log M).
    """
    g = probe.grid
    J = grad_output(probe.spec, theta, probe.x, probe.chi)  # (M, N)
    ghat = dft(J.T, g).coeffs  # (N, M), one transform per parameter
    hvals, _ = probe.fields(theta, np.zeros(probe.spec.size))
    res = dft(hvals, g).coeffs - probe.fhat.coeffs
    gq = 2.0 * (ghat * np.conj(res)).real  # (N, M)
    mag_h = np.sqrt(np.sum(np.abs(ghat) ** 2, axis=0))
    mag_q = np.sqrt(np.sum(gq ** 2, axis=0))
    br = japanese_bracket(g.xi)
    out = {}
    for m in m_values:
        w = br ** m
        l2 = math.sqrt(float(np.sum((w * mag_h) ** 2) * g.dxi))
        l1 = float(np.sum(w * mag_q) * g.dxi)
        out[int(m)] = (l2, l1)
    return out


# ---------------------------------------------------------------------------
# CSV

BASE_COLUMNS = [
    "step", "t", "eta", "L", "L_minus", "L_plus", "dL_dt", "dL_minus_dt", "dL_plus_dt",
    "ratio_low", "ratio_high", "out_ratio_low", "out_ratio_high",
    "L_rho", "L_rho_minus", "L_rho_plus", "dL_rho_dt", "dL_rho_minus_dt", "dL_rho_plus_dt",
    "ratio_rho_low", "ratio_rho_high", "grad_norm_sq",
]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def diagnostics_csv(diags: list[CheckpointDiagnostics], n_peaks: int, extra: dict | None = None) -> str:
    """One row per (checkpoint, eta); `extra` adds constant leading columns."""
    extra = extra or {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(extra) + BASE_COLUMNS + [f"peak_err_{i + 1}" for i in range(n_peaks)] + ["flags"]
    w.writerow(header)
    for d in diags:
        for r in d.rows:
            vals = [str(v) for v in extra.values()]
            vals += [_fmt(getattr(r, c)) for c in BASE_COLUMNS]
            vals += [_fmt(e) for e in r.peak_errors]
            vals.append(";".join(r.flags))
            w.writerow(vals)
    return buf.getvalue()


def read_diagnostics_csv(text: str) -> tuple[list[str], list[dict]]:
    rows = list(csv.DictReader(io.StringIO(text)))
    header = next(csv.reader(io.StringIO(text)))
    return header, rows
