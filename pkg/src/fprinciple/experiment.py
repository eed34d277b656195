"""Experiment configuration, presets and the run / sweep / replay / validate drivers."""

from __future__ import annotations

import copy
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import diag
from .flow import FlowConfig, TrajectoryRecord, integrate, load_trajectory, save_trajectory
from .grad import Dataset, LossKind, empirical_dataset, quadrature_dataset, sandwich_check
from .nnet import BumpFunction, NetworkSpec, PopulationDensity, TargetFunction, init_theta
from .spectral import Grid, write_spectrum

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """A config field failed validation; the message names the field."""


# ---------------------------------------------------------------------------
# config sections


@dataclass
class NetworkConfig:
    widths: list[int] = field(default_factory=lambda: [1, 8, 1])
    activation: str = "tanh"


@dataclass
class TargetConfig:
    kind: str = "tone_sum"
    tones: list[list[float]] = field(default_factory=lambda: [[1.0, 1.0], [3.0, 1 / 3], [10.0, 0.1]])
    J: int = 500
    table_x: list[float] = field(default_factory=list)
    table_y: list[float] = field(default_factory=list)


@dataclass
class SampleConfig:
    count: int = 300
    interval: list[float] = field(default_factory=lambda: [-3.14, 3.14])
    spacing: str = "grid"  # "grid" (evenly spaced, endpoints included) or "random"


@dataclass
class DensityConfig:
    kind: str = "empirical"  # empirical | uniform_on | truncated_constant
    interval: list[float] = field(default_factory=lambda: [-3.14, 3.14])


@dataclass
class LossConfig:
    kind: str = "mse"  # mse | power
    p: float = 2.0


@dataclass
class FlowSection:
    integrator: str = "gradient_flow_euler"
    dt: float = 0.01
    steps: int = 1000
    stride: int = 10
    trajectory_bound: float | None = None
    dense_steps: int = 0


@dataclass
class GridConfig:
    a: float = -3.5
    b: float = 3.5
    M: int = 1024
    inner: list[float] = field(default_factory=lambda: [-3.14, 3.14])
    profile: str = "smoothstep_quintic"
    pad: int = 1


@dataclass
class EtaConfig:
    values: list[float] | None = None
    n_log: int = 8


@dataclass
class ExperimentConfig:
    seed: int
    name: str = "experiment"
    network: NetworkConfig = field(default_factory=NetworkConfig)
    target: TargetConfig = field(default_factory=TargetConfig)
    samples: SampleConfig = field(default_factory=SampleConfig)
    density: DensityConfig = field(default_factory=DensityConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    flow: FlowSection = field(default_factory=FlowSection)
    grid: GridConfig = field(default_factory=GridConfig)
    eta: EtaConfig = field(default_factory=EtaConfig)
    out_dir: str | None = None
    preset: str | None = None
    schema_version: int = SCHEMA_VERSION

    # -- construction of library objects --------------------------------

    def network_spec(self) -> NetworkSpec:
        return NetworkSpec(tuple(self.network.widths), self.network.activation)

    def target_fn(self) -> TargetFunction:
        t = self.target
        return TargetFunction(
            t.kind, tuple(tuple(p) for p in t.tones), t.J, tuple(t.table_x), tuple(t.table_y)
        )

    def bump(self) -> BumpFunction:
        return BumpFunction(tuple(self.grid.inner), (self.grid.a, self.grid.b), self.grid.profile)

    def base_grid(self) -> Grid:
        return Grid(self.grid.a, self.grid.b, self.grid.M)

    def probe_grid(self) -> Grid:
        g = self.base_grid()
        return g if self.grid.pad == 1 else g.padded(self.grid.pad)

    def loss_kind(self) -> LossKind:
        return LossKind(self.loss.kind, self.loss.p)

    def flow_config(self) -> FlowConfig:
        f = self.flow
        return FlowConfig(f.integrator, f.dt, f.steps, f.stride, self.seed, f.trajectory_bound, f.dense_steps)

    def population_density(self) -> PopulationDensity | None:
        d = self.density
        if d.kind == "empirical":
            return None
        return PopulationDensity(d.kind, tuple(d.interval), self.bump() if d.kind == "truncated_constant" else None)

    def sample_points(self) -> np.ndarray:
        s = self.samples
        lo, hi = s.interval
        if s.spacing == "grid":
            return np.linspace(lo, hi, s.count)
        rng = np.random.default_rng([self.seed, 1])
        return np.sort(rng.uniform(lo, hi, s.count))

    def dataset(self) -> Dataset:
        density = self.population_density()
        if density is None:
            return empirical_dataset(self.sample_points(), self.target_fn(), self.bump())
        return quadrature_dataset(self.base_grid(), self.target_fn(), self.bump(), density)

    def validate(self) -> None:
        """Build every sub-object once; raise ConfigError naming the failing field."""
        checks = [
            ("network", self.network_spec),
            ("target", self.target_fn),
            ("grid", self.base_grid),
            ("grid.inner/grid.profile", self.bump),
            ("loss", self.loss_kind),
            ("flow", self.flow_config),
            ("density", self.population_density),
        ]
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed: a nonnegative integer seed is required")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {self.schema_version}")
        for name, build in checks:
            try:
                build()
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{name}: {exc}") from exc
        if self.samples.count < 1:
            raise ConfigError("samples.count: must be >= 1")
        if self.samples.spacing not in ("grid", "random"):
            raise ConfigError("samples.spacing: must be 'grid' or 'random'")
        if self.network.widths[0] != 1:
            raise ConfigError("network.widths: spectral diagnostics need input dimension 1")
        if self.grid.pad not in (1, 2, 4, 8):
            raise ConfigError("grid.pad: must be 1, 2, 4 or 8")
        if self.eta.values is not None and (not self.eta.values or min(self.eta.values) < 0):
            raise ConfigError("eta.values: need a nonempty list of nonnegative cutoffs")


_SECTIONS = {
    "network": NetworkConfig,
    "target": TargetConfig,
    "samples": SampleConfig,
    "density": DensityConfig,
    "loss": LossConfig,
    "flow": FlowSection,
    "grid": GridConfig,
    "eta": EtaConfig,
}


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = copy.deepcopy(data)
    if "seed" not in data:
        raise ConfigError("seed: missing (runs never draw entropy implicitly)")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level fields: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected a mapping")
            fields = {f.name for f in dataclasses.fields(cls)}
            bad = set(value) - fields
            if bad:
                raise ConfigError(f"{key}: unknown fields {sorted(bad)}")
            kwargs[key] = cls(**value)
        else:
            kwargs[key] = value
    return ExperimentConfig(**kwargs)


def emit_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# presets


def preset_names() -> list[str]:
    files = resources.files("fprinciple").joinpath("presets")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> ExperimentConfig:
    path = resources.files("fprinciple").joinpath("presets", f"{name}.json")
    if not path.is_file():
        raise ConfigError(f"preset: unknown preset {name!r}; available: {preset_names()}")
    data = json.loads(path.read_text())
    data.pop("preset_version", None)
    data.pop("description", None)
    cfg = config_from_dict(data)
    cfg.preset = name
    return cfg


def preset_info(name: str) -> dict:
    path = resources.files("fprinciple").joinpath("presets", f"{name}.json")
    data = json.loads(path.read_text())
    return {"name": name, "preset_version": data.get("preset_version"), "description": data.get("description", "")}


# ---------------------------------------------------------------------------
# assumptions


def validate_assumptions(cfg: ExperimentConfig) -> dict:
    """Per-assumption status report; never raises for a structurally valid config."""
    cfg.validate()
    spec = cfg.network_spec()
    chi = cfg.bump()
    target = cfg.target_fn()
    density = cfg.population_density()
    loss = cfg.loss_kind()

    k_act = spec.smoothness_order
    k = min(k_act, chi.regularity, target.regularity)
    k_tag = "inf" if math.isinf(k) else int(k)
    report = {}
    report["regularity"] = {
        "passed": k >= 1,
        "k": k_tag,
        "activation_k": "inf" if math.isinf(k_act) else int(k_act),
        "bump_profile": chi.profile,
        "bump_k": "inf" if math.isinf(chi.regularity) else int(chi.regularity),
        "target_k": "inf" if math.isinf(target.regularity) else int(target.regularity),
    }
    if density is None:
        report["bounded_density"] = {"passed": True, "status": "not_applicable", "detail": "empirical measure"}
    else:
        g = cfg.base_grid()
        rho = density.normalized_on(g.nodes, g.dx)
        report["bounded_density"] = {"passed": math.isfinite(rho.sup), "sup_rho": rho.sup}
    report["bounded_trajectory"] = {
        "passed": True,
        "bound": cfg.flow.trajectory_bound,
        "status": "armed" if cfg.flow.trajectory_bound is not None else "not_armed",
    }
    if loss.kind == "mse":
        if density is None:
            report["sqrt_density_regularity"] = {"passed": True, "status": "not_applicable", "detail": "empirical measure"}
        else:
            kr = density.sqrt_regularity
            report["sqrt_density_regularity"] = {
                "passed": kr >= k,
                "sqrt_rho_k": "inf" if math.isinf(kr) else int(kr),
            }
        report["general_loss"] = {"passed": True, "status": "not_applicable"}
    else:
        sw = sandwich_check(loss)
        report["general_loss"] = {
            "passed": sw.passed,
            "C": sw.constant,
            "r0": sw.r0,
            "detail": sw.message,
        }
        report["sqrt_density_regularity"] = {"passed": True, "status": "not_applicable"}
        if k != math.inf and k - 1 < 1:
            report["general_loss"]["notice"] = "k=1: no admissible decay exponent m under a general loss"
    report["all_passed"] = all(v["passed"] for v in report.values() if isinstance(v, dict))
    return report


# ---------------------------------------------------------------------------
# running


def make_probe(cfg: ExperimentConfig) -> diag.Probe:
    grid = cfg.probe_grid()
    spec = cfg.network_spec()
    probe = diag.Probe(spec, grid, cfg.bump(), cfg.target_fn(), [], cfg.population_density())
    etas = cfg.eta.values if cfg.eta.values is not None else diag.default_eta_sweep(grid, probe.peaks, cfg.eta.n_log)
    return diag.Probe(spec, grid, cfg.bump(), cfg.target_fn(), list(etas), cfg.population_density(), probe.peaks)


def largest_tone_frequency(cfg: ExperimentConfig, probe: diag.Probe) -> float:
    t = cfg.target
    if t.kind == "tone_sum":
        return max(abs(w) for w, _ in t.tones) / (2 * math.pi)
    if t.kind == "paper_multitone":
        return t.J / 10 / (2 * math.pi)
    return max(probe.peaks) * probe.grid.dxi if probe.peaks else 0.0


def _rate_ratio_high(row) -> float:
    return row.ratio_high if math.isnan(row.ratio_rho_high) else row.ratio_rho_high


def fig_peak_index(probe: diag.Probe) -> int | None:
    """Index into probe.etas of the 4th detected peak, or the highest peak if fewer exist."""
    if not probe.peaks:
        return None
    k = probe.peaks[min(3, len(probe.peaks) - 1)]
    xi = k * probe.grid.dxi
    return int(np.argmin(np.abs(np.asarray(probe.etas) - xi)))


def summarize(cfg: ExperimentConfig, probe: diag.Probe, record: TrajectoryRecord, diags) -> dict:
    """Fits, windows, dissipation fractions and pass/fail of each property check."""
    etas = probe.etas
    g = probe.grid
    spec = cfg.network_spec()
    loss = cfg.loss_kind()
    gradient_flow = cfg.flow.integrator != "adam"
    checks = {}
    out = {
        "name": cfg.name,
        "preset": cfg.preset,
        "seed": cfg.seed,
        "n_params": spec.size,
        "dt": cfg.flow.dt,
        "integrator": cfg.flow.integrator,
        "loss": loss.label,
        "peaks": [{"k": k, "xi": k * g.dxi} for k in probe.peaks],
        "etas": etas,
        "flags": record.flags,
        "final_training_loss": record.checkpoints[-1].loss,
        "final_L": diags[-1].L,
        "top_octave_fraction_max": max(d.top_octave_fraction for d in diags),
    }

    # dynamics identity on gradient-flow runs
    if gradient_flow:
        worst = 0.0
        for c in record.checkpoints:
            lhs = float(np.dot(c.grad, c.dtheta_dt))
            rhs = -float(np.dot(c.grad, c.grad))
            worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1e-300))
        checks["dynamics_identity"] = {"passed": worst <= 1e-10, "max_rel_err": worst}

    # output-change Pythagorean split
    worst = 0.0
    for d in diags:
        if d.degenerate:
            continue
        for r in d.rows:
            if not math.isnan(r.out_ratio_low):
                worst = max(worst, abs(r.out_ratio_low ** 2 + r.out_ratio_high ** 2 - 1.0))
    checks["output_change_split"] = {"passed": worst <= 1e-10, "max_abs_err": worst}

    # additivity of band rates
    worst = 0.0
    for d in diags:
        for r in d.rows:
            worst = max(worst, abs(r.dL_minus_dt + r.dL_plus_dt - r.dL_dt) / max(abs(r.dL_dt), 1e-300))
    checks["rate_additivity"] = {"passed": worst <= 1e-10, "max_rel_err": worst}

    windows = diag.half_life_windows_from(diags)
    out["half_life_windows"] = [[diags[i].t, diags[j].t] for i, j in windows]

    relu_general = spec.activation == "relu" and loss.kind != "mse"
    if relu_general:
        out["notice"] = "ReLU with a general loss: no admissible decay exponent; slope checks skipped"

    # initial stage, judged at the end T2 of the first half-life window
    if windows:
        i, j = windows[0]
        end = diags[j]
        fits = [diag.eta_decay_fit(etas, [_rate_ratio_high(r) for r in d.rows]) for d in diags[i + 1:j + 1]]
        fit_end = fits[-1]
        out["initial_stage"] = {
            "window": [diags[i].t, end.t],
            "peak_errors_at_T2": end.peak_errors,
            "fit_at_T2": dataclasses.asdict(fit_end) if fit_end else None,
            "fits": [dataclasses.asdict(f) if f else None for f in fits],
        }
        out["peak_errors_at_window_ends"] = [[diags[b].t, diags[b].peak_errors] for _, b in windows]
        if end.peak_errors:
            lo_err, hi_err = end.peak_errors[0], end.peak_errors[-1]
            checks["initial_peak_errors"] = {
                "passed": lo_err < 0.3 and hi_err > 0.8,
                "lowest": lo_err,
                "highest": hi_err,
            }
        if not relu_general:
            ok = fit_end is not None and fit_end.slope <= -0.5 and fit_end.r2 >= 0.7
            checks["initial_decay_fit"] = {
                "passed": ok,
                "slope": fit_end.slope if fit_end else None,
                "r2": fit_end.r2 if fit_end else None,
            }

    # dissipation
    tone = largest_tone_frequency(cfg, probe)
    above = [n for n, e in enumerate(etas) if e > tone]
    fractions = {f"{etas[n]:.17g}": diag.dissipation_check(diags, n) for n in above}
    out["dissipation"] = {"largest_tone_xi": tone, "fractions": fractions}
    if above and gradient_flow:
        checks["dissipation"] = {"passed": min(fractions.values()) >= 0.95, "min_fraction": min(fractions.values())}

    # intermediate stage
    if windows:
        per_window = []
        for w in windows:
            wd = [diag.window_ratios(diags, w, n) for n in range(len(etas))]
            per_window.append({
                "T1": wd[0].T1, "T2": wd[0].T2,
                "difference_ratio": [x.difference_ratio for x in wd],
                "integrated_ratio": [x.integrated_ratio for x in wd],
            })
        out["windows"] = per_window
        pooled = np.mean([pw["difference_ratio"] for pw in per_window], axis=0)
        out["pooled_difference_ratio"] = pooled.tolist()
        if len(etas) >= 3 and np.ptp(pooled) > 0:
            rho = float(spearmanr(etas, pooled)[0])
            checks["intermediate_eta_ordering"] = {"passed": rho <= -0.8, "spearman": rho}
        pk = fig_peak_index(probe)
        if pk is not None:
            by_len = sorted(per_window, key=lambda pw: pw["T2"] - pw["T1"])
            seq = [pw["difference_ratio"][pk] for pw in by_len]
            checks["intermediate_window_length"] = {
                "passed": all(b >= a for a, b in zip(seq, seq[1:])),
                "eta": etas[pk],
                "lengths": [pw["T2"] - pw["T1"] for pw in by_len],
                "ratios": seq,
            }
            # nested windows anchored at the first checkpoint, reported only
            anchored = []
            for jj in range(1, len(diags)):
                if diags[jj].L <= 0.5 * diags[0].L and max(d.L for d in diags[:jj + 1]) <= diags[0].L:
                    anchored.append((diags[jj].t - diags[0].t, diag.window_ratios(diags, (0, jj), pk).difference_ratio))
            if len(anchored) >= 3:
                a = np.array(anchored)
                out["anchored_window_trend_spearman"] = float(spearmanr(a[:, 0], a[:, 1])[0])

    # final stage: only meaningful once the loss is near a global minimizer
    if record.checkpoints[-1].loss < 1e-6 and not relu_general:
        f = diag.eta_decay_fit(etas, [_rate_ratio_high(r) for r in diags[-1].rows])
        checks["final_decay_fit"] = {"passed": f is not None and f.slope < 0, "fit": dataclasses.asdict(f) if f else None}
    else:
        out["final_stage"] = "skipped: training loss above 1e-6, minimizer not certified"

    out["checks"] = checks
    return out


@dataclass
class RunResult:
    config: ExperimentConfig
    record: TrajectoryRecord
    probe: diag.Probe
    diagnostics: list
    csv_text: str
    summary: dict


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def analyze(cfg: ExperimentConfig, record: TrajectoryRecord) -> RunResult:
    probe = make_probe(cfg)
    diags = diag.trajectory_diagnostics(probe, record)
    csv_text = diag.diagnostics_csv(diags, len(probe.peaks))
    summary = summarize(cfg, probe, record, diags)
    return RunResult(cfg, record, probe, diags, csv_text, summary)


def write_bundle(result: RunResult, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectory": out / "trajectory.fptraj",
        "diagnostics": out / "diagnostics.csv",
        "summary": out / "summary.json",
        "config": out / "config.json",
        "target_spectrum": out / "target_spectrum.tsv",
    }
    save_trajectory(paths["trajectory"], result.record, {"config": config_to_dict(result.config)})
    paths["diagnostics"].write_text(result.csv_text)
    paths["summary"].write_text(json.dumps(result.summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    paths["config"].write_text(emit_config(result.config))
    write_spectrum(paths["target_spectrum"], result.probe.fhat)
    return {k: str(v) for k, v in paths.items()}


def run(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Train, diagnose, and (when an output directory is given) write the artifact bundle."""
    cfg.validate()
    spec = cfg.network_spec()
    theta0 = init_theta(spec, cfg.seed)
    record = integrate(spec, theta0, cfg.loss_kind(), cfg.dataset(), cfg.flow_config())
    record.metadata["config_name"] = cfg.name
    result = analyze(cfg, record)
    target = out_dir or cfg.out_dir
    if target is not None:
        write_bundle(result, target)
    return result


def replay(trajectory_path, cfg: ExperimentConfig | None = None, out_dir=None) -> RunResult:
    """Recompute diagnostics from a stored trajectory (config from the file header unless given)."""
    record, header = load_trajectory(trajectory_path)
    if cfg is None:
        if "config" not in header:
            raise ConfigError("trajectory file carries no config; pass one explicitly")
        cfg = config_from_dict(header["config"])
    cfg.validate()
    result = analyze(cfg, record)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "diagnostics.csv").write_text(result.csv_text)
        (out / "summary.json").write_text(json.dumps(result.summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    return result


# ---------------------------------------------------------------------------
# sweeps

SWEEP_AXES = ("eta", "m", "width", "p")


def _variant(cfg: ExperimentConfig, axis: str, value, index: int) -> ExperimentConfig:
    v = copy.deepcopy(cfg)
    v.seed = cfg.seed + index
    v.out_dir = None
    if axis == "width":
        w = list(cfg.network.widths)
        v.network.widths = [w[0]] + [int(value)] * (len(w) - 2) + [w[-1]]
    elif axis == "p":
        v.loss = LossConfig("power", float(value))
    return v


def _sweep_one(args):
    cfg, axis, value, index, out_dir = args
    v = _variant(cfg, axis, value, index)
    try:
        res = run(v, out_dir)
        return index, value, v.seed, res.csv_text, res.summary["final_L"], None
    except Exception as exc:  # partial failures become error rows
        return index, value, v.seed, None, None, f"{type(exc).__name__}: {exc}"


@dataclass
class SweepResult:
    axis: str
    table: str  # merged CSV, leading axis/value columns
    runs: list[dict]  # one entry per axis value: value, seed, status, error, final_L

    @property
    def failed(self) -> list[dict]:
        return [r for r in self.runs if r["status"] != "ok"]


def _prefix(csv_text: str, axis: str, value) -> list[str]:
    lines = csv_text.rstrip("\n").split("\n")
    return [f"axis,value,{lines[0]}"] + [f"{axis},{value},{line}" for line in lines[1:]]


def _write_sweep(out_dir, res: SweepResult) -> None:
    if out_dir is None:
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"sweep_{res.axis}.csv").write_text(res.table)
    (out / f"sweep_{res.axis}_runs.json").write_text(json.dumps(res.runs, indent=2, default=_json_default) + "\n")


def sweep(cfg: ExperimentConfig, axis: str, values, out_dir=None, workers: int = 1) -> SweepResult:
    """One run per axis value; run i uses seed base + i.

    eta and m only change the diagnostics, so they share one trajectory
    (trained with the base seed).
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis: must be one of {SWEEP_AXES}")
    values = list(values)
    if not values:
        raise ConfigError("values: need at least one sweep value")
    cfg.validate()

    if axis in ("eta", "m"):
        base = run(cfg, None)
        runs = [{"value": v, "seed": cfg.seed, "status": "ok", "error": None, "final_L": base.summary["final_L"]}
                for v in values]
        if axis == "eta":
            v = copy.deepcopy(cfg)
            v.eta.values = [float(e) for e in values]
            res = analyze(v, base.record)
            lines = res.csv_text.rstrip("\n").split("\n")
            header = "axis,value," + lines[0]
            body = [f"eta,{row.split(',')[2]},{row}" for row in lines[1:]]
        else:
            header = "axis,value,step,t,weighted_grad_h_l2,weighted_grad_q_l1"
            body = []
            ms = [int(m) for m in values]
            for c in base.record.checkpoints:
                norms = diag.weighted_gradient_norms(base.probe, c.theta, ms)
                for m in ms:
                    l2, l1 = norms[m]
                    body.append(f"m,{m},{c.step},{c.t:.17g},{l2:.17g},{l1:.17g}")
        result = SweepResult(axis, "\n".join([header] + body) + "\n", runs)
        _write_sweep(out_dir, result)
        return result

    jobs = [
        (cfg, axis, value, i, None if out_dir is None else str(Path(out_dir) / f"{axis}_{i}"))
        for i, value in enumerate(values)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, os.cpu_count() or 1)) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    results.sort(key=lambda r: r[0])  # merge order never depends on completion order

    header = None
    body = []
    runs = []
    for index, value, seed, text, final_L, err in results:
        runs.append({"value": value, "seed": seed, "status": "ok" if err is None else "error",
                     "error": err, "final_L": final_L})
        if err is None:
            lines = _prefix(text, axis, value)
            header = header or lines[0]
            body.extend(lines[1:])
    if header is None:
        header = "axis,value,flags"
    ncols = header.count(",") + 1
    for r in runs:
        if r["error"] is not None:
            msg = "error: " + r["error"].replace(",", ";").replace("\n", " ")
            body.append(",".join([axis, str(r["value"])] + [""] * (ncols - 3) + [msg]))
    result = SweepResult(axis, "\n".join([header] + body) + "\n", runs)
    _write_sweep(out_dir, result)
    return result
