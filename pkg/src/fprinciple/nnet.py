"""Fully connected networks with a flat parameter vector, bump truncation,
synthetic targets and population densities.

All evaluation is batched over a 1-D array of input points.  The flat
parameter layout is, for each layer l = 1..H in order, the weight matrix
W^(l) of shape (n_l, n_{l-1}) in row-major order followed by the bias b^(l).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

ACTIVATIONS = ("relu", "tanh", "sigmoid")
INF = math.inf


def activation_eval(kind: str, z):
    z = np.asarray(z, dtype=float)
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        # split form avoids overflow in exp for large |z|
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    raise ValueError(f"unknown activation {kind!r}")


def activation_deriv(kind: str, z):
    """Derivative of the activation; ReLU'(0) is taken to be 0."""
    z = np.asarray(z, dtype=float)
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if kind == "sigmoid":
        s = activation_eval("sigmoid", z)
        return s * (1.0 - s)
    raise ValueError(f"unknown activation {kind!r}")


def _deriv_from_output(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    # sigma'(z) reusing a = sigma(z) from the forward pass
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "sigmoid":
        return a * (1.0 - a)
    return (z > 0).astype(float)


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture n_0-n_1-...-n_H with one activation for every hidden neuron."""

    widths: tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise ValueError("widths needs at least an input and an output layer")
        if any(w < 1 for w in self.widths):
            raise ValueError(f"every layer width must be >= 1, got {self.widths}")
        if self.widths[-1] != 1:
            raise ValueError("output layer must have width 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def depth(self) -> int:
        """H, the index of the output layer."""
        return len(self.widths) - 1

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def smoothness_order(self) -> float:
        # ReLU is only Lipschitz; tanh and sigmoid are smooth
        return 1 if self.activation == "relu" else INF

    @property
    def size(self) -> int:
        return network_size(self)

    def layout(self) -> "ThetaLayout":
        return ThetaLayout.build(self)


def network_size(spec: NetworkSpec) -> int:
    w = spec.widths
    return sum((w[l] + 1) * w[l + 1] for l in range(len(w) - 1))


@dataclass(frozen=True)
class ThetaLayout:
    """Offsets of W^(l) and b^(l) inside the flat vector, l = 1..H."""

    widths: tuple[int, ...]
    weight_slices: tuple[slice, ...]
    bias_slices: tuple[slice, ...]
    size: int

    @classmethod
    def build(cls, spec: NetworkSpec) -> "ThetaLayout":
        ws, bs = [], []
        off = 0
        w = spec.widths
        for l in range(1, len(w)):
            nw = w[l] * w[l - 1]
            ws.append(slice(off, off + nw))
            off += nw
            bs.append(slice(off, off + w[l]))
            off += w[l]
        return cls(w, tuple(ws), tuple(bs), off)

    def unflatten(self, values: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views (W, b) per layer; W has shape (n_l, n_{l-1})."""
        values = np.asarray(values)
        if values.shape != (self.size,):
            raise ValueError(f"expected a flat vector of length {self.size}, got shape {values.shape}")
        out = []
        for l, (sw, sb) in enumerate(zip(self.weight_slices, self.bias_slices), start=1):
            out.append((values[sw].reshape(self.widths[l], self.widths[l - 1]), values[sb]))
        return out

    def flatten(self, layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
        out = np.empty(self.size)
        if len(layers) != len(self.weight_slices):
            raise ValueError("layer count does not match layout")
        for (W, b), sw, sb in zip(layers, self.weight_slices, self.bias_slices):
            out[sw] = np.asarray(W, dtype=float).ravel()
            out[sb] = np.asarray(b, dtype=float).ravel()
        return out


@dataclass(frozen=True)
class Theta:
    spec: NetworkSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (network_size(self.spec),):
            raise ValueError(
                f"theta has length {v.size}, network {self.spec.widths} needs {network_size(self.spec)}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return self.spec.layout().unflatten(self.values)

    @classmethod
    def from_layers(cls, spec: NetworkSpec, layers) -> "Theta":
        return cls(spec, spec.layout().flatten(layers))


def init_theta(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Gaussian weights with std 1/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    layout = spec.layout()
    layers = []
    for l in range(1, len(spec.widths)):
        fan_in = spec.widths[l - 1]
        W = rng.standard_normal((spec.widths[l], fan_in)) / math.sqrt(fan_in)
        layers.append((W, np.zeros(spec.widths[l])))
    return layout.flatten(layers)


def _as_inputs(spec: NetworkSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if spec.input_dim == 1:
        return x.reshape(-1, 1)
    x = np.atleast_2d(x)
    if x.shape[1] != spec.input_dim:
        raise ValueError(f"inputs must have {spec.input_dim} columns")
    return x


@dataclass
class ForwardCache:
    """Pre-activations z^(l) and activations h^(l) for a batch, l = 0..H."""

    pre: list[np.ndarray]
    post: list[np.ndarray]

    @property
    def output(self) -> np.ndarray:
        return self.post[-1][:, 0]


def forward_cache(spec: NetworkSpec, theta, x) -> ForwardCache:
    layers = spec.layout().unflatten(np.asarray(theta, dtype=float))
    a = _as_inputs(spec, x)
    pre, post = [a], [a]
    H = spec.depth
    for l, (W, b) in enumerate(layers, start=1):
        z = a @ W.T + b
        a = activation_eval(spec.activation, z) if l < H else z
        pre.append(z)
        post.append(a)
    return ForwardCache(pre, post)


def forward(spec: NetworkSpec, theta, x) -> np.ndarray:
    """Network output h^(H)(x, theta) for each input point."""
    return forward_cache(spec, theta, x).output


def forward_tangent(spec: NetworkSpec, theta, x, direction) -> tuple[np.ndarray, np.ndarray]:
    """Output and its directional derivative along `direction` in parameter space.

    Forward-mode propagation; equals jacobian(x) @ direction without forming
    the Jacobian.
    """
    layout = spec.layout()
    layers = layout.unflatten(np.asarray(theta, dtype=float))
    dlayers = layout.unflatten(np.asarray(direction, dtype=float))
    a = _as_inputs(spec, x)
    da = np.zeros_like(a)
    H = spec.depth
    for l, ((W, b), (dW, db)) in enumerate(zip(layers, dlayers), start=1):
        z = a @ W.T + b
        dz = da @ W.T + a @ dW.T + db
        if l < H:
            da = activation_deriv(spec.activation, z) * dz
            a = activation_eval(spec.activation, z)
        else:
            a, da = z, dz
    return a[:, 0], da[:, 0]


# ---------------------------------------------------------------------------
# bump truncation


def _smoothstep_quintic(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


def _smooth_exp_step(s):
    # psi(s)/(psi(s)+psi(1-s)) with psi(s) = exp(-1/s); C-infinity at both ends
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    out = np.zeros_like(s)
    out[s >= 1.0] = 1.0
    mid = (s > 0.0) & (s < 1.0)
    sm = s[mid]
    # ratio form exp(-1/s)/(exp(-1/s)+exp(-1/(1-s))) = 1/(1+exp(1/s - 1/(1-s)))
    expo = 1.0 / sm - 1.0 / (1.0 - sm)
    out[mid] = 1.0 / (1.0 + np.exp(np.minimum(expo, 700.0)))
    return out


BUMP_PROFILES = {"smoothstep_quintic": _smoothstep_quintic, "smooth_exp": _smooth_exp_step}
# Sobolev order W^{k,inf} reached by each profile
BUMP_REGULARITY = {"smoothstep_quintic": 3, "smooth_exp": INF}


@dataclass(frozen=True)
class BumpFunction:
    """chi = 1 on [a, b], 0 outside [a_out, b_out], smooth monotone ramps between."""

    inner: tuple[float, float] = (-3.14, 3.14)
    outer: tuple[float, float] = (-3.5, 3.5)
    profile: str = "smoothstep_quintic"

    def __post_init__(self):
        a, b = self.inner
        ao, bo = self.outer
        if not (ao < a < b < bo):
            raise ValueError(f"need outer[0] < inner[0] < inner[1] < outer[1], got {self.inner}, {self.outer}")
        if self.profile not in BUMP_PROFILES:
            raise ValueError(f"profile must be one of {tuple(BUMP_PROFILES)}")
        object.__setattr__(self, "inner", (float(a), float(b)))
        object.__setattr__(self, "outer", (float(ao), float(bo)))

    @property
    def regularity(self) -> float:
        return BUMP_REGULARITY[self.profile]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a, b = self.inner
        ao, bo = self.outer
        step = BUMP_PROFILES[self.profile]
        left = step((x - ao) / (a - ao))
        right = step((bo - x) / (bo - b))
        return np.minimum(left, right)


def truncated_forward(spec: NetworkSpec, theta, chi: BumpFunction, x) -> np.ndarray:
    """h(x) = h^(H)(x) * chi(x)."""
    x = np.asarray(x, dtype=float)
    return forward(spec, theta, x) * chi(x.reshape(-1))


# ---------------------------------------------------------------------------
# targets and densities


@dataclass(frozen=True)
class TargetFunction:
    """Synthetic target f_target.

    kind "tone_sum": sum of amplitude * sin(omega * x) over (omega, amplitude)
    pairs, omega in radians per unit length.
    kind "paper_multitone": sum_{j=1}^{J} sin(j x / 10) / j.
    kind "custom_table": linear interpolation of (table_x, table_y), zero outside.
    """

    kind: str = "tone_sum"
    tones: tuple[tuple[float, float], ...] = ()
    J: int = 500
    table_x: tuple[float, ...] = ()
    table_y: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("tone_sum", "paper_multitone", "custom_table"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        object.__setattr__(self, "tones", tuple((float(w), float(c)) for w, c in self.tones))
        if self.kind == "tone_sum" and not self.tones:
            raise ValueError("tone_sum target needs at least one tone")
        if self.kind == "paper_multitone" and self.J < 1:
            raise ValueError("J must be >= 1")
        if self.kind == "custom_table":
            if len(self.table_x) != len(self.table_y) or len(self.table_x) < 2:
                raise ValueError("custom_table needs matching table_x/table_y with >= 2 entries")
            if np.any(np.diff(self.table_x) <= 0):
                raise ValueError("table_x must be strictly increasing")

    @property
    def regularity(self) -> float:
        return 1 if self.kind == "custom_table" else INF

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "tone_sum":
            out = np.zeros_like(x)
            for omega, amp in self.tones:
                out += amp * np.sin(omega * x)
            return out
        if self.kind == "paper_multitone":
            j = np.arange(1, self.J + 1, dtype=float)
            # chunked to bound memory on long grids
            flat = x.reshape(-1)
            res = np.empty_like(flat)
            for start in range(0, flat.size, 4096):
                chunk = flat[start:start + 4096]
                res[start:start + 4096] = (np.sin(np.outer(chunk, j / 10.0)) / j).sum(axis=1)
            return res.reshape(x.shape)
        return np.interp(x, self.table_x, self.table_y, left=0.0, right=0.0)

    @classmethod
    def harmonics(cls, amplitudes: dict[int, float]) -> "TargetFunction":
        """Tones sin(j x) with the given amplitude per integer j."""
        return cls("tone_sum", tuple((float(j), float(a)) for j, a in sorted(amplitudes.items())))


@dataclass(frozen=True)
class PopulationDensity:
    """rho with d mu = rho dx.

    "uniform_on": 1/|I| on the interval, 0 elsewhere.
    "truncated_constant": c * chi(x)^2, so that sqrt(rho) is as regular as chi.
    """

    kind: str = "uniform_on"
    interval: tuple[float, float] = (-3.14, 3.14)
    chi: BumpFunction | None = None
    normalization: float | None = None

    def __post_init__(self):
        if self.kind not in ("uniform_on", "truncated_constant"):
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.kind == "truncated_constant" and self.chi is None:
            raise ValueError("truncated_constant density needs a bump function")
        lo, hi = self.interval
        if not hi > lo:
            raise ValueError("density interval must be nonempty")
        if self.normalization is None:
            norm = 1.0 / (hi - lo) if self.kind == "uniform_on" else 1.0
            object.__setattr__(self, "normalization", norm)
        if not (self.normalization > 0 and math.isfinite(self.normalization)):
            raise ValueError("normalization must be positive and finite")

    def unnormalized(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform_on":
            lo, hi = self.interval
            return ((x >= lo) & (x <= hi)).astype(float)
        c = self.chi(x)
        return c * c

    def __call__(self, x) -> np.ndarray:
        return self.normalization * self.unnormalized(x)

    def normalized_on(self, nodes: np.ndarray, dx: float) -> "PopulationDensity":
        """Copy whose rectangle-rule integral over `nodes` is exactly 1 (up to rounding)."""
        mass = float(np.sum(self.unnormalized(nodes)) * dx)
        if mass <= 0:
            raise ValueError("density has no mass on the grid")
        return PopulationDensity(self.kind, self.interval, self.chi, 1.0 / mass)

    @property
    def sup(self) -> float:
        return self.normalization

    @property
    def sqrt_regularity(self) -> float:
        if self.kind == "uniform_on":
            return 0
        return self.chi.regularity
