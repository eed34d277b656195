"""Reverse-mode gradients of the truncated network and of the two loss
families, plus a central-difference checker."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nnet import (
    BumpFunction,
    NetworkSpec,
    PopulationDensity,
    TargetFunction,
    _deriv_from_output,
    forward,
    forward_cache,
)
from .spectral import Grid


class DivergenceError(RuntimeError):
    """Loss or parameters left the finite range."""


@dataclass(frozen=True)
class LossKind:
    """ "mse" is l(z) = z^2; "power" is l(z) = |z|^p."""

    kind: str = "mse"
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in ("mse", "power"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "mse":
            object.__setattr__(self, "p", 2.0)
        elif not (self.p >= 1.0 and math.isfinite(self.p)):
            raise ValueError("power loss needs a finite p >= 1")
        object.__setattr__(self, "p", float(self.p))

    @property
    def label(self) -> str:
        return "mse" if self.kind == "mse" else f"power{self.p:g}"

    def ell(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "mse":
            return z * z
        return np.abs(z) ** self.p

    def ell_prime(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "mse":
            return 2.0 * z
        return self.p * np.abs(z) ** (self.p - 1.0) * np.sign(z)


@dataclass(frozen=True)
class SandwichReport:
    passed: bool
    constant: float
    r0: float
    lower_ratio_sup: float
    upper_ratio_sup: float
    message: str


def sandwich_check(loss: LossKind, r0: float = 1.0, zmin: float = 1e-6, n: int = 241) -> SandwichReport:
    """Check C^{-1} l'(z)^2 <= l(z) <= C z^2 on a log grid of 0 < |z| <= r0.

    The two ratios l'^2/l and l/z^2 must stay bounded; a ratio that keeps
    growing over the smallest decade is treated as unbounded near 0.
    """
    mag = np.geomspace(zmin, r0, n)
    z = np.concatenate([-mag[::-1], mag])
    ell = loss.ell(z)
    lp = loss.ell_prime(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        lower = lp * lp / ell
        upper = ell / (z * z)
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        return SandwichReport(False, math.inf, r0, math.inf, math.inf, "ratio not finite on grid")
    decade = mag <= zmin * 10
    lr = lower[n:][decade]
    ur = upper[n:][decade]
    lx = np.log(mag[decade])
    # slope of log ratio vs log|z| over the first decade; negative means blow-up at 0
    growth = min(np.polyfit(lx, np.log(lr), 1)[0], np.polyfit(lx, np.log(ur), 1)[0])
    lsup, usup = float(lower.max()), float(upper.max())
    C = max(lsup, usup, 1.0)
    if growth < -1e-6:
        return SandwichReport(False, C, r0, lsup, usup, f"ratio diverges as z->0 (log-slope {growth:.3g})")
    return SandwichReport(True, C, r0, lsup, usup, f"bounded with C = {C:.6g}")


@dataclass(frozen=True)
class Dataset:
    """Points x_i with target values f(x_i), truncation chi(x_i) and measure weights.

    The discretized loss is sum_i w_i l(h(x_i) - f(x_i)).
    """

    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    chi: np.ndarray

    def __post_init__(self):
        if len(self.x) == 0:
            raise ValueError("empty data set")
        for name in ("x", "y", "weights", "chi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        n = self.x.size
        if not (self.y.size == self.weights.size == self.chi.size == n):
            raise ValueError("dataset arrays differ in length")


def empirical_dataset(x, target: TargetFunction, chi: BumpFunction) -> Dataset:
    """Sample mean over the given points."""
    x = np.asarray(x, dtype=float)
    c = chi(x)
    return Dataset(x, target(x) * c, np.full(x.size, 1.0 / x.size), c)


def quadrature_dataset(grid: Grid, target: TargetFunction, chi: BumpFunction, density: PopulationDensity) -> Dataset:
    """Rectangle rule on the periodic grid; density renormalized to unit mass on it.

    The integrand vanishes at both ends of [a', b'] because chi does, so this
    coincides with the trapezoid rule.
    """
    x = grid.nodes
    rho = density.normalized_on(x, grid.dx)
    c = chi(x)
    return Dataset(x, target(x) * c, rho(x) * grid.dx, c)


def _backward(spec: NetworkSpec, theta, cache, upstream: np.ndarray):
    """Per-layer deltas dh/dz^(l) scaled by `upstream`, from l = H down to 1."""
    deltas = [None] * (spec.depth + 1)
    d = upstream.reshape(-1, 1)
    deltas[spec.depth] = d
    Ws = spec.layout().unflatten(theta)
    for l in range(spec.depth - 1, 0, -1):
        W_next = Ws[l][0]  # W^(l+1), shape (n_{l+1}, n_l)
        d = (d @ W_next) * _deriv_from_output(spec.activation, cache.pre[l], cache.post[l])
        deltas[l] = d
    return deltas


def _checked(spec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.size,):
        raise ValueError(f"theta has length {theta.size}, network {spec.widths} needs {spec.size}")
    return theta


def grad_output(spec: NetworkSpec, theta, x, chi: BumpFunction | None = None) -> np.ndarray:
    """Per-point gradients d h / d theta, shape (n_points, N).

    With `chi` the truncated hypothesis h^(H) * chi is differentiated.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    theta = _checked(spec, theta)
    cache = forward_cache(spec, theta, x)
    n = x.size
    scale = np.ones(n) if chi is None else chi(x)
    deltas = _backward(spec, theta, cache, scale)
    layout = spec.layout()
    J = np.empty((n, spec.size))
    for l in range(1, spec.depth + 1):
        d = deltas[l]
        a = cache.post[l - 1]
        J[:, layout.weight_slices[l - 1]] = (d[:, :, None] * a[:, None, :]).reshape(n, -1)
        J[:, layout.bias_slices[l - 1]] = d
    return J


def output_vjp(spec: NetworkSpec, theta, x, upstream, chi_values=None, cache=None) -> tuple[np.ndarray, np.ndarray]:
    """(h^(H)(x), sum_i upstream_i * chi_i * grad h^(H)(x_i)) in one pass."""
    x = np.asarray(x, dtype=float).reshape(-1)
    theta = _checked(spec, theta)
    if cache is None:
        cache = forward_cache(spec, theta, x)
    u = np.asarray(upstream, dtype=float).reshape(-1)
    if chi_values is not None:
        u = u * chi_values
    deltas = _backward(spec, theta, cache, u)
    layout = spec.layout()
    g = np.empty(spec.size)
    for l in range(1, spec.depth + 1):
        d = deltas[l]
        g[layout.weight_slices[l - 1]] = (d.T @ cache.post[l - 1]).ravel()
        g[layout.bias_slices[l - 1]] = d.sum(axis=0)
    return cache.output, g


def loss_value(spec: NetworkSpec, theta, loss: LossKind, data: Dataset) -> float:
    r = forward(spec, theta, data.x) * data.chi - data.y
    return float(np.dot(data.weights, loss.ell(r)))


def grad_loss(spec: NetworkSpec, theta, loss: LossKind, data: Dataset) -> tuple[float, np.ndarray]:
    """Discretized loss and its exact gradient."""
    theta = _checked(spec, theta)
    cache = forward_cache(spec, theta, data.x)
    r = cache.output * data.chi - data.y
    value = float(np.dot(data.weights, loss.ell(r)))
    if not math.isfinite(value):
        raise DivergenceError(f"loss is not finite ({value})")
    _, g = output_vjp(spec, theta, data.x, data.weights * loss.ell_prime(r), data.chi, cache)
    return value, g


# ---------------------------------------------------------------------------
# finite differences

FD_STEP = 1e-5


def central_difference(fn, theta, step: float = FD_STEP) -> np.ndarray:
    """Gradient of a scalar function by per-coordinate central differences."""
    theta = np.array(theta, dtype=float)
    out = np.empty(theta.size)
    for i in range(theta.size):
        old = theta[i]
        theta[i] = old + step
        fp = fn(theta)
        theta[i] = old - step
        fm = fn(theta)
        theta[i] = old
        out[i] = (fp - fm) / (2 * step)
    return out


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-3) -> float:
    """Worst-coordinate error |a_i - b_i| / max(|a_i|, |b_i|, floor * max|b|).

    Coordinates far below the gradient's scale are compared against that
    scale so that finite-difference rounding in near-zero entries does not
    dominate.  At a zero-gradient point (`a` identically zero) the absolute
    error is returned.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not np.any(a):
        return float(np.max(np.abs(a - b)))
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)))
    den = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor * scale)
    return float(np.max(np.abs(a - b) / den))


def fd_check(spec: NetworkSpec, theta, loss: LossKind, data: Dataset, step: float = FD_STEP) -> float:
    _, g = grad_loss(spec, theta, loss, data)
    fd = central_difference(lambda th: loss_value(spec, th, loss, data), theta, step)
    return max_relative_error(g, fd)


def min_preactivation_margin(spec: NetworkSpec, theta, x) -> float:
    """Smallest |z| over all hidden pre-activations; distance to ReLU kinks."""
    cache = forward_cache(spec, theta, np.asarray(x, dtype=float))
    zs = [np.abs(z).min() for z in cache.pre[1:-1]]
    return float(min(zs)) if zs else math.inf
