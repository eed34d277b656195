"""Uniform grids, a radix-2 FFT, and the continuous-transform approximation

    g_hat(xi_k) = dx * sum_j g(x_j) exp(-2 pi i xi_k x_j),   xi_k = k / (b - a),

for k = -M/2 .. M/2-1 (frequency in cycles per unit length).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _bit_reverse_permutation(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx = idx >> 1
    return rev


def fft(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis.

    Unnormalized in both directions: the inverse uses exp(+2 pi i jk/M) and
    does not divide by M.  Lengths that are not a power of two fall back to
    the direct O(M^2) sum.
    """
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if not _is_pow2(n):
        return direct_dft(x, inverse=inverse)
    sign = 1.0 if inverse else -1.0
    a = x[..., _bit_reverse_permutation(n)].copy()
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        a = a.reshape(*x.shape[:-1], n // size, size)
        u = a[..., :half].copy()
        v = a[..., half:] * tw
        a[..., :half] = u + v
        a[..., half:] = u - v
        a = a.reshape(*x.shape[:-1], n)
        size *= 2
    return a


def direct_dft(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """O(M^2) reference transform with the same conventions as `fft`."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    sign = 1.0 if inverse else -1.0
    k = np.arange(n)
    # exact integer phase reduction keeps the kernel accurate for large n
    kernel = np.exp(sign * 2j * np.pi * ((np.outer(k, k) % n) / n))
    return x @ kernel.T


@dataclass(frozen=True)
class Grid:
    """M nodes x_j = a + j dx on the periodic cell [a, b)."""

    a: float
    b: float
    M: int

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("grid needs b > a")
        if self.M < 2 or self.M % 2:
            raise ValueError(f"grid size must be even and >= 2, got {self.M}")

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def dx(self) -> float:
        return self.length / self.M

    @property
    def dxi(self) -> float:
        return 1.0 / self.length

    @property
    def nodes(self) -> np.ndarray:
        return self.a + np.arange(self.M) * self.dx

    @property
    def k(self) -> np.ndarray:
        return np.arange(-self.M // 2, self.M // 2)

    @property
    def xi(self) -> np.ndarray:
        return self.k / self.length

    @property
    def nyquist(self) -> float:
        return self.M / (2.0 * self.length)

    def padded(self, factor: int = 4) -> "Grid":
        """Same spacing over a cell `factor` times longer (finer xi resolution)."""
        return Grid(self.a, self.a + factor * self.length, self.M * factor)


@dataclass(frozen=True)
class SampledField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape[-1] != self.grid.M:
            raise ValueError(f"field has {v.shape[-1]} samples, grid has {self.grid.M}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def sample(cls, grid: Grid, fn) -> "SampledField":
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float))


@dataclass(frozen=True)
class Spectrum:
    """Coefficients ordered by k = -M/2..M/2-1; extra leading axes are batches."""

    grid: Grid
    coeffs: np.ndarray

    @property
    def xi(self) -> np.ndarray:
        return self.grid.xi

    @property
    def dxi(self) -> float:
        return self.grid.dxi

    def at(self, k: int) -> complex:
        return self.coeffs[..., k + self.grid.M // 2]


def _phase(grid: Grid, sign: float) -> np.ndarray:
    # exp(sign 2 pi i xi_k a); k*a/L reduced mod 1 before exponentiating
    frac = np.mod(grid.k * (grid.a / grid.length), 1.0)
    return np.exp(sign * 2j * np.pi * frac)


def dft(field: SampledField | np.ndarray, grid: Grid | None = None) -> Spectrum:
    if isinstance(field, SampledField):
        grid, values = field.grid, field.values
    else:
        if grid is None:
            raise ValueError("a grid is required for raw arrays")
        values = np.asarray(field)
        if values.shape[-1] != grid.M:
            raise ValueError(f"field has {values.shape[-1]} samples, grid has {grid.M}")
    raw = np.fft.fftshift(fft(values), axes=-1)
    return Spectrum(grid, grid.dx * _phase(grid, -1.0) * raw)


def idft(spectrum: Spectrum, real: bool = True) -> SampledField:
    grid = spectrum.grid
    c = spectrum.coeffs * _phase(grid, +1.0)
    vals = fft(np.fft.ifftshift(c, axes=-1), inverse=True) * grid.dxi
    return SampledField(grid, vals.real if real else vals)


def dft_oracle(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Literal sum over nodes, for testing; coefficients ordered like `Spectrum`."""
    x = grid.nodes
    xi = grid.xi
    return grid.dx * np.exp(-2j * np.pi * np.outer(xi, x)) @ np.asarray(values, dtype=complex)


# ---------------------------------------------------------------------------
# residual energy and bands


def residual_energy(hhat: Spectrum, fhat: Spectrum) -> np.ndarray:
    if hhat.grid != fhat.grid:
        raise ValueError("spectra live on different grids")
    d = hhat.coeffs - fhat.coeffs
    return d.real ** 2 + d.imag ** 2


@dataclass(frozen=True)
class BandMask:
    """Low band |xi_k| <= eta and its complement."""

    grid: Grid
    eta: float

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError("eta must be nonnegative")

    @property
    def low(self) -> np.ndarray:
        # tolerance absorbs rounding in k/L when eta sits exactly on a bin
        return np.abs(self.grid.xi) <= self.eta * (1 + 1e-12)

    @property
    def high(self) -> np.ndarray:
        return ~self.low


def band_split(q: np.ndarray, mask: BandMask) -> tuple[float, float]:
    """(L_minus, L_plus): sum of q dxi over the low band and over its complement.

    Both sums use the same pairwise tree over all bins with the other band
    zeroed, so each is monotone in eta.
    """
    low = mask.low
    dxi = mask.grid.dxi
    q = np.asarray(q, dtype=float)
    lm = float(np.sum(np.where(low, q, 0.0), axis=-1) * dxi)
    lp = float(np.sum(np.where(low, 0.0, q), axis=-1) * dxi)
    return lm, lp


def total_energy(q: np.ndarray, grid: Grid) -> float:
    return float(np.sum(q) * grid.dxi)


def japanese_bracket(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return np.sqrt(1.0 + xi * xi)


MAX_WEIGHT_ORDER = 16


def japanese_bracket_norm(v: np.ndarray, grid: Grid, m: int, p: int = 2) -> float:
    """(sum_k <xi_k>^{m p} |v_k|^p dxi)^{1/p}.

    `v` may carry a trailing parameter axis; its per-bin magnitude is then the
    Euclidean norm over that axis.
    """
    if m < 0 or m > MAX_WEIGHT_ORDER:
        raise ValueError(f"weight order must be in [0, {MAX_WEIGHT_ORDER}]")
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    v = np.asarray(v)
    mag = np.abs(v) if v.ndim == 1 else np.sqrt(np.sum(np.abs(v) ** 2, axis=-1))
    w = japanese_bracket(grid.xi) ** (m * p)
    s = float(np.sum(w * mag ** p) * grid.dxi)
    return s if p == 1 else math.sqrt(s)


def top_octave_fraction(q: np.ndarray, grid: Grid) -> float:
    """Share of residual energy in nyquist/2 < |xi|; flags an under-resolved grid."""
    tot = float(np.sum(q))
    if tot == 0:
        return 0.0
    return float(np.sum(q[np.abs(grid.xi) > grid.nyquist / 2])) / tot


def write_spectrum(path, spectrum: Spectrum) -> None:
    """Text table k, xi, re, im, abs with 17 significant digits."""
    c = np.asarray(spectrum.coeffs)
    if c.ndim != 1:
        raise ValueError("only single spectra can be exported")
    with open(path, "w") as fh:
        fh.write("k\txi\tre\tim\tabs\n")
        for k, xi, z in zip(spectrum.grid.k, spectrum.grid.xi, c):
            fh.write(f"{k}\t{xi:.17g}\t{z.real:.17g}\t{z.imag:.17g}\t{abs(z):.17g}\n")


def read_spectrum(path, grid: Grid) -> Spectrum:
    data = np.loadtxt(path, skiprows=1, ndmin=2)
    if data.shape[0] != grid.M:
        raise ValueError("spectrum table does not match grid")
    return Spectrum(grid, data[:, 2] + 1j * data[:, 3])
