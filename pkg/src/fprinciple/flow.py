"""Time integration of the training dynamics and trajectory storage."""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .grad import Dataset, DivergenceError, LossKind, grad_loss
from .nnet import NetworkSpec

INTEGRATORS = ("gradient_flow_euler", "gradient_flow_rk4", "adam")
DIVERGENCE_GUARD = 1e12
ADAM_BETA1, ADAM_BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


class TrajectoryBoundError(RuntimeError):
    """|theta(t)| exceeded the configured bound R (bounded-trajectory assumption fails)."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


@dataclass(frozen=True)
class FlowConfig:
    integrator: str = "gradient_flow_euler"
    dt: float = 1e-2
    steps: int = 1000
    stride: int = 10
    seed: int = 0
    trajectory_bound: float | None = None
    dense_steps: int = 0  # checkpoint every step while n < dense_steps

    def __post_init__(self):
        if self.dense_steps < 0:
            raise ValueError("dense_steps must be >= 0")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.trajectory_bound is not None and not self.trajectory_bound > 0:
            raise ValueError("trajectory_bound must be positive")

    @property
    def is_gradient_flow(self) -> bool:
        return self.integrator != "adam"


@dataclass
class Checkpoint:
    step: int
    t: float
    theta: np.ndarray
    loss: float
    dtheta_dt: np.ndarray
    grad: np.ndarray


@dataclass
class TrajectoryRecord:
    checkpoints: list[Checkpoint]
    metadata: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([c.t for c in self.checkpoints])

    @property
    def losses(self) -> np.ndarray:
        return np.array([c.loss for c in self.checkpoints])

    def __len__(self):
        return len(self.checkpoints)


def _guard(loss: float, theta: np.ndarray, step: int):
    if not math.isfinite(loss) or loss > DIVERGENCE_GUARD:
        raise DivergenceError(f"loss {loss:g} exceeded guard at step {step}")
    if not np.all(np.isfinite(theta)) or np.max(np.abs(theta)) > DIVERGENCE_GUARD:
        raise DivergenceError(f"parameters exceeded guard at step {step}")


def integrate_field(
    theta0: np.ndarray,
    loss_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    config: FlowConfig,
    metadata: dict | None = None,
) -> TrajectoryRecord:
    """Integrate d theta/dt = -grad L (or run Adam) for a generic loss callable."""
    theta = np.array(theta0, dtype=float)
    dt = config.dt
    record = TrajectoryRecord([], dict(metadata or {}))
    record.metadata["flow"] = asdict(config)

    loss, g = loss_and_grad(theta)
    _guard(loss, theta, 0)
    if not np.any(g):
        record.flags.append("trivial_dynamics")

    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    prev = None  # theta_{n-1}, for the central estimate under adam
    warned = False
    last_step = config.steps

    for n in range(last_step + 1):
        is_ckpt = n % config.stride == 0 or n == last_step or n < config.dense_steps
        if config.trajectory_bound is not None and np.linalg.norm(theta) > config.trajectory_bound:
            record.flags.append("trajectory_bound_violated")
            raise TrajectoryBoundError(
                f"|theta| = {np.linalg.norm(theta):.6g} > R = {config.trajectory_bound} at step {n}", record
            )

        if config.integrator == "gradient_flow_euler":
            nxt = theta - dt * g
        elif config.integrator == "gradient_flow_rk4":
            k1 = -g
            k2 = -loss_and_grad(theta + 0.5 * dt * k1)[1]
            k3 = -loss_and_grad(theta + 0.5 * dt * k2)[1]
            k4 = -loss_and_grad(theta + dt * k3)[1]
            nxt = theta + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
            v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
            mhat = m / (1 - ADAM_BETA1 ** (n + 1))
            vhat = v / (1 - ADAM_BETA2 ** (n + 1))
            nxt = theta - dt * mhat / (np.sqrt(vhat) + ADAM_EPS)

        if is_ckpt:
            if config.is_gradient_flow:
                rate = -g
            elif prev is None:
                rate = (nxt - theta) / dt
            else:
                rate = (nxt - prev) / (2 * dt)
            record.checkpoints.append(Checkpoint(n, n * dt, theta.copy(), loss, rate.copy(), g.copy()))
        if n == last_step:
            break

        prev, theta = theta, nxt
        new_loss, g = loss_and_grad(theta)
        _guard(new_loss, theta, n + 1)
        if config.integrator == "gradient_flow_euler" and new_loss > loss * (1 + 1e-12) and not warned:
            warnings.warn(
                f"loss increased at step {n + 1} ({loss:.6g} -> {new_loss:.6g}); dt={dt} may exceed the stable step",
                RuntimeWarning,
                stacklevel=2,
            )
            record.flags.append("step_size_warning")
            warned = True
        loss = new_loss
    return record


def integrate(spec: NetworkSpec, theta0, loss: LossKind, data: Dataset, config: FlowConfig) -> TrajectoryRecord:
    """Train the network on `data` under `loss` with the configured integrator."""
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != (spec.size,):
        raise ValueError(f"theta0 has length {theta0.size}, network needs {spec.size}")
    meta = {"widths": list(spec.widths), "activation": spec.activation, "loss": asdict(loss), "seed": config.seed}
    return integrate_field(theta0, lambda th: grad_loss(spec, th, loss, data), config, meta)


# ---------------------------------------------------------------------------
# half-life windows


def half_life_window_indices(values) -> list[tuple[int, int]]:
    """Greedy disjoint windows (i, j) with values[j] <= values[i] / 2.

    Each window starts where the previous one ended and closes at the first
    index reaching half the starting value.
    """
    vals = np.asarray(values, dtype=float)
    out = []
    i = 0
    while i < len(vals) - 1:
        hit = np.nonzero(vals[i + 1:] <= 0.5 * vals[i])[0]
        if hit.size == 0:
            break
        j = i + 1 + int(hit[0])
        out.append((i, j))
        i = j
    return out


def half_life_windows(trajectory, evaluator=None) -> list[tuple[float, float]]:
    """Half-life windows (T1, T2) of a trajectory.

    `evaluator(theta)` supplies the monitored quantity (the plain residual L);
    without it the stored training loss is used.  A pair of arrays
    (times, values) is accepted in place of a trajectory.
    """
    if isinstance(trajectory, TrajectoryRecord):
        times = trajectory.times
        if evaluator is None:
            values = trajectory.losses
        else:
            values = np.array([evaluator(c.theta) for c in trajectory.checkpoints])
    else:
        times, values = (np.asarray(a, dtype=float) for a in trajectory)
    if len(times) < 2:
        raise ValueError("need at least two checkpoints")
    return [(float(times[i]), float(times[j])) for i, j in half_life_window_indices(values)]


# ---------------------------------------------------------------------------
# checkpoint file
#
# layout (little endian):
#   magic b"FPTRAJ\0\0" | u32 version | u64 header length | header JSON (utf-8)
#   per checkpoint: i64 step | f64 t | f64 loss | N f64 theta | N f64 dtheta_dt | N f64 grad

MAGIC = b"FPTRAJ\x00\x00"
FORMAT_VERSION = 1


def save_trajectory(path, record: TrajectoryRecord, header_extra: dict | None = None) -> None:
    n_params = record.checkpoints[0].theta.size if record.checkpoints else 0
    header = {
        "format_version": FORMAT_VERSION,
        "n_params": n_params,
        "n_checkpoints": len(record.checkpoints),
        "metadata": record.metadata,
        "flags": record.flags,
    }
    if header_extra:
        header.update(header_extra)
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(hbytes)))
        fh.write(hbytes)
        for c in record.checkpoints:
            fh.write(struct.pack("<qdd", c.step, c.t, c.loss))
            for arr in (c.theta, c.dtheta_dt, c.grad):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_trajectory(path) -> tuple[TrajectoryRecord, dict]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a trajectory file")
        version, hlen = struct.unpack("<IQ", fh.read(12))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported trajectory format version {version}")
        header = json.loads(fh.read(hlen).decode())
        n = header["n_params"]
        cps = []
        for _ in range(header["n_checkpoints"]):
            step, t, loss = struct.unpack("<qdd", fh.read(24))
            arrs = [np.frombuffer(fh.read(8 * n), dtype="<f8").astype(float) for _ in range(3)]
            cps.append(Checkpoint(step, t, arrs[0], loss, arrs[1], arrs[2]))
        if fh.read(1):
            raise ValueError("trailing bytes in trajectory file")
    return TrajectoryRecord(cps, header["metadata"], list(header["flags"])), header
