"""Deterministic fixed-step RK4 integration of a network system."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .network import NetworkSystem

__all__ = [
    "SimConfig",
    "Trajectory",
    "SimulationDiverged",
    "simulate",
    "rk4_step",
    "disagreement_norm",
    "detect_convergence",
]


class SimulationDiverged(RuntimeError):
    """The state became non-finite. ``last_time`` is the last time with a finite state."""

    def __init__(self, message: str, last_time: float, partial: "Trajectory | None" = None):
        super().__init__(message)
        self.last_time = last_time
        self.partial = partial


@dataclass(frozen=True)
class SimConfig:
    t_end: float = 30.0
    dt: float = 1e-3
    record_stride: int = 10
    convergence_tol: float = 1e-3
    dwell_time: float = 1.0

    def __post_init__(self):
        for name in ("t_end", "dt", "convergence_tol", "dwell_time"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive real, got {v!r}")
        if not self.dt < self.t_end:
            raise ValueError(f"dt ({self.dt}) must be smaller than t_end ({self.t_end})")
        if isinstance(self.record_stride, bool) or not isinstance(self.record_stride, (int, np.integer)) or self.record_stride < 1:
            raise ValueError(f"record_stride must be a positive integer, got {self.record_stride!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def disagreement_norm(y: np.ndarray) -> np.ndarray:
    """``||(I - 11^T/n) y||`` row-wise for a (samples, n) array, or for one vector."""
    y = np.asarray(y, dtype=float)
    return np.linalg.norm(y - y.mean(axis=-1, keepdims=True), axis=-1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled closed-loop signals; row ``i`` of every array is time ``times[i]``.

    ``final_state`` is the state at ``t_end`` even when ``t_end`` is not a
    multiple of the recording interval.
    """

    times: np.ndarray
    states: np.ndarray
    y: np.ndarray
    u: np.ndarray
    zeta: np.ndarray
    mu: np.ndarray
    w: np.ndarray | None
    z: np.ndarray | None
    disagreement: np.ndarray
    final_time: float
    final_state: np.ndarray
    config: SimConfig
    metadata: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def decomposed(self) -> bool:
        return self.w is not None

    def slice(self, start: int = 0, stop: int | None = None) -> "Trajectory":
        sl = slice(start, stop)
        return Trajectory(
            times=self.times[sl], states=self.states[sl], y=self.y[sl], u=self.u[sl],
            zeta=self.zeta[sl], mu=self.mu[sl],
            w=None if self.w is None else self.w[sl], z=None if self.z is None else self.z[sl],
            disagreement=self.disagreement[sl], final_time=self.final_time,
            final_state=self.final_state, config=self.config, metadata=dict(self.metadata),
        )


def rk4_step(f, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + (0.5 * h) * k1)
    k3 = f(x + (0.5 * h) * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


class _Recorder:
    def __init__(self, sys: NetworkSystem, capacity: int):
        self.sys = sys
        n, m = sys.n, sys.m
        self.times = np.empty(capacity)
        self.states = np.empty((capacity, sys.n_states))
        self.y = np.empty((capacity, n))
        self.u = np.empty((capacity, n))
        self.zeta = np.empty((capacity, m))
        self.mu = np.empty((capacity, m))
        self.w = np.empty((capacity, n)) if sys.decomposed else None
        self.z = np.empty((capacity, n)) if sys.decomposed else None
        self.count = 0

    def record(self, t: float, x: np.ndarray):
        i = self.count
        s = self.sys.signals(x)
        self.times[i] = t
        self.states[i] = x
        self.y[i] = s.y
        self.u[i] = s.u
        self.zeta[i] = s.zeta
        self.mu[i] = s.mu
        if self.w is not None:
            self.w[i] = s.w
            self.z[i] = s.z
        self.count += 1

    def build(self, final_time, final_state, cfg, metadata) -> Trajectory:
        c = self.count
        return Trajectory(
            times=self.times[:c].copy(), states=self.states[:c].copy(), y=self.y[:c].copy(),
            u=self.u[:c].copy(), zeta=self.zeta[:c].copy(), mu=self.mu[:c].copy(),
            w=None if self.w is None else self.w[:c].copy(),
            z=None if self.z is None else self.z[:c].copy(),
            disagreement=disagreement_norm(self.y[:c]) if c else np.zeros(0),
            final_time=float(final_time), final_state=np.array(final_state, dtype=float),
            config=cfg, metadata=dict(metadata or {}),
        )


def simulate(sys: NetworkSystem, x0, cfg: SimConfig | None = None,
             metadata: dict[str, Any] | None = None) -> Trajectory:
    """Integrate ``sys`` from ``x0`` with classical RK4 at fixed step ``cfg.dt``.

    Signals are recorded at ``t = k * dt * record_stride``. Raises
    :class:`SimulationDiverged` (carrying the partial trajectory) when the
    state stops being finite.
    """
    cfg = cfg or SimConfig()
    x = np.array(x0, dtype=float)
    if x.shape != (sys.n_states,):
        raise ValueError(f"x0 must have length {sys.n_states}, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("x0 must be finite")
    n_steps = cfg.n_steps
    stride = cfg.record_stride
    h = cfg.dt
    rec = _Recorder(sys, n_steps // stride + 1)
    rec.record(0.0, x)
    f = sys.rhs
    isfinite = np.isfinite
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n_steps + 1):
            x_new = rk4_step(f, x, h)
            if not isfinite(x_new).all():
                last = (k - 1) * h
                partial = rec.build(last, x, cfg, metadata)
                raise SimulationDiverged(f"state became non-finite after t = {last:.6g}", last, partial)
            x = x_new
            if k % stride == 0:
                rec.record(k * h, x)
    return rec.build(n_steps * h, x, cfg, metadata)


def detect_convergence(traj: Trajectory, tol: float | None = None, dwell: float | None = None) -> float | None:
    """Earliest sample time ``t*`` with disagreement ``<= tol`` on all of ``[t*, t* + dwell]``.

    The window must lie inside the recorded horizon. Returns ``None`` if no
    such time exists.
    """
    tol = traj.config.convergence_tol if tol is None else tol
    dwell = traj.config.dwell_time if dwell is None else dwell
    t = traj.times
    if t.size == 0:
        return None
    bad = ~(traj.disagreement <= tol)
    # number of bad samples in t[:i]
    nbad = np.concatenate([[0], np.cumsum(bad)])
    eps = 1e-9 * max(1.0, abs(t[-1]))
    ends = np.searchsorted(t, t + dwell + eps, side="right")
    for i in range(t.size):
        if t[i] + dwell > t[-1] + eps:
            break
        if nbad[ends[i]] - nbad[i] == 0:
            return float(t[i])
    return None
