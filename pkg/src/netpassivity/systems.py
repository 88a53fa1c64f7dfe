"""SISO agent and edge-controller models.

Agents follow ``x' = f(x, u), y = h(x)`` (no feedthrough); controllers follow
``eta' = phi(eta, zeta), mu = psi(eta, zeta)`` and may have feedthrough.

Built-in models are written against numpy broadcasting and flagged
``vectorized``: the network evaluates all blocks that share the same
functions in one call, passing parameter arrays in place of scalars.
State conventions seen by the callables:

* ``state_dim == 0``: an empty array (ignored by the built-ins),
* ``state_dim == 1``: a float (or a 1-D batch when vectorized),
* ``state_dim > 1``: a 1-D array of length ``state_dim``.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable, Mapping

import numpy as np

__all__ = [
    "ModelError",
    "AgentModel",
    "ControllerModel",
    "make_integrator",
    "make_leaky_tanh_neuron",
    "make_static_gain",
    "make_rectified_gain",
    "make_custom",
    "BUILTIN_AGENTS",
    "BUILTIN_CONTROLLERS",
    "build_block",
]


class ModelError(ValueError):
    pass


def _empty_params() -> Mapping[str, float]:
    return MappingProxyType({})


@dataclass(frozen=True, eq=False)
class _Block:
    state_dim: int
    storage: Callable[..., Any] | None = None
    storage_grad: Callable[..., Any] | None = None
    declared_index: float | None = None
    params: Mapping[str, float] = field(default_factory=_empty_params)
    name: str = "custom"
    vectorized: bool = False

    def __post_init__(self):
        if self.state_dim < 0:
            raise ModelError("state_dim must be non-negative")
        if self.declared_index is not None and not np.isfinite(self.declared_index):
            raise ModelError("declared_index must be finite")
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))

    @property
    def has_storage(self) -> bool:
        return self.storage is not None or self.state_dim == 0

    def storage_value(self, state):
        if self.state_dim == 0:
            return 0.0
        if self.storage is None:
            raise ModelError(f"{self.name}: no storage function")
        return self.storage(state, **self.params)

    def storage_gradient(self, state, eps: float = 1e-6):
        """Gradient of the storage; central differences when no analytic gradient is given."""
        if self.state_dim == 0:
            return np.zeros(0)
        if self.storage_grad is not None:
            return self.storage_grad(state, **self.params)
        if self.state_dim == 1:
            s = float(state)
            return (self.storage_value(s + eps) - self.storage_value(s - eps)) / (2 * eps)
        s = np.asarray(state, dtype=float)
        g = np.empty_like(s)
        for i in range(s.size):
            d = np.zeros_like(s)
            d[i] = eps
            g[i] = (self.storage_value(s + d) - self.storage_value(s - d)) / (2 * eps)
        return g

    def _storage_rate(self, state, deriv):
        """Chain rule ``dV/dt = grad V . state'``."""
        if self.state_dim == 0:
            return 0.0
        return float(np.dot(np.atleast_1d(self.storage_gradient(state)), np.atleast_1d(deriv)))

    def _storage_rate_fd(self, state, deriv, rel_step: float = 1e-4):
        """Central difference of the storage along ``state'``; independent of ``storage_grad``.

        The state-space step is ``rel_step * max(1, |state|)``.
        """
        if self.state_dim == 0:
            return 0.0
        s = np.asarray(state, dtype=float)
        d = np.asarray(deriv, dtype=float)
        dn = float(np.linalg.norm(d))
        if dn == 0.0:
            return 0.0
        delta = rel_step * max(1.0, float(np.linalg.norm(s))) / dn
        if self.state_dim == 1:
            s, d = float(s), float(d)
        hi = self.storage_value(s + delta * d)
        lo = self.storage_value(s - delta * d)
        return float((hi - lo) / (2 * delta))


@dataclass(frozen=True, eq=False)
class AgentModel(_Block):
    """Agent ``x' = f(x, u), y = h(x)`` with optional storage ``Q`` and OP index."""

    f: Callable[..., Any] = None  # type: ignore[assignment]
    h: Callable[..., Any] = None  # type: ignore[assignment]

    def __post_init__(self):
        super().__post_init__()
        if self.f is None or self.h is None:
            raise ModelError("agent needs both f and h")

    def derivative(self, x, u):
        return self.f(x, u, **self.params)

    def output(self, x):
        return self.h(x, **self.params)

    def storage_rate(self, x, u, finite_difference: bool = False) -> float:
        fx = self.derivative(x, u)
        if finite_difference:
            return self._storage_rate_fd(x, fx)
        return self._storage_rate(x, fx)


@dataclass(frozen=True, eq=False)
class ControllerModel(_Block):
    """Edge controller ``eta' = phi(eta, zeta), mu = psi(eta, zeta)``."""

    phi: Callable[..., Any] | None = None
    psi: Callable[..., Any] = None  # type: ignore[assignment]

    def __post_init__(self):
        super().__post_init__()
        if self.psi is None:
            raise ModelError("controller needs psi")
        if self.state_dim > 0 and self.phi is None:
            raise ModelError("dynamic controller needs phi")

    def derivative(self, eta, zeta):
        if self.state_dim == 0:
            return np.zeros(0)
        return self.phi(eta, zeta, **self.params)

    def output(self, eta, zeta):
        return self.psi(eta, zeta, **self.params)

    def storage_rate(self, eta, zeta, finite_difference: bool = False) -> float:
        if self.state_dim == 0:
            return 0.0
        d = self.derivative(eta, zeta)
        if finite_difference:
            return self._storage_rate_fd(eta, d)
        return self._storage_rate(eta, d)


# -- built-in dynamics (broadcast-safe) -------------------------------------

def _integrator_f(x, u):
    return u + 0.0 * x


def _identity_h(x):
    return x


def _half_square(x):
    return 0.5 * x * x


def _identity_grad(x):
    return x


def _leaky_f(x, u, a):
    return -a * x + u


def _tanh_h(x, a):
    return np.tanh(x)


def _log_cosh(x, a):
    # log(cosh x) without overflow for large |x|
    return np.logaddexp(x, -x) - np.log(2.0)


def _log_cosh_grad(x, a):
    return np.tanh(x)


def _gain_psi(eta, zeta, b):
    return b * zeta


def _rectified_psi(eta, zeta, b):
    return b * np.maximum(zeta, 0.0)


def _check_positive(value, label: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ModelError(f"{label} must be a positive real, got {value!r}") from None
    if not np.isfinite(v) or v <= 0:
        raise ModelError(f"{label} must be a positive real, got {value!r}")
    return v


def make_integrator() -> AgentModel:
    """``x' = u, y = x`` with storage ``x^2 / 2``; passive but not strictly (index 0)."""
    return AgentModel(
        state_dim=1,
        f=_integrator_f,
        h=_identity_h,
        storage=_half_square,
        storage_grad=_identity_grad,
        declared_index=0.0,
        name="integrator",
        vectorized=True,
    )


def make_leaky_tanh_neuron(a: float, declared_index: float | None = None) -> AgentModel:
    """Leaky neuron ``x' = -a x + u, y = tanh(x)``.

    With storage ``Q(x) = log cosh x`` one has ``Q' = y x'`` and
    ``u y - Q' = a x tanh(x) >= a tanh(x)^2``, so the neuron is OP with
    index ``a``. ``declared_index`` overrides the claimed index (used to
    build deliberately false claims for audit testing).
    """
    a = _check_positive(a, "a")
    return AgentModel(
        state_dim=1,
        f=_leaky_f,
        h=_tanh_h,
        storage=_log_cosh,
        storage_grad=_log_cosh_grad,
        declared_index=a if declared_index is None else float(declared_index),
        params={"a": a},
        name="leaky_tanh",
        vectorized=True,
    )


def make_static_gain(b: float, declared_index: float | None = None) -> ControllerModel:
    """Memoryless ``mu = b zeta``; ``zeta mu = (1/b) mu^2`` so the OP index is ``1/b``."""
    b = _check_positive(b, "b")
    return ControllerModel(
        state_dim=0,
        psi=_gain_psi,
        declared_index=1.0 / b if declared_index is None else float(declared_index),
        params={"b": b},
        name="static_gain",
        vectorized=True,
    )


def make_rectified_gain(b: float, declared_index: float | None = None) -> ControllerModel:
    """Rectifier ``mu = b max(zeta, 0)``; OP index ``1/b`` like the linear gain."""
    b = _check_positive(b, "b")
    return ControllerModel(
        state_dim=0,
        psi=_rectified_psi,
        declared_index=1.0 / b if declared_index is None else float(declared_index),
        params={"b": b},
        name="rectified_gain",
        vectorized=True,
    )


def _n_required_positional(fn: Callable[..., Any]) -> int | None:
    try:
        sig = inspect.signature(fn)
    except (TypeError, ValueError):
        return None
    count = 0
    for p in sig.parameters.values():
        if p.kind is p.VAR_POSITIONAL:
            return None
        if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD) and p.default is p.empty:
            count += 1
    return count


def make_custom(
    state_dim: int,
    dynamics: Callable[..., Any] | None,
    output: Callable[..., Any],
    *,
    kind: str = "agent",
    storage: Callable[..., Any] | None = None,
    storage_grad: Callable[..., Any] | None = None,
    declared_index: float | None = None,
    name: str = "custom",
) -> AgentModel | ControllerModel:
    """Wrap user dynamics as an agent (``kind="agent"``) or controller.

    Agents must not have feedthrough: ``output`` is called as ``h(x)`` and a
    callable requiring a second positional argument is rejected, since an
    agent output depending on ``u`` would close an algebraic loop through
    controllers with feedthrough.
    """
    if kind == "agent":
        if dynamics is None:
            raise ModelError("agent needs dynamics f(x, u)")
        nreq = _n_required_positional(output)
        if nreq is not None and nreq >= 2:
            raise ModelError(f"{name}: agent output must depend on the state only (h(x)); got {nreq} required arguments")
        return AgentModel(
            state_dim=int(state_dim),
            f=dynamics,
            h=output,
            storage=storage,
            storage_grad=storage_grad,
            declared_index=declared_index,
            name=name,
        )
    if kind == "controller":
        return ControllerModel(
            state_dim=int(state_dim),
            phi=dynamics,
            psi=output,
            storage=storage,
            storage_grad=storage_grad,
            declared_index=declared_index,
            name=name,
        )
    raise ModelError(f"kind must be 'agent' or 'controller', got {kind!r}")


BUILTIN_AGENTS: dict[str, Callable[..., AgentModel]] = {
    "integrator": make_integrator,
    "leaky_tanh": make_leaky_tanh_neuron,
}

BUILTIN_CONTROLLERS: dict[str, Callable[..., ControllerModel]] = {
    "static_gain": make_static_gain,
    "rectified_gain": make_rectified_gain,
}


def build_block(spec: Mapping[str, Any], kind: str) -> AgentModel | ControllerModel:
    """Instantiate a built-in from ``{"type": ..., "params": {...}, "declared_index": ...}``."""
    table = BUILTIN_AGENTS if kind == "agent" else BUILTIN_CONTROLLERS
    typ = spec.get("type")
    if typ not in table:
        raise ModelError(f"unknown {kind} type {typ!r}; expected one of {sorted(table)}")
    params = dict(spec.get("params") or {})
    if "declared_index" in spec and spec["declared_index"] is not None:
        params["declared_index"] = spec["declared_index"]
    try:
        return table[typ](**params)
    except TypeError as exc:
        raise ModelError(f"bad parameters for {kind} {typ!r}: {exc}") from None
