"""Closed-loop assembly of agents, edge controllers and a digraph.

Coupling modes (``p = 0`` throughout):

* ``UNDIRECTED``: ``zeta = E^T y``, ``u = -E mu`` (diffusive coupling).
* ``DIRECTED_OUT``: ``zeta = E^T y``, ``u = -B_o mu``.
* ``DECOMPOSED_DIRECTED``: same dynamics as ``DIRECTED_OUT`` but also records
  ``w = B_i mu`` and ``z = E mu``, with ``u = w - z``.

Combined state layout: agent states in vertex order, then controller states
in edge order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .graph_core import Digraph, IncidenceSet, build_incidence
from .systems import AgentModel, ControllerModel, ModelError, _n_required_positional

__all__ = [
    "CouplingMode",
    "NetworkError",
    "NonFiniteSignal",
    "Signals",
    "NetworkSystem",
    "assemble",
    "signal_map",
    "vector_field",
]


class CouplingMode(str, enum.Enum):
    UNDIRECTED = "undirected"
    DIRECTED_OUT = "directed_out"
    DECOMPOSED_DIRECTED = "decomposed_directed"

    @classmethod
    def parse(cls, value: "str | CouplingMode") -> "CouplingMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"directedout": "directed_out", "decomposeddirected": "decomposed_directed", "decomposed": "decomposed_directed"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise NetworkError(f"unknown coupling mode {value!r}; expected one of {[m.value for m in cls]}") from None


class NetworkError(ValueError):
    pass


class NonFiniteSignal(ArithmeticError):
    """A block produced a NaN or inf."""

    def __init__(self, message: str, block: str | None = None):
        super().__init__(message)
        self.block = block


@dataclass(frozen=True, eq=False)
class Signals:
    u: np.ndarray
    y: np.ndarray
    zeta: np.ndarray
    mu: np.ndarray
    w: np.ndarray | None = None
    z: np.ndarray | None = None


class _Group:
    """Blocks sharing the same callables, evaluated together.

    ``idx``: block indices; ``sidx``: state indices into the combined vector
    (length ``k`` for scalar-state groups, ``None`` for stateless ones).
    """

    __slots__ = ("model", "idx", "sidx", "slices", "params", "batched")

    def __init__(self, model, idx, sidx, slices, params, batched):
        self.model = model
        self.idx = idx
        self.sidx = sidx
        self.slices = slices
        self.params = params
        self.batched = batched


def _group_key(model, kind: str):
    if kind == "agent":
        return (model.f, model.h, model.state_dim, tuple(sorted(model.params)))
    return (model.phi, model.psi, model.state_dim, tuple(sorted(model.params)))


def _make_groups(models: Sequence, offsets: Sequence[int], kind: str) -> list[_Group]:
    groups: list[_Group] = []
    buckets: dict[Any, list[int]] = {}
    for i, mdl in enumerate(models):
        if mdl.vectorized and (mdl.state_dim == 1 or (kind == "controller" and mdl.state_dim == 0)):
            buckets.setdefault(_group_key(mdl, kind), []).append(i)
        else:
            sl = slice(offsets[i], offsets[i] + mdl.state_dim)
            groups.append(_Group(mdl, np.array([i]), None, [sl], [dict(mdl.params)], False))
    for members in buckets.values():
        mdl = models[members[0]]
        idx = np.array(members, dtype=np.intp)
        sidx = np.array([offsets[i] for i in members], dtype=np.intp) if mdl.state_dim == 1 else None
        params = {k: np.array([models[i].params[k] for i in members], dtype=float) for k in mdl.params}
        groups.append(_Group(mdl, idx, sidx, None, params, True))
    return groups


class NetworkSystem:
    """Agents on vertices, controllers on edges, coupled over ``graph``.

    Build with :func:`assemble`. Instances are treated as immutable.
    """

    def __init__(self, graph: Digraph, inc: IncidenceSet, agents: Sequence[AgentModel],
                 controllers: Sequence[ControllerModel], mode: CouplingMode):
        self.graph = graph
        self.inc = inc
        self.agents = tuple(agents)
        self.controllers = tuple(controllers)
        self.mode = mode
        self.n = graph.n_vertices
        self.m = graph.n_edges

        a_off = np.concatenate([[0], np.cumsum([a.state_dim for a in self.agents])]).astype(int)
        self.n_agent_states = int(a_off[-1])
        c_off = (self.n_agent_states + np.concatenate([[0], np.cumsum([c.state_dim for c in self.controllers])])).astype(int)
        self.n_states = int(c_off[-1])
        self.agent_offsets = a_off[:-1]
        self.controller_offsets = c_off[:-1]

        self._E = inc.E.astype(float)
        self._ET = np.ascontiguousarray(self._E.T)
        self._Bo = inc.B_o.astype(float)
        self._Bi = inc.B_i.astype(float)
        self._N = self._E if mode is CouplingMode.UNDIRECTED else self._Bo
        self._agent_groups = _make_groups(self.agents, self.agent_offsets, "agent")
        self._ctrl_groups = _make_groups(self.controllers, self.controller_offsets, "controller")
        self._empty = np.zeros(0)

    @property
    def decomposed(self) -> bool:
        return self.mode is CouplingMode.DECOMPOSED_DIRECTED

    def with_mode(self, mode: CouplingMode | str) -> "NetworkSystem":
        return NetworkSystem(self.graph, self.inc, self.agents, self.controllers, CouplingMode.parse(mode))

    # -- state helpers ------------------------------------------------------
    def agent_state(self, state: np.ndarray, i: int):
        d = self.agents[i].state_dim
        o = self.agent_offsets[i]
        if d == 1:
            return float(state[o])
        return state[o:o + d]

    def controller_state(self, state: np.ndarray, k: int):
        d = self.controllers[k].state_dim
        o = self.controller_offsets[k]
        if d == 1:
            return float(state[o])
        return state[o:o + d]

    def agent_storage(self, state: np.ndarray) -> np.ndarray:
        return np.array([float(a.storage_value(self.agent_state(state, i))) for i, a in enumerate(self.agents)])

    def controller_storage(self, state: np.ndarray) -> np.ndarray:
        return np.array([float(c.storage_value(self.controller_state(state, k))) for k, c in enumerate(self.controllers)])

    # -- evaluation ---------------------------------------------------------
    def _outputs(self, state: np.ndarray) -> np.ndarray:
        y = np.empty(self.n)
        for g in self._agent_groups:
            mdl = g.model
            if g.batched:
                y[g.idx] = mdl.h(state[g.sidx], **g.params)
            else:
                x = state[g.slices[0]]
                y[g.idx[0]] = mdl.h(float(x[0]) if mdl.state_dim == 1 else x, **g.params[0])
        return y

    def _controller_outputs(self, state: np.ndarray, zeta: np.ndarray) -> np.ndarray:
        mu = np.empty(self.m)
        for g in self._ctrl_groups:
            mdl = g.model
            if g.batched:
                eta = state[g.sidx] if g.sidx is not None else self._empty
                mu[g.idx] = mdl.psi(eta, zeta[g.idx], **g.params)
            else:
                k = g.idx[0]
                eta = state[g.slices[0]]
                mu[k] = mdl.psi(float(eta[0]) if mdl.state_dim == 1 else eta, float(zeta[k]), **g.params[0])
        return mu

    def _locate_nonfinite(self, kind: str, values: np.ndarray) -> str:
        j = int(np.flatnonzero(~np.isfinite(values))[0])
        if kind == "mu":
            return f"controller on edge {j + 1} {self.graph.edges[j]} ({self.controllers[j].name})"
        return f"agent {j + 1} ({self.agents[j].name})"

    def _state_owner(self, j: int) -> str:
        if j < self.n_agent_states:
            i = int(np.searchsorted(self.agent_offsets, j, side="right") - 1)
            return f"agent {i + 1} ({self.agents[i].name})"
        k = int(np.searchsorted(self.controller_offsets, j, side="right") - 1)
        return f"controller on edge {k + 1} {self.graph.edges[k]} ({self.controllers[k].name})"

    def _check(self, kind: str, values: np.ndarray):
        if not np.isfinite(values).all():
            who = self._locate_nonfinite(kind, values)
            raise NonFiniteSignal(f"non-finite {kind} produced by {who}", who)

    def signals(self, state: np.ndarray) -> Signals:
        state = self._validate_state(state)
        y = self._outputs(state)
        self._check("y", y)
        zeta = self._ET @ y
        mu = self._controller_outputs(state, zeta)
        self._check("mu", mu)
        u = -(self._N @ mu)
        if self.decomposed:
            w = self._Bi @ mu
            z = self._E @ mu
            return Signals(u=u, y=y, zeta=zeta, mu=mu, w=w, z=z)
        return Signals(u=u, y=y, zeta=zeta, mu=mu)

    def _validate_state(self, state) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        if state.shape != (self.n_states,):
            raise NetworkError(f"combined state must have shape ({self.n_states},), got {state.shape}")
        return state

    def rhs(self, state: np.ndarray) -> np.ndarray:
        """Unchecked vector field for the integrator's inner loop."""
        y = self._outputs(state)
        zeta = self._ET @ y
        mu = self._controller_outputs(state, zeta)
        u = -(self._N @ mu)
        dx = np.empty(self.n_states)
        for g in self._agent_groups:
            mdl = g.model
            if g.batched:
                dx[g.sidx] = mdl.f(state[g.sidx], u[g.idx], **g.params)
            else:
                i = g.idx[0]
                sl = g.slices[0]
                x = state[sl]
                dx[sl] = mdl.f(float(x[0]) if mdl.state_dim == 1 else x, float(u[i]), **g.params[0])
        for g in self._ctrl_groups:
            mdl = g.model
            if mdl.state_dim == 0:
                continue
            if g.batched:
                dx[g.sidx] = mdl.phi(state[g.sidx], zeta[g.idx], **g.params)
            else:
                k = g.idx[0]
                sl = g.slices[0]
                eta = state[sl]
                dx[sl] = mdl.phi(float(eta[0]) if mdl.state_dim == 1 else eta, float(zeta[k]), **g.params[0])
        return dx

    def vector_field(self, state) -> np.ndarray:
        state = self._validate_state(state)
        s = self.signals(state)
        self._check("u", s.u)
        dx = self.rhs(state)
        if not np.isfinite(dx).all():
            j = int(np.flatnonzero(~np.isfinite(dx))[0])
            who = self._state_owner(j)
            raise NonFiniteSignal(f"non-finite derivative produced by {who}", who)
        return dx

    def __repr__(self):
        return f"NetworkSystem(n={self.n}, m={self.m}, mode={self.mode.value}, states={self.n_states})"


def assemble(g: Digraph, agents: Sequence[AgentModel], controllers: Sequence[ControllerModel],
             mode: CouplingMode | str = CouplingMode.DIRECTED_OUT) -> NetworkSystem:
    """Validate block counts and types and build a :class:`NetworkSystem`."""
    mode = CouplingMode.parse(mode)
    agents = list(agents)
    controllers = list(controllers)
    if len(agents) != g.n_vertices:
        raise NetworkError(f"expected {g.n_vertices} agents (one per vertex), got {len(agents)}")
    if len(controllers) != g.n_edges:
        raise NetworkError(f"expected {g.n_edges} controllers (one per edge), got {len(controllers)}")
    for i, a in enumerate(agents):
        if not isinstance(a, AgentModel):
            raise NetworkError(f"agent {i + 1} is not an AgentModel")
        if a.h is not None:
            nreq = _n_required_positional(a.h)
            if nreq is not None and nreq - len(a.params) >= 2:
                raise ModelError(f"agent {i + 1} ({a.name}) has feedthrough: output must be h(x)")
    for k, c in enumerate(controllers):
        if not isinstance(c, ControllerModel):
            raise NetworkError(f"controller {k + 1} is not a ControllerModel")
    return NetworkSystem(g, build_incidence(g), agents, controllers, mode)


def signal_map(sys: NetworkSystem, combined_state) -> Signals:
    """All interconnection signals at ``combined_state`` (order ``y -> zeta -> mu -> u``)."""
    return sys.signals(combined_state)


def vector_field(sys: NetworkSystem, combined_state) -> np.ndarray:
    return sys.vector_field(combined_state)
