"""Scenario documents: one JSON file describing graph, blocks, mode, x0 and run settings."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .graph_core import Digraph, GraphError
from .network import CouplingMode, NetworkError, NetworkSystem, assemble
from .simulate import SimConfig
from .systems import ModelError, build_block

__all__ = ["ScenarioError", "Scenario", "load_scenario", "parse_scenario", "scenario_hash",
           "bundled_scenarios", "bundled_path", "load_graph_document"]


class ScenarioError(ValueError):
    """Invalid scenario input. ``where`` names the offending field or ``line L, column C``."""

    def __init__(self, message: str, where: str | None = None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


def scenario_hash(doc: dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, compact separators)."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass
class Scenario:
    name: str
    graph: Digraph
    agents: list[dict[str, Any]]
    controllers: list[dict[str, Any]]
    mode: CouplingMode
    x0: np.ndarray
    sim: SimConfig
    outputs: dict[str, str] = field(default_factory=dict)
    description: str = ""
    document: dict[str, Any] = field(default_factory=dict, repr=False)
    hash: str = ""

    def build(self, mode: CouplingMode | str | None = None) -> NetworkSystem:
        agents = [build_block(a, "agent") for a in self.agents]
        ctrls = [build_block(c, "controller") for c in self.controllers]
        return assemble(self.graph, agents, ctrls, self.mode if mode is None else mode)


def _field(doc, key, where, required=True, default=None):
    if key not in doc:
        if required:
            raise ScenarioError(f"missing required field '{key}'", where or "document")
        return default
    return doc[key]


def _parse_graph(g, where="graph") -> Digraph:
    if not isinstance(g, dict):
        raise ScenarioError("expected an object with 'n_vertices' and 'edges'", where)
    n = _field(g, "n_vertices", where)
    edges = _field(g, "edges", where)
    if not isinstance(edges, list):
        raise ScenarioError("'edges' must be a list of [source, target] pairs", where)
    try:
        return Digraph(n, tuple(tuple(e) if isinstance(e, list) else e for e in edges))
    except GraphError as exc:
        loc = f"{where}.edges[{exc.edge_index}]" if exc.edge_index is not None else f"{where}.n_vertices"
        raise ScenarioError(str(exc), loc) from None


def _parse_blocks(spec, count: int, where: str) -> list[dict[str, Any]]:
    if isinstance(spec, dict):
        blocks = [copy.deepcopy(spec) for _ in range(count)]
    elif isinstance(spec, list):
        if len(spec) != count:
            raise ScenarioError(f"expected {count} entries, got {len(spec)}", where)
        blocks = spec
    else:
        raise ScenarioError("expected a block object or a list of them", where)
    for j, b in enumerate(blocks):
        if not isinstance(b, dict) or "type" not in b:
            raise ScenarioError("block needs a 'type'", f"{where}[{j}]")
        if "params" in b and not isinstance(b["params"], dict):
            raise ScenarioError("'params' must be an object", f"{where}[{j}].params")
    return blocks


def parse_scenario(doc: dict[str, Any], name_hint: str = "scenario") -> Scenario:
    """Validate ``doc`` fully (including block construction and assembly)."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    graph = _parse_graph(_field(doc, "graph", None))
    agents = _parse_blocks(_field(doc, "agents", None), graph.n_vertices, "agents")
    ctrls = _parse_blocks(_field(doc, "controllers", None, required=False, default=[]), graph.n_edges, "controllers")
    try:
        mode = CouplingMode.parse(doc.get("mode", "directed_out"))
    except NetworkError as exc:
        raise ScenarioError(str(exc), "mode") from None
    sim_doc = doc.get("sim", {}) or {}
    if not isinstance(sim_doc, dict):
        raise ScenarioError("'sim' must be an object", "sim")
    unknown = set(sim_doc) - set(SimConfig.__dataclass_fields__)
    if unknown:
        raise ScenarioError(f"unknown keys {sorted(unknown)}", "sim")
    try:
        sim = SimConfig(**sim_doc)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc), "sim") from None
    outputs = doc.get("outputs", {}) or {}
    if not isinstance(outputs, dict):
        raise ScenarioError("'outputs' must be an object", "outputs")

    sc = Scenario(
        name=str(doc.get("name", name_hint)),
        graph=graph,
        agents=agents,
        controllers=ctrls,
        mode=mode,
        x0=np.zeros(0),
        sim=sim,
        outputs={k: str(v) for k, v in outputs.items() if v},
        description=str(doc.get("description", "")),
        document=doc,
        hash=scenario_hash(doc),
    )
    for kind, blocks in (("agents", agents), ("controllers", ctrls)):
        for j, b in enumerate(blocks):
            try:
                build_block(b, kind[:-1] if kind == "agents" else "controller")
            except ModelError as exc:
                raise ScenarioError(str(exc), f"{kind}[{j}]") from None
    try:
        system = sc.build()
    except (NetworkError, ModelError) as exc:
        raise ScenarioError(str(exc)) from None
    x0 = _field(doc, "x0", None)
    try:
        x0 = np.asarray(x0, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError("must be a list of numbers", "x0") from None
    if x0.shape != (system.n_states,):
        raise ScenarioError(f"expected {system.n_states} initial values (agent then controller states), got {x0.size}", "x0")
    if not np.isfinite(x0).all():
        raise ScenarioError("initial state must be finite", "x0")
    sc.x0 = x0
    return sc


def _read_json(path: Path) -> Any:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read file: {exc.strerror}", str(path)) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(exc.msg, f"{path}: line {exc.lineno}, column {exc.colno}") from None


def bundled_scenarios() -> list[str]:
    root = resources.files("netpassivity") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("netpassivity") / "scenarios" / f"{name}.json"))


def _resolve(path_or_name: str | Path) -> Path:
    p = Path(path_or_name)
    if p.exists():
        return p
    if isinstance(path_or_name, str) and path_or_name in bundled_scenarios():
        return bundled_path(path_or_name)
    raise ScenarioError(f"no such file or bundled scenario (bundled: {', '.join(bundled_scenarios())})", str(path_or_name))


def load_scenario(path_or_name: str | Path) -> Scenario:
    """Load a scenario from a path, or by bundled name (e.g. ``"neural_linear"``)."""
    p = _resolve(path_or_name)
    return parse_scenario(_read_json(p), name_hint=p.stem)


def load_graph_document(path_or_name: str | Path) -> tuple[Digraph, str, Scenario | None]:
    """Accept either a scenario or a bare ``{"n_vertices", "edges"}`` graph file."""
    p = _resolve(path_or_name)
    doc = _read_json(p)
    if isinstance(doc, dict) and "graph" in doc:
        sc = parse_scenario(doc, name_hint=p.stem)
        return sc.graph, sc.hash, sc
    if isinstance(doc, dict) and "edges" in doc:
        return _parse_graph(doc, "document"), scenario_hash(doc), None
    raise ScenarioError("expected a scenario (with 'graph') or a graph object (with 'n_vertices' and 'edges')", str(p))
