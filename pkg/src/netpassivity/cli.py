"""Command-line front end.

Exit statuses: 0 success, 1 simulation diverged, 2 input error,
3 property-suite counterexample, 4 audit violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .analysis import passivity_report
from .graph_core import Digraph, GraphError, build_incidence, graph_report
from .network import CouplingMode
from .outputs import dumps, write_json, write_svg, write_trajectory_csv
from .scenario import Scenario, ScenarioError, bundled_scenarios, load_graph_document, load_scenario
from .simulate import SimulationDiverged, Trajectory, detect_convergence, simulate
from .spectral import analyze_sym_Lo, check_proposition1, check_proposition2_3, run_proposition_suite

log = logging.getLogger("netpassivity")

EXIT_OK = 0
EXIT_DIVERGED = 1
EXIT_INPUT = 2
EXIT_COUNTEREXAMPLE = 3
EXIT_AUDIT = 4


def graph_analysis(g: Digraph) -> dict[str, Any]:
    inc = build_incidence(g)
    return {
        "graph": g.to_dict(),
        "graph_report": graph_report(g, inc).to_dict(),
        "spectral": analyze_sym_Lo(inc).to_dict(),
        "proposition1": check_proposition1(g, inc),
        "proposition2_3": check_proposition2_3(g, inc),
    }


def analyze_graph_report(path: str) -> dict[str, Any]:
    g, digest, _ = load_graph_document(path)
    return {"scenario_hash": digest, "tool_version": __version__, **graph_analysis(g)}


def _with_overrides(sc: Scenario, dt: float | None, t_end: float | None) -> Scenario:
    changes = {k: v for k, v in (("dt", dt), ("t_end", t_end)) if v is not None}
    if not changes:
        return sc
    try:
        cfg = dataclasses.replace(sc.sim, **changes)
    except ValueError as exc:
        raise ScenarioError(str(exc), "command line") from None
    return dataclasses.replace(sc, sim=cfg)


def _trajectory_summary(traj: Trajectory) -> dict[str, Any]:
    settle = detect_convergence(traj)
    y_end = traj.y[-1]
    return {
        "settling_time": settle,
        "converged": settle is not None,
        "final_time": traj.final_time,
        "final_disagreement": float(traj.disagreement[-1]),
        "final_output_norm": float(np.linalg.norm(y_end)),
        "final_output_mean": float(y_end.mean()),
        "final_state": traj.final_state,
        "initial_output_mean": float(traj.y[0].mean()),
    }


def run_simulation(sc: Scenario, out_dir: Path | None = None, svg: bool = False,
                   mode: CouplingMode | None = None, audits: bool = True) -> tuple[int, dict[str, Any], Trajectory | None]:
    """Simulate a scenario and build its summary; writes files when ``out_dir`` is given."""
    system = sc.build(mode)
    meta = {"scenario_hash": sc.hash, "scenario": sc.name, "tool_version": __version__}
    summary: dict[str, Any] = {
        "scenario_hash": sc.hash,
        "tool_version": __version__,
        "scenario": sc.name,
        "mode": system.mode.value,
        "config": sc.sim.to_dict(),
        **{k: v for k, v in graph_analysis(sc.graph).items() if k in ("graph_report", "spectral")},
    }
    code = EXIT_OK
    try:
        traj = simulate(system, sc.x0, sc.sim, metadata=meta)
    except SimulationDiverged as exc:
        traj = exc.partial
        summary.update({"diverged": True, "last_finite_time": exc.last_time, "error": str(exc)})
        code = EXIT_DIVERGED
    else:
        summary["diverged"] = False
        summary.update(_trajectory_summary(traj))
        if audits:
            rep = passivity_report(system, traj)
            summary["theorem_condition"] = rep.theorem_condition
            summary["theorem_condition_gain_label"] = rep.theorem_condition_gain_label
            summary["audits"] = rep.to_dict()
    if out_dir is not None and traj is not None:
        csv_name = sc.outputs.get("csv_path", f"{sc.name}_trajectory.csv")
        sum_name = sc.outputs.get("summary_path", f"{sc.name}_summary.json")
        # names relative to out_dir keep the summary identical across output locations
        write_trajectory_csv(traj, out_dir / csv_name, sc.hash)
        files = {"csv": csv_name}
        if svg or "svg_path" in sc.outputs:
            svg_name = sc.outputs.get("svg_path", f"{sc.name}_outputs.svg")
            write_svg(traj, out_dir / svg_name, title=sc.name, scenario_hash=sc.hash)
            files["svg"] = svg_name
        files["summary"] = sum_name
        summary["files"] = files
        write_json(summary, out_dir / sum_name)
    return code, summary, traj


def run_audit(sc: Scenario, out_dir: Path | None = None) -> tuple[int, dict[str, Any]]:
    """Simulate in decomposed mode and run every dissipation audit."""
    code, summary, _ = run_simulation(sc, out_dir=None, mode=CouplingMode.DECOMPOSED_DIRECTED)
    doc = {
        "scenario_hash": sc.hash,
        "tool_version": __version__,
        "scenario": sc.name,
        "display_mode": sc.mode.value,
        "audit_mode": CouplingMode.DECOMPOSED_DIRECTED.value,
        **graph_analysis(sc.graph),
    }
    if code != EXIT_OK:
        doc.update({k: summary[k] for k in ("diverged", "last_finite_time", "error")})
        return code, doc
    audits = summary["audits"]
    doc.update({
        "theorem_condition": summary["theorem_condition"],
        "theorem_condition_gain_label": summary["theorem_condition_gain_label"],
        "passivity": audits,
        "violations": audits["failed_audits"],
        "settling_time": summary["settling_time"],
        "final_output_norm": summary["final_output_norm"],
    })
    if out_dir is not None:
        write_json(doc, out_dir / f"{sc.name}_audit.json")
    return (EXIT_AUDIT if audits["failed_audits"] else EXIT_OK), doc


def _emit(doc: dict[str, Any], out_dir: Path | None, filename: str):
    sys.stdout.write(dumps(doc))
    if out_dir is not None:
        write_json(doc, out_dir / filename)


def _cmd_analyze_graph(args) -> int:
    doc = analyze_graph_report(args.scenario)
    _emit(doc, args.out_dir, "graph_analysis.json")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    sc = _with_overrides(load_scenario(args.scenario), args.dt, args.t_end)
    code, summary, _ = run_simulation(sc, out_dir=args.out_dir, svg=args.svg)
    sys.stdout.write(dumps({k: v for k, v in summary.items() if k != "audits"}))
    if code == EXIT_DIVERGED:
        log.error("simulation diverged: %s", summary.get("error"))
    return code


def _cmd_audit(args) -> int:
    sc = _with_overrides(load_scenario(args.scenario), args.dt, args.t_end)
    code, doc = run_audit(sc, out_dir=args.out_dir)
    sys.stdout.write(dumps(doc))
    if code == EXIT_AUDIT:
        log.error("audit violations: %s", ", ".join(doc["violations"]))
    return code


def _cmd_prop_suite(args) -> int:
    if args.count < 1:
        raise ScenarioError("must be >= 1", "--count")
    if args.n_max < 2:
        raise ScenarioError("must be >= 2", "--n-max")
    report = {"tool_version": __version__, **run_proposition_suite(args.seed, args.count, args.n_max)}
    _emit(report, args.out_dir, f"prop_suite_seed{args.seed}.json")
    return EXIT_OK if report["all_pass"] else EXIT_COUNTEREXAMPLE


def _cmd_list(args) -> int:
    for name in bundled_scenarios():
        sys.stdout.write(name + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netpassivity", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True, overrides=False):
        if scenario:
            sp.add_argument("--scenario", required=True, help="scenario/graph JSON path or bundled scenario name")
        sp.add_argument("--out-dir", type=Path, default=None, help="directory for output files")
        if overrides:
            sp.add_argument("--dt", type=float, default=None)
            sp.add_argument("--t-end", type=float, default=None)
            sp.add_argument("--seed", type=int, default=None, help="recorded only; simulations are deterministic")

    sp = sub.add_parser("analyze-graph", help="graph report, sym(L_o) spectrum and proposition verdicts")
    common(sp)
    sp.set_defaults(func=_cmd_analyze_graph)

    sp = sub.add_parser("simulate", help="run a scenario, write CSV/summary (and SVG)")
    common(sp, overrides=True)
    sp.add_argument("--svg", action="store_true", help="also write an SVG plot of the outputs")
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("audit", help="simulate in decomposed mode and audit dissipation inequalities")
    common(sp, overrides=True)
    sp.set_defaults(func=_cmd_audit)

    sp = sub.add_parser("prop-suite", help="randomized proposition property suite")
    common(sp, scenario=False)
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--count", type=int, default=200)
    sp.add_argument("--n-max", type=int, default=8)
    sp.set_defaults(func=_cmd_prop_suite)

    sp = sub.add_parser("list-scenarios", help="names of the bundled scenarios")
    sp.set_defaults(func=_cmd_list)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, GraphError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
