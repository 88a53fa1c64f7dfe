"""Simulation and passivity auditing of multi-agent networks over directed graphs."""

__version__ = "0.1.0"

from .graph_core import (  # noqa: E402
    Digraph,
    GraphError,
    GraphReport,
    IncidenceSet,
    build_incidence,
    globally_reachable_nodes,
    graph_report,
    is_balanced,
)
from .spectral import SymLoAnalysis, analyze_sym_Lo, check_proposition1, check_proposition2_3  # noqa: E402
from .systems import (  # noqa: E402
    AgentModel,
    ControllerModel,
    ModelError,
    make_custom,
    make_integrator,
    make_leaky_tanh_neuron,
    make_rectified_gain,
    make_static_gain,
)
from .network import CouplingMode, NetworkSystem, Signals, assemble, signal_map, vector_field  # noqa: E402
from .simulate import SimConfig, SimulationDiverged, Trajectory, detect_convergence, simulate  # noqa: E402
from .analysis import (  # noqa: E402
    PassivityReport,
    ProjectionOps,
    audit_agent_inequality,
    audit_controller_inequality,
    audit_theorem_dissipation,
    check_theorem_condition,
    estimate_op_index,
    passivity_report,
    project_disagreement,
)
from .scenario import Scenario, load_scenario  # noqa: E402
