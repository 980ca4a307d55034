"""Distributed averaging protocols over unreliable directed links.

Three protocols (linear consensus, push-sum, and an asynchronous
loss-tolerant push-sum) as per-agent state machines, a dense-matrix
oracle that certifies every run against the equivalent linear evolution,
block schedules with logarithmic growth bounds, and a scenario harness
with a CLI.
"""

from .graphs import (
    DirectedGraph,
    graph_of_matrix,
    is_strongly_connected,
    reachable_set,
    ring_with_chord,
    union_graphs,
)
from .harness import (
    AuditError,
    ConfigError,
    RunResult,
    ScenarioConfig,
    detect_convergence,
    divergence_demo,
    run_scenario,
)
from .oracle import (
    check_stochastic,
    contraction_check,
    product_range,
    spread,
    threshold,
    window_positivity,
)
from .protocols import (
    AgentState,
    BufferState,
    ProtocolViolation,
    SystemState,
    equal_weight_matrix,
    estimate_update_matrix,
    mass_flow_matrix,
    ordinary_step,
    push_sum_step,
    pushsum_matrix,
)
from .schedules import (
    BlockSchedule,
    EventTrace,
    IterationEvent,
    check_window_bound,
    generate_trace,
    logarithmic_block_lengths,
    validate_trace,
    window_bound,
)
from .verify import CheckResult, verify_scenario

__all__ = [
    "AgentState",
    "AuditError",
    "BlockSchedule",
    "BufferState",
    "CheckResult",
    "ConfigError",
    "DirectedGraph",
    "EventTrace",
    "IterationEvent",
    "ProtocolViolation",
    "RunResult",
    "ScenarioConfig",
    "SystemState",
    "check_stochastic",
    "check_window_bound",
    "contraction_check",
    "detect_convergence",
    "divergence_demo",
    "equal_weight_matrix",
    "estimate_update_matrix",
    "generate_trace",
    "graph_of_matrix",
    "is_strongly_connected",
    "logarithmic_block_lengths",
    "mass_flow_matrix",
    "ordinary_step",
    "product_range",
    "push_sum_step",
    "pushsum_matrix",
    "reachable_set",
    "ring_with_chord",
    "run_scenario",
    "spread",
    "threshold",
    "union_graphs",
    "validate_trace",
    "verify_scenario",
    "window_bound",
    "window_positivity",
]

__version__ = "0.1.0"
