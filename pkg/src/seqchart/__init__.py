"""Statechart-based sequencing and navigation for hierarchical learning content."""

from .compiler import CompilationMap, compile_tree, course_length
from .content import (
    ActivityTree,
    Cluster,
    ContentUnit,
    Item,
    build_tree,
    parse_manifest,
    serialize_tree,
    validate_tree,
)
from .errors import SeqchartError, Violation
from .simulate import (
    LearnerPolicy,
    ReachabilityReport,
    SessionTrace,
    StatsSummary,
    always_fail,
    always_pass,
    bernoulli,
    explore,
    improving,
    population_stats,
    run_session,
    serialize_trace,
)
from .statechart import (
    Configuration,
    EvalContext,
    Event,
    Statechart,
    StateNode,
    Transition,
    advance_clock,
    available_events,
    check_chart,
    enabled_transitions,
    initial_configuration,
    step,
)
from .strategy import Strategy, apply, compose, make_strategy, parse_pipeline

__all__ = [
    "ActivityTree",
    "Cluster",
    "CompilationMap",
    "Configuration",
    "ContentUnit",
    "EvalContext",
    "Event",
    "Item",
    "LearnerPolicy",
    "ReachabilityReport",
    "SeqchartError",
    "SessionTrace",
    "Statechart",
    "StateNode",
    "StatsSummary",
    "Strategy",
    "Transition",
    "Violation",
    "advance_clock",
    "always_fail",
    "always_pass",
    "apply",
    "available_events",
    "bernoulli",
    "build_tree",
    "check_chart",
    "compile_tree",
    "compose",
    "course_length",
    "enabled_transitions",
    "explore",
    "improving",
    "initial_configuration",
    "make_strategy",
    "parse_manifest",
    "parse_pipeline",
    "population_stats",
    "run_session",
    "serialize_trace",
    "serialize_tree",
    "step",
    "validate_tree",
]
