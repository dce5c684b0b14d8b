"""Search-space-agnostic neural architecture discovery.

An LLM backend proposes architectures as JSON documents; a rule-based
expert system turns evaluation metrics into weighted refinement
instructions for the next prompt; candidates are validated, evaluated
(surrogate or external trainer), scored by combined model effectiveness,
and the best one is tracked across iterations with full energy and CO2
accounting.
"""

from .backends import BackendConfig, PromptRecord, TaskSpec, build_prompt, complete, extract_arch
from .evaluator import EvalConfig, EvalResult, evaluate, evaluate_adapter, evaluate_surrogate
from .ir import (
    ArchGraph,
    LayerSpec,
    ShapeReport,
    count_params,
    infer_shapes,
    parse_arch,
    serialize_arch,
    topological_order,
)
from .loop import IterationRecord, LoopConfig, RunTrajectory, replay, run_discovery
from .metrics import MetricsRecord, UserCriteria, load_preset
from .rules import (
    CODES,
    CONFLICTS,
    DESCRIPTIONS,
    generate_instructions,
    resolve_conflicts,
)
from .scoring import (
    EnergyReport,
    PowerProfile,
    ScoreReport,
    ScoringWeights,
    co2_lbs,
    combined_effectiveness,
    default_weights,
    energy_kwh_pue,
)

__version__ = "0.1.0"

__all__ = [
    "ArchGraph", "LayerSpec", "ShapeReport",
    "parse_arch", "serialize_arch", "infer_shapes", "count_params", "topological_order",
    "MetricsRecord", "UserCriteria", "load_preset",
    "CODES", "CONFLICTS", "DESCRIPTIONS",
    "generate_instructions", "resolve_conflicts",
    "ScoringWeights", "ScoreReport", "PowerProfile", "EnergyReport",
    "combined_effectiveness", "default_weights", "energy_kwh_pue", "co2_lbs",
    "TaskSpec", "PromptRecord", "BackendConfig",
    "build_prompt", "complete", "extract_arch",
    "EvalConfig", "EvalResult", "evaluate", "evaluate_surrogate", "evaluate_adapter",
    "LoopConfig", "IterationRecord", "RunTrajectory", "run_discovery", "replay",
    "__version__",
]
