"""Pre-execution contract verification for code-mode tool agents."""

from .checker import StaticReport, static_score
from .harness import RunPlan, builtin_mini_suite, read_episode_log, run_plan
from .modelio import HttpBackend, PlaybackBackend
from .registry import TaskInstance, TaskSuite, ToolSpec, load_suite, render_tool_docs, save_suite
from .rubric import Rubric, fixed_rubric, parse_rubric_text, render_rubric
from .sandbox import AttemptGate, builtin_library, execute, judge
from .strategies import Episode, StrategyConfig, run_strategy
from .verify import ScoreReport, enforce_caps, normalized_confidence, parse_score_response

__version__ = "0.1.0"

__all__ = [
    "AttemptGate",
    "Episode",
    "HttpBackend",
    "PlaybackBackend",
    "Rubric",
    "RunPlan",
    "ScoreReport",
    "StaticReport",
    "StrategyConfig",
    "TaskInstance",
    "TaskSuite",
    "ToolSpec",
    "builtin_library",
    "builtin_mini_suite",
    "enforce_caps",
    "execute",
    "fixed_rubric",
    "judge",
    "load_suite",
    "normalized_confidence",
    "parse_rubric_text",
    "parse_score_response",
    "read_episode_log",
    "render_rubric",
    "render_tool_docs",
    "run_plan",
    "run_strategy",
    "save_suite",
    "static_score",
    "__version__",
]
