"""The controller agent: prompt assembly from the three base prompts, the
thought-action-observation loop, the step budget, and trajectory recording.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from . import prompts
from .backends import Backend, ChatExchange, GenerationParams, generate_adaptive
from .backends import DEFAULT_MAX_ESCALATIONS, DEFAULT_RESTART_THRESHOLD
from .errors import CloudRcaError
from .snapshots import DEFAULT_HEAD_LINES, SnapshotStore
from .structured import extract_json, json_regen, sanitize_prompt
from .tools import (
    DispatchContext,
    KIND_FINALIZE,
    ToolRegistry,
    check_errors,
    dispatch,
    parse_finalize,
    render_documentation,
)
from .trajectory import Step, ToolCall, Trajectory

DEFAULT_MAX_STEPS = 15


@dataclass
class PromptSet:
    framework_rules: str = prompts.FRAMEWORK_RULES
    task_requirements: str = prompts.TASK_REQUIREMENTS
    tool_docs: str = ""


@dataclass
class AgentConfig:
    max_steps: int = DEFAULT_MAX_STEPS
    head_lines: int = DEFAULT_HEAD_LINES
    params: GenerationParams = field(
        default_factory=lambda: GenerationParams(mode="greedy")
    )
    prompts: PromptSet = field(default_factory=PromptSet)
    task_statement: str = "Diagnose the anomalous job."
    restart_threshold: int = DEFAULT_RESTART_THRESHOLD
    max_escalations: int = DEFAULT_MAX_ESCALATIONS
    repair_retry_limit: int = 3
    json_regen_enabled: bool = True
    dedup_threshold: float = 0.9
    trivial_input_floor: int = 32

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def render_history(steps: list[Step]) -> tuple[str, list[tuple[int, int]]]:
    """Render completed steps as Thought/Function/Observation blocks and
    report the spans of the action JSON, which must survive sanitization."""
    pieces: list[str] = []
    spans: list[tuple[int, int]] = []
    offset = 0

    def append(text: str, protect: bool = False):
        nonlocal offset
        if protect:
            spans.append((offset, offset + len(text)))
        pieces.append(text)
        offset += len(text)

    for step in steps:
        append(f"Thought: {step.thought}\n")
        append("Function: ")
        append(step.action.wire() if step.action else "(none)", protect=True)
        append(f"\nObservation:\n{step.observation}\n")
    return "".join(pieces), spans


def assemble_prompt(config: AgentConfig, trajectory: Trajectory) -> ChatExchange:
    system = "\n\n".join(
        [
            config.prompts.framework_rules,
            config.prompts.task_requirements,
            config.prompts.tool_docs,
        ]
    )
    history, spans = render_history(trajectory.steps)
    history = sanitize_prompt(history, spans)
    user = config.task_statement
    if history:
        user = f"{user}\n\n{history}"
    user += "\nThought:"
    return ChatExchange(system_prompt=system, messages=[("user", user)])


def _split_thought(text: str) -> tuple[str, Optional[str]]:
    """Thought is everything before the first candidate JSON object."""
    brace = text.find("{")
    if brace == -1:
        return text.strip(), None
    thought = text[:brace]
    # drop a trailing "Function:" label left over from the block layout
    thought = thought.rstrip()
    if thought.lower().endswith("function:"):
        thought = thought[: -len("function:")].rstrip()
    if thought.lower().startswith("thought:"):
        thought = thought[len("thought:") :].strip()
    return thought.strip(), text[brace:]


def run_step(
    config: AgentConfig,
    trajectory: Trajectory,
    backend: Backend,
    registry: ToolRegistry,
    context: DispatchContext,
    params: Optional[GenerationParams] = None,
) -> Step:
    """One decision cycle.  Appends the produced step to the trajectory and
    fills trajectory.result when the step finalizes."""
    exchange = assemble_prompt(config, trajectory)
    generation = generate_adaptive(
        backend,
        exchange,
        params or config.params,
        restart_threshold=config.restart_threshold,
        max_escalations=config.max_escalations,
    )
    thought, action_text = _split_thought(generation.text)

    step: Step
    if action_text is None:
        step = Step(
            thought=thought,
            action=None,
            observation=prompts.INVALID_ACTION_OBSERVATION,
            error_flag=True,
            invalid_flag=True,
        )
        trajectory.steps.append(step)
        return step

    outcome = json_regen(
        backend,
        action_text,
        retry_limit=config.repair_retry_limit,
        enabled=config.json_regen_enabled,
    )
    function = outcome.value.get("function") if outcome.ok else None
    if not outcome.ok or not isinstance(function, str):
        step = Step(
            thought=thought,
            action=None,
            observation=prompts.INVALID_ACTION_OBSERVATION,
            error_flag=True,
            invalid_flag=True,
        )
        trajectory.steps.append(step)
        return step

    kwargs = outcome.value.get("kwargs")
    call = ToolCall(function, kwargs if isinstance(kwargs, dict) else {})
    spec = registry.spec(call.function)

    error = check_errors(trajectory.steps, call, registry, context)
    if error is not None:
        step = Step(
            thought=thought,
            action=call,
            observation=error.render(),
            error_flag=True,
        )
        trajectory.steps.append(step)
        return step

    if spec is not None and spec.kind == KIND_FINALIZE:
        parsed = parse_finalize(call)
        trajectory.result = parsed.result
        step = Step(
            thought=thought,
            action=call,
            observation="Finalized.",
        )
        trajectory.steps.append(step)
        return step

    result = dispatch(registry, call, context)
    structural_invalid = spec is None or any(
        p.required and p.name not in call.kwargs for p in spec.params
    )
    step = Step(
        thought=thought,
        action=call,
        observation=result.observation,
        error_flag=result.error,
        invalid_flag=structural_invalid,
    )
    trajectory.steps.append(step)
    return step


def run_trajectory(
    config: AgentConfig,
    registry: ToolRegistry,
    backend: Backend,
    store: Optional[SnapshotStore] = None,
    initial: Optional[Trajectory] = None,
    params: Optional[GenerationParams] = None,
    max_steps: Optional[int] = None,
) -> Trajectory:
    """Loop run_step until finalize or the step budget is exhausted.

    ``initial`` seeds the trajectory with already-completed steps (the shared
    greedy prefix of a consistency branch); ``store`` carries the matching
    snapshot state.
    """
    if not config.prompts.tool_docs:
        config = replace(
            config,
            prompts=replace(
                config.prompts, tool_docs=render_documentation(registry)
            ),
        )
    trajectory = initial if initial is not None else Trajectory()
    context = DispatchContext(
        store=store if store is not None else SnapshotStore(),
        head_lines=config.head_lines,
        dedup_threshold=config.dedup_threshold,
        trivial_input_floor=config.trivial_input_floor,
    )
    budget = max_steps if max_steps is not None else config.max_steps
    try:
        while trajectory.result is None and len(trajectory.steps) < budget:
            run_step(config, trajectory, backend, registry, context, params=params)
    except CloudRcaError as exc:
        trajectory.diagnostic = f"backend failure: {exc}"
        trajectory.passed = False
        return trajectory
    trajectory.passed = trajectory.result is not None
    return trajectory
