"""Core record types for a diagnosis run: tool calls, steps, trajectories,
and the finalize payload.  Kept dependency-free so both the tool layer and
the controller can import them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

UNCLEAR = "Unclear"

RESULT_FIELDS = ("root_cause", "solution", "evidence", "responsibility")


@dataclass
class ToolCall:
    function: str
    kwargs: dict = field(default_factory=dict)

    def wire(self) -> str:
        """Canonical wire form: {"function": ..., "kwargs": {...}}."""
        return json.dumps(
            {"function": self.function, "kwargs": self.kwargs}, sort_keys=True
        )

    def kwargs_signature(self) -> str:
        return json.dumps(self.kwargs, sort_keys=True)


@dataclass
class AnalysisResult:
    root_cause: str = UNCLEAR
    solution: str = UNCLEAR
    evidence: str = UNCLEAR
    responsibility: str = UNCLEAR

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in RESULT_FIELDS}

    @classmethod
    def from_dict(cls, data: dict) -> "AnalysisResult":
        kwargs = {}
        for name in RESULT_FIELDS:
            value = data.get(name)
            kwargs[name] = value if isinstance(value, str) and value else UNCLEAR
        return cls(**kwargs)

    def field_text(self, name: str) -> str:
        return getattr(self, name)


@dataclass
class Step:
    thought: str
    action: Optional[ToolCall]
    observation: str
    error_flag: bool = False
    invalid_flag: bool = False

    def to_dict(self) -> dict:
        return {
            "thought": self.thought,
            "action": (
                {"function": self.action.function, "kwargs": self.action.kwargs}
                if self.action
                else None
            ),
            "observation": self.observation,
            "error_flag": self.error_flag,
            "invalid_flag": self.invalid_flag,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Step":
        action = data.get("action")
        return cls(
            thought=data["thought"],
            action=ToolCall(action["function"], action["kwargs"]) if action else None,
            observation=data["observation"],
            error_flag=bool(data.get("error_flag")),
            invalid_flag=bool(data.get("invalid_flag")),
        )


@dataclass
class Trajectory:
    steps: list[Step] = field(default_factory=list)
    result: Optional[AnalysisResult] = None
    passed: bool = False
    seed_prefix_len: int = 0
    diagnostic: str = ""

    def invalid_ratio(self) -> float:
        if not self.steps:
            return 0.0
        return sum(1 for s in self.steps if s.invalid_flag) / len(self.steps)

    def to_jsonl(self) -> str:
        """One step object per line, then a trailing result object."""
        lines = [json.dumps({"step": s.to_dict()}, sort_keys=True) for s in self.steps]
        lines.append(
            json.dumps(
                {
                    "result": self.result.to_dict() if self.result else None,
                    "passed": self.passed,
                    "seed_prefix_len": self.seed_prefix_len,
                    "diagnostic": self.diagnostic,
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Trajectory":
        traj = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            if "step" in record:
                traj.steps.append(Step.from_dict(record["step"]))
            else:
                result = record.get("result")
                traj.result = AnalysisResult.from_dict(result) if result else None
                traj.passed = bool(record.get("passed"))
                traj.seed_prefix_len = int(record.get("seed_prefix_len", 0))
                traj.diagnostic = record.get("diagnostic", "")
        return traj
