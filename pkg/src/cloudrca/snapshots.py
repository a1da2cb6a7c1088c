"""Observation snapshot store.

Long tool observations are stored under a 10-digit content-hash key; the
controller agent only sees the head of the observation plus the key, and can
pass the key back to tools that need the full text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .errors import SnapshotKeyError

KEY_WIDTH = 10
DEFAULT_HEAD_LINES = 7
EMPTY_OBSERVATION = "(empty observation)"

_KEY_RE = re.compile(r"^\d{10}$")
_SNAPSHOT_LINE_RE = re.compile(r"^\[ snapshot: (\d{10}) \]$", re.MULTILINE)

_FNV_OFFSET = 0x811C9DC5
_FNV_PRIME = 0x01000193


def _fnv1a_32(text: str) -> int:
    value = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        value ^= byte
        value = (value * _FNV_PRIME) & 0xFFFFFFFF
    return value


def looks_like_key(value: str) -> bool:
    return bool(_KEY_RE.match(value))


@dataclass
class ObservationRecord:
    full_text: str
    origin_tool: str


class SnapshotStore:
    """Key-value store for full observations, scoped to one trajectory run.

    Keys are the 32-bit FNV-1a hash of the content rendered as a zero-padded
    decimal string; collisions between distinct contents are resolved by
    linear probing on the key value.  A branch store (self-consistency
    branches) reads through to its parent and writes locally.
    """

    def __init__(self, parent: Optional["SnapshotStore"] = None):
        self._records: dict[str, ObservationRecord] = {}
        self._parent = parent

    def branch(self) -> "SnapshotStore":
        return SnapshotStore(parent=self)

    def _lookup(self, key: str) -> Optional[ObservationRecord]:
        record = self._records.get(key)
        if record is None and self._parent is not None:
            return self._parent._lookup(key)
        return record

    def put(self, full_text: str, origin_tool: str = "") -> str:
        if not full_text:
            raise ValueError("cannot store an empty observation")
        value = _fnv1a_32(full_text)
        while True:
            key = f"{value:0{KEY_WIDTH}d}"
            existing = self._lookup(key)
            if existing is None:
                self._records[key] = ObservationRecord(full_text, origin_tool)
                return key
            if existing.full_text == full_text:
                return key
            value = (value + 1) & 0xFFFFFFFF  # probe past a collision

    def get(self, key: str) -> str:
        record = self._lookup(key)
        if record is None:
            raise SnapshotKeyError(key)
        return record.full_text

    def known(self, key: str) -> bool:
        return self._lookup(key) is not None

    def resolve_args(self, kwargs: dict) -> dict:
        """Replace every string value that is an issued snapshot key with the
        stored full text.  A key-shaped string that was never issued is an
        error; everything else passes through unchanged."""
        resolved = {}
        for name, value in kwargs.items():
            if isinstance(value, str) and looks_like_key(value):
                if self.known(value):
                    resolved[name] = self.get(value)
                else:
                    raise SnapshotKeyError(value)
            else:
                resolved[name] = value
        return resolved


def render_head(full_text: str, key: str, head_lines: int = DEFAULT_HEAD_LINES) -> str:
    """Render the truncated view shown to the controller agent.

    Format is bit-exact: head lines, then `...N lines omitted.` when lines
    were dropped, then `[ snapshot: KEY ]`.
    """
    if head_lines < 1:
        raise ValueError("head_lines must be >= 1")
    lines = full_text.splitlines()
    if not lines:
        lines = [EMPTY_OBSERVATION]
    shown = lines[:head_lines]
    omitted = len(lines) - head_lines
    parts = list(shown)
    if omitted > 0:
        parts.append(f"...{omitted} lines omitted.")
    parts.append(f"[ snapshot: {key} ]")
    return "\n".join(parts)


def parse_snapshot_key(rendered: str) -> Optional[str]:
    """Recover the snapshot key from a rendered observation, if present."""
    matches = _SNAPSHOT_LINE_RE.findall(rendered)
    return matches[-1] if matches else None
