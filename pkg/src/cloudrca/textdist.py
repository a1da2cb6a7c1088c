"""Character-level Levenshtein distance and fuzzy-equivalence helpers.

Used both for deduplicating tool output entries and for the evidence
hallucination filter, so it lives in its own module.
"""

from __future__ import annotations

import numpy as np


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance, vectorized row DP (O(len(a)*len(b)) cells)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a  # keep the inner dimension small
    b_arr = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32)
    prev = np.arange(len(b) + 1, dtype=np.int64)
    for i, ch in enumerate(a, start=1):
        cur = np.empty_like(prev)
        cur[0] = i
        cost = (b_arr != ord(ch)).astype(np.int64)
        cur[1:] = prev[:-1] + cost
        np.minimum(cur[1:], prev[1:] + 1, out=cur[1:])
        # insertion column needs a sequential pass
        run = np.minimum.accumulate(cur - np.arange(len(cur)))
        cur = np.minimum(cur, run + np.arange(len(cur)))
        prev = cur
    return int(prev[-1])


def normalized_similarity(a: str, b: str) -> float:
    """1 - levenshtein / max_len, in [0, 1]; two empty strings are identical."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def deduplicate_entries(entries: list[str], threshold: float = 0.9) -> list[str]:
    """Keep the first entry of each fuzzy-equivalence group, preserving order.

    An entry is dropped when its similarity to any already-kept entry reaches
    the threshold.  Idempotent: a second pass keeps everything.
    """
    kept: list[str] = []
    for entry in entries:
        if any(normalized_similarity(entry, prior) >= threshold for prior in kept):
            continue
        kept.append(entry)
    return kept
