import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudrca.textdist import deduplicate_entries, levenshtein, normalized_similarity


def levenshtein_oracle(a: str, b: str) -> int:
    """Reference Wagner-Fischer implementation, unit costs."""
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(
                min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
            )
        prev = cur
    return prev[len(b)]


class TestLevenshtein:
    def test_known_values(self):
        assert levenshtein("kitten", "sitting") == 3
        assert levenshtein("", "") == 0
        assert levenshtein("abc", "") == 3
        assert levenshtein("", "abc") == 3
        assert levenshtein("same", "same") == 0
        assert levenshtein("flaw", "lawn") == 2

    def test_matches_oracle_on_fixed_pairs(self):
        pairs = [
            ("ERROR OutOfMemoryError", "WARN memory usage above 95%"),
            ("abcdefgh", "badcfehg"),
            ("log line\nwith newline", "log line with newline"),
            ("short", "a much longer string entirely"),
        ]
        for a, b in pairs:
            assert levenshtein(a, b) == levenshtein_oracle(a, b)


@settings(max_examples=300)
@given(st.text(max_size=40), st.text(max_size=40))
def test_matches_oracle_property(a, b):
    assert levenshtein(a, b) == levenshtein_oracle(a, b)


@settings(max_examples=200)
@given(st.text(max_size=40), st.text(max_size=40))
def test_symmetry_and_bounds(a, b):
    d = levenshtein(a, b)
    assert d == levenshtein(b, a)
    assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))
    assert (d == 0) == (a == b)


@settings(max_examples=100)
@given(st.text(max_size=25), st.text(max_size=25), st.text(max_size=25))
def test_triangle_inequality(a, b, c):
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


class TestNormalizedSimilarity:
    def test_identical(self):
        assert normalized_similarity("abc", "abc") == pytest.approx(1.0)

    def test_disjoint(self):
        assert normalized_similarity("aaa", "bbb") == pytest.approx(0.0)

    def test_both_empty(self):
        assert normalized_similarity("", "") == pytest.approx(1.0)

    def test_range(self):
        value = normalized_similarity("kitten", "sitting")
        assert 0.0 <= value <= 1.0
        assert value == pytest.approx(1 - 3 / 7)


class TestDeduplicate:
    def test_keeps_first_of_near_duplicates(self):
        entries = [
            "INFO checkpoint 41 completed in 93 ms",
            "INFO checkpoint 42 completed in 95 ms",
            "ERROR something else entirely happened",
        ]
        kept = deduplicate_entries(entries, threshold=0.9)
        assert kept == [entries[0], entries[2]]

    def test_exact_duplicates_removed(self):
        assert deduplicate_entries(["a b c", "a b c", "a b c"]) == ["a b c"]

    def test_order_preserved(self):
        entries = ["zebra line", "apple line", "zebra line"]
        assert deduplicate_entries(entries) == ["zebra line", "apple line"]

    def test_threshold_one_keeps_distinct(self):
        entries = ["aaaa", "aaab"]
        assert deduplicate_entries(entries, threshold=1.0) == entries
