"""Solver for the mock wiki's arithmetic edit challenge."""

from __future__ import annotations

import re

from ..errors import PuzzleParseError

_PATTERN = re.compile(r"What is\s+(-?\d+)\s*([+\-−×xX*])\s*(-?\d+)\s*\?")


def solve_arithmetic_puzzle(challenge: str) -> int:
    """Answer ``"What is A OP B?"`` for OP in +, −, ×.

    >>> solve_arithmetic_puzzle("What is 6 × 7?")
    42
    """
    m = _PATTERN.search(challenge)
    if not m:
        raise PuzzleParseError(f"unrecognised challenge: {challenge!r}")
    a, op, b = int(m.group(1)), m.group(2), int(m.group(3))
    if op == "+":
        return a + b
    if op in "-−":
        return a - b
    return a * b
