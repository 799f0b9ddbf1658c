"""Branched slit coverings of flat surfaces and the covering inequalities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .surface import SurfaceError, SurfacePoint


@dataclass(frozen=True)
class SlitSpec:
    """A straight slit with covering data.

    The slit runs from ``start`` to ``end`` inside a single polygon chart;
    its interior must avoid cone points and other slits.  ``monodromy`` is
    the permutation of sheets ``0..sheets-1`` applied when crossing the slit
    from its left side (left of the start->end direction) to its right side.
    """

    start: SurfacePoint
    end: SurfacePoint
    sheets: int
    monodromy: tuple

    def __post_init__(self):
        if self.start.polygon != self.end.polygon:
            raise SurfaceError("slit endpoints must lie in one polygon chart")
        if self.sheets < 1:
            raise SurfaceError("slit needs at least 1 sheet")
        if sorted(self.monodromy) != list(range(self.sheets)):
            raise SurfaceError("monodromy is not a permutation of the sheets")

    @property
    def length(self):
        (x0, y0), (x1, y1) = self.start.xy, self.end.xy
        return math.hypot(x1 - x0, y1 - y0)


def parse_cycles(text: str, n: int) -> tuple:
    """Parse a permutation of ``1..n`` in cycle notation, e.g. ``(1 2 3)(4)``.

    Returns the permutation as a 0-based tuple ``perm`` with ``perm[i]`` the
    image of sheet ``i``.  Separators inside a cycle may be spaces or commas.
    """
    perm = list(range(n))
    text = text.strip()
    if not text:
        return tuple(perm)
    if text.count("(") != text.count(")"):
        raise SurfaceError(f"unbalanced cycle notation {text!r}")
    seen = set()
    depth = 0
    cycles = []
    cur = ""
    for ch in text:
        if ch == "(":
            if depth:
                raise SurfaceError("nested parentheses in cycle notation")
            depth, cur = 1, ""
        elif ch == ")":
            depth = 0
            entries = [t for t in cur.replace(",", " ").split() if t]
            cycles.append([int(t) for t in entries])
        elif depth:
            cur += ch
        elif not ch.isspace():
            raise SurfaceError(f"unexpected character {ch!r} in cycle notation")
    for cyc in cycles:
        for v in cyc:
            if not 1 <= v <= n:
                raise SurfaceError(f"sheet {v} out of range 1..{n}")
            if v in seen:
                raise SurfaceError(f"sheet {v} repeated in cycle notation")
            seen.add(v)
        for i, v in enumerate(cyc):
            perm[v - 1] = cyc[(i + 1) % len(cyc)] - 1
    return tuple(perm)


def cycles_string(perm: tuple) -> str:
    """Inverse of :func:`parse_cycles` (1-based, fixed points omitted)."""
    n = len(perm)
    seen = [False] * n
    parts = []
    for i in range(n):
        if seen[i] or perm[i] == i:
            seen[i] = True
            continue
        cyc = [i]
        seen[i] = True
        j = perm[i]
        while j != i:
            cyc.append(j)
            seen[j] = True
            j = perm[j]
        parts.append("(" + " ".join(str(v + 1) for v in cyc) + ")")
    return "".join(parts) if parts else "()"
