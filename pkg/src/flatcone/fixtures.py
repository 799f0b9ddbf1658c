"""Bundled reference surfaces used by tests and the CLI examples."""

from __future__ import annotations

import math

from .surface import EdgeGluing, FlatSurface, PlanarPolygon, TRANSLATION, normalize_area


def square_torus() -> FlatSurface:
    """Unit square with opposite sides glued; one regular vertex class."""
    p = PlanarPolygon(0, ((0, 0), (1, 0), (1, 1), (0, 1)))
    gluings = (
        EdgeGluing((0, 0), (0, 2), TRANSLATION),
        EdgeGluing((0, 1), (0, 3), TRANSLATION),
    )
    return FlatSurface((p,), gluings)


def rectangle_torus(width: float, height: float) -> FlatSurface:
    p = PlanarPolygon(0, ((0, 0), (width, 0), (width, height), (0, height)))
    gluings = (
        EdgeGluing((0, 0), (0, 2), TRANSLATION),
        EdgeGluing((0, 1), (0, 3), TRANSLATION),
    )
    return FlatSurface((p,), gluings)


def regular_octagon(area: float = 1.0) -> FlatSurface:
    """Regular octagon, opposite sides glued by translation.

    Genus 2 with a single cone point of angle 6*pi.  For ``area=1`` the side
    length is ``(2*(1+sqrt(2)))**-0.5``.
    """
    side = math.sqrt(area / (2.0 * (1.0 + math.sqrt(2.0))))
    circum = side / (2.0 * math.sin(math.pi / 8.0))
    verts = []
    for k in range(8):
        ang = math.pi / 8.0 + k * math.pi / 4.0
        verts.append((circum * math.cos(ang), circum * math.sin(ang)))
    p = PlanarPolygon(0, tuple(verts))
    gluings = tuple(EdgeGluing((0, i), (0, i + 4), TRANSLATION) for i in range(4))
    return FlatSurface((p,), gluings)


def octagon_side_length(area: float = 1.0) -> float:
    return math.sqrt(area / (2.0 * (1.0 + math.sqrt(2.0))))


def one_cylinder_origami(normalized: bool = True) -> FlatSurface:
    """Genus-2 square-tiled surface with a single horizontal cylinder.

    Three unit squares in a row; the right edge of square ``i`` is glued to
    the left edge of square ``i+1`` cyclically, the tops of squares 0 and 1
    are swapped onto the bottoms, and square 2 closes onto itself.  One cone
    point of angle 6*pi; the horizontal cylinder has circumference 3 and
    height 1 before normalization.
    """
    polys = tuple(
        PlanarPolygon(i, ((i, 0), (i + 1, 0), (i + 1, 1), (i, 1)))
        for i in range(3)
    )
    # edges: 0 bottom, 1 right, 2 top, 3 left
    gluings = (
        EdgeGluing((0, 1), (1, 3), TRANSLATION),
        EdgeGluing((1, 1), (2, 3), TRANSLATION),
        EdgeGluing((2, 1), (0, 3), TRANSLATION),
        EdgeGluing((0, 2), (1, 0), TRANSLATION),
        EdgeGluing((1, 2), (0, 0), TRANSLATION),
        EdgeGluing((2, 2), (2, 0), TRANSLATION),
    )
    s = FlatSurface(polys, gluings)
    return normalize_area(s) if normalized else s
