"""Flat surfaces as Euclidean polygons with translation / half-turn edge gluings.

A surface is a finite set of simple, positively oriented planar polygons
together with an involutive pairing of their boundary edges.  Each pairing
is either a translation (paired edge vectors are opposite) or a half-turn
(paired edge vectors are equal); both are orientation preserving, so the
glued complex is a closed oriented surface carrying a singular Euclidean
metric.  Vertex identifications and cone angles are derived by walking
corner wedges around each vertex, and consistency is checked against the
combinatorial Euler characteristic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

DEFAULT_TOL = 1e-9

TRANSLATION = "translation"
HALF_TURN = "half_translation"

_KIND_NAMES = {
    "translation": TRANSLATION,
    "halfturn": HALF_TURN,
    "half_translation": HALF_TURN,
}


class SurfaceError(ValueError):
    """Structural or geometric defect in a surface description."""


class ParseError(SurfaceError):
    """Syntax error in a surface document; carries the line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class PlanarPolygon:
    """A simple, counterclockwise polygon in its own chart.

    Edge ``i`` runs from vertex ``i`` to vertex ``i + 1 (mod n)``.
    """

    id: int
    vertices: tuple

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise SurfaceError(f"polygon {self.id}: fewer than 3 vertices")
        if self.signed_area() <= 0:
            raise SurfaceError(f"polygon {self.id}: not positively oriented")
        if not _is_simple(verts):
            raise SurfaceError(f"polygon {self.id}: self-intersecting boundary")

    @property
    def n(self):
        return len(self.vertices)

    def vertex(self, i):
        return self.vertices[i % self.n]

    def edge_vector(self, i):
        a = self.vertices[i % self.n]
        b = self.vertices[(i + 1) % self.n]
        return (b[0] - a[0], b[1] - a[1])

    def signed_area(self):
        s = 0.0
        verts = self.vertices
        for i in range(len(verts)):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % len(verts)]
            s += x0 * y1 - x1 * y0
        return 0.5 * s

    def interior_angle(self, i):
        """Interior angle at vertex i, in (0, 2*pi)."""
        v = self.vertex(i)
        nxt = self.vertex(i + 1)
        prv = self.vertex(i - 1)
        d1 = math.atan2(nxt[1] - v[1], nxt[0] - v[0])
        d2 = math.atan2(prv[1] - v[1], prv[0] - v[0])
        ang = (d2 - d1) % (2.0 * math.pi)
        if ang == 0.0:
            ang = 2.0 * math.pi
        return ang


@dataclass(frozen=True)
class EdgeGluing:
    """Identification of two polygon edges.

    ``side_a`` and ``side_b`` are ``(polygon id, edge index)`` pairs.  For
    ``kind="translation"`` the edge vectors must be opposite, for
    ``kind="half_translation"`` equal (both polygons see the shared edge
    traversed in opposite boundary directions; the half-turn transition
    composes with -id).
    """

    side_a: tuple
    side_b: tuple
    kind: str

    def __post_init__(self):
        if self.kind not in (TRANSLATION, HALF_TURN):
            raise SurfaceError(f"unknown gluing kind {self.kind!r}")

    def other(self, side):
        if side == self.side_a:
            return self.side_b
        if side == self.side_b:
            return self.side_a
        raise KeyError(side)


@dataclass(frozen=True)
class ConePoint:
    """An identified vertex class with its total cone angle."""

    class_id: int
    wedges: tuple  # (polygon id, vertex index) corners, in cyclic order
    angle: float

    @property
    def angle_over_pi(self):
        return self.angle / math.pi

    def is_singular(self, tol=DEFAULT_TOL):
        return abs(self.angle - 2.0 * math.pi) > tol


@dataclass(frozen=True)
class SurfacePoint:
    """A point in the closed polygon with the given id."""

    polygon: int
    xy: tuple

    def __post_init__(self):
        object.__setattr__(self, "xy", (float(self.xy[0]), float(self.xy[1])))


@dataclass(frozen=True, eq=False)
class FlatSurface:
    """Immutable glued-polygon surface with derived metric data."""

    polygons: tuple
    gluings: tuple
    cone_points: tuple = field(default=())
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        by_id = {p.id: p for p in self.polygons}
        if len(by_id) != len(self.polygons):
            raise SurfaceError("duplicate polygon id")
        object.__setattr__(self, "_by_id", by_id)
        glue_map = {}
        for g in self.gluings:
            for side in (g.side_a, g.side_b):
                if side in glue_map:
                    raise SurfaceError(f"edge {side} glued more than once")
                glue_map[side] = g
        for p in self.polygons:
            for e in range(p.n):
                if (p.id, e) not in glue_map:
                    raise SurfaceError(f"unmatched edge {p.id}.{e}")
        for side in glue_map:
            if side[0] not in by_id or not 0 <= side[1] < by_id[side[0]].n:
                raise SurfaceError(f"gluing references unknown edge {side[0]}.{side[1]}")
        object.__setattr__(self, "_glue_map", glue_map)
        if not self.cone_points:
            object.__setattr__(self, "cone_points", _walk_cone_points(self))

    # -- lookups ----------------------------------------------------------

    def polygon(self, pid):
        return self._by_id[pid]

    def glued_side(self, pid, edge):
        """The (polygon, edge) pair identified with edge ``edge`` of ``pid``."""
        g = self._glue_map[(pid, edge)]
        return g.other((pid, edge)), g.kind

    def gluing_at(self, pid, edge):
        return self._glue_map[(pid, edge)]

    # -- derived invariants -------------------------------------------------

    @property
    def area(self):
        return sum(p.signed_area() for p in self.polygons)

    @property
    def num_edges(self):
        return len(self.gluings)

    @property
    def euler_characteristic(self):
        return len(self.cone_points) - len(self.gluings) + len(self.polygons)

    @property
    def genus(self):
        chi = self.euler_characteristic
        if chi % 2:
            raise SurfaceError("odd Euler characteristic; surface not closed")
        return (2 - chi) // 2

    def gauss_bonnet_residual(self):
        """|2*pi*chi - sum(2*pi - theta)| over vertex classes."""
        total = sum(2.0 * math.pi - c.angle for c in self.cone_points)
        return abs(2.0 * math.pi * self.euler_characteristic - total)

    def singular_cone_points(self, tol=None):
        tol = self.tol if tol is None else tol
        return tuple(c for c in self.cone_points if c.is_singular(tol))

    def corner_class(self, pid, vidx):
        return self._corner_to_class[(pid, vidx % self.polygon(pid).n)]

    @property
    def _corner_to_class(self):
        try:
            return self.__dict__["_corner_map"]
        except KeyError:
            m = {}
            for c in self.cone_points:
                for w in c.wedges:
                    m[w] = c.class_id
            self.__dict__["_corner_map"] = m
            return m


def _is_simple(verts):
    n = len(verts)
    for i in range(n):
        a0, a1 = verts[i], verts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b0, b1 = verts[j], verts[(j + 1) % n]
            if _segments_cross(a0, a1, b0, b1):
                return False
    return True


def _segments_cross(a0, a1, b0, b1):
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    d1 = orient(a0, a1, b0)
    d2 = orient(a0, a1, b1)
    d3 = orient(b0, b1, a0)
    d4 = orient(b0, b1, a1)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    return False


def _next_wedge_ccw(s, pid, vidx):
    """Corner reached by rotating counterclockwise about the vertex.

    The wedge at corner ``(pid, vidx)`` is bounded by edge ``vidx`` (outgoing)
    and edge ``vidx - 1`` (incoming); crossing the incoming edge continues the
    fan, and the identified corner is the start vertex of the glued edge.
    """
    p = s.polygon(pid)
    (qid, qedge), _ = s.glued_side(pid, (vidx - 1) % p.n)
    return (qid, qedge)


def _walk_cone_points(s):
    corners = []
    for p in sorted(s.polygons, key=lambda p: p.id):
        corners.extend((p.id, i) for i in range(p.n))
    seen = set()
    classes = []
    for start in corners:
        if start in seen:
            continue
        wedges = []
        angle = 0.0
        cur = start
        while True:
            if cur in seen:
                raise SurfaceError(f"inconsistent gluing around vertex at corner {cur}")
            seen.add(cur)
            wedges.append(cur)
            angle += s.polygon(cur[0]).interior_angle(cur[1])
            cur = _next_wedge_ccw(s, *cur)
            if cur == start:
                break
        classes.append(ConePoint(len(classes), tuple(wedges), angle))
    return tuple(classes)


# -- operations -------------------------------------------------------------


def area(s: FlatSurface) -> float:
    """Total area (shoelace sum over polygons)."""
    return s.area


def cone_points(s: FlatSurface):
    """Vertex classes with their cone angles."""
    return s.cone_points


def scale_metric(s: FlatSurface, c: float) -> FlatSurface:
    """Scale all lengths by ``c`` (> 0); area scales by ``c**2``."""
    if not c > 0:
        raise ValueError("scale factor must be positive")
    polys = tuple(
        PlanarPolygon(p.id, tuple((c * x, c * y) for x, y in p.vertices))
        for p in s.polygons
    )
    return FlatSurface(polys, s.gluings, tol=s.tol)


def stretch(s: FlatSurface, lam: float) -> FlatSurface:
    """Apply diag(1/lam, lam) to every chart; preserves area and gluings."""
    if not lam > 0:
        raise ValueError("stretch factor must be positive")
    polys = tuple(
        PlanarPolygon(p.id, tuple((x / lam, lam * y) for x, y in p.vertices))
        for p in s.polygons
    )
    return FlatSurface(polys, s.gluings, tol=s.tol)


def normalize_area(s: FlatSurface) -> FlatSurface:
    """Scale so the total area is 1."""
    return scale_metric(s, s.area ** -0.5)


def check_gluing_vectors(s: FlatSurface, tol=None):
    """Per-gluing edge-vector mismatches beyond tolerance.

    Returns a list of (gluing, mismatch) pairs; empty when geometrically
    consistent.  Translation gluings need opposite vectors, half-turn
    gluings equal vectors.
    """
    tol = s.tol if tol is None else tol
    bad = []
    for g in s.gluings:
        va = s.polygon(g.side_a[0]).edge_vector(g.side_a[1])
        vb = s.polygon(g.side_b[0]).edge_vector(g.side_b[1])
        sign = 1.0 if g.kind == TRANSLATION else -1.0
        mismatch = math.hypot(va[0] + sign * vb[0], va[1] + sign * vb[1])
        if mismatch > tol:
            bad.append((g, mismatch))
    return bad


@dataclass
class ValidationReport:
    ok: bool
    mode: str
    cone_angles: list  # (class id, angle, angle/pi, multiple flag, regular flag)
    gauss_bonnet_residual: float
    genus: int
    area: float
    failures: list

    def __str__(self):
        lines = [
            f"mode: {self.mode}",
            f"genus: {self.genus}  area: {self.area:.9g}",
            f"gauss-bonnet residual: {self.gauss_bonnet_residual:.3g}",
        ]
        for cid, ang, k, ok_mult, regular in self.cone_angles:
            tag = "regular point" if regular else f"cone angle {k:.9g}*pi"
            if not ok_mult:
                tag += " (not an integer multiple of pi)"
            lines.append(f"vertex class {cid}: angle {ang:.9g} rad, {tag}")
        lines.append("PASS" if self.ok else "FAIL: " + "; ".join(self.failures))
        return "\n".join(lines)


def validate_surface(s: FlatSurface, mode: str = "lenient", tol=None) -> ValidationReport:
    """Check cone angles and the Gauss-Bonnet identity.

    Lenient mode accepts any cone angles consistent with Gauss-Bonnet;
    strict mode additionally requires every angle to be k*pi with integer
    k >= 3, or k = 2 which is flagged as a regular (marked) point.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError("mode must be 'strict' or 'lenient'")
    tol = s.tol if tol is None else tol
    failures = []
    angles = []
    for c in s.cone_points:
        k = c.angle / math.pi
        ok_mult = abs(k - round(k)) < tol * 10
        regular = abs(c.angle - 2 * math.pi) <= tol
        angles.append((c.class_id, c.angle, k, ok_mult, regular))
        if mode == "strict":
            if not ok_mult:
                failures.append(f"class {c.class_id}: angle {k:.6g}*pi not an integer multiple")
            elif round(k) < 2:
                failures.append(f"class {c.class_id}: cone angle {round(k)}*pi < 2*pi")
    residual = s.gauss_bonnet_residual()
    if residual > tol:
        failures.append(f"gauss-bonnet residual {residual:.3g} exceeds {tol:.1g}")
    for g, mismatch in check_gluing_vectors(s, tol):
        failures.append(
            f"edge vectors of {g.side_a[0]}.{g.side_a[1]} and "
            f"{g.side_b[0]}.{g.side_b[1]} mismatch by {mismatch:.3g}"
        )
    if s.area <= 0:
        failures.append("nonpositive area")
    return ValidationReport(
        ok=not failures,
        mode=mode,
        cone_angles=angles,
        gauss_bonnet_residual=residual,
        genus=s.genus,
        area=s.area,
        failures=failures,
    )


# -- text format --------------------------------------------------------------


def parse_document(text: str, geometric_check=True, tol=DEFAULT_TOL):
    """Parse a surface document; returns (surface, slit specs).

    Grammar (line oriented, '#' starts a comment):

        polygon <id>
        v <x> <y>
        glue <idA>.<edgeA> <idB>.<edgeB> <translation|halfturn>
        slit <poly> <x0> <y0> <x1> <y1> sheets <n> perm <cycles>
    """
    polygons = []
    gluings = []
    slits = []
    cur_id = None
    cur_verts = []

    def flush():
        nonlocal cur_id, cur_verts
        if cur_id is not None:
            if len(cur_verts) < 3:
                raise ParseError(f"polygon {cur_id} has fewer than 3 vertices")
            try:
                polygons.append(PlanarPolygon(cur_id, tuple(cur_verts)))
            except SurfaceError as exc:
                raise ParseError(str(exc)) from exc
        cur_id, cur_verts = None, []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kw = tokens[0].lower()
        try:
            if kw == "polygon":
                flush()
                cur_id = int(tokens[1])
            elif kw == "v":
                if cur_id is None:
                    raise ParseError("vertex outside polygon block", lineno)
                cur_verts.append((float(tokens[1]), float(tokens[2])))
            elif kw == "glue":
                flush()
                side_a = _parse_side(tokens[1])
                side_b = _parse_side(tokens[2])
                kind = _KIND_NAMES.get(tokens[3].lower())
                if kind is None:
                    raise ParseError(f"unknown gluing kind {tokens[3]!r}", lineno)
                gluings.append(EdgeGluing(side_a, side_b, kind))
            elif kw == "slit":
                flush()
                slits.append(_parse_slit(tokens, lineno))
            else:
                raise ParseError(f"unknown keyword {tokens[0]!r}", lineno)
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"malformed {kw!r} line: {exc}", lineno) from exc
    flush()

    surface = FlatSurface(tuple(polygons), tuple(gluings), tol=tol)
    if geometric_check:
        bad = check_gluing_vectors(surface)
        if bad:
            g, mismatch = bad[0]
            raise SurfaceError(
                f"edge-vector mismatch {mismatch:.3g} between "
                f"{g.side_a[0]}.{g.side_a[1]} and {g.side_b[0]}.{g.side_b[1]}"
            )
    return surface, tuple(slits)


def _parse_side(token):
    pid, edge = token.split(".")
    return (int(pid), int(edge))


def _parse_slit(tokens, lineno):
    # slit <poly> <x0> <y0> <x1> <y1> sheets <n> perm <cycles...>
    from .coverings import SlitSpec, parse_cycles

    poly = int(tokens[1])
    x0, y0, x1, y1 = (float(t) for t in tokens[2:6])
    if tokens[6].lower() != "sheets":
        raise ParseError("expected 'sheets'", lineno)
    n = int(tokens[7])
    if len(tokens) > 8:
        if tokens[8].lower() != "perm":
            raise ParseError("expected 'perm'", lineno)
        perm = parse_cycles(" ".join(tokens[9:]), n)
    else:
        perm = tuple((i + 1) % n for i in range(n))  # cyclic default
    return SlitSpec(
        start=SurfacePoint(poly, (x0, y0)),
        end=SurfacePoint(poly, (x1, y1)),
        sheets=n,
        monodromy=perm,
    )


def parse_surface(text: str, geometric_check=True, tol=DEFAULT_TOL) -> FlatSurface:
    """Parse a surface document, ignoring any covering block."""
    surface, _ = parse_document(text, geometric_check=geometric_check, tol=tol)
    return surface


def serialize_surface(s: FlatSurface) -> str:
    lines = []
    for p in sorted(s.polygons, key=lambda p: p.id):
        lines.append(f"polygon {p.id}")
        for x, y in p.vertices:
            lines.append(f"v {x!r} {y!r}")
    for g in s.gluings:
        kind = "translation" if g.kind == TRANSLATION else "halfturn"
        lines.append(
            f"glue {g.side_a[0]}.{g.side_a[1]} {g.side_b[0]}.{g.side_b[1]} {kind}"
        )
    return "\n".join(lines) + "\n"
