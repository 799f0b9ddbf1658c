"""Internal triangulated model of a flat surface and the straight-line tracer.

Every polygon is ear-clipped into triangles kept in the polygon's own chart.
Crossing a triangle side applies a chart-to-chart isometry of the form
``z -> s*z + t`` with ``s`` in {+1, -1}: the identity for interior diagonals,
a translation for translation gluings and a point reflection for half-turn
gluings.  Around every vertex class the corner wedges form a closed fan whose
accumulated angle is the cone angle; fan offsets give each class a fixed
angular coordinate used for geodesic bending checks.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .surface import HALF_TURN, FlatSurface, SurfaceError, SurfacePoint

TWO_PI = 2.0 * math.pi
VERTEX_HIT_TOL = 1e-9


class WorkBudgetExceeded(RuntimeError):
    """A search exhausted its state budget before completing."""


def compose(g, h):
    """Transform applying ``h`` then ``g``; each is a (sign, offset) pair."""
    gs, gt = g
    hs, ht = h
    return (gs * hs, gs * ht + gt)


def invert(g):
    s, t = g
    return (s, -s * t)


def apply(g, z):
    return g[0] * z + g[1]


IDENTITY = (1.0, 0j)


def ear_clip(verts):
    """Triangulate a simple CCW polygon; returns index triples."""
    n = len(verts)
    if n == 3:
        return [(0, 1, 2)]
    idx = list(range(n))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 4 * n * n:
            raise SurfaceError("ear clipping failed (degenerate polygon?)")
        m = len(idx)
        clipped = False
        for k in range(m):
            i0, i1, i2 = idx[(k - 1) % m], idx[k], idx[(k + 1) % m]
            a, b, c = verts[i0], verts[i1], verts[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= 1e-14:
                continue
            if any(
                _in_triangle(verts[j], a, b, c)
                for j in idx
                if j not in (i0, i1, i2)
            ):
                continue
            tris.append((i0, i1, i2))
            del idx[k]
            clipped = True
            break
        if not clipped:
            raise SurfaceError("ear clipping failed (degenerate polygon?)")
    tris.append(tuple(idx))
    return tris


def _in_triangle(p, a, b, c, tol=1e-12):
    def side(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    d0 = side(a, b, p)
    d1 = side(b, c, p)
    d2 = side(c, a, p)
    return d0 >= -tol and d1 >= -tol and d2 >= -tol


@dataclass
class Tri:
    index: int
    poly: int
    vids: tuple      # polygon vertex indices
    verts: tuple     # complex coordinates in the polygon chart
    cls: tuple       # vertex class id per corner
    sides: tuple     # per side: ("edge", poly, edge index) or ("diag",)
    nbr: list        # per side: (tri index, side index, sign, offset)

    def side_vec(self, i):
        return self.verts[(i + 1) % 3] - self.verts[i]


class Triangulation:
    """Triangulated complex with fans, point location and ray tracing."""

    def __init__(self, surface: FlatSurface):
        self.surface = surface
        self.tol = surface.tol
        self.tris = []
        self._build_triangles()
        self._build_adjacency()
        self._build_fans()

    # -- construction -------------------------------------------------------

    def _build_triangles(self):
        self._poly_tris = {}
        for p in sorted(self.surface.polygons, key=lambda p: p.id):
            cverts = [complex(x, y) for x, y in p.vertices]
            local = []
            for (i0, i1, i2) in ear_clip(p.vertices):
                t = Tri(
                    index=len(self.tris),
                    poly=p.id,
                    vids=(i0, i1, i2),
                    verts=(cverts[i0], cverts[i1], cverts[i2]),
                    cls=tuple(
                        self.surface.corner_class(p.id, v) for v in (i0, i1, i2)
                    ),
                    sides=(),
                    nbr=[None, None, None],
                )
                self.tris.append(t)
                local.append(t)
            self._poly_tris[p.id] = local

    def _build_adjacency(self):
        # label sides: a side is a polygon boundary edge iff its vertex ids
        # are consecutive on the polygon
        edge_owner = {}
        diag_open = {}
        for t in self.tris:
            n = len(self.surface.polygon(t.poly).vertices)
            labels = []
            for i in range(3):
                a, b = t.vids[i], t.vids[(i + 1) % 3]
                if (a + 1) % n == b:
                    labels.append(("edge", t.poly, a))
                    edge_owner[(t.poly, a)] = (t.index, i)
                else:
                    labels.append(("diag",))
                    key = (t.poly, min(a, b), max(a, b))
                    if key in diag_open:
                        o_t, o_i = diag_open.pop(key)
                        t.nbr[i] = (o_t, o_i, 1.0, 0j)
                        self.tris[o_t].nbr[o_i] = (t.index, i, 1.0, 0j)
                    else:
                        diag_open[key] = (t.index, i)
            t.sides = tuple(labels)
        if diag_open:
            raise SurfaceError("unmatched interior diagonal")
        for g in self.surface.gluings:
            (ta, ia) = edge_owner[g.side_a]
            (tb, ib) = edge_owner[g.side_b]
            pa = self.surface.polygon(g.side_a[0])
            pb = self.surface.polygon(g.side_b[0])
            a0 = complex(*pa.vertex(g.side_a[1]))
            a1 = complex(*pa.vertex(g.side_a[1] + 1))
            b0 = complex(*pb.vertex(g.side_b[1]))
            b1 = complex(*pb.vertex(g.side_b[1] + 1))
            if g.kind == HALF_TURN:
                # b-chart -> a-chart: z -> -z + (a1 + b0)
                m_ab = (-1.0, a1 + b0)
                m_ba = (-1.0, b1 + a0)
            else:
                m_ab = (1.0, a1 - b0)
                m_ba = (1.0, b1 - a0)
            self.tris[ta].nbr[ia] = (tb, ib, m_ab[0], m_ab[1])
            self.tris[tb].nbr[ib] = (ta, ia, m_ba[0], m_ba[1])
        for t in self.tris:
            for i in range(3):
                if t.nbr[i] is None:
                    raise SurfaceError("triangulation adjacency incomplete")

    def _build_fans(self):
        surface = self.surface
        self.class_angle = {c.class_id: c.angle for c in surface.cone_points}
        self.singular_classes = frozenset(
            c.class_id for c in surface.singular_cone_points()
        )
        self.fans = {}
        self.corner_offset = {}
        self.corner_angle = {}
        self.fan_position = {}
        seen = set()
        corners = [(t.index, c) for t in self.tris for c in range(3)]
        for start in corners:
            if start in seen:
                continue
            cid = self.tris[start[0]].cls[start[1]]
            fan = []
            acc = 0.0
            cur = start
            while True:
                seen.add(cur)
                t, c = cur
                ang = self._corner_wedge_angle(t, c)
                fan.append(cur)
                self.corner_offset[cur] = acc
                self.corner_angle[cur] = ang
                self.fan_position[cur] = (cid, len(fan) - 1)
                acc += ang
                cur = self._next_ccw(t, c)
                if cur == start:
                    break
            if abs(acc - self.class_angle[cid]) > 1e-7:
                raise SurfaceError(
                    f"fan angle {acc} disagrees with cone angle "
                    f"{self.class_angle[cid]} for class {cid}"
                )
            self.fans[cid] = fan

    def _corner_wedge_angle(self, t, c):
        tri = self.tris[t]
        u = tri.verts[(c + 1) % 3] - tri.verts[c]
        v = tri.verts[(c + 2) % 3] - tri.verts[c]
        ang = (cmath.phase(v) - cmath.phase(u)) % TWO_PI
        return ang

    def _next_ccw(self, t, c):
        """Corner counterclockwise around the vertex: across side c-1."""
        nt, ni, _, _ = self.tris[t].nbr[(c + 2) % 3]
        return (nt, ni)

    # -- geometry helpers ----------------------------------------------------

    def corner_class(self, t, c):
        return self.tris[t].cls[c]

    def fan_coordinate(self, t, c, u_local):
        """Angular coordinate of direction ``u_local`` within corner (t, c).

        ``u_local`` is a vector in the triangle's chart lying inside the
        wedge; the value is in [0, cone angle) of the corner's class.
        """
        tri = self.tris[t]
        side = tri.verts[(c + 1) % 3] - tri.verts[c]
        rel = (cmath.phase(u_local) - cmath.phase(side)) % TWO_PI
        wedge = self.corner_angle[(t, c)]
        if rel > wedge + 1e-6:
            # numerically just outside the wedge; snap to nearest boundary
            rel = 0.0 if rel - wedge > (TWO_PI - rel) else wedge
        theta = self.class_angle[tri.cls[c]]
        return (self.corner_offset[(t, c)] + min(rel, wedge)) % theta

    def direction_at(self, t, c, coordinate):
        """Inverse of :meth:`fan_coordinate` restricted to corner (t, c)."""
        tri = self.tris[t]
        side = tri.verts[(c + 1) % 3] - tri.verts[c]
        rel = coordinate - self.corner_offset[(t, c)]
        return cmath.exp(1j * (cmath.phase(side) + rel))

    def wedge_at(self, cid, coordinate):
        """Corner (t, c) of class ``cid`` whose wedge contains the coordinate."""
        theta = self.class_angle[cid]
        coordinate %= theta
        for (t, c) in self.fans[cid]:
            off = self.corner_offset[(t, c)]
            if off - 1e-12 <= coordinate <= off + self.corner_angle[(t, c)] + 1e-12:
                return (t, c)
        # wrap-around slack
        return self.fans[cid][0]

    def polygon_triangles(self, pid):
        return self._poly_tris[pid]

    def locate(self, p: SurfacePoint):
        """All triangles of p's polygon containing p (closed), with position."""
        z = complex(*p.xy)
        out = []
        for t in self._poly_tris[p.polygon]:
            if self._contains(t, z):
                out.append(t.index)
        if not out:
            raise SurfaceError(f"point {p.xy} is not in polygon {p.polygon}")
        return out, z

    def _contains(self, tri: Tri, z, tol=1e-9):
        a, b, c = tri.verts
        for p, q in ((a, b), (b, c), (c, a)):
            if _cross(q - p, z - p) < -tol:
                return False
        return True

    def vertex_corner_near(self, t, z, tol=VERTEX_HIT_TOL):
        tri = self.tris[t]
        for c in range(3):
            if abs(tri.verts[c] - z) <= tol:
                return c
        return None

    def class_of_point(self, p: SurfacePoint):
        """Vertex class at p, or None when p is not a polygon vertex."""
        tris, z = self.locate(p)
        for t in tris:
            c = self.vertex_corner_near(t, z)
            if c is not None:
                return self.tris[t].cls[c]
        return None

    # -- straight-line flow --------------------------------------------------

    def start_state(self, p: SurfacePoint, direction):
        """Triangle, position and local direction from which the ray departs."""
        tris, z = self.locate(p)
        d = direction / abs(direction)
        for t in tris:
            c = self.vertex_corner_near(t, z)
            if c is not None:
                # at a vertex: pick the fan wedge containing the direction
                cid = self.tris[t].cls[c]
                coord = self.fan_coordinate(t, c, d)
                t2, c2 = self.wedge_at(cid, coord)
                d2 = self.direction_at(t2, c2, coord)
                return t2, self.tris[t2].verts[c2], d2
        for t in tris:
            if self._ray_enters(t, z, d):
                return t, z, d
        # p sits on a glued boundary edge with d pointing out of the chart:
        # carry the state across the gluing
        for t in tris:
            tri = self.tris[t]
            for i in range(3):
                a, b = tri.verts[i], tri.verts[(i + 1) % 3]
                e = b - a
                on = (
                    abs(_cross(e, z - a)) <= 1e-9 * max(1.0, abs(e))
                    and -1e-9 <= _param_along(a, b, z) <= 1 + 1e-9
                )
                if not on:
                    continue
                nt, ni, sgn, off = tri.nbr[i]
                z2 = sgn * (z - off)
                d2 = sgn * d
                if self._ray_enters(nt, z2, d2):
                    return nt, z2, d2
        raise SurfaceError("direction points out of the surface chart at p")

    def _ray_enters(self, t, z, d):
        # reject only when z lies on a side and d points strictly outward
        tri = self.tris[t]
        for i in range(3):
            a = tri.verts[i]
            b = tri.verts[(i + 1) % 3]
            e = b - a
            on_side = (
                abs(_cross(e, z - a)) <= 1e-9 * max(1.0, abs(e))
                and -1e-9 <= _param_along(a, b, z) <= 1 + 1e-9
            )
            if on_side and _cross(e, d) < -1e-12:
                return False
        return True

    def trace(self, p, direction, length, stop_classes=None, max_crossings=None):
        """Straight-line flow from ``p``; see :class:`RayResult`.

        ``stop_classes``: vertex classes that terminate the flow (default:
        singular classes).  Regular vertex hits outside the set are passed
        through by continuing straight in the matching fan wedge.
        """
        if stop_classes is None:
            stop_classes = self.singular_classes
        t, z, d = self.start_state(p, direction)
        return self._trace_state(t, z, d, length, stop_classes, max_crossings)

    def _trace_state(self, t, z, d, length, stop_classes, max_crossings=None):
        segs = []
        crossings = []
        acc = 0.0
        remaining = length
        guard = 0
        limit = max_crossings if max_crossings is not None else 200000
        while True:
            guard += 1
            if guard > limit:
                raise WorkBudgetExceeded("ray trace exceeded crossing budget")
            tri = self.tris[t]
            s_exit, side, corner = self._exit(tri, z, d)
            if s_exit is None:
                raise SurfaceError("ray failed to exit triangle (degenerate data)")
            if s_exit >= remaining - 1e-15:
                zs = z + remaining * d
                segs.append((tri.poly, z, zs))
                # a cutoff landing within tolerance of a stopping vertex counts
                # as a vertex hit
                c_end = self.vertex_corner_near(t, zs)
                if c_end is not None and tri.cls[c_end] in stop_classes:
                    return RayResult(
                        "cone", acc + abs(zs - z), segs, crossings,
                        t, zs, d, tri.cls[c_end], c_end,
                    )
                return RayResult(
                    "cutoff", acc + remaining, segs, crossings, t, zs, d, None, None
                )
            z_exit = z + s_exit * d
            if corner is not None:
                cid = tri.cls[corner]
                s_c = abs(tri.verts[corner] - z)
                segs.append((tri.poly, z, tri.verts[corner]))
                acc += s_c
                if cid in stop_classes:
                    return RayResult(
                        "cone", acc, segs, crossings, t, tri.verts[corner], d,
                        cid, corner,
                    )
                if abs(self.class_angle[cid] - TWO_PI) > 1e-9:
                    # singular vertex not in the stop set: flow undefined
                    return RayResult(
                        "cone", acc, segs, crossings, t, tri.verts[corner], d,
                        cid, corner,
                    )
                remaining -= s_c
                coord = self.fan_coordinate(t, corner, -d)
                fwd = (coord + math.pi) % TWO_PI
                t2, c2 = self.wedge_at(cid, fwd)
                d = self.direction_at(t2, c2, fwd)
                t, z = t2, self.tris[t2].verts[c2]
                crossings.append(("vertex", cid))
                continue
            segs.append((tri.poly, z, z_exit))
            acc += s_exit
            remaining -= s_exit
            nt, ni, sgn, off = tri.nbr[side]
            if tri.sides[side][0] == "edge":
                crossings.append(tri.sides[side][1:])
            inv_sgn = sgn  # sign is self-inverse
            z = inv_sgn * (z_exit - off)
            d = inv_sgn * d
            t = nt
            # nudge the entry point onto the neighbor's side to stop drift
            z = _project_to_side(self.tris[t], ni, z)

    def _exit(self, tri: Tri, z, d):
        """First exit of the ray z + s*d, s > 0, through the triangle boundary.

        Returns (s, side index, corner index or None); a corner within
        VERTEX_HIT_TOL of the exit point reports a vertex hit.
        """
        best = None
        for i in range(3):
            a = tri.verts[i]
            b = tri.verts[(i + 1) % 3]
            e = b - a
            denom = _cross(e, d)
            if abs(denom) < 1e-16:
                continue
            s = _cross(e, a - z) / denom
            if s <= 1e-12:
                continue
            hit = z + s * d
            u = _param_along(a, b, hit)
            if -1e-9 <= u <= 1 + 1e-9:
                if best is None or s < best[0]:
                    best = (s, i, hit, u)
        if best is None:
            return None, None, None
        s, i, hit, u = best
        corner = None
        a = tri.verts[i]
        b = tri.verts[(i + 1) % 3]
        if abs(hit - a) <= VERTEX_HIT_TOL:
            corner = i
        elif abs(hit - b) <= VERTEX_HIT_TOL:
            corner = (i + 1) % 3
        return s, i, corner

    # -- fans around arbitrary points ---------------------------------------

    def point_fan(self, p: SurfacePoint):
        """Wedges (tri, transform, lo, hi) covering the full angle around p.

        The transform develops the triangle chart with p at the origin; the
        intervals are consecutive and unwrapped, total width equal to the
        cone angle at p (2*pi at regular points).
        """
        tris, z = self.locate(p)
        for t in tris:
            c = self.vertex_corner_near(t, z)
            if c is not None:
                return self._vertex_fan(self.tris[t].cls[c])
        if len(tris) == 1:
            t = tris[0]
            g = (1.0, -z)
            a0 = cmath.phase(apply(g, self.tris[t].verts[0]))
            return [(t, g, a0, a0 + TWO_PI)], TWO_PI
        # p lies on an interior edge or diagonal: two half-plane wedges
        t1 = tris[0]
        tri1 = self.tris[t1]
        side = None
        for i in range(3):
            a, b = tri1.verts[i], tri1.verts[(i + 1) % 3]
            if abs(_cross(b - a, z - a)) < 1e-9 and -1e-9 <= _param_along(a, b, z) <= 1 + 1e-9:
                side = i
                break
        if side is None:
            raise SurfaceError("point location inconsistent (shared edge expected)")
        g1 = (1.0, -z)
        e_dir = cmath.phase(apply(g1, tri1.verts[(side + 1) % 3]) - apply(g1, tri1.verts[side]))
        nt, ni, sgn, off = tri1.nbr[side]
        g2 = compose(g1, (sgn, off))
        return [
            (t1, g1, e_dir, e_dir + math.pi),
            (nt, g2, e_dir + math.pi, e_dir + TWO_PI),
        ], TWO_PI

    def _vertex_fan(self, cid):
        wedges = []
        acc = None
        g = None
        prev = None
        for (t, c) in self.fans[cid]:
            tri = self.tris[t]
            if g is None:
                g = (1.0, -tri.verts[c])
                acc = cmath.phase(apply(g, tri.verts[(c + 1) % 3]))
            else:
                pt, pc = prev
                nt, ni, sgn, off = self.tris[pt].nbr[(pc + 2) % 3]
                assert nt == t and ni == c
                g = compose(g, (sgn, off))
            ang = self.corner_angle[(t, c)]
            wedges.append((t, g, acc, acc + ang))
            acc += ang
            prev = (t, c)
        return wedges, self.class_angle[cid]


@dataclass
class RayResult:
    terminal: str            # "cone" or "cutoff"
    length: float
    segments: list           # (polygon id, entry, exit) in chart coordinates
    crossings: list          # (polygon id, edge index) per boundary crossing
    tri: int
    position: complex
    direction: complex
    hit_class: int | None
    hit_corner: int | None


def _cross(a, b):
    return a.real * b.imag - a.imag * b.real


def _param_along(a, b, p):
    e = b - a
    L2 = e.real * e.real + e.imag * e.imag
    if L2 == 0:
        return 0.0
    return ((p - a).real * e.real + (p - a).imag * e.imag) / L2


def _project_to_side(tri: Tri, side, z):
    a = tri.verts[side]
    b = tri.verts[(side + 1) % 3]
    u = _param_along(a, b, z)
    u = min(max(u, 0.0), 1.0)
    return a + u * (b - a)
