"""Geodesic tightening by corner relaxation, and connector search.

A path is a cyclic or open list of straight legs; every leg carries the
developed corridor of triangles it crosses in its own frame.  At a corner
whose flat angle drops below pi on one side, the two adjacent legs and the
corner's wedge fan on the offending side are developed into one strip, and
the sub-path is replaced by the shortest path through the strip (funnel
algorithm).  Length decreases monotonically until every corner passes the
local-geodesic angle test.

The connector search runs Dijkstra over (vertex class, arrival direction)
states to find the shortest geodesic that extends one saddle connection and
is extended by another.
"""

from __future__ import annotations

import cmath
import heapq
import math
from dataclasses import dataclass

from .surface import FlatSurface, SurfaceError, SurfacePoint
from .triangulate import TWO_PI
from .unfolding import (
    CutoffExceeded,
    SaddleConnection,
    build_transitions,
    distance,
    geometry,
    junction_angles,
)

ANGLE_TOL = 1e-9
MIN_STEP = 1e-12


def _compose(g, h):
    return (g[0] * h[0], g[0] * h[1] + g[1])


def _invert(g):
    return (g[0], -g[0] * g[1])


def _apply(g, z):
    return g[0] * z + g[1]


@dataclass
class _Leg:
    """A straight surface segment in its own developed frame.

    The frame puts the start point at the origin; ``dirf`` is the constant
    frame direction.  ``corridor`` lists (triangle, transform-into-frame)
    for every triangle crossed, in order.
    """

    length: float
    dirf: complex
    corridor: list
    start_corner: int | None
    end_corner: int | None

    @property
    def start_tri(self):
        return self.corridor[0][0]

    @property
    def end_tri(self):
        return self.corridor[-1][0]

    @property
    def end_dev(self):
        return self.length * self.dirf

    def local_dir(self, k):
        g = self.corridor[k][1]
        return g[0] * self.dirf

    def start_point(self, geom):
        t, g = self.corridor[0]
        z = _apply(_invert(g), 0j)
        return SurfacePoint(geom.tri.tris[t].poly, (z.real, z.imag))

    def end_point(self, geom):
        t, g = self.corridor[-1]
        z = _apply(_invert(g), self.end_dev)
        return SurfacePoint(geom.tri.tris[t].poly, (z.real, z.imag))


def _trace_leg(geom, start: SurfacePoint, local_dir, length):
    """Develop the straight leg of the given length from ``start``.

    Regular marked vertices en route are crossed straight; a singular
    vertex must be the endpoint.
    """
    tri = geom.tri
    t, z, d = tri.start_state(start, local_dir)
    g = (1.0, -z)
    dirf = d
    start_corner = tri.vertex_corner_near(t, z)
    corridor = [(t, g)]
    zf = 0j
    guard = 0
    while True:
        guard += 1
        if guard > 100000:
            raise SurfaceError("leg trace exceeded budget")
        tcur, gcur = corridor[-1]
        tr = tri.tris[tcur]
        V = [_apply(gcur, v) for v in tr.verts]
        s_exit, side, corner = _exit_dev(V, zf, dirf)
        if s_exit is None:
            raise SurfaceError("leg trace stuck in a degenerate state")
        travelled = zf.real * dirf.real + zf.imag * dirf.imag
        remaining = length - travelled
        if s_exit >= remaining - 1e-9:
            zf_end = zf + remaining * dirf
            end_corner = None
            for c in range(3):
                if abs(V[c] - zf_end) <= 1e-7:
                    end_corner = c
            return _Leg(length, dirf, corridor, start_corner, end_corner)
        zf_exit = zf + s_exit * dirf
        if corner is not None:
            cid = tr.cls[corner]
            if abs(tri.class_angle[cid] - TWO_PI) > 1e-9:
                raise SurfaceError("leg crosses a singular cone point")
            zv = V[corner]
            cur_t, cur_c, cur_g = tcur, corner, gcur
            for _ in range(len(tri.fans[cid]) + 2):
                nt, ni, sgn, off = tri.tris[cur_t].nbr[(cur_c + 2) % 3]
                cur_g = _compose(cur_g, (sgn, off))
                cur_t, cur_c = nt, ni
                if _wedge_contains(tri, cur_t, cur_c, cur_g, dirf):
                    break
            else:
                raise SurfaceError("fan walk failed at a regular vertex")
            corridor.append((cur_t, cur_g))
            zf = zv
            continue
        nt, ni, sgn, off = tr.nbr[side]
        corridor.append((nt, _compose(gcur, (sgn, off))))
        zf = zf_exit


def _exit_dev(V, z, d):
    best = None
    for i in range(3):
        a, b = V[i], V[(i + 1) % 3]
        e = b - a
        denom = e.real * d.imag - e.imag * d.real
        if abs(denom) < 1e-16:
            continue
        w = a - z
        s = (e.real * w.imag - e.imag * w.real) / denom
        if s <= 1e-12:
            continue
        hit = z + s * d
        L2 = e.real * e.real + e.imag * e.imag
        u = ((hit - a).real * e.real + (hit - a).imag * e.imag) / L2
        if -1e-9 <= u <= 1 + 1e-9:
            if best is None or s < best[0]:
                best = (s, i, hit)
    if best is None:
        return None, None, None
    s, i, hit = best
    corner = None
    if abs(hit - V[i]) <= 1e-9:
        corner = i
    elif abs(hit - V[(i + 1) % 3]) <= 1e-9:
        corner = (i + 1) % 3
    return s, i, corner


def _wedge_contains(tri, t, c, g, direction, tol=1e-12):
    tr = tri.tris[t]
    v = tr.verts
    s1 = g[0] * (v[(c + 1) % 3] - v[c])
    s2 = g[0] * (v[(c + 2) % 3] - v[c])
    a0 = cmath.phase(s1)
    ang = (cmath.phase(s2) - a0) % TWO_PI
    rel = (cmath.phase(direction) - a0) % TWO_PI
    return rel <= ang + tol


# -- corners ---------------------------------------------------------------------


def _junctions(geom, legs, closed):
    """Corner data between consecutive legs: (kind, class, angle_a, angle_b)."""
    out = []
    n = len(legs)
    count = n if closed else n - 1
    for k in range(count):
        leg_in = legs[k]
        leg_out = legs[(k + 1) % n]
        if leg_in.end_corner is not None:
            t, c = leg_in.end_tri, leg_in.end_corner
            cls = geom.tri.tris[t].cls[c]
            beta_arr = geom.tri.fan_coordinate(
                t, c, -leg_in.local_dir(len(leg_in.corridor) - 1)
            )
            t2, c2 = leg_out.start_tri, leg_out.start_corner
            if c2 is None:
                raise SurfaceError("leg chain broken: vertex end, free start")
            beta_dep = geom.tri.fan_coordinate(t2, c2, leg_out.local_dir(0))
            a, b = junction_angles(geom.theta[cls], beta_arr, beta_dep)
            out.append(("vertex", cls, a, b))
        else:
            d_in = leg_in.local_dir(len(leg_in.corridor) - 1)
            d_out = leg_out.local_dir(0)
            ang = (cmath.phase(d_out) - cmath.phase(-d_in)) % TWO_PI
            out.append(("anchor", None, ang, TWO_PI - ang))
    return out


# -- relaxation -------------------------------------------------------------------


@dataclass
class _FunnelPoint:
    pos: complex
    tri: int
    corner: int
    g: tuple


def _strip_portals(geom, strip):
    portals = []
    for i in range(len(strip) - 1):
        t, g = strip[i]
        t2, g2 = strip[i + 1]
        tr = geom.tri.tris[t]
        found = None
        for j in range(3):
            nt, ni, sgn, off = tr.nbr[j]
            if nt != t2:
                continue
            gj = _compose(g, (sgn, off))
            if abs(gj[0] - g2[0]) < 1e-9 and abs(gj[1] - g2[1]) < 1e-6:
                found = ni
                break
        if found is None:
            raise SurfaceError("strip triangles are not adjacent")
        V = geom.tri.tris[t2].verts
        left = _FunnelPoint(_apply(g2, V[found]), t2, found, g2)
        right = _FunnelPoint(
            _apply(g2, V[(found + 1) % 3]), t2, (found + 1) % 3, g2
        )
        portals.append((left, right))
    return portals


def _triarea2(a, b, c):
    ax, ay = b.real - a.real, b.imag - a.imag
    bx, by = c.real - a.real, c.imag - a.imag
    return bx * ay - ax * by


def _funnel(A, portals, B):
    """Funnel (string pulling) through the developed portals from A to B."""
    lefts = [p[0] for p in portals] + [_FunnelPoint(B, -1, -1, (1.0, 0j))]
    rights = [p[1] for p in portals] + [_FunnelPoint(B, -1, -1, (1.0, 0j))]
    apex = A
    p_left = A
    p_right = A
    apex_i = left_i = right_i = -1
    pts = []
    i = 0
    eps = 1e-12
    while i < len(lefts):
        left = lefts[i].pos
        right = rights[i].pos
        if _triarea2(apex, p_right, right) >= -eps:
            if abs(apex - p_right) < 1e-14 or _triarea2(apex, p_left, right) < eps:
                p_right = right
                right_i = i
            else:
                pts.append(lefts[left_i])
                apex = p_left
                apex_i = left_i
                p_left = p_right = apex
                left_i = right_i = apex_i
                i = apex_i + 1
                continue
        if _triarea2(apex, p_left, left) <= eps:
            if abs(apex - p_left) < 1e-14 or _triarea2(apex, p_right, left) > -eps:
                p_left = left
                left_i = i
            else:
                pts.append(rights[right_i])
                apex = p_right
                apex_i = right_i
                p_left = p_right = apex
                left_i = right_i = apex_i
                i = apex_i + 1
                continue
        i += 1
    return pts


def _fan_strip(geom, t_a, c_a, g_a, t_b, c_b, ccw):
    """Wedges around a vertex from the arrival corner to the departure one.

    Walks around the vertex composing developed transforms from ``g_a``;
    the arrival triangle is excluded, the departure triangle included.
    """
    tri = geom.tri
    out = []
    cur_t, cur_c, cur_g = t_a, c_a, g_a
    fan_len = len(tri.fans[tri.tris[t_a].cls[c_a]])
    for _ in range(2 * fan_len + 2):
        if ccw:
            nt, ni, sgn, off = tri.tris[cur_t].nbr[(cur_c + 2) % 3]
            cur_g = _compose(cur_g, (sgn, off))
            cur_t, cur_c = nt, ni
        else:
            nt, ni, sgn, off = tri.tris[cur_t].nbr[cur_c]
            cur_g = _compose(cur_g, (sgn, off))
            cur_t, cur_c = nt, (ni + 1) % 3
        out.append((cur_t, cur_g))
        if (cur_t, cur_c) == (t_b, c_b):
            return out, cur_g
    raise SurfaceError("fan strip walk failed to reach the departure wedge")


def _dedupe_strip(strip):
    out = [strip[0]]
    for (t, g) in strip[1:]:
        pt, pg = out[-1]
        if t == pt and abs(g[0] - pg[0]) < 1e-12 and abs(g[1] - pg[1]) < 1e-7:
            continue
        out.append((t, g))
    return out


def _relax_at(geom, leg_in, leg_out):
    """Funnel replacement of the two legs around their shared corner."""
    strip = list(leg_in.corridor)
    if leg_in.end_corner is not None:
        t_a, c_a = leg_in.end_tri, leg_in.end_corner
        cls = geom.tri.tris[t_a].cls[c_a]
        beta_arr = geom.tri.fan_coordinate(
            t_a, c_a, -leg_in.local_dir(len(leg_in.corridor) - 1)
        )
        t_b, c_b = leg_out.start_tri, leg_out.start_corner
        beta_dep = geom.tri.fan_coordinate(t_b, c_b, leg_out.local_dir(0))
        theta = geom.theta[cls]
        ccw = (beta_dep - beta_arr) % theta <= theta - ((beta_dep - beta_arr) % theta)
        fan_tris, g_link = _fan_strip(
            geom, t_a, c_a, leg_in.corridor[-1][1], t_b, c_b, ccw
        )
        strip.extend(fan_tris)
    else:
        g_link = leg_in.corridor[-1][1]
        if leg_out.start_tri != leg_in.end_tri:
            # same chart (same polygon); reuse the transform
            pass
    X = _compose(g_link, _invert(leg_out.corridor[0][1]))
    for (t, g) in leg_out.corridor:
        strip.append((t, _compose(X, g)))
    strip = _dedupe_strip(strip)
    A = 0j
    B = _apply(X, leg_out.end_dev)
    corners = _funnel(A, _strip_portals(geom, strip), B)
    chain = [A] + [w.pos for w in corners] + [B]
    new_legs = []
    start_pt = leg_in.start_point(geom)
    for idx in range(1, len(chain)):
        seg = chain[idx] - chain[idx - 1]
        length = abs(seg)
        if length < 1e-12:
            continue
        dirf = seg / length
        if idx == 1:
            d_loc = _local_dir_at(geom, strip, chain[0], dirf)
            new_legs.append(_trace_leg(geom, start_pt, d_loc, length))
        else:
            w = corners[idx - 2]
            z = geom.tri.tris[w.tri].verts[w.corner]
            sp = SurfacePoint(geom.tri.tris[w.tri].poly, (z.real, z.imag))
            d_loc = w.g[0] * dirf
            new_legs.append(_trace_leg(geom, sp, d_loc, length))
    return new_legs


def _local_dir_at(geom, strip, dev_point, dirf):
    for (t, g) in strip:
        V = [_apply(g, v) for v in geom.tri.tris[t].verts]
        if _dev_contains(V, dev_point):
            return g[0] * dirf
    return strip[0][1][0] * dirf


def _dev_contains(V, z, tol=1e-9):
    for i in range(3):
        a, b = V[i], V[(i + 1) % 3]
        if (b.real - a.real) * (z.imag - a.imag) - (b.imag - a.imag) * (
            z.real - a.real
        ) < -tol:
            return False
    return True


@dataclass
class TightenResult:
    """Outcome of the corner relaxation."""

    length: float
    closed: bool
    converged: bool
    iterations: int
    corners: list          # (kind, class or None, side angle, other side)
    legs: list

    def is_local_geodesic(self, tol=1e-9):
        return all(min(a, b) >= math.pi - tol for (_k, _c, a, b) in self.corners)

    def leg_lengths(self):
        return [l.length for l in self.legs]


def tighten(
    s: FlatSurface,
    points,
    closed: bool = False,
    max_iterations: int = 200,
    cutoff: float = None,
) -> TightenResult:
    """Length-minimizing local geodesic in the path's homotopy class.

    ``points`` are anchors joined by shortest geodesics (dense enough that
    the joins are the intended ones); with ``closed`` the last anchor joins
    back to the first and the free homotopy class is tightened.  The result
    is flagged ``converged=False`` when the iteration or step limit was hit
    before all corners passed the angle test.
    """
    geom = geometry(s)
    pts = list(points)
    if (closed and len(pts) < 1) or (not closed and len(pts) < 2):
        raise ValueError("not enough anchor points")
    cutoff = cutoff or 4.0 * math.sqrt(s.area)
    legs = []
    pairs = (
        [(i, (i + 1) % len(pts)) for i in range(len(pts))]
        if closed
        else [(i, i + 1) for i in range(len(pts) - 1)]
    )
    for (i, j) in pairs:
        legs.extend(_join_legs(geom, s, pts[i], pts[j], cutoff))
    if not legs:
        raise ValueError("degenerate input path")

    total = sum(l.length for l in legs)
    iterations = 0
    converged = False
    while iterations < max_iterations:
        iterations += 1
        corners = _junctions(geom, legs, closed)
        worst = None
        for k, (kind, cls, a, b) in enumerate(corners):
            if min(a, b) < math.pi - ANGLE_TOL:
                if worst is None or min(a, b) < worst[1]:
                    worst = (k, min(a, b))
        if worst is None:
            converged = True
            break
        k = worst[0]
        if closed:
            legs[:] = legs[k:] + legs[:k]
            k = 0
        if len(legs) == 1:
            # single closed leg bending at its base point: split it in two
            # so the corner can be funneled
            half = legs[0].length / 2.0
            head = _trace_leg(
                geom, legs[0].start_point(geom), legs[0].local_dir(0), half
            )
            tail = _trace_leg(
                geom, head.end_point(geom),
                head.local_dir(len(head.corridor) - 1),
                legs[0].length - half,
            )
            legs[:] = [tail, head]
            k = 0
        new_legs = _relax_at(geom, legs[k], legs[(k + 1) % len(legs)])
        if (k + 1) % len(legs) == 0:
            legs[:] = new_legs
        else:
            legs[k : k + 2] = new_legs
        new_total = sum(l.length for l in legs)
        if new_total > total - MIN_STEP:
            total = new_total
            corners = _junctions(geom, legs, closed)
            converged = not any(
                min(a, b) < math.pi - ANGLE_TOL for (_k, _c, a, b) in corners
            )
            break
        total = new_total
    corners = _junctions(geom, legs, closed)
    if not converged:
        converged = not any(
            min(a, b) < math.pi - ANGLE_TOL for (_k, _c, a, b) in corners
        )
    return TightenResult(
        length=sum(l.length for l in legs),
        closed=closed,
        converged=converged,
        iterations=iterations,
        corners=corners,
        legs=legs,
    )


def _join_legs(geom, s, p, q, cutoff):
    """Straight legs realizing the shortest geodesic from p to q."""
    d, path = distance(s, p, q, cutoff)
    if d == 0.0:
        return []
    legs = []
    cur_point = p
    for leg in path.legs:
        if leg.src_angle is None:
            hol = complex(*leg.holonomy)
            legs.append(_trace_leg(geom, cur_point, hol / abs(hol), leg.length))
        else:
            cls = geom.tri.class_of_point(cur_point)
            if cls is None:
                raise SurfaceError("path leg starts at a non-vertex point")
            t, c = geom.tri.wedge_at(cls, leg.src_angle)
            dloc = geom.tri.direction_at(t, c, leg.src_angle)
            start = geom.tri.tris[t].verts[c]
            sp = SurfacePoint(geom.tri.tris[t].poly, (start.real, start.imag))
            legs.append(_trace_leg(geom, sp, dloc, leg.length))
        cur_point = legs[-1].end_point(geom)
    return legs


# -- connector search -------------------------------------------------------------


@dataclass
class ConnectorReport:
    """Shortest geodesic extending sc1 and extended by sc2."""

    sc1: SaddleConnection
    sc2: SaddleConnection
    connector: tuple           # Segment chain, possibly empty
    excess: float              # length of the connector
    total_length: float        # len(sc1) + excess + len(sc2)

    def __str__(self):
        return (
            f"connector of length {self.excess:.9g} "
            f"({len(self.connector)} segments)"
        )


def connector_search(
    s: FlatSurface, sc1: SaddleConnection, sc2: SaddleConnection, cutoff: float
) -> ConnectorReport:
    """Shortest local geodesic g with sc1 * g * sc2 locally geodesic.

    The search is exhaustive over admissible segment chains of length up to
    the cutoff; raises CutoffExceeded when none fits.
    """
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    geom = geometry(s)
    theta = geom.theta

    def closes(cls, arrival_angle):
        if cls != sc2.start_class:
            return False
        a, b = junction_angles(theta[cls], arrival_angle, sc2.src_angle)
        return a >= math.pi - ANGLE_TOL and b >= math.pi - ANGLE_TOL

    if closes(sc1.end_class, sc1.dst_angle):
        return ConnectorReport(sc1, sc2, (), 0.0, sc1.length + sc2.length)
    trans = build_transitions(geom, cutoff)
    pq = [(0.0, 0, sc1.end_class, sc1.dst_angle, ())]
    seen = {}
    counter = 1
    while pq:
        cost, _, cls, arr, chain = heapq.heappop(pq)
        key = (cls, round(arr, 12))
        if key in seen and seen[key] <= cost + 1e-15:
            continue
        seen[key] = cost
        if chain and closes(cls, arr):
            return ConnectorReport(
                sc1, sc2, chain, cost, sc1.length + cost + sc2.length
            )
        ct = trans.get(cls)
        if ct is None:
            continue
        for j in ct.window_indices(arr, cutoff - cost):
            seg = ct.segments[j]
            heapq.heappush(
                pq,
                (cost + seg.length, counter, seg.dst, seg.dst_angle, chain + (seg,)),
            )
            counter += 1
    raise CutoffExceeded(f"no connector within cutoff {cutoff}")


def max_connector_excess(s: FlatSurface, connections, cutoff: float):
    """Empirical bound: max connector excess over all ordered pairs."""
    worst = 0.0
    worst_pair = None
    for a in connections:
        for b in connections:
            rep = connector_search(s, a, b, cutoff)
            if rep.excess > worst:
                worst = rep.excess
                worst_pair = (a, b)
    return worst, worst_pair
