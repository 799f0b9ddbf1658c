"""Developing-map engine: straight-line flow, distances, saddle connections.

Distances and segment enumeration use a sector search: triangle charts are
developed into the plane around a source point (or around a cone point's
full angular fan), and each search state carries the interval of departure
directions that reach its triangle through its entry side.  Opposite-vertex
images split the interval, so every vertex image visible from the source by
a straight segment is found exactly once, tagged with its departure angle,
arrival angle and developed position.

Geodesics between cone points are chains of such segments, straight between
vertex visits; shortest paths are assembled by Dijkstra over vertex classes
with the per-point visibility segments as entry and exit legs.
"""

from __future__ import annotations

import cmath
import heapq
import math
from bisect import bisect_left, bisect_right
from collections import deque
from dataclasses import dataclass, field

from .surface import FlatSurface, SurfaceError, SurfacePoint
from .triangulate import (
    IDENTITY,
    TWO_PI,
    Triangulation,
    WorkBudgetExceeded,
    apply,
    compose,
    _cross,
)

ANGLE_EPS = 1e-12
LENGTH_EPS = 1e-9
DEFAULT_SCAN_BUDGET = 4_000_000


class NoConePointError(SurfaceError):
    """Operation requires a singular cone point and the surface has none."""


class CutoffExceeded(Exception):
    """Search exhausted its cutoff without an answer; raise it and retry."""


def _lift(raw, ref):
    """Representative of ``raw`` mod 2*pi closest to ``ref``."""
    return raw + TWO_PI * round((ref - raw) / TWO_PI)


@dataclass(frozen=True)
class Detection:
    """A straight segment from the scan source to a vertex image."""

    length: float
    angle: float          # unwrapped departure angle in the developed plane
    cls: int              # vertex class of the image
    tri: int
    corner: int
    g: tuple              # transform developing the final triangle chart
    state: int            # index into the scan state arena (-1 for roots)
    position: complex     # developed image of the vertex


class Scan:
    """Sector search from one source; keeps its state arena for replay."""

    def __init__(self, geom, fan, theta, L, targets=None, budget=None):
        self.geom = geom
        self.fan = fan
        self.theta = theta
        self.base_angle = fan[0][2]
        self.L = L
        # state arena: tuples (tri, gs, gt, lo, hi, e_in, parent, cross_label)
        self.states = []
        self.detections = []
        self.target_hits = []
        self._run(targets, budget or DEFAULT_SCAN_BUDGET)

    # -- search ---------------------------------------------------------------

    def _run(self, targets, budget):
        tri_arr = self.geom.tri.tris
        L = self.L
        queue = deque()
        raw = []
        target_map = {}
        if targets:
            for q_idx, (t_set, z_loc) in enumerate(targets):
                for t in t_set:
                    target_map.setdefault(t, []).append((q_idx, z_loc))

        def spawn(tri, g, lo, hi, e_in, parent, label):
            if hi - lo <= ANGLE_EPS:
                return
            self.states.append((tri, g[0], g[1], lo, hi, e_in, parent, label))
            queue.append(len(self.states) - 1)

        for (t, g, wlo, whi) in self.fan:
            tri = tri_arr[t]
            V = [apply(g, v) for v in tri.verts]
            for j in range(3):
                if abs(V[j]) > 1e-12:
                    b = _lift(cmath.phase(V[j]), 0.5 * (wlo + whi))
                    if wlo - 1e-9 <= b <= whi + 1e-9 and abs(V[j]) <= L + LENGTH_EPS:
                        raw.append(
                            Detection(abs(V[j]), b, tri.cls[j], t, j, g, -1, V[j])
                        )
            if targets and t in target_map:
                for q_idx, z_loc in target_map[t]:
                    qd = apply(g, z_loc)
                    if abs(qd) > 1e-12 and abs(qd) <= L + LENGTH_EPS:
                        b = _lift(cmath.phase(qd), 0.5 * (wlo + whi))
                        if wlo - 1e-9 <= b <= whi + 1e-9:
                            self.target_hits.append((abs(qd), q_idx, b, -1))
            for j in range(3):
                A, B = V[j], V[(j + 1) % 3]
                if abs(A) <= 1e-12 or abs(B) <= 1e-12:
                    continue
                # skip a side whose line passes through the origin with the
                # origin between its endpoints (zero angular extent)
                e = B - A
                if abs(_cross(e, -A)) <= 1e-12 * max(1.0, abs(e)):
                    dot = (-A.real) * e.real + (-A.imag) * e.imag
                    if -1e-12 <= dot <= abs(e) ** 2 + 1e-12:
                        continue
                lo_r = cmath.phase(A)
                span = (cmath.phase(B) - lo_r) % TWO_PI
                if span >= math.pi - 1e-12:
                    continue  # origin not strictly left of the side
                # anchor the lift at the wedge start so seam ties stay inside
                lo_c = wlo + (lo_r - wlo) % TWO_PI
                if lo_c > whi + 1e-12:
                    lo_c -= TWO_PI
                lo2 = max(wlo, lo_c)
                hi2 = min(whi, lo_c + span)
                if hi2 - lo2 <= ANGLE_EPS:
                    continue
                nt, ni, sgn, off = tri.nbr[j]
                if _seg_dist(A, B) > L:
                    continue
                label = tri.sides[j][1:] if tri.sides[j][0] == "edge" else None
                spawn(nt, compose(g, (sgn, off)), lo2, hi2, ni, -1, label)

        states = self.states
        while queue:
            idx = queue.popleft()
            if len(states) > budget:
                raise WorkBudgetExceeded(
                    f"sector search exceeded {budget} states at cutoff {L}"
                )
            (t, gs, gt, lo, hi, e_in, parent, label) = states[idx]
            tri = tri_arr[t]
            g = (gs, gt)
            apex_c = (e_in + 2) % 3
            apex = gs * tri.verts[apex_c] + gt
            mid = 0.5 * (lo + hi)
            beta = _lift(cmath.phase(apex), mid)
            r = abs(apex)
            if lo + ANGLE_EPS < beta < hi - ANGLE_EPS and r <= L + LENGTH_EPS:
                raw.append(
                    Detection(r, beta, tri.cls[apex_c], t, apex_c, g, idx, apex)
                )
            if targets and t in target_map:
                for q_idx, z_loc in target_map[t]:
                    qd = gs * z_loc + gt
                    rq = abs(qd)
                    if rq <= L + LENGTH_EPS and rq > 1e-12:
                        bq = _lift(cmath.phase(qd), mid)
                        if lo + ANGLE_EPS < bq < hi - ANGLE_EPS:
                            self.target_hits.append((rq, q_idx, bq, idx))
            # children across the two exit sides
            for j, clo, chi in (
                ((e_in + 1) % 3, lo, min(beta, hi)),
                ((e_in + 2) % 3, max(beta, lo), hi),
            ):
                if chi - clo <= ANGLE_EPS:
                    continue
                A = gs * tri.verts[j] + gt
                B = gs * tri.verts[(j + 1) % 3] + gt
                if _seg_dist(A, B) > L:
                    continue
                nt, ni, sgn, off = tri.nbr[j]
                lab = tri.sides[j][1:] if tri.sides[j][0] == "edge" else None
                spawn(nt, compose(g, (sgn, off)), clo, chi, ni, idx, lab)

        # dedupe by source coordinate mod theta (wedge boundaries and the fan
        # seam record shared corners more than once)
        def folded(d):
            sa = (d.angle - self.base_angle) % self.theta
            if sa > self.theta - 1e-9:
                sa -= self.theta
            return sa

        raw.sort(key=lambda d: (folded(d), d.length))
        self.detections = []
        for d in raw:
            if self.detections:
                p = self.detections[-1]
                if (
                    p.cls == d.cls
                    and abs(folded(p) - folded(d)) < 1e-9
                    and abs(p.length - d.length) < 1e-9
                ):
                    continue
            self.detections.append(d)

    # -- replay ----------------------------------------------------------------

    def crossings(self, det: Detection):
        """Surface edges crossed by the segment, source to target order."""
        out = []
        idx = det.state
        while idx >= 0:
            st = self.states[idx]
            if st[7] is not None:
                out.append(st[7])
            idx = st[6]
        out.reverse()
        return tuple(out)

    def source_angle(self, det_angle):
        return (det_angle - self.base_angle) % self.theta


def _seg_dist(A, B, z=0j):
    e = B - A
    L2 = e.real * e.real + e.imag * e.imag
    if L2 == 0:
        return abs(A - z)
    u = ((z - A).real * e.real + (z - A).imag * e.imag) / L2
    u = min(max(u, 0.0), 1.0)
    return abs(A + u * e - z)


@dataclass(frozen=True)
class Segment:
    """Straight segment between vertex classes, cone-free in its interior.

    Angles are in the fixed angular coordinate of the respective class.
    ``src_angle`` is the outgoing direction at the source; ``dst_angle``
    the direction pointing back along the segment at the target.
    """

    src: int
    dst: int
    length: float
    src_angle: float
    dst_angle: float
    holonomy: complex

    def __repr__(self):
        return (
            f"Segment({self.src}->{self.dst}, len={self.length:.6g}, "
            f"src_angle={self.src_angle:.6g})"
        )


class Geometry:
    """Cached geometric engine for one surface."""

    def __init__(self, surface: FlatSurface):
        self.surface = surface
        self.tri = Triangulation(surface)
        self.classes = sorted(self.tri.class_angle)
        self.theta = self.tri.class_angle
        self._class_scans = {}
        self._seg_index = {}
        self._dist_matrix_L = 0.0
        self._dist_matrix = None

    # -- segment enumeration ---------------------------------------------------

    def class_scan(self, cid, L) -> Scan:
        cached = self._class_scans.get(cid)
        if cached is not None and cached.L >= L:
            return cached
        fan, theta = self.tri._vertex_fan(cid)
        scan = Scan(self, fan, theta, L)
        self._class_scans[cid] = scan
        self._seg_index.pop(cid, None)
        return scan

    def segments_from(self, cid, L):
        """Segments from class ``cid`` of length <= L, sorted by length."""
        self.class_scan(cid, L)
        idx = self._segment_index(cid)
        hi = bisect_right(idx.lengths, L + LENGTH_EPS)
        return idx.segments[:hi]

    def segments_with_detections(self, cid, L):
        self.class_scan(cid, L)
        idx = self._segment_index(cid)
        hi = bisect_right(idx.lengths, L + LENGTH_EPS)
        return idx.segments[:hi], idx.detections[:hi]

    def _segment_index(self, cid):
        idx = self._seg_index.get(cid)
        if idx is None:
            scan = self._class_scans[cid]
            pairs = [
                (self._detection_to_segment(cid, scan, d), d)
                for d in scan.detections
            ]
            pairs.sort(key=lambda sd: (sd[0].length, sd[0].src_angle))
            idx = _SegmentIndex([s for s, _ in pairs], [d for _, d in pairs])
            self._seg_index[cid] = idx
        return idx

    def _detection_to_segment(self, cid, scan, d: Detection):
        dst_angle = self.arrival_angle(d)
        return Segment(
            src=cid,
            dst=d.cls,
            length=d.length,
            src_angle=scan.source_angle(d.angle),
            dst_angle=dst_angle,
            holonomy=d.position,
        )

    def arrival_angle(self, d: Detection):
        """Angular coordinate at the target of the backward direction."""
        back_local = d.g[0] * (-d.position / abs(d.position))
        return self.tri.fan_coordinate(d.tri, d.corner, back_local)

    def segment_crossings(self, cid, seg: Segment):
        scan = self._class_scans.get(cid)
        idx = self._segment_index(cid)
        try:
            k = idx.segments.index(seg)
        except ValueError:
            raise KeyError("segment not found in scan") from None
        return scan.crossings(idx.detections[k])

    # -- visibility from arbitrary points ---------------------------------------

    def point_scan(self, p: SurfacePoint, L, targets=None) -> Scan:
        fan, theta = self.tri.point_fan(p)
        return Scan(self, fan, theta, L, targets=targets)

    def point_segments(self, p: SurfacePoint, L):
        """(class, length, detection) triples visible from p, sorted."""
        scan = self.point_scan(p, L)
        out = [(d.cls, d.length, d) for d in scan.detections]
        out.sort(key=lambda x: x[1])
        return out, scan

    # -- class-to-class distances ------------------------------------------------

    def class_distances(self, L):
        """Pairwise class distance matrix using chains of segments <= L."""
        if self._dist_matrix is not None and self._dist_matrix_L >= L:
            return self._dist_matrix
        n = len(self.classes)
        pos = {c: i for i, c in enumerate(self.classes)}
        INF = math.inf
        D = [[INF] * n for _ in range(n)]
        for i in range(n):
            D[i][i] = 0.0
        for c in self.classes:
            for s in self.segments_from(c, L):
                i, j = pos[c], pos[s.dst]
                if s.length < D[i][j]:
                    D[i][j] = s.length
                    D[j][i] = s.length
        for k in range(n):
            for i in range(n):
                dik = D[i][k]
                if dik == INF:
                    continue
                for j in range(n):
                    alt = dik + D[k][j]
                    if alt < D[i][j]:
                        D[i][j] = alt
                        D[j][i] = alt
        self._dist_matrix = {"pos": pos, "D": D}
        self._dist_matrix_L = L
        return self._dist_matrix


class _SegmentIndex:
    def __init__(self, segments, detections):
        self.segments = segments
        self.detections = detections
        self.lengths = [s.length for s in segments]


_GEOMETRY_CACHE = {}


def geometry(surface: FlatSurface) -> Geometry:
    geom = _GEOMETRY_CACHE.get(id(surface))
    if geom is None or geom.surface is not surface:
        geom = Geometry(surface)
        _GEOMETRY_CACHE[id(surface)] = geom
    return geom


def clear_caches():
    _GEOMETRY_CACHE.clear()


# -- public operation: straight-line flow --------------------------------------


@dataclass
class Trajectory:
    start: SurfacePoint
    direction: float
    segments: list          # (polygon id, entry (x, y), exit (x, y))
    length: float
    terminal: str           # "cone" or "cutoff"
    hit_class: int | None = None

    @property
    def end(self):
        pid, _, exit_xy = self.segments[-1]
        return SurfacePoint(pid, exit_xy)


def develop_ray(s: FlatSurface, p: SurfacePoint, angle: float, L: float) -> Trajectory:
    """Straight-line flow from p in chart direction ``angle`` for length L.

    The flow stops early when it hits a singular cone point (within the
    vertex tolerance); regular marked vertices are crossed straight.
    """
    if not L > 0:
        raise ValueError("L must be positive")
    geom = geometry(s)
    d = cmath.exp(1j * angle)
    res = geom.tri.trace(p, d, L)
    segs = [
        (pid, (z0.real, z0.imag), (z1.real, z1.imag)) for (pid, z0, z1) in res.segments
    ]
    return Trajectory(
        start=p,
        direction=angle,
        segments=segs,
        length=res.length,
        terminal=res.terminal,
        hit_class=res.hit_class,
    )


# -- public operation: distances and geodesic paths ------------------------------


@dataclass
class PathLeg:
    length: float
    src_angle: float | None   # departure coordinate at the leg's start visit
    dst_angle: float | None   # backward coordinate at the leg's end visit
    holonomy: tuple            # developed vector in the leg's own frame


@dataclass
class GeodesicPath:
    """Chain representation of a geodesic: straight legs between visits.

    ``visits`` lists the interior cone-point visits (class ids); entry (2)
    and exit legs connect the endpoints to the chain.  ``ties`` counts
    distinct minimizers within tolerance when more than one was found.
    """

    length: float
    legs: list
    visits: list
    endpoints: tuple
    ties: int = 1

    @property
    def waypoints(self):
        return (self.endpoints[0], *self.visits, self.endpoints[1])


def distance(s: FlatSurface, p: SurfacePoint, q: SurfacePoint, cutoff: float):
    """Globally shortest path between p and q, or raises CutoffExceeded.

    Returns ``(length, GeodesicPath)``.  The search is exhaustive up to the
    cutoff: direct visibility segments plus Dijkstra chains through vertex
    classes; every leg of the answer is a straight segment.
    """
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    geom = geometry(s)
    if p.polygon == q.polygon and p.xy == q.xy:
        return 0.0, GeodesicPath(0.0, [], [], (p, q))
    cls_p = geom.tri.class_of_point(p)
    cls_q = geom.tri.class_of_point(q)
    if cls_p is not None and cls_p == cls_q:
        return 0.0, GeodesicPath(0.0, [], [], (p, q))

    direct = []          # (length, departure angle) for single-leg answers
    if cls_p is None and cls_q is None:
        tris_q, zq = geom.tri.locate(q)
        scan_p = geom.point_scan(p, cutoff, targets=[(set(tris_q), zq)])
        p_legs = [(d.length, d.cls, d) for d in scan_p.detections]
        direct = [(r, b) for (r, _qi, b, _st) in scan_p.target_hits]
    elif cls_p is None:
        scan_p = geom.point_scan(p, cutoff)
        p_legs = [(d.length, d.cls, d) for d in scan_p.detections]
    else:
        p_legs = [(0.0, cls_p, None)]
    if cls_q is None:
        scan_q = geom.point_scan(q, cutoff)
        q_legs = [(d.length, d.cls, d) for d in scan_q.detections]
    else:
        q_legs = [(0.0, cls_q, None)]

    dm = geom.class_distances(cutoff)
    pos, D = dm["pos"], dm["D"]

    best = math.inf
    best_route = None
    ties = 0
    for (r, b) in direct:
        if r < best - LENGTH_EPS:
            best, best_route, ties = r, ("direct", b), 1
        elif r <= best + LENGTH_EPS:
            ties += 1
    cheapest_p = {}
    for (r, c, leg) in p_legs:
        if c not in cheapest_p or r < cheapest_p[c][0]:
            cheapest_p[c] = (r, leg)
    cheapest_q = {}
    for (r, c, leg) in q_legs:
        if c not in cheapest_q or r < cheapest_q[c][0]:
            cheapest_q[c] = (r, leg)
    for u, (ru, leg_u) in cheapest_p.items():
        for v, (rv, leg_v) in cheapest_q.items():
            total = ru + D[pos[u]][pos[v]] + rv
            if total < best - LENGTH_EPS:
                best, best_route, ties = total, ("chain", u, v, leg_u, leg_v), 1
            elif total <= best + LENGTH_EPS:
                ties += 1
    if best_route is None or best > cutoff + LENGTH_EPS:
        raise CutoffExceeded(f"no path within cutoff {cutoff}")
    path = _build_path(geom, p, q, best, best_route, ties, cutoff)
    return best, path


def _entry_leg(geom, det: Detection):
    h = det.position
    return PathLeg(abs(h), None, geom.arrival_angle(det), (h.real, h.imag))


def _seg_leg(seg: Segment):
    h = seg.holonomy
    return PathLeg(seg.length, seg.src_angle, seg.dst_angle, (h.real, h.imag))


def _build_path(geom, p, q, best, route, ties, cutoff):
    legs = []
    visits = []
    if route[0] == "direct":
        b = route[1]
        legs.append(
            PathLeg(best, None, None, (best * math.cos(b), best * math.sin(b)))
        )
        return GeodesicPath(best, legs, visits, (p, q), ties)
    _, u, v, leg_u, leg_v = route

    def push(leg, junction_class):
        if legs:
            visits.append(junction_class)
        legs.append(leg)

    if leg_u is not None:
        push(_entry_leg(geom, leg_u), None)
    # expand the class chain u -> v along the distance matrix
    dm = geom.class_distances(cutoff)
    pos, D = dm["pos"], dm["D"]
    cur = u
    guard = 0
    while cur != v and guard < 10 * len(geom.classes) + 10:
        guard += 1
        target = D[pos[cur]][pos[v]]
        found = False
        for seg in geom.segments_from(cur, cutoff):
            if abs(seg.length + D[pos[seg.dst]][pos[v]] - target) < 1e-9:
                push(_seg_leg(seg), cur)
                cur = seg.dst
                found = True
                break
        if not found:
            raise SurfaceError("failed to expand class chain (inconsistent cache)")
    if leg_v is not None:
        if cur != v:
            raise SurfaceError("class chain expansion did not reach the target")
        lv = _entry_leg(geom, leg_v)
        # reverse the q -> v leg into a v -> q leg
        push(
            PathLeg(lv.length, lv.dst_angle, None, (-lv.holonomy[0], -lv.holonomy[1])),
            v,
        )
    return GeodesicPath(best, legs, visits, (p, q), ties)


def distance_to_classes(s: FlatSurface, p: SurfacePoint, classes, cutoff: float):
    """Shortest distance from p to any vertex class in ``classes``.

    Grows the cutoff geometrically when nothing is reachable, so a finite
    answer is always found on a closed surface with nonempty ``classes``.
    """
    geom = geometry(s)
    classes = set(classes)
    if not classes:
        raise NoConePointError("no target classes")
    cls_p = geom.tri.class_of_point(p)
    if cls_p in classes:
        return 0.0
    L = cutoff
    for _ in range(40):
        if cls_p is not None:
            legs = [(t.length, t.dst) for t in geom.segments_from(cls_p, L)]
        else:
            scan = geom.point_scan(p, L)
            legs = [(d.length, d.cls) for d in scan.detections]
        dm = geom.class_distances(L)
        pos, D = dm["pos"], dm["D"]
        best = math.inf
        for (r, c) in legs:
            for tc in classes:
                best = min(best, r + D[pos[c]][pos[tc]])
        if best <= L + LENGTH_EPS:
            return best
        L *= 1.6
    raise CutoffExceeded("distance_to_classes failed to converge")


def gromov_product(s: FlatSurface, base: SurfacePoint, x: SurfacePoint, y: SurfacePoint, cutoff: float) -> float:
    """(x, y)_base = (d(x, base) + d(y, base) - d(x, y)) / 2."""
    dxp, _ = distance(s, x, base, cutoff)
    dyp, _ = distance(s, y, base, cutoff)
    dxy, _ = distance(s, x, y, cutoff)
    return 0.5 * (dxp + dyp - dxy)


# -- public operation: saddle connections ----------------------------------------


@dataclass(frozen=True)
class SaddleConnection:
    """Oriented geodesic segment between singular cone points.

    The interior contains no singular point; regular marked vertices may be
    crossed straight.  ``holonomy`` is the developed vector in the source
    chart; ``crossings`` lists the surface edges crossed in order.
    """

    start_class: int
    end_class: int
    holonomy: tuple
    length: float
    src_angle: float
    dst_angle: float
    crossings: tuple = ()

    def direction(self):
        return math.atan2(self.holonomy[1], self.holonomy[0])


def enumerate_saddle_connections(s: FlatSurface, L: float, include_regular_nodes=False):
    """All oriented saddle connections of length <= L, sorted.

    Each connection is reported once per orientation, ordered by length then
    by holonomy angle.  With ``include_regular_nodes`` the endpoints may be
    regular marked vertices as well (used internally for cylinder and
    counting searches).
    """
    if not L > 0:
        raise ValueError("L must be positive")
    geom = geometry(s)
    singular = set(geom.tri.singular_classes)
    nodes = set(geom.classes) if include_regular_nodes else singular
    if not nodes:
        raise NoConePointError("surface has no cone points")
    out = []
    for cid in sorted(nodes):
        for chain in _straight_chains(geom, cid, L, nodes):
            out.append(chain)
    out.sort(key=lambda c: (c.length, c.direction(), c.start_class, c.src_angle))
    return out


def _straight_chains(geom, cid, L, endpoint_nodes):
    """Maximal straight chains from ``cid``: segments glued straight across
    regular vertices that are not endpoint nodes."""
    theta = geom.theta
    results = []

    def extend(seg_list, total, src_angle):
        last = seg_list[-1]
        if last.dst in endpoint_nodes:
            crossings = sum(
                (geom.segment_crossings(s0.src, s0) for s0 in seg_list), ()
            )
            holo = seg_list[0].holonomy * (total / seg_list[0].length)
            results.append(
                SaddleConnection(
                    start_class=cid,
                    end_class=last.dst,
                    holonomy=(holo.real, holo.imag),
                    length=total,
                    src_angle=src_angle,
                    dst_angle=last.dst_angle,
                    crossings=crossings,
                )
            )
            return
        # pass straight through the regular vertex: departure opposite arrival
        th = theta[last.dst]
        want = (last.dst_angle + math.pi) % th
        for nxt in geom.segments_from(last.dst, L - total):
            if abs((nxt.src_angle - want + th / 2) % th - th / 2) < 1e-9:
                extend(seg_list + [nxt], total + nxt.length, src_angle)

    for s0 in geom.segments_from(cid, L):
        extend([s0], s0.length, s0.src_angle)
    return results


# -- local geodesic test -----------------------------------------------------------


def junction_angles(theta, arrival_angle, departure_angle):
    """Both flat angles between the back direction and the departure."""
    d = (departure_angle - arrival_angle) % theta
    return d, theta - d


JUNCTION_TOL = 1e-9


class ClassTransitions:
    """Departure segments of one class bucketed by length tier and sorted by
    departure angle inside each tier, for windowed junction queries.

    A junction is admissible when both flat angles between the incoming
    back direction and the outgoing direction are at least pi, i.e. the
    departure angle lies in [arrival + pi, arrival + theta - pi] mod theta.
    """

    def __init__(self, theta, segments):
        self.theta = theta
        self.segments = list(segments)
        tiers = {}
        if self.segments:
            base = min(s.length for s in self.segments)
            for i, s in enumerate(self.segments):
                k = int(math.log2(s.length / base)) if s.length > base else 0
                tiers.setdefault(k, []).append(i)
        self.tiers = []
        for k in sorted(tiers):
            idxs = tiers[k]
            idxs.sort(key=lambda i: self.segments[i].src_angle)
            ang = [self.segments[i].src_angle for i in idxs]
            self.tiers.append(
                (
                    min(self.segments[i].length for i in idxs),
                    ang + [a + theta for a in ang],
                    idxs + idxs,
                    len(idxs),
                )
            )

    def window_indices(self, arrival_angle, budget_len=math.inf):
        """Indices (into ``segments``) of admissible departures within budget."""
        theta = self.theta
        wlo = (arrival_angle + math.pi) % theta
        whi = wlo + (theta - 2.0 * math.pi)
        out = []
        for (min_len, ang2, idx2, n) in self.tiers:
            if min_len > budget_len:
                continue
            lo = bisect_left(ang2, wlo - JUNCTION_TOL)
            hi = bisect_right(ang2, whi + JUNCTION_TOL)
            for k in range(lo, hi):
                i = idx2[k]
                if self.segments[i].length <= budget_len:
                    out.append(i)
        return out


def build_transitions(geom, L):
    """Per-class transition structures over all segments of length <= L."""
    trans = {}
    for cid in geom.classes:
        theta = geom.theta[cid]
        if theta < TWO_PI - 1e-9:
            raise SurfaceError(
                f"cone angle {theta:.6g} < 2*pi at class {cid}: "
                "geodesic chain searches require a CAT(0) cover"
            )
        segs = geom.segments_from(cid, L)
        if segs:
            trans[cid] = ClassTransitions(theta, segs)
    return trans


def is_admissible_junction(theta, arrival_angle, departure_angle, tol=1e-9):
    a, b = junction_angles(theta, arrival_angle, departure_angle)
    return a >= math.pi - tol and b >= math.pi - tol


def is_local_geodesic(s: FlatSurface, path: GeodesicPath, tol=1e-9):
    """Check the angle condition at every interior visit of the path.

    Returns (ok, report) with one entry per interior vertex visit giving the
    two side angles.
    """
    geom = geometry(s)
    report = []
    ok = True
    legs, visits = path.legs, path.visits
    if len(legs) != len(visits) + 1:
        raise ValueError("malformed path: need one more leg than visits")
    for i, cls in enumerate(visits):
        arr = legs[i].dst_angle
        dep = legs[i + 1].src_angle
        if arr is None or dep is None:
            raise ValueError("path legs lack angular data at a visit")
        a, b = junction_angles(geom.theta[cls], arr, dep)
        good = a >= math.pi - tol and b >= math.pi - tol
        ok = ok and good
        report.append((cls, a, b, good))
    return ok, report
