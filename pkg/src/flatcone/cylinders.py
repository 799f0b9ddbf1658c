"""Maximal flat cylinders, the high-cylinder decomposition and the systole.

A maximal cylinder is bounded by vertex-class segments parallel to its core,
so every cylinder of circumference at most ``c_max`` is adjacent to some
enumerated segment of length at most ``c_max``.  Each segment side is probed
by flowing perpendicular off the segment midpoint and testing whether the
parallel flow closes up; the height is the supremum of closing offsets,
found by doubling and bisection.  Cylinders found from different seeds are
identified by the crossing cycle of the mid-height core circle, recorded
with edge parameters, which pins the circle exactly.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field

from .surface import FlatSurface, SurfaceError, SurfacePoint
from .triangulate import WorkBudgetExceeded
from .unfolding import (
    SaddleConnection,
    build_transitions,
    enumerate_saddle_connections,
    distance,
    geometry,
    junction_angles,
    CutoffExceeded,
)

PROBE_OFFSET = 1e-6
HEIGHT_TOL = 1e-11


@dataclass
class CylinderRecord:
    """A maximal flat cylinder.

    ``direction`` is the unit core direction in the chart of the first
    boundary segment's source; ``core_point``/``core_direction`` give a
    point on the mid-height core circle in its own chart.
    """

    direction: tuple
    circumference: float
    height: float
    boundary_a: list
    boundary_b: list
    maximal: bool
    core_point: SurfacePoint = None
    core_direction: tuple = None
    key: tuple = field(default=(), repr=False)

    @property
    def area(self):
        return self.circumference * self.height


class _FlowOps:
    """Closed-flow probing helpers over one surface."""

    def __init__(self, geom):
        self.geom = geom
        self.all_classes = frozenset(geom.classes)
        # canonical side per gluing, with the parameter flip onto it
        self.canon_edge = {}
        for g in geom.surface.gluings:
            canon = min(g.side_a, g.side_b)
            self.canon_edge[g.side_a] = (canon, g.side_a != canon)
            self.canon_edge[g.side_b] = (canon, g.side_b != canon)

    def crossing_label(self, pid, eidx, param, phi):
        """Canonical crossing datum: gluing id, edge parameter and the
        signed angle of the flow against the canonical edge direction."""
        (canon, flip) = self.canon_edge[(pid, eidx)]
        u = 1.0 - param if flip else param
        # fold the crossing angle into (0, pi): invariant under traversal
        # reversal and chart flips, yet distinct for mirror-image circles
        phi_mod = phi if phi > 0 else phi + math.pi
        return (canon[0], canon[1], round(u, 6), round(phi_mod, 6))

    def segment_midpoint_frame(self, sc: SaddleConnection):
        """(SurfacePoint, direction) at the midpoint of a saddle connection."""
        geom = self.geom
        t, c = geom.tri.wedge_at(sc.start_class, sc.src_angle)
        d = geom.tri.direction_at(t, c, sc.src_angle)
        start = geom.tri.tris[t].verts[c]
        sp = SurfacePoint(geom.tri.tris[t].poly, (start.real, start.imag))
        res = geom.tri.trace(sp, d, sc.length / 2.0, stop_classes=self.all_classes)
        if res.terminal != "cutoff":
            raise SurfaceError("segment midpoint trace hit a vertex unexpectedly")
        poly = geom.tri.tris[res.tri].poly
        return (
            SurfacePoint(poly, (res.position.real, res.position.imag)),
            res.direction,
        )

    def perpendicular_frame(self, sp, core_dir, side, offset):
        """Transport the core direction ``offset`` off the segment.

        ``side`` is +1 for the left of the core direction, -1 for the right.
        Returns (tri, position, transported core direction) or None when the
        perpendicular ray hits a vertex first.
        """
        n = 1j * core_dir * side
        try:
            res = self.geom.tri.trace(sp, n, offset, stop_classes=self.all_classes)
        except SurfaceError:
            return None
        if res.terminal != "cutoff":
            return None
        d2 = res.direction * (core_dir / n)
        poly = self.geom.tri.tris[res.tri].poly
        return SurfacePoint(poly, (res.position.real, res.position.imag)), d2

    def closed_flow(self, sp, d, max_len, collect_key=False, collect_corridor=False):
        """Period of the closed geodesic through (sp, d), or None.

        The flow fails when it hits any vertex class or does not return to
        its starting point with the starting direction within ``max_len``.
        With ``collect_key`` the crossing cycle (canonical edge ids with
        crossing parameters and angles) is returned alongside; with
        ``collect_corridor`` the visited triangles are returned developed
        into the starting chart as (tri index, transform) pairs.
        """
        tri = self.geom.tri
        try:
            t0, z0, d0 = tri.start_state(sp, d)
        except SurfaceError:
            return None, None
        t, z, d = t0, z0, d0
        g = (1.0, 0j)  # develops the current chart into the starting chart
        acc = 0.0
        crossings = []
        corridor = []
        guard = 0
        while acc <= max_len + 1e-9:
            guard += 1
            if guard > 100000:
                raise WorkBudgetExceeded("closed flow exceeded crossing budget")
            tr = tri.tris[t]
            if collect_corridor:
                corridor.append((t, g))
            s_exit, side, corner = tri._exit(tr, z, d)
            if s_exit is None:
                # degenerate state at a chart seam; treat as a failed closure
                return None, None
            if t == t0 and abs(d - d0) < 1e-9:
                w = z0 - z
                along = w.real * d.real + w.imag * d.imag
                perp = abs(w.real * d.imag - w.imag * d.real)
                if perp <= 1e-9 and -1e-12 <= along <= s_exit + 1e-12 and acc + along > 1e-9:
                    period = acc + along
                    if period <= max_len + 1e-9:
                        if collect_key:
                            return period, _canonical_cycle(crossings)
                        if collect_corridor:
                            return period, corridor
                        return period, None
            if corner is not None:
                return None, None
            z_exit = z + s_exit * d
            if collect_key and tr.sides[side][0] == "edge":
                a = tr.verts[side]
                b = tr.verts[(side + 1) % 3]
                e = b - a
                denom = abs(e) ** 2
                param = (
                    ((z_exit - a).real * e.real + (z_exit - a).imag * e.imag) / denom
                )
                phi = math.atan2(
                    e.real * d.imag - e.imag * d.real,
                    e.real * d.real + e.imag * d.imag,
                )
                crossings.append(
                    self.crossing_label(tr.sides[side][1], tr.sides[side][2], param, phi)
                )
            acc += s_exit
            nt, ni, sgn, off = tr.nbr[side]
            # compose so the new chart develops into the starting chart
            g = (g[0] * sgn, g[0] * off + g[1])
            z = sgn * (z_exit - off)
            d = sgn * d
            t = nt
        return None, None


def _reverse_cycle(seq):
    return tuple(reversed(seq))


def _min_rotation(s):
    return min(tuple(s[i:] + s[:i]) for i in range(len(s))) if s else ()


def _canonical_cycle(crossings):
    """Cyclic crossing sequence up to rotation and orientation reversal.

    The same circle traversed backwards yields the reversed sequence with
    the crossing angles shifted by pi; a distinct mirror-image cylinder
    keeps its own angles and stays distinct.
    """
    if not crossings:
        return ()
    seq = tuple(crossings)
    return min(_min_rotation(seq), _min_rotation(_reverse_cycle(seq)))


def detect_cylinders(
    s: FlatSurface, h_min: float, c_max: float, include_regular_nodes=True
):
    """All maximal cylinders with height >= h_min and circumference <= c_max.

    Cylinders of height below the probe offset (1e-6) are not detected; the
    bundled tolerance suits unit-scale surfaces.
    """
    if not h_min > 0 or not c_max > 0:
        raise ValueError("h_min and c_max must be positive")
    geom = geometry(s)
    ops = _FlowOps(geom)
    area = s.area
    try:
        segs = enumerate_saddle_connections(
            s, c_max, include_regular_nodes=include_regular_nodes
        )
    except Exception:
        segs = []
    found = {}
    for sc in segs:
        try:
            mid, d_core = ops.segment_midpoint_frame(sc)
        except SurfaceError:
            continue
        for side in (1, -1):
            rec = _measure_cylinder(ops, sc, mid, d_core, side, c_max, area)
            if rec is None:
                continue
            key = rec.key
            if key in found:
                _attach_boundary(found[key], sc, rec.seed_reversed)
            else:
                found[key] = rec
                _attach_boundary(rec, sc, rec.seed_reversed)
    out = [
        r
        for r in found.values()
        if r.height >= h_min - 1e-9 and r.circumference <= c_max + 1e-9
    ]
    for r in out:
        r.boundary_a.sort(key=lambda c: (c.length, c.src_angle, c.start_class))
        r.boundary_b.sort(key=lambda c: (c.length, c.src_angle, c.start_class))
    out.sort(key=lambda r: (r.circumference, r.height, r.key))
    return out


def _measure_cylinder(ops, sc, mid, d_core, side, c_max, area):
    """Measure the maximal cylinder adjacent to the seed segment's side.

    One circle close to the seed is traced and its corridor developed; the
    height is the offset of the nearest vertex image across the band, which
    is exact: the open band below it contains no vertex (every edge bounding
    it crosses the traced circle), and the minimizing vertex is a cone or
    marked point on the far boundary circle.
    """
    cap = c_max * (1.0 + 1e-9) + 1e-9
    probe = ops.perpendicular_frame(mid, d_core, side, PROBE_OFFSET)
    if probe is None:
        return None
    period, corridor = ops.closed_flow(probe[0], probe[1], cap, collect_corridor=True)
    if period is None:
        return None
    c0 = period
    # developed frame: probe[0] at origin-ish, core direction probe[1];
    # outward normal away from the seed
    tri = ops.geom.tri
    t0, z0, d0 = tri.start_state(probe[0], probe[1])
    n_out = 1j * d0 * side
    span_up = math.inf
    span_down = math.inf
    for (t, g) in corridor:
        for v in tri.tris[t].verts:
            w = g[0] * v + g[1] - z0
            off = w.real * n_out.real + w.imag * n_out.imag
            if off > 1e-9:
                span_up = min(span_up, off)
            elif off < -1e-9:
                span_down = min(span_down, -off)
    if not math.isfinite(span_up) or not math.isfinite(span_down):
        return None
    h = PROBE_OFFSET + span_up
    if abs(span_down - PROBE_OFFSET) > 1e-6 * max(1.0, h):
        # the seed segment is not on the boundary facing this side
        h = span_down + span_up
    core = ops.perpendicular_frame(mid, d_core, side, h / 2.0)
    if core is None:
        return None
    period2, key = ops.closed_flow(core[0], core[1], cap, collect_key=True)
    if period2 is None or key is None:
        return None
    rec = CylinderRecord(
        direction=_unit_mod_pi(sc.holonomy),
        circumference=c0,
        height=h,
        boundary_a=[],
        boundary_b=[],
        maximal=True,
        core_point=core[0],
        core_direction=(core[1].real, core[1].imag),
        key=key,
    )
    rec.seed_reversed = _is_reversed(ops, core, cap, key)
    return rec


def _is_reversed(ops, core, cap, key):
    # the seed's core trace matches the canonical key either forwards or,
    # when the seed sits on the other boundary, after reversal
    raw = _raw_cycle(ops, core[0], core[1], cap)
    if raw is None:
        return False
    return _min_rotation(tuple(raw)) != key


def _raw_cycle(ops, sp, d, cap):
    period, key = ops.closed_flow(sp, d, cap, collect_key=False)
    if period is None:
        return None
    # re-trace collecting the raw crossing list
    geom = ops.geom
    t0, z0, d0 = geom.tri.start_state(sp, d)
    t, z, dd = t0, z0, d0
    acc = 0.0
    out = []
    while acc <= period + 1e-9:
        tr = geom.tri.tris[t]
        s_exit, side, corner = geom.tri._exit(tr, z, dd)
        if s_exit is None or corner is not None:
            return out
        if acc + s_exit > period + 1e-9:
            return out
        z_exit = z + s_exit * dd
        if tr.sides[side][0] == "edge":
            a = tr.verts[side]
            b = tr.verts[(side + 1) % 3]
            e = b - a
            denom = abs(e) ** 2
            param = (
                ((z_exit - a).real * e.real + (z_exit - a).imag * e.imag) / denom
            )
            phi = math.atan2(
                e.real * dd.imag - e.imag * dd.real,
                e.real * dd.real + e.imag * dd.imag,
            )
            out.append(
                ops.crossing_label(tr.sides[side][1], tr.sides[side][2], param, phi)
            )
        acc += s_exit
        nt, ni, sgn, off = tr.nbr[side]
        z = sgn * (z_exit - off)
        dd = sgn * dd
        t = nt
    return out


def _attach_boundary(rec: CylinderRecord, sc: SaddleConnection, reversed_side):
    target = rec.boundary_b if reversed_side else rec.boundary_a
    if sc not in target:
        target.append(sc)


def _unit_mod_pi(holonomy):
    x, y = holonomy
    n = math.hypot(x, y)
    x, y = x / n, y / n
    if y < 0 or (abs(y) < 1e-15 and x < 0):
        x, y = -x, -y
    return (x, y)


# -- high-cylinder decomposition ---------------------------------------------


@dataclass
class ComponentRecord:
    index: int
    samples: list              # SurfacePoints in the component
    diameter_lower: float
    diameter_upper: float
    touches_cylinders: set = field(default_factory=set)


@dataclass
class Decomposition:
    c_height: float
    cylinders: list            # CylinderRecord, height >= c_height
    central_heights: list      # height of each central subcylinder
    components: list           # ComponentRecord

    def __str__(self):
        lines = [f"c_height = {self.c_height:.9g}"]
        for r, hc in zip(self.cylinders, self.central_heights):
            lines.append(
                f"cylinder c={r.circumference:.6g} h={r.height:.6g} "
                f"central={hc:.6g} collars={(r.height - hc) / 2.0:.6g}"
            )
        for comp in self.components:
            lines.append(
                f"component {comp.index}: diameter in "
                f"[{comp.diameter_lower:.6g}, {comp.diameter_upper:.6g}] "
                f"({len(comp.samples)} samples)"
            )
        return "\n".join(lines)


def default_c_height(area: float = 1.0) -> float:
    """sqrt(3/pi) for area 1: beyond sqrt(4/3) of this distance from the
    singularities an embedded half-disc would exceed the total area."""
    return math.sqrt(3.0 * area / math.pi)


def high_cylinder_decomposition(s: FlatSurface, c_height: float = None) -> Decomposition:
    """Split the surface into tall cylinders and bounded-diameter components.

    Central subcylinders leave two collars of height ``c_height/3`` inside
    each cylinder of height >= c_height; components are the closures of the
    complement, with sampling-based diameter bounds.
    """
    area = s.area
    if c_height is None:
        c_height = default_c_height(area)
    if not c_height > 0:
        raise ValueError("c_height must be positive")
    if abs(area - 1.0) > 1e-6:
        import warnings

        warnings.warn("high-cylinder decomposition expects an area-1 surface")
    geom = geometry(s)
    if math.isinf(c_height):
        cylinders = []
    else:
        cylinders = [
            r
            for r in detect_cylinders(s, c_height, area / c_height + 1e-9)
            if r.height >= c_height - 1e-9
        ]
    centrals = [r.height - 2.0 * c_height / 3.0 for r in cylinders]
    components = _components(geom, s, cylinders, centrals, c_height)
    return Decomposition(
        c_height=c_height,
        cylinders=cylinders,
        central_heights=centrals,
        components=components,
    )


def _strip_bands(geom, rec: CylinderRecord, central_h):
    """Per-triangle bands covered by the central subcylinder.

    Returns {tri index: [(n_local, c_lo, c_hi), ...]} where the band is
    {z : c_lo <= cross(d, z) ... } expressed via the local core direction:
    offsets measured by the local normal coordinate dot(i*d, z).
    """
    ops = _FlowOps(geom)
    sp, dxy = rec.core_point, rec.core_direction
    d = complex(*dxy)
    t0, z0, d0 = geom.tri.start_state(sp, d)
    # walk one period collecting (tri, z_entry, d) states
    bands = {}
    t, z, dd = t0, z0, d0
    acc = 0.0
    half = central_h / 2.0
    guard = 0
    while True:
        guard += 1
        if guard > 100000:
            raise WorkBudgetExceeded("band walk exceeded budget")
        tr = geom.tri.tris[t]
        n_loc = 1j * dd
        base = (z.real * n_loc.real + z.imag * n_loc.imag)
        bands.setdefault(t, []).append((n_loc, base - half, base + half))
        s_exit, side, corner = geom.tri._exit(tr, z, dd)
        if s_exit is None or corner is not None:
            raise SurfaceError("core circle left the cylinder (inconsistent data)")
        acc += s_exit
        z_exit = z + s_exit * dd
        nt, ni, sgn, off = tr.nbr[side]
        z = sgn * (z_exit - off)
        dd = sgn * dd
        t = nt
        if acc >= rec.circumference - 1e-9:
            break
    return bands


def _components(geom, s, cylinders, centrals, c_height):
    tris = geom.tri.tris
    covered = {}  # tri -> list of (cyl index, n_local, lo, hi)
    for ci, (rec, ch) in enumerate(zip(cylinders, centrals)):
        for t, bl in _strip_bands(geom, rec, ch).items():
            for (n, lo, hi) in bl:
                covered.setdefault(t, []).append((ci, n, lo, hi))

    # face structure per triangle: free boundary intervals with face labels
    intervals = {}       # (tri, side) -> list of (u0, u1, face_id)
    face_nodes = []      # union-find over faces
    parent = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x, y):
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[rx] = ry

    face_touch = {}      # face -> set of cylinder indices
    face_samples = {}    # face -> list of SurfacePoint
    face_corners = {}    # face -> set of vertex classes

    for t, tr in enumerate(tris):
        pieces = covered.get(t, [])
        sides_len = [abs(tr.side_vec(i)) for i in range(3)]
        P = sum(sides_len)
        offs = [0.0, sides_len[0], sides_len[0] + sides_len[1]]

        def to_arc(side, u):
            return offs[side] + u * sides_len[side]

        # covered arcs per piece
        arcs = []
        for (ci, n, lo, hi) in pieces:
            segs = []
            for side in range(3):
                a = tr.verts[side]
                b = tr.verts[(side + 1) % 3]
                fa = a.real * n.real + a.imag * n.imag
                fb = b.real * n.real + b.imag * n.imag
                u0, u1 = _interval_in_band(fa, fb, lo, hi)
                if u0 is not None:
                    segs.append((to_arc(side, u0), to_arc(side, u1)))
            if segs:
                merged = _merge_cyclic(segs, P)
                arcs.append((ci, merged))
        events = []
        for (ci, merged) in arcs:
            for (a0, a1) in merged:
                events.append((a0, a1, ci, len(merged) >= 2))
        free = _free_intervals(events, P)
        faces = _assign_faces(free, events, P)
        for ((a0, a1), fkey) in faces:
            fid = (t, fkey)
            if fid not in parent:
                parent[fid] = fid
                face_touch[fid] = set()
                face_samples[fid] = []
                face_corners[fid] = set()
            mid = 0.5 * (a0 + a1) % P
            side, u = _arc_to_side(mid, offs, sides_len, P)
            a = tr.verts[side]
            b = tr.verts[(side + 1) % 3]
            z = a + (b - a) * u
            face_samples[fid].append(SurfacePoint(tr.poly, (z.real, z.imag)))
            for (ci, merged) in arcs:
                for (c0, c1) in merged:
                    if _cyclic_touch(a0, a1, c0, c1, P):
                        face_touch[fid].add(ci)
            intervals.setdefault((t,), []).append((a0, a1, fid))
            # corner membership: a corner at arc position offs[k]
            for k in range(3):
                if _on_interval_cyclic(offs[k], a0, a1, P, tol=1e-9):
                    face_corners[fid].add(tr.cls[k])
        # stash for cross-edge gluing: per side free intervals
        for ((a0, a1), fkey) in faces:
            fid = (t, fkey)
            for side in range(3):
                s0, s1 = offs[side], offs[side] + sides_len[side]
                for (i0, i1) in _clip_cyclic((a0, a1), (s0, s1), P):
                    u0 = (i0 - offs[side]) / sides_len[side]
                    u1 = (i1 - offs[side]) / sides_len[side]
                    intervals.setdefault((t, side), []).append((u0, u1, fid))

    # glue faces across sides
    done = set()
    for t, tr in enumerate(tris):
        for side in range(3):
            if (t, side) in done:
                continue
            nt, ni, sgn, off = tr.nbr[side]
            done.add((t, side))
            done.add((nt, ni))
            mine = intervals.get((t, side), [])
            theirs = intervals.get((nt, ni), [])
            for (u0, u1, f1) in mine:
                for (v0, v1, f2) in theirs:
                    # matching orientation: neighbor param runs reversed
                    w0, w1 = 1.0 - v1, 1.0 - v0
                    if min(u1, w1) - max(u0, w0) > 1e-9:
                        union(f1, f2)

    # collect components
    comp_map = {}
    for fid in parent:
        root = find(fid)
        comp_map.setdefault(root, []).append(fid)
    components = []
    for i, (root, members) in enumerate(sorted(comp_map.items(), key=lambda kv: str(kv[0]))):
        samples = []
        corners = set()
        touches = set()
        for fid in members:
            samples.extend(face_samples[fid])
            corners |= face_corners[fid]
            touches |= face_touch[fid]
        # corner representatives
        for cid in sorted(corners):
            t, c = geom.tri.fans[cid][0]
            z = geom.tri.tris[t].verts[c]
            samples.append(SurfacePoint(geom.tri.tris[t].poly, (z.real, z.imag)))
        picked = samples[:: max(1, len(samples) // 12)][:14]
        dlo = 0.0
        for a in range(len(picked)):
            for b in range(a + 1, len(picked)):
                dlo = max(dlo, _robust_distance(s, picked[a], picked[b]))
        dup = dlo + 2.0 * math.sqrt(4.0 / 3.0) * min(
            c_height, 1e6
        )
        components.append(
            ComponentRecord(
                index=i,
                samples=picked,
                diameter_lower=dlo,
                diameter_upper=dup,
                touches_cylinders=touches,
            )
        )
    return components


def _robust_distance(s, a, b, start=None):
    cut = start or 2.0 * math.sqrt(s.area)
    for _ in range(8):
        try:
            d, _path = distance(s, a, b, cut)
            return d
        except CutoffExceeded:
            cut *= 1.7
    raise CutoffExceeded("component diameter distance did not converge")


def _interval_in_band(fa, fb, lo, hi):
    """Parameter interval of a segment whose band coordinate runs fa -> fb."""
    if abs(fb - fa) < 1e-15:
        if lo - 1e-12 <= fa <= hi + 1e-12:
            return 0.0, 1.0
        return None, None
    u0 = (lo - fa) / (fb - fa)
    u1 = (hi - fa) / (fb - fa)
    if u0 > u1:
        u0, u1 = u1, u0
    u0, u1 = max(0.0, u0), min(1.0, u1)
    if u1 - u0 <= 1e-12:
        return None, None
    return u0, u1


def _merge_cyclic(segs, P):
    segs = sorted((a % P, a % P + (b - a)) for (a, b) in segs)
    merged = []
    for (a, b) in segs:
        if merged and a <= merged[-1][1] + 1e-9:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    # wrap-around merge
    if len(merged) > 1 and merged[0][0] + P <= merged[-1][1] + 1e-9:
        merged[0] = (merged[-1][0] - P, max(merged[0][1], merged[-1][1] - P))
        merged.pop()
    return merged


def _free_intervals(events, P):
    if not events:
        return [(0.0, P)]
    pts = sorted((a % P, (a % P) + (b - a)) for (a, b, _ci, _sep) in events)
    free = []
    cur = pts[0][1]
    for k in range(1, len(pts)):
        a, b = pts[k]
        if a > cur + 1e-9:
            free.append((cur, a))
        cur = max(cur, b)
    first = pts[0][0] + P
    if first > cur + 1e-9:
        free.append((cur, first))
    return [(a % P, (a % P) + (b - a)) for (a, b) in free]


def _assign_faces(free, events, P):
    """Faces of the disc cut by non-crossing separator arcs.

    Separator pieces contribute two boundary arcs; walking the circle, the
    stack of open separators labels the face of each free interval.
    """
    if not events:
        return [((a, b), 0) for (a, b) in free]
    marks = []
    for i, (a, b, ci, sep) in enumerate(events):
        marks.append((a % P, "arc", i, sep))
    order = sorted(marks)
    seen = {}
    labels = {}
    stack = []
    # two passes so the stack state is consistent at the wrap
    for _pass in range(2):
        for (pos, _kind, i, sep) in order:
            if not sep:
                continue
            ci = events[i][2]
            if seen.get(ci) == "open":
                if ci in stack:
                    while stack and stack[-1] != ci:
                        stack.pop()
                    if stack:
                        stack.pop()
                seen[ci] = "closed"
            else:
                stack.append(ci)
                seen[ci] = "open"
        if _pass == 0:
            seen = {k: v for k, v in seen.items() if v == "open"}
    out = []
    for (a, b) in free:
        state = []
        seen2 = {}
        for (pos, _kind, i, sep) in order:
            if pos > (a % P):
                break
            if not sep:
                continue
            ci = events[i][2]
            if seen2.get(ci):
                if ci in state:
                    state.remove(ci)
                seen2[ci] = False
            else:
                state.append(ci)
                seen2[ci] = True
        out.append(((a, b), tuple(sorted(state))))
    return out


def _arc_to_side(pos, offs, sides_len, P):
    pos %= P
    for side in range(2, -1, -1):
        if pos >= offs[side] - 1e-12:
            u = (pos - offs[side]) / sides_len[side]
            return side, min(max(u, 0.0), 1.0)
    return 0, 0.0


def _clip_cyclic(iv, window, P):
    a, b = iv
    w0, w1 = window
    out = []
    for shift in (-P, 0.0, P):
        lo = max(a + shift, w0)
        hi = min(b + shift, w1)
        if hi - lo > 1e-9:
            out.append((lo, hi))
    return out


def _cyclic_touch(a0, a1, c0, c1, P, tol=1e-6):
    for shift in (-P, 0.0, P):
        if a0 + shift <= c1 + tol and c0 <= a1 + shift + tol:
            return True
    return False


def _on_interval_cyclic(x, a, b, P, tol=1e-9):
    for shift in (-P, 0.0, P):
        if a - tol <= x + shift <= b + tol:
            return True
    return False


# -- systole -------------------------------------------------------------------


@dataclass
class SystoleRecord:
    length: float
    kind: str                    # "cylinder core" or "saddle-connection loop"
    cylinder: CylinderRecord = None
    chain: tuple = ()            # segment cycle for chain realizers

    def __str__(self):
        return f"systole {self.length:.9g} ({self.kind})"


def closed_chain_geodesics(s: FlatSurface, cutoff: float, work_budget=2_000_000):
    """Closed local geodesics through vertex classes, as admissible segment
    cycles of length <= cutoff, sorted by length.

    Each cycle is reported once per orientation, rotated to start at its
    lexicographically smallest segment.
    """
    geom = geometry(s)
    trans = build_transitions(geom, cutoff)
    if not trans:
        return []
    # global segment table
    table = []
    for cid, ct in sorted(trans.items()):
        for i, seg in enumerate(ct.segments):
            table.append((cid, i, seg))
    keyed = sorted(
        range(len(table)), key=lambda k: (table[k][2].length, table[k][0], table[k][2].src_angle)
    )
    rank = {}
    for r, k in enumerate(keyed):
        rank[k] = r
    index_of = {}
    for k, (cid, i, seg) in enumerate(table):
        index_of[(cid, i)] = k
    results = []
    work = 0
    for start_rank, k0 in enumerate(keyed):
        cid0, i0, seg0 = table[k0]
        # DFS over chains whose every segment has rank >= start_rank
        stack = [((k0,), seg0.length)]
        while stack:
            chain, total = stack.pop()
            work += 1
            if work > work_budget:
                raise WorkBudgetExceeded("closed geodesic search budget exhausted")
            last = table[chain[-1]][2]
            # closure test
            if last.dst == cid0:
                a, b = junction_angles(
                    geom.theta[cid0], last.dst_angle, seg0.src_angle
                )
                if a >= math.pi - 1e-9 and b >= math.pi - 1e-9:
                    results.append((total, chain))
            ct = trans.get(last.dst)
            if ct is None:
                continue
            rem = cutoff - total
            for j in ct.window_indices(last.dst_angle, rem):
                k = index_of[(last.dst, j)]
                if rank[k] >= start_rank:
                    stack.append((chain + (k,), total + table[k][2].length))
    results.sort(key=lambda rc: rc[0])
    out = []
    for (total, chain) in results:
        out.append((total, tuple(table[k][2] for k in chain)))
    return out


def systole(s: FlatSurface, cutoff: float) -> SystoleRecord:
    """Shortest essential closed geodesic of length <= cutoff.

    Considers cylinder core circumferences and closed admissible chains of
    vertex segments; raises CutoffExceeded when neither exists below the
    cutoff.
    """
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    best = None
    try:
        cyls = detect_cylinders(s, PROBE_OFFSET * 2, cutoff)
    except Exception:
        cyls = []
    for r in cyls:
        if best is None or r.circumference < best.length - 1e-12:
            best = SystoleRecord(r.circumference, "cylinder core", cylinder=r)
    chains = closed_chain_geodesics(s, cutoff)
    if chains:
        total, chain = chains[0]
        if best is None or total < best.length - 1e-9:
            best = SystoleRecord(total, "saddle-connection loop", chain=chain)
    if best is None or best.length > cutoff + 1e-9:
        raise CutoffExceeded(f"no essential closed geodesic within {cutoff}")
    return best
