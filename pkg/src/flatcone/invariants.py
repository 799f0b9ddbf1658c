"""Packing density, hyperbolicity and boundary-dimension intervals.

The packing density rho = sup of the distance to the singular set is
computed by branch and bound over sub-triangles of the surface: the
distance to the singularities is 1-Lipschitz, so a cell of radius r around
a center x bounds the supremum on the cell by d(x) + r.  Cells are split
until the certified enclosure is narrower than the requested tolerance.

The minimal Gromov hyperbolicity constant of the universal cover is pinned
to the interval [rho/2, 2*rho]; the visual parameter is determined by
2*delta*log(xi) = log(2), and the Hausdorff dimension of the boundary is
the entropy divided by log(xi), clamped below at 1 (the boundary is a
topological circle).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

from .surface import FlatSurface, SurfacePoint
from .unfolding import NoConePointError, distance_to_classes, geometry


@dataclass
class PackingEstimate:
    """Certified enclosure of the packing density: rho <= true <= rho + tol."""

    rho: float
    achieving_point: SurfacePoint
    tolerance: float
    evaluations: int = 0

    @property
    def interval(self):
        return (self.rho, self.rho + self.tolerance)


def packing_density(s: FlatSurface, tol: float = 1e-3, max_evaluations: int = 200_000) -> PackingEstimate:
    """Supremum of the flat distance to the singular cone points.

    Branch and bound with the Lipschitz cell bound; the returned ``rho`` is
    a realized distance and the true supremum lies within ``tol`` above it.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    geom = geometry(s)
    singular = sorted(geom.tri.singular_classes)
    if not singular:
        raise NoConePointError("packing density undefined: no singular cone point")

    area = s.area
    start_cut = 2.0 * math.sqrt(area)

    def dist(tri_poly, z):
        p = SurfacePoint(tri_poly, (z.real, z.imag))
        return distance_to_classes(s, p, singular, start_cut)

    # cells: (neg upper bound, tiebreak, poly id, 3 complex corners, d_center)
    heap = []
    best = -1.0
    best_pt = None
    evals = 0
    serial = 0

    def push(poly, a, b, c):
        nonlocal best, best_pt, evals, serial
        z = (a + b + c) / 3.0
        r = max(abs(a - z), abs(b - z), abs(c - z))
        d = dist(poly, z)
        evals += 1
        if d > best:
            best = d
            best_pt = SurfacePoint(poly, (z.real, z.imag))
        heapq.heappush(heap, (-(d + r), serial, poly, a, b, c, d))
        serial += 1

    for t in geom.tri.tris:
        push(t.poly, *t.verts)

    while heap:
        neg_ub, _, poly, a, b, c, d = heapq.heappop(heap)
        ub = -neg_ub
        if ub <= best + tol:
            break
        if evals > max_evaluations:
            raise RuntimeError(
                f"packing density did not certify within {max_evaluations} "
                f"evaluations (gap {ub - best:.3g})"
            )
        ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
        push(poly, a, ab, ca)
        push(poly, ab, b, bc)
        push(poly, ca, bc, c)
        push(poly, ab, bc, ca)

    return PackingEstimate(
        rho=best, achieving_point=best_pt, tolerance=tol, evaluations=evals
    )


def rho_lower_bound(cone_angles) -> float:
    """Area-1 packing lower bound sqrt(1 / sum(n_i * pi)) from disjoint discs.

    ``cone_angles`` lists singular cone angles (radians); each must be an
    integer multiple of pi.
    """
    angles = list(cone_angles)
    if not angles:
        raise ValueError("empty cone angle list")
    total = 0.0
    for a in angles:
        n = a / math.pi
        if abs(n - round(n)) > 1e-6:
            raise ValueError(f"cone angle {a} is not an integer multiple of pi")
        total += a
    return math.sqrt(1.0 / total)


@dataclass
class BoundaryInvariants:
    """Intervals for delta_inf, xi and the boundary Hausdorff dimension."""

    rho_interval: tuple
    delta_interval: tuple
    xi_interval: tuple
    hdim_interval: tuple
    e_hat: float
    hdim_clamped: bool = False

    def __str__(self):
        lines = [
            f"rho in [{self.rho_interval[0]:.9g}, {self.rho_interval[1]:.9g}]",
            f"delta_inf in [{self.delta_interval[0]:.9g}, {self.delta_interval[1]:.9g}]",
            f"xi in [{self.xi_interval[0]:.9g}, {self.xi_interval[1]:.9g}]",
            f"hdim in [{self.hdim_interval[0]:.9g}, {self.hdim_interval[1]:.9g}]"
            + (" (clamped at 1)" if self.hdim_clamped else ""),
        ]
        return "\n".join(lines)


def xi_from_delta(delta: float) -> float:
    """Visual parameter: 2 * delta * log(xi) = log(2)."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return 2.0 ** (1.0 / (2.0 * delta))


def delta_xi_hdim(rho_interval, e_hat: float) -> BoundaryInvariants:
    """Map a packing enclosure and an entropy estimate to boundary data.

    delta_inf lies in [rho/2, 2*rho]; xi = 2**(1/(2*delta)) is decreasing
    in delta, and hdim = e_hat / log(xi) increasing in delta.  The hdim
    interval is clamped below at 1.
    """
    try:
        rho_lo, rho_hi = rho_interval
    except TypeError:
        rho_lo = rho_hi = float(rho_interval)
    if not 0 < rho_lo <= rho_hi:
        raise ValueError("invalid rho interval")
    if e_hat < 0:
        raise ValueError("negative entropy estimate")
    delta = (rho_lo / 2.0, 2.0 * rho_hi)
    xi = (xi_from_delta(delta[1]), xi_from_delta(delta[0]))  # decreasing map
    hdim_raw = (e_hat / math.log(xi[1]), e_hat / math.log(xi[0]))
    clamped = hdim_raw[0] < 1.0
    hdim = (max(1.0, hdim_raw[0]), max(1.0, hdim_raw[1]))
    return BoundaryInvariants(
        rho_interval=(rho_lo, rho_hi),
        delta_interval=delta,
        xi_interval=xi,
        hdim_interval=hdim,
        e_hat=e_hat,
        hdim_clamped=clamped,
    )


@dataclass
class TwoCurveBound:
    """Entropy lower bound from two based loops generating a free group."""

    a: float
    b: float
    bound: float
    hypothesis_checked: bool = False

    def __str__(self):
        tag = "" if self.hypothesis_checked else " (group hypothesis not verified)"
        return f"e >= {self.bound:.9g} from loops a={self.a:.6g}, b={self.b:.6g}{tag}"


def two_curve_lower_bound(a: float, b: float, hypothesis_checked=False) -> TwoCurveBound:
    """max{(log b - log a) / (2b), log 2 / b} for based loops of lengths a <= b.

    The caller asserts that the two loops generate a subgroup of the
    fundamental group that is neither cyclic nor trivial.
    """
    if not 0 < a <= b:
        raise ValueError("need 0 < a <= b")
    bound = max((math.log(b) - math.log(a)) / (2.0 * b), math.log(2.0) / b)
    return TwoCurveBound(a=a, b=b, bound=bound, hypothesis_checked=hypothesis_checked)


def word_count_floor(a: float, b: float, R: float) -> float:
    """The two-generator word-count floor (b/a - b/R) ** (R/b - 1) at radius 2R.

    Valid for R > ab / (b - a) ... simply for positive base; callers compare
    against N(2R).
    """
    base = b / a - b / R
    if base <= 0 or R <= 0:
        return 0.0
    return base ** (R / b - 1.0)
