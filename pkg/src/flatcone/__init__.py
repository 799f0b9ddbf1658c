"""flatcone: geometry of closed flat surfaces built from glued polygons."""

from .surface import (
    ConePoint,
    EdgeGluing,
    FlatSurface,
    ParseError,
    PlanarPolygon,
    SurfaceError,
    SurfacePoint,
    ValidationReport,
    area,
    cone_points,
    normalize_area,
    parse_document,
    parse_surface,
    scale_metric,
    serialize_surface,
    stretch,
    validate_surface,
)

__all__ = [
    "ConePoint",
    "EdgeGluing",
    "FlatSurface",
    "ParseError",
    "PlanarPolygon",
    "SurfaceError",
    "SurfacePoint",
    "ValidationReport",
    "area",
    "cone_points",
    "normalize_area",
    "parse_document",
    "parse_surface",
    "scale_metric",
    "serialize_surface",
    "stretch",
    "validate_surface",
]

__version__ = "0.1.0"
