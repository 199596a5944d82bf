"""Mean curvature flow with surgery for mean-convex surfaces: a desk-scale laboratory."""

from .mesh import MeshError, SurfaceMesh, read_obj, write_obj
from .geometry import (CurvatureField, RadiusField, compute_curvature, inscribed_mu,
                       inscribed_radius, noncollapsing_report, outer_mu, outer_radius,
                       radius_field)

__version__ = "0.1.0"
