"""Steady two-dimensional transport z + W u.grad z = l with z = 0 on the
inflow boundary: boundary classification, hypothesis checks, a
characteristic solver, localization near inflow endpoints and regularity
diagnostics."""

from .expr import ScalarField, VectorField2
from .geometry import Arc, Domain, Segment, polygon
from .classify import Label, Verdict, check_hypotheses, classify_boundary, exceptional_points
from .characteristics import TransportProblem, solve_at, solve_grid, trace_backward

__all__ = ["ScalarField", "VectorField2", "Arc", "Domain", "Segment", "polygon", "Label",
           "Verdict", "check_hypotheses", "classify_boundary", "exceptional_points",
           "TransportProblem", "solve_at", "solve_grid", "trace_backward"]
__version__ = "0.1.0"
