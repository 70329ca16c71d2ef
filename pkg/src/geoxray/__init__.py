"""Numerical toolkit for geodesic X-ray transforms on conformal disks.

Subpackages by theme:

- metrics: conformal metrics e^{2 lam} delta on the unit disk (builtin
  registry + gridded samples), Christoffel symbols, Gaussian curvature.
- geodesics: geodesic flow tracing, exit times, Jacobi/conjugate points,
  the matrix Riccati equation, simplicity verification.
- radon: Euclidean Radon transform, Fourier slice checks, backprojection,
  filtered backprojection, normal-operator and stability residuals.
- xray: geodesic X-ray transform on the boundary fan, fiberwise
  backprojection, the elliptic normal operator (two realizations),
  conjugate-gradient inversion, the large-cap non-injectivity demo.
- smfields: discrete calculus of the frame (X, X_perp, V) on the sphere
  bundle, commutator/Pestov/Santalo residuals, the transport primitive.
- lightray: light-ray transforms of time-dependent potentials and their
  sigma-Fourier reductions.
- phantoms: seeded deterministic test fields.
- cli: the `geoxray` command-line front end.
"""

from . import metrics, geodesics, radon, xray, smfields, lightray, phantoms, fields
from .fields import GridSpec, ScalarField
from .metrics import ConformalMetric, GriddedMetric, make_metric, parse_metric_spec
from .geodesics import (
    PhaseState,
    GeodesicPath,
    trace_geodesic,
    exit_time,
    conjugate_scan,
    riccati_solve,
    verify_simplicity,
)
from .radon import Sinogram, radon_forward, backproject, fbp_invert
from .xray import FanBeamData, xray_forward, xray_backproject, normal_operator, invert_normal_cg
from .smfields import SMField, apply_X, apply_V, apply_Xperp
from .lightray import SpacetimePotential, lightray_forward
from .phantoms import PhantomSpec, generate

__version__ = "0.1.0"
