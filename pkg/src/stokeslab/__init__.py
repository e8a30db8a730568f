"""2D finite element laboratory for the Stokes equations.

Classical and pressure-robust mixed methods on triangles, residual and
curl-based a posteriori error estimators, and adaptive mesh refinement.
"""

__version__ = "0.1.0"
