"""Benchmark Stokes problems with hand-derived exact fields.

Each problem provides the exact velocity, its gradient, the force for a
given viscosity, and the scalar curl of the force.  All derivative
formulas are closed-form; finite-difference cross-checks live in the test
suite.
"""

from dataclasses import dataclass

import numpy as np

from .mesh import lshape, unit_square

ALPHA_LSHAPE = 856399.0 / 1572864.0
OMEGA_LSHAPE = 1.5 * np.pi


@dataclass(frozen=True)
class Problem:
    """A Stokes benchmark: domain factory, exact fields, force data.

    velocity/velocity_gradient take physical points (..., 2); pressure and
    force additionally take the viscosity.  curl_force is the scalar curl
    d(f_2)/dx - d(f_1)/dy.  zero_bc marks homogeneous Dirichlet data.
    """

    name: str
    domain: str
    base_mesh: callable
    velocity: callable
    velocity_gradient: callable
    pressure: callable
    force: callable
    curl_force: callable
    zero_bc: bool
    # corner where the exact gradient is unbounded, or None; error
    # integration grades its quadrature toward this point
    singular_point: tuple = None


def _g(t):
    return t * t * (t - 1.0) ** 2


def _dg(t):
    return 4.0 * t**3 - 6.0 * t * t + 2.0 * t


def _ddg(t):
    return 12.0 * t * t - 12.0 * t + 2.0


def _dddg(t):
    return 24.0 * t - 12.0


def _smooth_velocity(pts):
    x, y = pts[..., 0], pts[..., 1]
    return np.stack([_g(x) * _dg(y), -_dg(x) * _g(y)], axis=-1)


def _smooth_velocity_gradient(pts):
    x, y = pts[..., 0], pts[..., 1]
    row1 = np.stack([_dg(x) * _dg(y), _g(x) * _ddg(y)], axis=-1)
    row2 = np.stack([-_ddg(x) * _g(y), -_dg(x) * _dg(y)], axis=-1)
    return np.stack([row1, row2], axis=-2)


def _smooth_pressure(pts, nu):
    x, y = pts[..., 0], pts[..., 1]
    return x**5 + y**5 - 1.0 / 3.0


def _smooth_laplacian(pts):
    x, y = pts[..., 0], pts[..., 1]
    lap1 = _ddg(x) * _dg(y) + _g(x) * _dddg(y)
    lap2 = -(_dddg(x) * _g(y) + _dg(x) * _ddg(y))
    return np.stack([lap1, lap2], axis=-1)


def _smooth_force(pts, nu):
    x, y = pts[..., 0], pts[..., 1]
    grad_p = np.stack([5.0 * x**4, 5.0 * y**4], axis=-1)
    return -nu * _smooth_laplacian(pts) + grad_p


def _smooth_curl_force(pts, nu):
    # curl f = nu * biharmonic of the stream function (curl grad p = 0)
    x, y = pts[..., 0], pts[..., 1]
    return nu * (24.0 * _g(y) + 2.0 * _ddg(x) * _ddg(y) + 24.0 * _g(x))


def _hydro_force(pts, nu):
    x, y = pts[..., 0], pts[..., 1]
    return np.stack([5.0 * x**4, 5.0 * y**4], axis=-1)


def _zero_velocity(pts):
    return np.zeros(pts.shape[:-1] + (2,))


def _zero_gradient(pts):
    return np.zeros(pts.shape[:-1] + (2, 2))


def _zero_scalar(pts, nu):
    return np.zeros(pts.shape[:-1])


def _psi_derivatives(phi, order):
    a = ALPHA_LSHAPE
    c = np.cos(a * OMEGA_LSHAPE)
    ap, am = a + 1.0, a - 1.0
    sp_, cp_ = np.sin(ap * phi), np.cos(ap * phi)
    sm, cm = np.sin(am * phi), np.cos(am * phi)
    if order == 0:
        return c * sp_ / ap - cp_ - c * sm / am + cm
    if order == 1:
        return c * cp_ + ap * sp_ - c * cm - am * sm
    if order == 2:
        return -ap * c * sp_ + ap * ap * cp_ + am * c * sm - am * am * cm
    if order == 3:
        return -ap * ap * c * cp_ - ap**3 * sp_ + am * am * c * cm + am**3 * sm
    raise ValueError(order)


def _lshape_polar(pts):
    x, y = pts[..., 0], pts[..., 1]
    r = np.hypot(x, y)
    phi = np.arctan2(y, x)
    phi = np.where(phi < 0.0, phi + 2.0 * np.pi, phi)
    return r, phi


def _lshape_velocity(pts):
    a = ALPHA_LSHAPE
    r, phi = _lshape_polar(pts)
    psi = _psi_derivatives(phi, 0)
    dpsi = _psi_derivatives(phi, 1)
    s, c = np.sin(phi), np.cos(phi)
    ra = r**a
    u1 = ra * ((a + 1.0) * s * psi + c * dpsi)
    u2 = ra * (-(a + 1.0) * c * psi + s * dpsi)
    return np.stack([u1, u2], axis=-1)


def _lshape_velocity_gradient(pts):
    a = ALPHA_LSHAPE
    r, phi = _lshape_polar(pts)
    psi = _psi_derivatives(phi, 0)
    dpsi = _psi_derivatives(phi, 1)
    ddpsi = _psi_derivatives(phi, 2)
    s, c = np.sin(phi), np.cos(phi)
    v1 = (a + 1.0) * s * psi + c * dpsi
    v2 = -(a + 1.0) * c * psi + s * dpsi
    dv1 = (a + 1.0) * c * psi + a * s * dpsi + c * ddpsi
    dv2 = (a + 1.0) * s * psi - a * c * dpsi + s * ddpsi
    # r = 0 is the domain corner where u = 0; the gradient blows up like
    # r^(alpha-1), so clamp the radius to avoid inf at the corner node itself
    rs = np.where(r == 0.0, 1.0, r) ** (a - 1.0)
    rs = np.where(r == 0.0, 0.0, rs)
    g11 = rs * (a * c * v1 - s * dv1)
    g12 = rs * (a * s * v1 + c * dv1)
    g21 = rs * (a * c * v2 - s * dv2)
    g22 = rs * (a * s * v2 + c * dv2)
    row1 = np.stack([g11, g12], axis=-1)
    row2 = np.stack([g21, g22], axis=-1)
    return np.stack([row1, row2], axis=-2)


def _lshape_pressure(pts, nu):
    # the singular pair satisfies -nu lap(u) + grad(p0) = 0, which fixes
    # the viscosity scaling of p0; the smooth part p+ drives the force
    a = ALPHA_LSHAPE
    r, phi = _lshape_polar(pts)
    dpsi = _psi_derivatives(phi, 1)
    dddpsi = _psi_derivatives(phi, 3)
    rs = np.where(r == 0.0, 1.0, r) ** (a - 1.0)
    rs = np.where(r == 0.0, 0.0, rs)
    p0 = rs * ((1.0 + a) ** 2 * dpsi + dddpsi) / (a - 1.0)
    x, y = pts[..., 0], pts[..., 1]
    return nu * p0 + np.sin(np.pi * x * y)


def _lshape_force(pts, nu):
    x, y = pts[..., 0], pts[..., 1]
    c = np.cos(np.pi * x * y)
    return np.stack([np.pi * y * c, np.pi * x * c], axis=-1)


def _lshape_curl_force(pts, nu):
    return np.zeros(pts.shape[:-1])


PROBLEMS = {
    "smooth": Problem(
        "smooth",
        "square",
        unit_square,
        _smooth_velocity,
        _smooth_velocity_gradient,
        _smooth_pressure,
        _smooth_force,
        _smooth_curl_force,
        zero_bc=True,
    ),
    "hydrostatic": Problem(
        "hydrostatic",
        "square",
        unit_square,
        _zero_velocity,
        _zero_gradient,
        _smooth_pressure,
        _hydro_force,
        _zero_scalar,
        zero_bc=True,
    ),
    "lshape": Problem(
        "lshape",
        "lshape",
        lshape,
        _lshape_velocity,
        _lshape_velocity_gradient,
        _lshape_pressure,
        _lshape_force,
        _lshape_curl_force,
        zero_bc=False,
        singular_point=(0.0, 0.0),
    ),
}


def get_problem(name):
    try:
        return PROBLEMS[name]
    except KeyError:
        raise ValueError(
            f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}"
        ) from None
