"""Quadrature, pointwise energy identity, and integral identities."""

import numpy as np
import pytest

from thermolab.fields import SMPoint, SMScalarField
from thermolab.geometry import build_surface_model, euclidean_disk, flat_torus
from thermolab.identities import check_fourier_facts, \
    check_integral_identity_boundary, check_integral_identity_closed, \
    check_lie_derivatives, check_pestov_pointwise, check_second_identity, \
    disk_quadrature, liouville_integrate, torus_quadrature, \
    transport_expansion_residual

PHI_TEXT = "0.1*sin(2*pi*x)*cos(2*pi*y)"
LAM_TEXT = "0.2*sin(2*pi*y)"


def conformal_model():
    return build_surface_model("conformal_torus", phi=PHI_TEXT)


def lam_field():
    return SMScalarField.from_expression(LAM_TEXT)


def test_torus_measure_flat():
    grid = torus_quadrature(flat_torus(), 16)
    assert grid.total_measure() == pytest.approx(2 * np.pi, rel=1e-12)


def test_torus_measure_conformal():
    from scipy.integrate import dblquad
    model = conformal_model()
    grid = torus_quadrature(model, 24)
    area, _ = dblquad(
        lambda y, x: np.exp(0.2 * np.sin(2 * np.pi * x)
                            * np.cos(2 * np.pi * y)),
        0, 1, 0, 1, epsabs=1e-13)
    assert grid.total_measure() == pytest.approx(2 * np.pi * area, rel=1e-10)


def test_disk_measure_flat():
    grid = disk_quadrature(euclidean_disk(), (12, 16, 16))
    assert grid.total_measure() == pytest.approx(2 * np.pi * np.pi, rel=1e-10)


def test_liouville_integrate_odd_function():
    grid = torus_quadrature(flat_torus(), 16)
    val = liouville_integrate(grid, SMScalarField.from_expression(
        "sin(theta)"))
    assert abs(val) < 1e-13


def test_pestov_pointwise():
    model = conformal_model()
    u = SMScalarField.from_expression("sin(2*pi*x)*cos(theta)")
    rng = np.random.default_rng(2)
    pts = (rng.uniform(0, 1, 500), rng.uniform(0, 1, 500),
           rng.uniform(0, 2 * np.pi, 500))
    rep = check_pestov_pointwise(model, lam_field(), u, pts)
    assert rep["max_residual"] < 1e-10


def test_lie_derivative_integrals():
    model = conformal_model()
    grid = torus_quadrature(model, 24)
    f = SMScalarField.from_expression("cos(2*pi*x)*sin(theta) + 0.5")
    reps = check_lie_derivatives(model, lam_field(), grid, f)
    for key in ("F", "H", "V"):
        assert reps[key].abs_residual < 1e-10, key


def test_closed_integral_identities():
    model = conformal_model()
    grid = torus_quadrature(model, 32)
    for text in ("sin(2*pi*x)*cos(theta)",
                 "cos(2*pi*y)",
                 "sin(2*pi*(x+y)) + 0.3*sin(theta)*cos(2*pi*x)"):
        u = SMScalarField.from_expression(text)
        reps = check_integral_identity_closed(model, lam_field(), u, grid)
        for key in ("first", "second", "final"):
            assert reps[key].rel_residual < 1e-10, (text, key)


def test_boundary_identity_vanishing_u():
    model = build_surface_model("conformal_disk", phi="0.1*(x^2 - y^2)")
    lam = SMScalarField.from_expression("0.1*x")
    grid = disk_quadrature(model, (12, 16, 16))
    u = SMScalarField.from_expression("(1 - x^2 - y^2)*sin(theta)")
    rep = check_integral_identity_boundary(model, lam, u, grid)
    assert abs(rep.terms["boundary_term"]) < 1e-10
    assert rep.rel_residual < 1e-10


def test_boundary_identity_nonvanishing_u():
    model = euclidean_disk()
    lam = SMScalarField.constant(0.0)
    grid = disk_quadrature(model, (12, 16, 16))
    u = SMScalarField.from_expression("x*sin(theta)")
    rep = check_integral_identity_boundary(model, lam, u, grid)
    assert rep.terms["u_boundary_max"] > 0.5  # u does not vanish on the rim
    assert rep.rel_residual < 1e-10


def test_fourier_facts():
    model = conformal_model()
    grid = torus_quadrature(model, 24)
    reps = check_fourier_facts(
        model, grid,
        h=SMScalarField.from_expression("cos(2*pi*y)"),
        w_x=SMScalarField.from_expression("sin(2*pi*x)"),
        w_y=SMScalarField.from_expression("cos(2*pi*(x+y))"))
    assert reps["mixed"].abs_residual < 1e-12
    assert reps["parity"].rel_residual < 1e-12


def test_transport_expansion_along_orbit():
    model = euclidean_disk()
    lam = SMScalarField.from_expression("0.2*x")
    psi = SMScalarField.from_expression("(1 - x^2 - y^2)*cos(theta)")
    states = [SMPoint(0.1, 0.2, 0.5), SMPoint(-0.3, 0.1, 2.0)]
    res = transport_expansion_residual(model, lam, psi, states)
    assert res < 1e-4


def test_second_identity_nonnegative_rhs():
    model = euclidean_disk()
    lam = SMScalarField.from_expression("0.2*x")
    psi = SMScalarField.from_expression("(1 - x^2 - y^2)*cos(theta)")
    grid = disk_quadrature(model, (8, 12, 12))
    rep = check_second_identity(model, lam, psi, grid,
                                rng=np.random.default_rng(0))
    assert rep.terms["rhs_nonnegative"]
    assert rep.rel_residual < 5e-3
