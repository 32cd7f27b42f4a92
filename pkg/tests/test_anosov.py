"""Hyperbolicity criterion and cohomological-equation residuals."""

import numpy as np
import pytest

from thermolab.anosov import GridTransportOperator, cohomological_residual, \
    quadratic_form_rate, theoremD_criterion
from thermolab.fields import SMPoint, SMScalarField
from thermolab.flow import ThermostatSpec, geodesic_spec
from thermolab.geometry import build_surface_model, constant_curvature_model, \
    flat_torus
from thermolab.jacobi import integrate_jacobi


def test_criterion_flat():
    model = flat_torus()
    rep = theoremD_criterion(model, 0.0, (8, 8, 8))
    assert rep.sup_value == pytest.approx(0.0, abs=1e-12)
    assert not rep.anosov_flag


def test_criterion_flat_constant_lambda():
    model = flat_torus()
    rep = theoremD_criterion(model, 0.7, (8, 8, 8))
    assert rep.sup_value == pytest.approx(0.49, rel=1e-10)
    assert not rep.anosov_flag


def test_criterion_hyperbolic():
    model = constant_curvature_model(-1.0)
    rep = theoremD_criterion(model, 0.0, (8, 8, 8))
    assert rep.sup_value == pytest.approx(-1.0, rel=1e-9)
    assert rep.anosov_flag


def test_criterion_theta_grid_invariance():
    model = build_surface_model("conformal_torus",
                                phi="0.1*sin(2*pi*x)*cos(2*pi*y)")
    lam = SMScalarField.from_expression("0.2*sin(2*pi*y)")
    a = theoremD_criterion(model, lam, (10, 10, 8)).sup_value
    b = theoremD_criterion(model, lam, (10, 10, 32)).sup_value
    assert a == pytest.approx(b, abs=1e-12)


def test_rate_flat_degenerate():
    spec = geodesic_spec(flat_torus())
    traj = integrate_jacobi(spec, SMPoint(0.1, 0.2, 0.3), (0.0, 1.0),
                            initial=(0.0, 1.0, 0.0),
                            t_eval=np.linspace(0.0, 1.0, 5))
    out = quadratic_form_rate(spec, traj)
    s = out["states"][0]
    assert s.rate == pytest.approx(0.0, abs=1e-12)  # (y, z) = (1, 0)
    assert not s.rate_positive_definite
    assert out["sylvester_consistent"]


def test_rate_hyperbolic_positive():
    spec = geodesic_spec(constant_curvature_model(-1.0))
    traj = integrate_jacobi(spec, SMPoint(0.0, 0.0, 0.4), (0.0, 0.5),
                            initial=(0.0, 1.0, 0.5),
                            t_eval=np.linspace(0.0, 0.5, 5))
    out = quadratic_form_rate(spec, traj)
    for s in out["states"]:
        assert s.rate == pytest.approx(s.y ** 2 + s.z ** 2, rel=1e-8)
        assert s.rate_positive_definite
    assert out["sylvester_consistent"]


def test_rate_matches_fd_along_orbit():
    model = build_surface_model("conformal_torus",
                                phi="0.1*sin(2*pi*x)*cos(2*pi*y)")
    spec = ThermostatSpec(model, SMScalarField.from_expression(
        "0.2*sin(2*pi*y)"))
    traj = integrate_jacobi(spec, SMPoint(0.1, 0.2, 0.3), (0.0, 3.0),
                            initial=(0.0, 1.0, 0.2),
                            t_eval=np.linspace(0.0, 3.0, 30))
    out = quadratic_form_rate(spec, traj)
    assert out["max_fd_deviation"] < 1e-5
    assert out["sylvester_consistent"]


def test_cohomology_exact_gauge():
    ft = flat_torus()
    w_x = SMScalarField.from_expression("2*pi*cos(2*pi*x)")
    res = cohomological_residual(ft, 0.0, w_x=w_x, n=32)
    assert res["residual"] < 1e-8
    # minimizer equals psi on every fiber slice the generator couples to x
    op = res["operator"]
    psi = np.sin(2 * np.pi * op.X)
    mask = np.abs(np.cos(op.T)) > 1e-3
    dev = np.abs(res["minimizer"] - psi)[mask]
    assert np.max(dev) < 1e-3


def test_cohomology_obstructed_scalar():
    ft = flat_torus()
    h = SMScalarField.from_expression("sin(2*pi*x)")
    res = cohomological_residual(ft, 0.0, h=h, n=32)
    assert res["residual"] >= 0.1


def test_cohomology_obstructed_closed_form():
    ft = flat_torus()
    res = cohomological_residual(ft, 0.0, w_x=SMScalarField.constant(1.0),
                                 n=24)
    assert res["residual"] >= 0.1


def test_cohomology_round_trip():
    ft = flat_torus()
    rng = np.random.default_rng(12)
    op = GridTransportOperator(ft, 0.15, 16)
    for _ in range(10):
        w = rng.standard_normal(op.X.shape)
        rhs = op.apply(w)
        res = cohomological_residual(ft, 0.15, rhs_grid=rhs, n=16)
        assert res["residual"] < 1e-7
