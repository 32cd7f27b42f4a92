"""Jacobi fields, conjugate points, and the Riccati solutions."""

import numpy as np
import pytest

from thermolab.fields import SMPoint, SMScalarField
from thermolab.flow import ThermostatSpec, geodesic_spec
from thermolab.geometry import build_surface_model, constant_curvature_model, \
    euclidean_disk, flat_torus
from thermolab.jacobi import GOLDEN_BOUND, check_riccati_bound, \
    comparison_ode_residuals, detect_conjugate_points, exterior_fan_r, \
    integrate_jacobi, riccati_bound_constants, second_order_residual, \
    solve_riccati_finite, solve_riccati_limit


def test_flat_jacobi_linear_growth():
    spec = geodesic_spec(flat_torus())
    traj = integrate_jacobi(spec, SMPoint(0.1, 0.2, 0.5), (0.0, 4.0),
                            initial=(0.0, 0.0, 1.0),
                            t_eval=np.linspace(0.0, 4.0, 20))
    # y'' = 0 with y(0)=0, y'(0)=1: y = t, z = 1
    assert np.max(np.abs(traj.y - traj.t)) < 1e-9
    assert np.max(np.abs(traj.z - 1.0)) < 1e-9


def test_hyperbolic_jacobi_sinh():
    spec = geodesic_spec(constant_curvature_model(-1.0))
    traj = integrate_jacobi(spec, SMPoint(0.0, 0.0, 0.3), (0.0, 2.0),
                            initial=(0.0, 0.0, 1.0),
                            t_eval=np.linspace(0.0, 2.0, 15))
    assert np.max(np.abs(traj.y - np.sinh(traj.t))) < 1e-8


def test_second_order_residual_small():
    model = build_surface_model("conformal_torus",
                                phi="0.1*sin(2*pi*x)*cos(2*pi*y)")
    spec = ThermostatSpec(model, SMScalarField.from_expression(
        "0.2*sin(2*pi*y)"))
    traj = integrate_jacobi(spec, SMPoint(0.1, 0.2, 0.3), (0.0, 3.0),
                            initial=(0.0, 1.0, 0.2),
                            t_eval=np.linspace(0.0, 3.0, 40))
    assert second_order_residual(traj) < 1e-5


def test_conjugate_time_sphere():
    spec = geodesic_spec(constant_curvature_model(1.0))
    times = detect_conjugate_points(spec, SMPoint(0.0, 0.0, 0.2), 4.0)
    assert len(times) == 1
    assert times[0] == pytest.approx(np.pi, abs=1e-8)


def test_no_conjugate_points_flat_and_hyperbolic():
    for model in (flat_torus(), constant_curvature_model(-1.0)):
        spec = geodesic_spec(model)
        assert detect_conjugate_points(spec, SMPoint(0.0, 0.0, 0.2),
                                       10.0) == []


def test_riccati_coth():
    spec = geodesic_spec(constant_curvature_model(-1.0))
    p0 = SMPoint(0.0, 0.0, 0.3)
    for R in (1.0, 3.0):
        trace = solve_riccati_finite(spec, p0, R, sign="+")
        assert trace.r_at(0.0) == pytest.approx(1.0 / np.tanh(R), abs=1e-10)


def test_riccati_flat():
    spec = geodesic_spec(flat_torus())
    trace = solve_riccati_finite(spec, SMPoint(0.1, 0.1, 0.4), 2.0, sign="+")
    assert trace.r_at(0.0) == pytest.approx(0.5, abs=1e-10)


def test_riccati_limits_hyperbolic():
    spec = geodesic_spec(constant_curvature_model(-1.0))
    r_plus, r_minus = solve_riccati_limit(spec, SMPoint(0.0, 0.0, 0.3))
    assert r_plus == pytest.approx(1.0, abs=1e-6)
    assert r_minus == pytest.approx(-1.0, abs=1e-6)


def test_riccati_bound():
    spec = geodesic_spec(constant_curvature_model(-1.0))
    consts = riccati_bound_constants(spec)
    assert consts["A"] >= consts["B"]
    states = [SMPoint(0.0, 0.0, th) for th in (0.1, 1.3)]
    rep = check_riccati_bound(spec, states)
    assert all(row["ok"] for row in rep["states"])
    assert rep["bound"] == pytest.approx(consts["A"] * (1 + np.sqrt(5.0)) / 2)
    assert GOLDEN_BOUND == pytest.approx((1 + np.sqrt(5.0)) / 2)


def test_comparison_ode_residuals():
    res = comparison_ode_residuals(A=1.3, D=0.2, E=-0.1)
    assert res["w_plus"] < 1e-9
    assert res["w_minus"] < 1e-9


def test_exterior_fan_r_flat():
    # flat fan solution launched a distance d behind the state: r = 1/d
    spec = geodesic_spec(euclidean_disk())
    p = SMPoint(0.2, 0.0, 0.0)
    r = exterior_fan_r(spec, [p], margin=0.1)[0]
    d = 0.2 - (-1.0) + 0.1  # backward distance to boundary plus margin
    assert r == pytest.approx(1.0 / d, abs=1e-8)
