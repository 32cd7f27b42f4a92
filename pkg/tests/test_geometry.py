"""Surface models: frames, commutation relations, derived curvatures."""

import numpy as np
import pytest

from thermolab.errors import DomainError
from thermolab.fields import SMScalarField
from thermolab.geometry import build_surface_model, classify_magnetic, \
    constant_curvature_model, derived_curvatures, euclidean_disk, \
    flat_torus, validate_structure_relations


def worst(report):
    return max(r["max"] for r in report.values())


def test_flat_torus_structure():
    model = flat_torus()
    assert worst(validate_structure_relations(model, (6, 6, 6))) < 1e-12


def test_conformal_torus_structure_with_thermostat():
    model = build_surface_model("conformal_torus",
                                phi="0.1*sin(2*pi*x)*cos(2*pi*y)")
    lam = SMScalarField.from_expression("0.2*sin(2*pi*y)")
    rep = validate_structure_relations(model, (8, 8, 8), lam=lam)
    assert worst(rep) < 1e-9


def test_disk_structure():
    model = build_surface_model("conformal_disk", phi="0.2*(x^2 - y^2)")
    assert worst(validate_structure_relations(model, (6, 6, 6))) < 1e-9


def test_nonperiodic_phi_rejected_on_torus():
    with pytest.raises(DomainError):
        build_surface_model("conformal_torus", phi="x^2")


def test_constant_curvature_models():
    for K in (-1.0, 1.0, -4.0):
        model = constant_curvature_model(K)
        xs = np.linspace(-0.3, 0.3, 5)
        vals = model.K.eval(xs, xs, 0.0)
        assert np.allclose(vals, K, atol=1e-9)
        assert worst(validate_structure_relations(model, (6, 6, 6))) < 1e-9


def test_gauss_curvature_formula():
    # K = -e^{-2 phi} (phi_xx + phi_yy) for phi = 0.1 sin(2 pi x) cos(2 pi y)
    model = build_surface_model("conformal_torus",
                                phi="0.1*sin(2*pi*x)*cos(2*pi*y)")
    x, y = 0.13, 0.37
    phi = 0.1 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
    lap = -2 * (2 * np.pi) ** 2 * 0.1 * np.sin(2 * np.pi * x) \
        * np.cos(2 * np.pi * y)
    assert model.K.eval(x, y, 0.0) == pytest.approx(-np.exp(-2 * phi) * lap,
                                                    rel=1e-12)


def test_derived_curvatures_flat_constant_lambda():
    model = flat_torus()
    for c in (0.0, 0.5, -0.3):
        dc = derived_curvatures(model, SMScalarField.constant(c))
        assert dc.core.eval(0.2, 0.3, 0.4) == pytest.approx(c * c)
        assert dc.bigK.eval(0.2, 0.3, 0.4) == pytest.approx(c * c)
        assert dc.K_lambda.eval(0.2, 0.3, 0.4) == pytest.approx(c * c)
        assert dc.anosovD.eval(0.2, 0.3, 0.4) == pytest.approx(c * c)


def test_derived_curvatures_hyperbolic():
    model = constant_curvature_model(-1.0)
    dc = derived_curvatures(model, SMScalarField.constant(0.0))
    assert dc.anosovD.eval(0.1, -0.2, 1.0) == pytest.approx(-1.0, rel=1e-9)


def test_classify_magnetic():
    model = flat_torus()
    # base-dependent lam has V(lam) = 0 and I = 0: magnetic
    lam = SMScalarField.from_expression("0.3*sin(2*pi*x)")
    assert classify_magnetic(model, lam)["magnetic"]
    lam2 = SMScalarField.from_expression("0.3*sin(theta)")
    assert not classify_magnetic(model, lam2)["magnetic"]


def test_metric_speed():
    model = build_surface_model("conformal_disk", phi="0.2*(x^2 - y^2)")
    x, y = 0.3, -0.1
    s = model.metric_speed(x, y, 0.6, 0.8)
    assert s == pytest.approx(np.exp(0.2 * (x * x - y * y)), rel=1e-12)
    assert euclidean_disk().metric_speed(0.1, 0.2, 3.0, 4.0) == \
        pytest.approx(5.0)
