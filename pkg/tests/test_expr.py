"""Expression language: parsing, precedence, evaluation, derivatives."""

import numpy as np
import pytest

from thermolab.errors import ParseError, UnknownIdentifier
from thermolab.expr import parse_expression

FUNCS = ["sin", "cos", "tan", "exp", "log", "sqrt", "tanh", "abs"]


def test_simple_values():
    assert parse_expression("sin(2*pi*x)").eval(0.25, 0.0, 0.0) == \
        pytest.approx(1.0)
    assert parse_expression("2+3*4").eval(0.0, 0.0, 0.0) == 14.0
    assert parse_expression("(2+3)*4").eval(0.0, 0.0, 0.0) == 20.0


def test_power_right_associative_and_tight():
    # 2^3^2 = 2^(3^2) = 512; -x^2 = -(x^2)
    assert parse_expression("2^3^2").eval(0, 0, 0) == 512.0
    assert parse_expression("-x^2").eval(3.0, 0, 0) == -9.0
    assert parse_expression("2*x^2").eval(3.0, 0, 0) == 18.0


def test_variables_and_constants():
    e = parse_expression("x + 2*y - theta/pi")
    assert e.eval(1.0, 2.0, np.pi) == pytest.approx(4.0)


def test_unknown_identifier_offset():
    with pytest.raises(UnknownIdentifier) as exc:
        parse_expression("siin(x)")
    assert exc.value.offset == 0


def test_parse_error_reports_offset():
    with pytest.raises(ParseError):
        parse_expression("1 + * 2")
    with pytest.raises(ParseError):
        parse_expression("")


def test_print_parse_round_trip():
    rng = np.random.default_rng(11)
    texts = ["sin(2*pi*x)*cos(theta) + exp(-y^2)",
             "x^2 - 3*y/(1 + theta^2)",
             "tanh(x*y) + sqrt(abs(y) + 1)",
             "-(x + y)*sin(theta)/2"]
    for text in texts:
        e = parse_expression(text)
        e2 = parse_expression(str(e))
        pts = rng.uniform(0.2, 1.5, (100, 3))
        for x, y, th in pts:
            assert e2.eval(x, y, th) == pytest.approx(e.eval(x, y, th),
                                                      abs=1e-15, rel=1e-15)


@pytest.mark.parametrize("fn", FUNCS)
def test_derivative_matches_fd(fn):
    e = parse_expression(f"{fn}(x*y + theta/3)")
    d = e.diff("x")
    rng = np.random.default_rng(5)
    h = 1e-6
    for _ in range(20):
        x, y, th = rng.uniform(0.3, 0.9, 3)
        fd = (e.eval(x + h, y, th) - e.eval(x - h, y, th)) / (2 * h)
        assert d.eval(x, y, th) == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_theta_derivative():
    e = parse_expression("sin(theta)^2")
    d = e.diff("theta")
    assert d.eval(0.0, 0.0, 0.7) == pytest.approx(2 * np.sin(0.7) * np.cos(0.7))


def test_vectorized_eval():
    e = parse_expression("x^2 + sin(theta)")
    x = np.linspace(0, 1, 7)
    out = e.eval(x, 0.0, np.pi / 2)
    assert np.allclose(out, x ** 2 + 1.0)
