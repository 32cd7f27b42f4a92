"""Surface models carrying the canonical frame (X, H, V).

The frame is realized in isothermal coordinates: for a conformal factor
exp(phi) the operators are

    X = e^-phi [ cos(theta) dx + sin(theta) dy
                 + (-phi_x sin(theta) + phi_y cos(theta)) dtheta ]
    H = e^-phi [ -sin(theta) dx + cos(theta) dy
                 - (phi_x cos(theta) + phi_y sin(theta)) dtheta ]
    V = dtheta

with structure scalars I = J = 0 and K = -e^{-2 phi} (phi_xx + phi_yy).
Synthetic models supply their own frames and scalars and are accepted
only after the commutation relations validate on a grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import expr as ex
from .errors import DomainError, ValidationFailed
from .fields import (FrameOperator, SMPoint, SMScalarField, _as_field,
                     commutator)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Domain:
    """Base domain: periodic unit square, closed unit disk, or a plane window."""

    kind: str  # 'torus' | 'disk' | 'plane'
    window: tuple = ((0.0, 1.0), (0.0, 1.0))  # sampling box for plane/torus

    @property
    def has_boundary(self):
        return self.kind == "disk"

    def contains(self, x, y):
        if self.kind == "disk":
            return x * x + y * y <= 1.0 + 1e-12
        return True

    def require(self, p: SMPoint):
        if not self.contains(p.x, p.y):
            raise DomainError(f"point ({p.x}, {p.y}) outside {self.kind} domain")


TORUS = Domain("torus")
DISK = Domain("disk", window=((-1.0, 1.0), (-1.0, 1.0)))


@dataclass(frozen=True)
class FrameTriple:
    X: FrameOperator
    H: FrameOperator
    V: FrameOperator

    def get(self, which):
        try:
            return getattr(self, which)
        except AttributeError:
            raise ValueError(f"unknown frame operator {which!r}")


@dataclass(frozen=True)
class SurfaceModel:
    """A surface plus canonical-frame realization and structure scalars."""

    kind: str  # 'conformal_torus' | 'conformal_disk' | 'synthetic'
    domain: Domain
    frame: FrameTriple
    I: SMScalarField
    J: SMScalarField
    K: SMScalarField
    phi: Optional[SMScalarField] = None  # conformal exponent when available
    tolerance: float = 1e-6

    def conformal_factor(self, x, y):
        """exp(phi): metric length scale; 1 when no conformal data is attached."""
        if self.phi is None:
            return np.ones_like(np.asarray(x, dtype=float))
        return np.exp(self.phi.eval(x, y, 0.0))

    def metric_speed(self, x, y, vx, vy):
        """F(v) for a base velocity (vx, vy) at (x, y)."""
        return self.conformal_factor(x, y) * np.hypot(vx, vy)


@dataclass(frozen=True)
class DerivedCurvatures:
    """Thermostat curvatures: bigK is the first-integral-identity curvature,
    K_lambda drives the Jacobi equation, anosovD is the hyperbolicity test
    quantity.  core = K - H(lam) - lam*J + lam^2 is shared by all three."""

    core: SMScalarField
    bigK: SMScalarField
    K_lambda: SMScalarField
    anosovD: SMScalarField


@dataclass(frozen=True)
class SyntheticSpec:
    """User-supplied frame + scalars for non-conformal models."""

    X: FrameOperator
    H: FrameOperator
    V: FrameOperator
    I: SMScalarField
    J: SMScalarField
    K: SMScalarField
    phi: Optional[SMScalarField] = None
    window: tuple = ((-0.4, 0.4), (-0.4, 0.4))


def _conformal_frame(phi_expr):
    """Build (X, H, V) expressions from a conformal exponent expression."""
    phi_x = phi_expr.diff("x")
    phi_y = phi_expr.diff("y")
    emphi = ex.call("exp", ex.neg(phi_expr))
    cos_t = ex.call("cos", ex.Var("theta"))
    sin_t = ex.call("sin", ex.Var("theta"))

    X = FrameOperator.from_expressions(
        emphi * cos_t,
        emphi * sin_t,
        emphi * (ex.neg(phi_x) * sin_t + phi_y * cos_t),
    )
    H = FrameOperator.from_expressions(
        ex.neg(emphi * sin_t),
        emphi * cos_t,
        ex.neg(emphi * (phi_x * cos_t + phi_y * sin_t)),
    )
    V = FrameOperator.from_expressions(ex.Const(0.0), ex.Const(0.0),
                                       ex.Const(1.0))
    return X, H, V


def _check_torus_periodic(phi_expr, tol=1e-9):
    ys = np.linspace(0.0, 1.0, 17)
    left = phi_expr.eval(np.zeros_like(ys), ys, 0.0)
    right = phi_expr.eval(np.ones_like(ys), ys, 0.0)
    bottom = phi_expr.eval(ys, np.zeros_like(ys), 0.0)
    top = phi_expr.eval(ys, np.ones_like(ys), 0.0)
    if np.max(np.abs(left - right)) > tol or np.max(np.abs(bottom - top)) > tol:
        raise DomainError("conformal exponent is not 1-periodic on the torus")


def build_surface_model(kind, phi=None, synthetic=None, tolerance=1e-6,
                        validate=True, validation_grid=(8, 8, 8)):
    """Construct a SurfaceModel of the given kind.

    kind 'conformal_torus'/'conformal_disk' takes a conformal exponent
    (expression text or AST); kind 'synthetic' takes a SyntheticSpec.
    Commutator residuals are checked on a validation grid unless
    validate=False; ValidationFailed carries the residual report.
    """
    if kind in ("conformal_torus", "conformal_disk"):
        phi_expr = ex.as_expr(phi if phi is not None else "0")
        if kind == "conformal_torus":
            _check_torus_periodic(phi_expr)
            domain = TORUS
        else:
            domain = DISK
        X, H, V = _conformal_frame(phi_expr)
        lap = phi_expr.diff("x").diff("x") + phi_expr.diff("y").diff("y")
        K = ex.neg(ex.call("exp", ex.Const(-2.0) * phi_expr) * lap)
        model = SurfaceModel(
            kind=kind, domain=domain, frame=FrameTriple(X, H, V),
            I=SMScalarField.constant(0.0), J=SMScalarField.constant(0.0),
            K=SMScalarField.from_expression(K),
            phi=SMScalarField.from_expression(phi_expr),
            tolerance=tolerance)
    elif kind == "synthetic":
        if synthetic is None:
            raise ValueError("synthetic kind needs a SyntheticSpec")
        domain = Domain("plane", window=synthetic.window)
        model = SurfaceModel(
            kind=kind, domain=domain,
            frame=FrameTriple(synthetic.X, synthetic.H, synthetic.V),
            I=_as_field(synthetic.I), J=_as_field(synthetic.J),
            K=_as_field(synthetic.K), phi=synthetic.phi, tolerance=tolerance)
    else:
        raise ValueError(f"unknown surface kind {kind!r}")

    if validate:
        report = validate_structure_relations(model, validation_grid)
        worst = max(r["max"] for r in report.values())
        if worst > tolerance:
            raise ValidationFailed(
                f"commutator residual {worst:.3e} exceeds tolerance "
                f"{tolerance:.1e}", residuals=report)
    return model


def constant_curvature_model(K, tolerance=1e-6, window=((-0.4, 0.4),
                                                        (-0.4, 0.4))):
    """Synthetic model with constant curvature K (and I = J = 0).

    Uses the isothermal exponents phi = -log cos(k y) for K = -k^2 and
    phi = -log cosh(k y) for K = +k^2, valid on a band around y = 0.
    """
    K = float(K)
    if K == 0.0:
        phi_expr = ex.Const(0.0)
    elif K < 0.0:
        k = np.sqrt(-K)
        phi_expr = ex.neg(ex.call("log", ex.call(
            "cos", ex.Const(k) * ex.Var("y"))))
    else:
        # cosh is not in the expression vocabulary; use (e^ky + e^-ky)/2
        k = np.sqrt(K)
        ky = ex.Const(k) * ex.Var("y")
        cosh = (ex.call("exp", ky) + ex.call("exp", ex.neg(ky))) * ex.Const(0.5)
        phi_expr = ex.neg(ex.call("log", cosh))
    X, H, V = _conformal_frame(phi_expr)
    spec = SyntheticSpec(
        X=X, H=H, V=V,
        I=SMScalarField.constant(0.0), J=SMScalarField.constant(0.0),
        K=SMScalarField.constant(K),
        phi=SMScalarField.from_expression(phi_expr),
        window=window)
    return build_surface_model("synthetic", synthetic=spec,
                               tolerance=tolerance)


def flat_torus(tolerance=1e-6):
    return build_surface_model("conformal_torus", "0", tolerance=tolerance)


def euclidean_disk(tolerance=1e-6):
    return build_surface_model("conformal_disk", "0", tolerance=tolerance)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def apply_frame_operator(model, which, f, p=None):
    """Apply X, H or V of the model to a field.

    With a point p, returns the real value there (DomainError outside the
    domain); without, returns the derived SMScalarField for composition.
    """
    op = model.frame.get(which)
    result = op.apply(f)
    if p is None:
        return result
    model.domain.require(p)
    return result(p)


def thermostat_generator(model, lam):
    """The generator F = X + lam V as a FrameOperator."""
    lam = _as_field(lam)
    X, V = model.frame.X, model.frame.V
    return FrameOperator(X.c_x + lam * V.c_x,
                         X.c_y + lam * V.c_y,
                         X.c_theta + lam * V.c_theta)


_DEF_PROBES_PERIODIC = (
    "sin(2*pi*x)*cos(theta)",
    "cos(2*pi*y)*sin(theta)+0.3*sin(2*pi*x)",
    "sin(2*pi*x+2*pi*y)+cos(2*theta)",
)

_DEF_PROBES_LOCAL = (
    "sin(x+2*y)*cos(theta)",
    "x*y+sin(theta)",
    "cos(x)*sin(y)+sin(2*theta)",
)


def validation_grid_points(model, grid_spec):
    """Tensor grid of sample points covering the bundle over the domain."""
    nx, ny, nt = grid_spec
    if model.domain.kind == "torus":
        xs = np.linspace(0.0, 1.0, nx, endpoint=False)
        ys = np.linspace(0.0, 1.0, ny, endpoint=False)
    elif model.domain.kind == "disk":
        # polar interior samples, strictly inside to keep FD stencils inside
        rr = np.linspace(0.1, 0.9, nx)
        aa = np.linspace(0.0, TWO_PI, ny, endpoint=False)
        R, A = np.meshgrid(rr, aa, indexing="ij")
        ts = np.linspace(0.0, TWO_PI, nt, endpoint=False)
        X3, T3 = np.meshgrid((R * np.cos(A)).ravel(), ts, indexing="ij")
        Y3, _ = np.meshgrid((R * np.sin(A)).ravel(), ts, indexing="ij")
        return X3.ravel(), Y3.ravel(), T3.ravel()
    else:
        (x0, x1), (y0, y1) = model.domain.window
        xs = np.linspace(x0, x1, nx)
        ys = np.linspace(y0, y1, ny)
    ts = np.linspace(0.0, TWO_PI, nt, endpoint=False)
    X3, Y3, T3 = np.meshgrid(xs, ys, ts, indexing="ij")
    return X3.ravel(), Y3.ravel(), T3.ravel()


def validate_structure_relations(model, grid_spec=(8, 8, 8), lam=None,
                                 probes=None):
    """Max/RMS residuals of the frame commutation relations on a grid.

    Residuals are measured by applying both sides of each relation to a
    small set of probe fields.  When lam is given, the three thermostat
    relations for F = X + lam V are checked as well.
    """
    X, H, V = model.frame.X, model.frame.H, model.frame.V
    I, J, K = model.I, model.J, model.K
    xg, yg, tg = validation_grid_points(model, grid_spec)

    if probes is None:
        probes = _DEF_PROBES_PERIODIC if model.domain.kind == "torus" \
            else _DEF_PROBES_LOCAL
    probe_fields = [_as_field(p) for p in probes]

    relations = {}

    def residual(name, make_residual_field):
        worst_max = 0.0
        sq_sum = 0.0
        count = 0
        for f in probe_fields:
            vals = make_residual_field(f).eval(xg, yg, tg)
            worst_max = max(worst_max, float(np.max(np.abs(vals))))
            sq_sum += float(np.sum(vals ** 2))
            count += vals.size
        relations[name] = {"max": worst_max,
                           "rms": float(np.sqrt(sq_sum / count))}

    residual("[V,X]-H", lambda f: commutator(V, X, f) - H.apply(f))
    residual("[H,V]-X-IH-JV",
             lambda f: commutator(H, V, f) - X.apply(f)
             - I * H.apply(f) - J * V.apply(f))
    residual("[X,H]-KV", lambda f: commutator(X, H, f) - K * V.apply(f))

    if lam is not None:
        lam = _as_field(lam)
        F = thermostat_generator(model, lam)
        Vlam = V.apply(lam)
        Hlam = H.apply(lam)
        core = K - Hlam - lam * J + lam * lam

        residual("[V,F]-H-V(lam)V",
                 lambda f: commutator(V, F, f) - H.apply(f)
                 - Vlam * V.apply(f))
        residual("[H,V]-F-IH-(J-lam)V",
                 lambda f: commutator(H, V, f) - F.apply(f)
                 - I * H.apply(f) - (J - lam) * V.apply(f))
        residual("[F,H]-coreV+lamF+lamIH",
                 lambda f: commutator(F, H, f) - core * V.apply(f)
                 + lam * F.apply(f) + lam * I * H.apply(f))
    return relations


def derived_curvatures(model, lam) -> DerivedCurvatures:
    """The three thermostat curvature fields for a given lam."""
    lam = _as_field(lam)
    X, H, V = model.frame.X, model.frame.H, model.frame.V
    F = thermostat_generator(model, lam)
    Hlam = H.apply(lam)
    Vlam = V.apply(lam)
    lamI = lam * model.I
    core = model.K - Hlam - lam * model.J + lam * lam
    bigK = core + lamI * Vlam + F.apply(Vlam)
    K_lambda = core + lamI * Vlam - F.apply(lamI)
    quarter = (lamI + Vlam) * (lamI + Vlam) * 0.25
    anosovD = core + quarter
    return DerivedCurvatures(core=core, bigK=bigK, K_lambda=K_lambda,
                             anosovD=anosovD)


def classify_magnetic(model, lam, grid_spec=(12, 12, 24), tolerance=1e-8):
    """Check the magnetic-flow condition V(lam) = -lam I on a grid."""
    lam = _as_field(lam)
    defect = model.frame.V.apply(lam) + lam * model.I
    xg, yg, tg = validation_grid_points(model, grid_spec)
    residual = float(np.max(np.abs(defect.eval(xg, yg, tg))))
    return {"magnetic": residual < tolerance, "residual": residual}
