"""Hyperbolicity criterion, quadratic-form monotonicity, and transport residuals.

Three probes of long-time flow behaviour:

* `theoremD_criterion` scans the hyperbolicity quantity
  K - H(lam) - lam J + lam^2 + (lam I + V(lam))^2 / 4 over a bundle grid;
  a negative supremum certifies uniform contraction of the associated
  quadratic form.
* `quadratic_form_rate` evaluates Q = y z along a Jacobi trajectory together
  with its algebraic time derivative and checks the Sylvester positivity of
  the rate form against the sign of the criterion quantity.
* `cohomological_residual` solves the grid least-squares problem
  min_u || F u - h - theta(v) ||_{L^2} on a closed model and reports the
  normalized residual; obstructed right-hand sides leave a residual bounded
  away from zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import DomainError, SolverDiverged
from .fields import SMPoint, _as_field
from .geometry import derived_curvatures, thermostat_generator, \
    validation_grid_points
from .jacobi import JacobiCoefficients

TWO_PI = 2.0 * np.pi


@dataclass
class CriterionReport:
    """Supremum of the hyperbolicity quantity over a sample grid."""

    sup_value: float
    argmax: SMPoint
    anosov_flag: bool

    def as_dict(self):
        return {"sup_value": self.sup_value,
                "argmax": {"x": self.argmax.x, "y": self.argmax.y,
                           "theta": self.argmax.theta},
                "anosov_flag": self.anosov_flag}


def theoremD_criterion(model, lam, grid_spec=(24, 24, 24)) -> CriterionReport:
    """Scan the hyperbolicity quantity and flag a negative supremum."""
    lam = _as_field(lam)
    dc = derived_curvatures(model, lam)
    x, y, th = validation_grid_points(model, grid_spec)
    vals = np.asarray(dc.anosovD.eval(x, y, th), dtype=float)
    vals = np.broadcast_to(vals, x.shape)
    k = int(np.argmax(vals))
    sup = float(vals[k])
    return CriterionReport(sup_value=sup,
                           argmax=SMPoint(float(x[k]), float(y[k]),
                                          float(th[k])),
                           anosov_flag=sup < 0.0)


@dataclass
class QuadraticFormState:
    """Q = y z and its algebraic rate at one point of a Jacobi trajectory."""

    t: float
    y: float
    z: float
    q_value: float
    rate: float
    anosovD: float
    rate_positive_definite: bool


def _rate_form_coeffs(coeffs, x, y, th):
    """Coefficients (A, B, C) of the rate form A y^2 + B yz + C z^2."""
    A = -float(coeffs.core.eval(x, y, th))
    B = float(coeffs.Vlam.eval(x, y, th)) + float(coeffs.lamI.eval(x, y, th))
    return A, B, 1.0


def quadratic_form_rate(spec, traj, coeffs=None, fd_step=1e-4):
    """Evaluate Q = y z and d/dt Q along a Jacobi trajectory.

    Returns a dict with the per-sample series, the worst deviation between
    the algebraic rate and a central finite difference of y z along the
    trajectory, and the grid-wise agreement between Sylvester positivity of
    the rate form and the sign of the hyperbolicity quantity.
    """
    if coeffs is None:
        coeffs = JacobiCoefficients(spec)
    t0, t1 = float(traj.t[0]), float(traj.t[-1])
    states: List[QuadraticFormState] = []
    max_fd_dev = 0.0
    sylvester_consistent = True
    for tk in traj.t:
        tk = float(tk)
        x, y_b, th = traj.base_state(tk)
        _, yk, zk = traj.jacobi_state(tk)
        yk, zk = float(yk), float(zk)
        A, B, C = _rate_form_coeffs(coeffs, x, y_b, th)
        rate = A * yk * yk + B * yk * zk + C * zk * zk
        D = float(coeffs.anosovD.eval(x, y_b, th))
        # positive definite <=> A > 0 and 4AC - B^2 > 0
        posdef = (A > 0.0) and (4.0 * A * C - B * B > 0.0)
        if abs(D) > 1e-9 and posdef != (D < 0.0):
            sylvester_consistent = False
        if t0 + fd_step <= tk <= t1 - fd_step:
            sp = traj.jacobi_state(tk + fd_step)
            sm = traj.jacobi_state(tk - fd_step)
            fd = (sp[1] * sp[2] - sm[1] * sm[2]) / (2.0 * fd_step)
            max_fd_dev = max(max_fd_dev, abs(fd - rate))
        states.append(QuadraticFormState(t=tk, y=yk, z=zk, q_value=yk * zk,
                                         rate=rate, anosovD=D,
                                         rate_positive_definite=posdef))
    return {"states": states, "max_fd_deviation": max_fd_dev,
            "sylvester_consistent": sylvester_consistent}


def rate_form_positive_definite(model, lam, x, y, th):
    """Sylvester check of the rate form at arbitrary bundle points."""
    lam = _as_field(lam)
    dc = derived_curvatures(model, lam)
    V = model.frame.V
    lamI = lam * model.I
    Vlam = V.apply(lam)
    A = -np.asarray(dc.core.eval(x, y, th), dtype=float)
    B = np.asarray(Vlam.eval(x, y, th), dtype=float) \
        + np.asarray(lamI.eval(x, y, th), dtype=float)
    return (A > 0.0) & (4.0 * A - B * B > 0.0)


# ---------------------------------------------------------------------------
# cohomological equation on a closed model
# ---------------------------------------------------------------------------

# 4th-order central difference: f'(x) ~ (-f2 + 8 f1 - 8 f-1 + f-2) / 12h

def _central_diff4(u, axis, h):
    return (-np.roll(u, -2, axis=axis) + 8.0 * np.roll(u, -1, axis=axis)
            - 8.0 * np.roll(u, 1, axis=axis) + np.roll(u, 2, axis=axis)) \
        / (12.0 * h)


class GridTransportOperator:
    """Generator F = X + lam V discretized on a periodic n^3 bundle grid.

    Spatial directions cover one period [0,1) of the torus, the fiber covers
    [0, 2 pi); derivatives use 4th-order periodic central differences, so
    applying the operator or its adjoint costs a handful of rolls.
    """

    def __init__(self, model, lam, n):
        if model.domain.kind != "torus":
            raise DomainError("grid transport operator needs a closed "
                              "(torus) model")
        self.n = int(n)
        self.model = model
        self.lam = _as_field(lam)
        xs = np.linspace(0.0, 1.0, n, endpoint=False)
        ts = np.linspace(0.0, TWO_PI, n, endpoint=False)
        X, Y, T = np.meshgrid(xs, xs, ts, indexing="ij")
        self.X, self.Y, self.T = X, Y, T
        self.h_xy = 1.0 / n
        self.h_t = TWO_PI / n
        gen = thermostat_generator(model, self.lam)
        self.cx = np.broadcast_to(gen.c_x.eval(X, Y, T), X.shape).astype(float)
        self.cy = np.broadcast_to(gen.c_y.eval(X, Y, T), X.shape).astype(float)
        self.ct = np.broadcast_to(gen.c_theta.eval(X, Y, T),
                                  X.shape).astype(float)

    def sample(self, field):
        field = _as_field(field)
        return np.broadcast_to(field.eval(self.X, self.Y, self.T),
                               self.X.shape).astype(float)

    def apply(self, u):
        return (self.cx * _central_diff4(u, 0, self.h_xy)
                + self.cy * _central_diff4(u, 1, self.h_xy)
                + self.ct * _central_diff4(u, 2, self.h_t))

    def apply_adjoint(self, v):
        # central differences are antisymmetric on the periodic grid
        return -(_central_diff4(self.cx * v, 0, self.h_xy)
                 + _central_diff4(self.cy * v, 1, self.h_xy)
                 + _central_diff4(self.ct * v, 2, self.h_t))

    def normal_diagonal(self):
        """Approximate diagonal of F^T F for Jacobi preconditioning."""
        s = 2.0 * ((8.0 / 12.0) ** 2 + (1.0 / 12.0) ** 2)
        d = s * (self.cx ** 2 / self.h_xy ** 2
                 + self.cy ** 2 / self.h_xy ** 2
                 + self.ct ** 2 / self.h_t ** 2)
        return np.maximum(d, 1e-12 * float(np.max(d)))


def circular_pairing(model, w_x, w_y):
    """The fiberwise pairing of a base 1-form with the unit velocity."""
    w_x = _as_field(w_x)
    w_y = _as_field(w_y)
    def pairing(x, y, th):
        speed = 1.0 / model.conformal_factor(x, y)  # e^{-phi}
        return np.asarray(speed, dtype=float) * (
            np.asarray(w_x.eval(x, y, th), dtype=float) * np.cos(th)
            + np.asarray(w_y.eval(x, y, th), dtype=float) * np.sin(th))
    from .fields import SMScalarField
    return SMScalarField.from_callable(pairing)


def cohomological_residual(model, lam, h=None, w_x=None, w_y=None, n=32,
                           tol=1e-10, maxiter=10000, rhs_grid=None):
    """Least-squares solve of F u = h + theta(v) on an n^3 periodic grid.

    h is a base scalar and (w_x, w_y) the components of a base 1-form theta;
    the right-hand side on the bundle is h + e^{-phi}(w_x cos + w_y sin).
    Returns the normalized residual, the mean-zero minimizer, and solver
    diagnostics.  Raises SolverDiverged when conjugate gradients on the
    normal equations exhausts the iteration cap without meeting tolerance.
    """
    op = GridTransportOperator(model, lam, n)
    if rhs_grid is not None:
        rhs = np.asarray(rhs_grid, dtype=float)
    else:
        rhs = np.zeros_like(op.X)
        if h is not None:
            rhs = rhs + op.sample(h)
        if w_x is not None or w_y is not None:
            pairing = circular_pairing(model,
                                       w_x if w_x is not None else 0.0,
                                       w_y if w_y is not None else 0.0)
            rhs = rhs + op.sample(pairing)

    shape = rhs.shape
    size = rhs.size
    b = op.apply_adjoint(rhs).ravel()
    diag = op.normal_diagonal().ravel()

    def normal_mv(v):
        return op.apply_adjoint(op.apply(v.reshape(shape))).ravel()

    A = LinearOperator((size, size), matvec=normal_mv)
    M = LinearOperator((size, size), matvec=lambda v: v / diag)
    # F^T rhs at roundoff level means rhs is orthogonal to the range:
    # the minimizer is u = 0 and CG would only chase noise
    nb = np.linalg.norm(b)
    b_floor = 1e-10 * np.sqrt(float(np.max(diag))) * np.linalg.norm(rhs)
    if nb <= b_floor:
        u = np.zeros(shape)
        info = 0
    else:
        sol, info = cg(A, b, rtol=tol, atol=0.0, maxiter=maxiter, M=M)
        if info > 0:
            # the normal equations are consistent but can stagnate near the
            # attainable floor; accept if the gradient is already tiny
            grad = np.linalg.norm(b - A.matvec(sol)) / nb
            if grad > 1e3 * tol:
                raise SolverDiverged(
                    f"conjugate gradients hit the {maxiter}-iteration cap "
                    f"with normal-equation residual {grad:.3e}")
        u = sol.reshape(shape)
    u = u - float(np.mean(u))
    misfit = op.apply(u) - rhs
    rhs_norm = float(np.linalg.norm(rhs))
    residual = float(np.linalg.norm(misfit)) / max(rhs_norm, 1e-300)
    return {"residual": residual, "minimizer": u, "rhs_norm": rhs_norm,
            "grid": n, "cg_info": int(info), "operator": op}
