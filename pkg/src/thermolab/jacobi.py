"""Jacobi variational system, conjugate points, and Riccati solutions.

The variational state (a, y, z) along an orbit satisfies

    a' = lam y
    y' = lam I y + z
    z' = -{K - H(lam) - lam J + lam^2} y + V(lam) z

and is integrated jointly with the orbit.  Riccati solutions are always
obtained through the linear system (r = y'/y), which turns blowups into
exact zeros of y; the fan variant z/y differs from y'/y by lam I.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (BlowupInsideWindow, BoundViolated, NoConvergence,
                     RiccatiUnavailable, StepFailure)
from .fields import SMPoint, SMScalarField, _as_field
from .flow import DEFAULT_ATOL, DEFAULT_RTOL, ThermostatSpec, integrate_orbit
from .geometry import derived_curvatures, thermostat_generator

GOLDEN_BOUND = 0.5 * (1.0 + np.sqrt(5.0))
RICCATI_R_CAP = 2 ** 10


class JacobiCoefficients:
    """Scalar coefficient fields of the variational system for one spec."""

    def __init__(self, spec: ThermostatSpec):
        model, lam = spec.model, spec.lam
        V, H = model.frame.V, model.frame.H
        F = thermostat_generator(model, lam)
        self.lam = lam
        self.lamI = lam * model.I
        self.Vlam = V.apply(lam)
        self.Hlam = H.apply(lam)
        dc = derived_curvatures(model, lam)
        self.core = dc.core          # K - H(lam) - lam J + lam^2
        self.K_lambda = dc.K_lambda
        self.bigK = dc.bigK
        self.anosovD = dc.anosovD
        self.FlamI = F.apply(self.lamI)
        self.FVlam = F.apply(self.Vlam)


@dataclass
class JacobiTrajectory:
    """(a, y, z) samples along an orbit, with dense evaluation."""

    spec: ThermostatSpec
    t: np.ndarray
    states: np.ndarray          # columns x, y_base, theta, a, jy, jz
    sol: object
    coeffs: JacobiCoefficients

    def jacobi_state(self, t):
        s = np.asarray(self.sol(t))
        return s[3], s[4], s[5]

    @property
    def a(self):
        return self.states[:, 3]

    @property
    def y(self):
        return self.states[:, 4]

    @property
    def z(self):
        return self.states[:, 5]

    def base_state(self, t):
        return np.asarray(self.sol(t))[:3]

    def ydot(self, t):
        """y' = lam I y + z along the trajectory."""
        s = np.asarray(self.sol(t))
        lamI = self.coeffs.lamI.eval(s[0], s[1], s[2])
        return float(lamI * s[4] + s[5])

    def r_scalar(self, t):
        """r = y'/y (the scalar Riccati variable)."""
        s = np.asarray(self.sol(t))
        return self.ydot(t) / s[4]

    def r_fan(self, t):
        """r = z/y (the fan variant; the Lemma-1.10-type variable)."""
        s = np.asarray(self.sol(t))
        return float(s[5] / s[4])


def _combined_rhs(spec, coeffs):
    orbit_rhs = spec.rhs()
    lam_f = coeffs.lam.eval
    lamI_f = coeffs.lamI.eval
    core_f = coeffs.core.eval
    Vlam_f = coeffs.Vlam.eval

    def f(t, s):
        x, y, th, a, jy, jz = s
        dx, dy, dth = orbit_rhs(t, s[:3])
        lam = lam_f(x, y, th)
        lamI = lamI_f(x, y, th)
        core = core_f(x, y, th)
        Vlam = Vlam_f(x, y, th)
        return (dx, dy, dth,
                lam * jy,
                lamI * jy + jz,
                -core * jy + Vlam * jz)
    return f


def integrate_jacobi(spec, p0: SMPoint, t_span, initial=(0.0, 0.0, 1.0),
                     coeffs=None, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
                     events=None, t_eval=None) -> JacobiTrajectory:
    """Integrate orbit + Jacobi state jointly from p0 over t_span."""
    if coeffs is None:
        coeffs = JacobiCoefficients(spec)
    s0 = [p0.x, p0.y, p0.theta, *initial]
    res = solve_ivp(_combined_rhs(spec, coeffs), t_span, s0, method="RK45",
                    rtol=rtol, atol=atol, dense_output=True, events=events,
                    t_eval=t_eval)
    if res.status == -1:
        raise StepFailure(f"Jacobi integration failed: {res.message}")
    traj = JacobiTrajectory(spec=spec, t=res.t, states=res.y.T, sol=res.sol,
                            coeffs=coeffs)
    traj.events = res.t_events
    return traj


def second_order_residual(traj: JacobiTrajectory, n_check=50, h=1e-4):
    """max |y'' - (lam I + V(lam)) y' + K_lambda y| via finite differences.

    Independent consistency check tying the first-order system to the
    second-order Jacobi equation.
    """
    t0, t1 = float(traj.t[0]), float(traj.t[-1])
    lo, hi = min(t0, t1), max(t0, t1)
    ts = np.linspace(lo + 2 * h, hi - 2 * h, n_check)
    worst = 0.0
    for t in ts:
        yd = traj.ydot(t)
        ydd = (traj.ydot(t + h) - traj.ydot(t - h)) / (2 * h)
        s = traj.base_state(t)
        lamI = traj.coeffs.lamI.eval(*s)
        Vlam = traj.coeffs.Vlam.eval(*s)
        Klam = traj.coeffs.K_lambda.eval(*s)
        y = float(traj.sol(t)[4])
        worst = max(worst, abs(ydd - (lamI + Vlam) * yd + Klam * y))
    return float(worst)


def _y_zero_event(t_skip_around=None):
    def g(t, s):
        return s[4]
    g.terminal = False
    g.direction = 0
    return g


def detect_conjugate_points(spec, p0: SMPoint, T, coeffs=None, rtol=1e-11,
                            atol=1e-12):
    """Zeros of y on (0, T] for the solution y(0)=0, y'(0)=1."""
    traj = integrate_jacobi(spec, p0, (0.0, T), initial=(0.0, 0.0, 1.0),
                            coeffs=coeffs, rtol=rtol, atol=atol,
                            events=[_y_zero_event()])
    times = [float(t) for t in traj.events[0] if t > 1e-8]
    return times


@dataclass
class RiccatiTrace:
    """Sampled r(t) along an orbit with blowup and bound metadata."""

    t: np.ndarray
    r: np.ndarray
    y: np.ndarray
    z: np.ndarray
    blowup_times: list
    sign: str
    R: float
    segments: list = dc_field(default_factory=list)  # (t_lo, t_hi, sol)
    lamI_eval: object = None
    limit_value: Optional[float] = None
    A: Optional[float] = None
    B: Optional[float] = None
    C: Optional[float] = None

    def r_at(self, t):
        """r = y'/y at parameter t, from the dense segment solutions."""
        for t_lo, t_hi, sol in self.segments:
            if min(t_lo, t_hi) - 1e-12 <= t <= max(t_lo, t_hi) + 1e-12:
                s = np.asarray(sol(t))
                lamI = self.lamI_eval(s[0], s[1], s[2])
                return float((lamI * s[4] + s[5]) / s[4])
        return float(np.interp(t, self.t, self.r))


def _integrate_renormalized(spec, coeffs, start_point, t_start, t_end,
                            segment=5.0, rtol=1e-11, atol=1e-12):
    """Integrate the combined system with (a,y,z)(t_start) = (0,0,1),
    renormalizing (y,z) per segment to dodge overflow; returns sample arrays
    and zero-crossing times of y.  r = y'/y is invariant under the scaling.
    """
    # walk the base orbit to t_start first
    if t_start != 0.0:
        base = integrate_orbit(spec, start_point, (0.0, t_start),
                               stop_at_boundary=False, rtol=rtol, atol=atol)
        s = base.state(t_start)
        p = SMPoint(s[0], s[1], s[2])
    else:
        p = start_point

    direction = 1.0 if t_end > t_start else -1.0
    rhs = _combined_rhs(spec, coeffs)
    state = np.array([p.x, p.y, p.theta, 0.0, 0.0, 1.0])
    t_now = t_start
    ts_all, r_all, y_all, z_all, zeros = [], [], [], [], []
    segments = []
    event = _y_zero_event()
    lamI_f = coeffs.lamI.eval

    while direction * (t_end - t_now) > 1e-14:
        t_next = t_now + direction * min(segment, abs(t_end - t_now))
        res = solve_ivp(rhs, (t_now, t_next), state, method="RK45",
                        rtol=rtol, atol=atol, dense_output=True,
                        events=[event])
        if res.status == -1:
            raise StepFailure(f"Riccati integration failed: {res.message}")
        for tz in res.t_events[0]:
            if abs(tz - t_start) > 1e-9:
                zeros.append(float(tz))
        ts = np.linspace(t_now, float(res.t[-1]), 64)
        ys = res.sol(ts)
        lamI = lamI_f(ys[0], ys[1], ys[2])
        with np.errstate(divide="ignore", invalid="ignore"):
            r = (lamI * ys[4] + ys[5]) / ys[4]
        ts_all.append(ts)
        r_all.append(r)
        y_all.append(ys[4])
        z_all.append(ys[5])
        segments.append((t_now, float(res.t[-1]), res.sol))
        state = res.y[:, -1].copy()
        scale = max(abs(state[4]), abs(state[5]))
        if scale > 1e6:
            state[3:] /= scale
        t_now = float(res.t[-1])

    return (np.concatenate(ts_all), np.concatenate(r_all),
            np.concatenate(y_all), np.concatenate(z_all), sorted(zeros),
            segments)


def solve_riccati_finite(spec, p0: SMPoint, R, sign="+", coeffs=None,
                         eval_window=None):
    """Riccati solution r_R^+/- via the linear Jacobi substitution.

    sign '+': y(-R)=0, y'(-R)=1, integrated forward over (-R, R];
    sign '-': y(+R)=0, y'(+R)=1, integrated backward over [-R, R).
    Raises BlowupInsideWindow when y vanishes strictly inside the
    evaluation window (default: the open interval between the endpoints).
    """
    if coeffs is None:
        coeffs = JacobiCoefficients(spec)
    if sign == "+":
        t_start, t_end = -R, R
    elif sign == "-":
        t_start, t_end = R, -R
    else:
        raise ValueError("sign must be '+' or '-'")
    ts, rs, ys, zs, zeros, segments = _integrate_renormalized(
        spec, coeffs, p0, float(t_start), float(t_end))
    if eval_window is None:
        eval_window = (-R + 1e-9, R - 1e-9)
    inside = [t for t in zeros if eval_window[0] < t < eval_window[1]]
    if inside:
        raise BlowupInsideWindow(
            f"Jacobi solution vanished inside the window at t={inside[0]:.6g} "
            f"(conjugate point witness)", times=inside)
    order = np.argsort(ts)
    return RiccatiTrace(t=ts[order], r=rs[order], y=ys[order], z=zs[order],
                        blowup_times=zeros, sign=sign, R=float(R),
                        segments=segments, lamI_eval=coeffs.lamI.eval)


def solve_riccati_limit(spec, p0: SMPoint, tol=1e-6, R0=1.0,
                        R_cap=RICCATI_R_CAP, coeffs=None):
    """Limit Riccati values (r+, r-) at the state by R-doubling.

    The sequence r_R^+(0) must be decreasing and r_R^-(0) increasing;
    NoConvergence on monotonicity loss or cap overrun.
    """
    if coeffs is None:
        coeffs = JacobiCoefficients(spec)
    limits = {}
    for sign in ("+", "-"):
        R = float(R0)
        prev = None
        while True:
            trace = solve_riccati_finite(spec, p0, R, sign=sign,
                                         coeffs=coeffs,
                                         eval_window=(-R + 1e-9, 1e-9) if sign == "+"
                                         else (-1e-9, R - 1e-9))
            r0 = trace.r_at(0.0)
            if prev is not None:
                if sign == "+" and r0 > prev + 1e-9:
                    raise NoConvergence(
                        f"r_R^+(0) not decreasing at R={R}")
                if sign == "-" and r0 < prev - 1e-9:
                    raise NoConvergence(
                        f"r_R^-(0) not increasing at R={R}")
                if abs(r0 - prev) < tol:
                    limits[sign] = r0
                    break
            prev = r0
            R *= 2.0
            if R > R_cap:
                raise NoConvergence(f"R-doubling exceeded cap {R_cap}")
    r_plus, r_minus = limits["+"], limits["-"]
    if not r_plus > r_minus - 1e-9:
        raise NoConvergence("ordering r+ > r- lost in the limit")
    return r_plus, r_minus


def riccati_bound_constants(spec, grid_spec=(12, 12, 24), coeffs=None):
    """Constants B, C, A: B^2 >= sup|K_lambda|, C >= sup|lam I + V(lam)|."""
    from .geometry import validation_grid_points
    if coeffs is None:
        coeffs = JacobiCoefficients(spec)
    xg, yg, tg = validation_grid_points(spec.model, grid_spec)
    B = float(np.sqrt(np.max(np.abs(coeffs.K_lambda.eval(xg, yg, tg)))))
    C = float(np.max(np.abs((coeffs.lamI + coeffs.Vlam).eval(xg, yg, tg))))
    return {"B": B, "C": C, "A": max(B, C)}


def comparison_w_plus(t, A, D=0.0):
    """Closed-form solution of w' - A w + w^2 - A^2 = 0 (upper comparison)."""
    e = np.exp(-A * np.sqrt(5.0) * t + D)
    return A / (1.0 - e) + (A * (np.sqrt(5.0) - 1.0) / 2.0) * (1.0 + e) / (1.0 - e)


def comparison_w_minus(t, A, E=0.0):
    """Closed-form solution of w' + A w + w^2 - A^2 = 0 (lower comparison)."""
    p = np.exp(A * np.sqrt(5.0) * t + E)
    return -A * p / (p - 1.0) + (A * (1.0 + np.sqrt(5.0)) / 2.0) * (p + 1.0) / (p - 1.0)


def comparison_ode_residuals(A=1.0, D=0.0, E=0.0, ts=None):
    """Residuals of the comparison closed forms in their ODEs.

    Derivatives are taken by complex step, so the residual isolates any
    error in the printed formulas rather than in differencing.
    """
    if ts is None:
        ts = np.linspace(0.5, 3.0, 11)
    h = 1e-20
    wp = comparison_w_plus(ts, A, D)
    dwp = np.imag(comparison_w_plus(ts + 1j * h, A, D)) / h
    res_p = np.max(np.abs(dwp - A * wp + wp ** 2 - A ** 2))
    wm = comparison_w_minus(ts, A, E)
    dwm = np.imag(comparison_w_minus(ts + 1j * h, A, E)) / h
    res_m = np.max(np.abs(dwm + A * wm + wm ** 2 - A ** 2))
    return {"w_plus": float(res_p), "w_minus": float(res_m)}


def check_riccati_bound(spec, states, grid_spec=(12, 12, 24), tol=1e-6,
                        limit_tol=1e-6, coeffs=None):
    """Verify |r+-| <= (A/2)(1+sqrt 5) at sampled states.

    Also validates the comparison closed forms in their ODEs.  Raises
    BoundViolated on any exceedance (conjugate point, wrong A, or an
    integration fault).
    """
    if coeffs is None:
        coeffs = JacobiCoefficients(spec)
    consts = riccati_bound_constants(spec, grid_spec, coeffs=coeffs)
    bound = consts["A"] * GOLDEN_BOUND
    rows = []
    for p in states:
        r_plus, r_minus = solve_riccati_limit(spec, p, tol=limit_tol,
                                              coeffs=coeffs)
        ok = abs(r_plus) <= bound + tol and abs(r_minus) <= bound + tol
        rows.append({"x": p.x, "y": p.y, "theta": p.theta,
                     "r_plus": r_plus, "r_minus": r_minus, "ok": ok})
        if not ok:
            raise BoundViolated(
                f"|r| exceeds (A/2)(1+sqrt5)={bound:.6g} at "
                f"({p.x:.3g},{p.y:.3g},{p.theta:.3g}): "
                f"r+={r_plus:.6g}, r-={r_minus:.6g}")
    ode_res = comparison_ode_residuals(A=max(consts["A"], 1.0))
    return {"constants": consts, "bound": bound, "states": rows,
            "comparison_ode_residuals": ode_res}


def direct_riccati_residual(trace: RiccatiTrace, spec, p0: SMPoint,
                            coeffs=None, n_check=40, h=1e-4):
    """max |r' + r^2 + K_lambda - (lam I + V(lam)) r| along the trace.

    r' is taken by central differences on the interpolated trace, keeping
    the check independent of the linear substitution that produced it.
    """
    if coeffs is None:
        coeffs = JacobiCoefficients(spec)
    base = integrate_orbit(spec, p0, (float(trace.t[0]), float(trace.t[-1])),
                           stop_at_boundary=False)
    lo, hi = float(trace.t[0]), float(trace.t[-1])
    ts = np.linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), n_check)
    worst = 0.0
    for t in ts:
        r = trace.r_at(t)
        dr = (trace.r_at(t + h) - trace.r_at(t - h)) / (2 * h)
        s = base.state(t)
        Klam = coeffs.K_lambda.eval(*s)
        damp = (coeffs.lamI + coeffs.Vlam).eval(*s)
        worst = max(worst, abs(dr + r * r + Klam - damp * r))
    return float(worst)


def exterior_fan_r(spec, states, margin=0.1, horizon=None):
    """Fan-variant r (= z/y) at disk states from an exterior starting point.

    For each state the backward orbit is continued `margin` beyond the
    boundary; the Jacobi solution launched there from the vertical
    direction defines r along the fan of orbits through that point.
    Raises RiccatiUnavailable when y vanishes before reaching the state.
    """
    from .flow import DEFAULT_HORIZON
    if horizon is None:
        horizon = DEFAULT_HORIZON
    coeffs = JacobiCoefficients(spec)
    out = np.empty(len(states))
    for i, p in enumerate(states):
        back = integrate_orbit(spec, p, (0.0, -horizon),
                               stop_at_boundary=True)
        if back.exit_time is None:
            raise RiccatiUnavailable("backward orbit trapped")
        t0 = float(back.exit_time) - margin
        ext = integrate_orbit(spec, p, (0.0, t0), stop_at_boundary=False)
        s0 = ext.state(t0)
        traj = integrate_jacobi(spec, SMPoint(s0[0], s0[1], s0[2]),
                                (t0, 0.0), initial=(0.0, 0.0, 1.0),
                                coeffs=coeffs, events=[_y_zero_event()])
        zeros = [float(t) for t in traj.events[0] if t > t0 + 1e-9]
        if zeros:
            raise RiccatiUnavailable(
                f"conjugate point on the fan at t={zeros[0]:.6g}")
        out[i] = traj.r_fan(0.0)
    return out
