"""Ray transform of (function, 1-form) pairs along thermostat orbits.

A pair (phi, w) is integrated along boundary-to-boundary orbits of the
disk: value = int { phi(gamma) + w(gamma') } dt with gamma' the unit
base velocity.  The module provides the continuum transform with
composite Gauss-Legendre quadrature, the orbitwise primitive chi of a
source term, a boundary corrector enforcing a prescribed normal
derivative, and a discretized operator on a polar node grid for kernel
and inversion experiments: the numerical near-kernel is compared against
the gauge space of pairs (0, d psi) with psi vanishing on the boundary.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.linalg import subspace_angles, svd

from .errors import DomainError, IllConditioned, TrappedOrbit
from .fields import SMPoint, SMScalarField, _as_field
from .flow import DEFAULT_HORIZON, integrate_orbit
from .geometry import thermostat_generator

TWO_PI = 2.0 * np.pi

# 8-point Gauss-Legendre panel rule used by all ray quadratures
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


# ---------------------------------------------------------------------------
# Pairs and rays
# ---------------------------------------------------------------------------

@dataclass
class PairField:
    """A function phi plus a 1-form (w_x, w_y) on the base disk."""

    phi: SMScalarField
    w_x: SMScalarField
    w_y: SMScalarField

    @classmethod
    def from_expressions(cls, phi="0", w_x="0", w_y="0"):
        return cls(_as_field(phi), _as_field(w_x), _as_field(w_y))

    @classmethod
    def zero(cls):
        return cls.from_expressions()

    @classmethod
    def gauge(cls, psi):
        """The pair (0, d psi); in the kernel of the transform whenever
        psi vanishes on the boundary."""
        psi = _as_field(psi)
        return cls(SMScalarField.constant(0.0),
                   psi.partial("x"), psi.partial("y"))

    def __add__(self, other):
        return PairField(self.phi + other.phi, self.w_x + other.w_x,
                         self.w_y + other.w_y)

    def integrand_values(self, model, x, y, theta, clamp=True):
        """phi + w(gamma') at bundle states; the base velocity is
        e^{-phi_model} (cos theta, sin theta).  States outside the closed
        disk contribute 0 when clamp is set (extension by zero)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        theta = np.asarray(theta, dtype=float)
        speed = 1.0 / model.conformal_factor(x, y)
        vals = (self.phi.eval(x, y, theta)
                + speed * (self.w_x.eval(x, y, theta) * np.cos(theta)
                           + self.w_y.eval(x, y, theta) * np.sin(theta)))
        if clamp:
            vals = np.where(x * x + y * y <= 1.0 + 1e-12, vals, 0.0)
        return vals


@dataclass
class RayRecord:
    """One boundary-to-boundary orbit with its transform value."""

    entry: SMPoint
    exit: SMPoint
    length: float
    value: float

    @property
    def entry_s(self):
        return float(np.arctan2(self.entry.y, self.entry.x) % TWO_PI)

    @property
    def entry_angle(self):
        return self.entry.theta


def _panel_quadrature(lo, hi, n_panels):
    """Nodes and weights of a composite 8-point rule on [lo, hi]."""
    edges = np.linspace(lo, hi, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    ts = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    ws = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return ts, ws


def _orbit_integral(model, orbit, values_at, lo, hi, tol=1e-10, max_panels=4096):
    """Composite Gauss-Legendre integral of a state function along an
    orbit's dense solution, panel-doubling until the change is below tol."""
    n = max(4, int(np.ceil(abs(hi - lo) / 0.25)))
    prev = None
    while True:
        ts, ws = _panel_quadrature(lo, hi, n)
        states = orbit.sol(ts)
        total = float(np.dot(ws, values_at(states[0], states[1], states[2])))
        if prev is not None and abs(total - prev) < tol:
            return total
        if n >= max_panels:
            return total
        prev = total
        n *= 2


def transform_pair(spec, pair, entry: SMPoint, tol=1e-10,
                   horizon=DEFAULT_HORIZON):
    """Ray transform of the pair along the orbit through the entry state.

    The entry may sit on the boundary pointing inward or in the
    interior; integration always runs boundary to boundary.  Raises
    TrappedOrbit when either direction fails to exit.
    """
    model = spec.model
    if not model.domain.has_boundary:
        raise DomainError("the ray transform needs a disk model")
    start = entry
    r2 = entry.x ** 2 + entry.y ** 2
    if r2 < 1.0 - 1e-12:
        back = integrate_orbit(spec, entry, (0.0, -horizon),
                               stop_at_boundary=True)
        if back.exit_time is None:
            raise TrappedOrbit("backward orbit trapped", horizon=horizon)
        s = back.state(back.exit_time)
        start = SMPoint(s[0], s[1], s[2])
    orbit = integrate_orbit(spec, start, (0.0, horizon),
                            stop_at_boundary=True)
    if orbit.exit_time is None:
        raise TrappedOrbit("forward orbit trapped", horizon=horizon)
    length = float(orbit.exit_time)
    value = _orbit_integral(
        model, orbit,
        lambda x, y, t: pair.integrand_values(model, x, y, t),
        0.0, length, tol=tol)
    xe, ye, te = orbit.state(length)
    return RayRecord(entry=start, exit=SMPoint(xe, ye, te),
                     length=length, value=value)


def ray_fan(n_boundary=20, n_angles=20, margin_deg=5.0):
    """Entry states: uniform boundary points x uniform inward angles.

    The inward angle beta is measured from the inward normal and kept
    away from tangency by the margin, since near-tangential rays carry
    little information and degrade conditioning.
    """
    margin = np.deg2rad(margin_deg)
    ss = np.linspace(0.0, TWO_PI, n_boundary, endpoint=False)
    betas = np.linspace(-0.5 * np.pi + margin, 0.5 * np.pi - margin, n_angles)
    fan = []
    for s in ss:
        for b in betas:
            fan.append(SMPoint(np.cos(s), np.sin(s), s + np.pi + b))
    return fan


# ---------------------------------------------------------------------------
# The orbitwise primitive chi
# ---------------------------------------------------------------------------

def chi_field(spec, q, state: SMPoint, tol=1e-10, horizon=DEFAULT_HORIZON,
              tail=0.0):
    """chi at a state: the integral of q over the backward orbit from the
    (backward) boundary exit up to the state.

    q is a bundle scalar, extended by zero outside the disk; chi
    vanishes identically outside and F(chi) = q inside.  `tail` extends
    the integration start beyond the exit; the clamped integrand makes
    the value independent of the choice.
    """
    model = spec.model
    q = _as_field(q)
    if state.x ** 2 + state.y ** 2 > 1.0 + 1e-12:
        return 0.0
    back = integrate_orbit(spec, state, (0.0, -horizon),
                           stop_at_boundary=True)
    if back.exit_time is None:
        raise TrappedOrbit("backward orbit trapped", horizon=horizon)
    t_cross = float(back.exit_time)
    t_start = t_cross - tail

    def values(x, y, t):
        vals = q.eval(x, y, t)
        return np.where(np.asarray(x) ** 2 + np.asarray(y) ** 2
                        <= 1.0 + 1e-12, vals, 0.0)

    if tail > 0.0:
        # split at the boundary crossing: the clamped integrand is only
        # piecewise smooth there
        ext = integrate_orbit(spec, state, (0.0, t_start),
                              stop_at_boundary=False)
        return (_orbit_integral(model, ext, values, t_start, t_cross,
                                tol=tol)
                + _orbit_integral(model, ext, values, t_cross, 0.0, tol=tol))
    return _orbit_integral(model, back, values, t_cross, 0.0, tol=tol)


# ---------------------------------------------------------------------------
# Boundary corrector
# ---------------------------------------------------------------------------

def _cutoff(s, a=0.1, b=0.2):
    """Smooth transition: 1 on (-inf, a], 0 on [b, inf)."""
    s = np.asarray(s, dtype=float)

    def bump(t):
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out

    num = bump((b - s) / (b - a))
    den = num + bump((s - a) / (b - a))
    return num / den


def boundary_corrector(model, w_x, w_y):
    """A function psi with psi = 0 on the boundary circle and normal
    derivative (with respect to the model metric) matching the 1-form
    paired with the unit outward normal.

    psi(x) = -rho(s) * s * w(n) at the nearest boundary point, where s is
    the Euclidean distance to the boundary and rho a smooth cutoff that
    is 1 on [0, 0.1] and 0 beyond 0.2.  The conformal factors in the
    metric normal and the metric distance cancel, leaving the Euclidean
    formula valid for every conformal model.
    """
    w_x = _as_field(w_x)
    w_y = _as_field(w_y)

    def func(x, y, theta):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = np.hypot(x, y)
        safe = np.where(r > 0.5, r, 1.0)
        nx, ny = x / safe, y / safe
        s = 1.0 - r
        wn = (w_x.eval(nx, ny, 0.0) * nx + w_y.eval(nx, ny, 0.0) * ny)
        vals = -_cutoff(s) * s * wn
        return np.where(r > 0.5, vals, 0.0)

    return SMScalarField(func, fd_step=1e-5, mode="finite_difference")


def corrected_pair(model, pair):
    """Subtract the differential of the boundary corrector from the
    1-form part, making the integrand vanish on boundary states for
    gauge pairs."""
    psi = boundary_corrector(model, pair.w_x, pair.w_y)
    return PairField(pair.phi,
                     pair.w_x - psi.partial("x"),
                     pair.w_y - psi.partial("y")), psi


# ---------------------------------------------------------------------------
# Polar node grid and interpolation
# ---------------------------------------------------------------------------

@dataclass
class PolarNodeGrid:
    """Nodes for pair discretization: one center node plus uniform rings.

    n_nodes = 1 + (n_r - 1) * n_alpha; the outermost ring lies on the
    boundary circle.  Interpolation is bilinear in (r, alpha) with
    angular periodicity; inside the first ring the angular dependence
    interpolates linearly toward the single center value.
    """

    n_r: int
    n_alpha: int

    @property
    def n_nodes(self):
        return 1 + (self.n_r - 1) * self.n_alpha

    def node_xy(self):
        xs = [0.0]
        ys = [0.0]
        radii = np.linspace(0.0, 1.0, self.n_r)
        alphas = np.linspace(0.0, TWO_PI, self.n_alpha, endpoint=False)
        for r in radii[1:]:
            xs.extend(r * np.cos(alphas))
            ys.extend(r * np.sin(alphas))
        return np.array(xs), np.array(ys)

    def coefficient_matrix(self, x, y):
        """Sparse (n_points, n_nodes) interpolation matrix."""
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        npts = x.size
        r = np.minimum(np.hypot(x, y), 1.0)
        alpha = np.arctan2(y, x) % TWO_PI
        dr = 1.0 / (self.n_r - 1)
        da = TWO_PI / self.n_alpha
        i = np.minimum((r / dr).astype(int), self.n_r - 2)
        tr = r / dr - i
        j0 = (alpha / da).astype(int) % self.n_alpha
        ta = alpha / da - (alpha / da).astype(int)
        j1 = (j0 + 1) % self.n_alpha

        def ring_index(ring, j):
            return 1 + (ring - 1) * self.n_alpha + j

        rows, cols, vals = [], [], []
        rng_pts = np.arange(npts)
        inner = i == 0
        # between the center node and ring 1
        rows.append(rng_pts[inner])
        cols.append(np.zeros(np.count_nonzero(inner), dtype=int))
        vals.append(1.0 - tr[inner])
        for j, w in ((j0, (1.0 - ta)), (j1, ta)):
            rows.append(rng_pts[inner])
            cols.append(ring_index(1, j[inner]))
            vals.append(tr[inner] * w[inner])
        # between two rings
        outer = ~inner
        for ring_off, wr in ((0, 1.0 - tr), (1, tr)):
            for j, wa in ((j0, 1.0 - ta), (j1, ta)):
                rows.append(rng_pts[outer])
                cols.append(ring_index(i[outer] + ring_off, j[outer]))
                vals.append(wr[outer] * wa[outer])
        mat = sparse.csr_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(npts, self.n_nodes))
        return mat

    def interpolate(self, values, x, y):
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        out = self.coefficient_matrix(x, y) @ np.asarray(values, dtype=float)
        return out.reshape(shape) if shape else float(out[0])

    def discretize(self, f):
        f = _as_field(f)
        xs, ys = self.node_xy()
        return f.eval(xs, ys, np.zeros_like(xs))

    def discretize_pair(self, pair):
        return np.concatenate([self.discretize(pair.phi),
                               self.discretize(pair.w_x),
                               self.discretize(pair.w_y)])


# ---------------------------------------------------------------------------
# Discrete operator
# ---------------------------------------------------------------------------

@dataclass
class DiscreteXRayOperator:
    """Dense matrix realization of the ray transform on nodal pairs.

    Columns are [phi nodes | w_x nodes | w_y nodes]; rows are the rays
    that exited within the horizon.  n_dropped counts trapped rays."""

    matrix: np.ndarray
    rays: list
    node_grid: PolarNodeGrid
    lam_text: str = ""
    n_dropped: int = 0
    quad_spacing: float = 0.02

    @property
    def n_rays(self):
        return self.matrix.shape[0]

    @property
    def n_cols(self):
        return self.matrix.shape[1]

    def apply(self, pair_vector):
        return self.matrix @ np.asarray(pair_vector, dtype=float)


def assemble_discrete_operator(spec, node_grid, rays, quad_spacing=0.02,
                               horizon=DEFAULT_HORIZON):
    """Build the ray matrix: each entry is a quadrature weight times an
    interpolation coefficient.  Trapped rays are dropped with a warning
    recording the count."""
    model = spec.model
    n_nodes = node_grid.n_nodes
    rows = []
    kept = []
    dropped = 0
    for entry in rays:
        try:
            orbit = integrate_orbit(spec, entry, (0.0, horizon),
                                    stop_at_boundary=True)
        except Exception:
            dropped += 1
            continue
        if orbit.exit_time is None:
            dropped += 1
            continue
        length = float(orbit.exit_time)
        n_panels = max(2, int(np.ceil(length / (8 * quad_spacing))))
        ts, ws = _panel_quadrature(0.0, length, n_panels)
        sx, sy, st = orbit.sol(ts)
        coeff = node_grid.coefficient_matrix(sx, sy)
        speed = 1.0 / model.conformal_factor(sx, sy)
        row = np.empty(3 * n_nodes)
        row[:n_nodes] = ws @ coeff
        row[n_nodes:2 * n_nodes] = (ws * speed * np.cos(st)) @ coeff
        row[2 * n_nodes:] = (ws * speed * np.sin(st)) @ coeff
        rows.append(row)
        xe, ye, te = orbit.state(length)
        kept.append(RayRecord(entry=entry, exit=SMPoint(xe, ye, te),
                              length=length, value=0.0))
    if dropped:
        warnings.warn(f"dropped {dropped} trapped rays during assembly")
    if not rows:
        raise TrappedOrbit("all rays trapped", horizon=horizon)
    return DiscreteXRayOperator(matrix=np.vstack(rows), rays=kept,
                                node_grid=node_grid, n_dropped=dropped,
                                quad_spacing=quad_spacing)


# ---------------------------------------------------------------------------
# Gauge basis
# ---------------------------------------------------------------------------

def _bspline3(t):
    """Cardinal cubic B-spline with support (-2, 2)."""
    t = np.abs(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    near = t < 1.0
    mid = (t >= 1.0) & (t < 2.0)
    out[near] = (4.0 - 6.0 * t[near] ** 2 + 3.0 * t[near] ** 3) / 6.0
    out[mid] = (2.0 - t[mid]) ** 3 / 6.0
    return out


def _bspline3_deriv(t):
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    out = np.zeros_like(a)
    near = a < 1.0
    mid = (a >= 1.0) & (a < 2.0)
    out[near] = -2.0 * a[near] + 1.5 * a[near] ** 2
    out[mid] = -0.5 * (2.0 - a[mid]) ** 2
    return out * np.sign(t)


class GaugeBump:
    """Tensor cubic B-spline bump with analytic gradient, supported in
    the square of side 4h about its center."""

    def __init__(self, cx, cy, h):
        self.cx, self.cy, self.h = float(cx), float(cy), float(h)

    def __call__(self, x, y):
        h = self.h
        return _bspline3((np.asarray(x) - self.cx) / h) * \
            _bspline3((np.asarray(y) - self.cy) / h)

    def grad(self, x, y):
        h = self.h
        u = (np.asarray(x) - self.cx) / h
        v = (np.asarray(y) - self.cy) / h
        gx = _bspline3_deriv(u) * _bspline3(v) / h
        gy = _bspline3(u) * _bspline3_deriv(v) / h
        return gx, gy

    def as_field(self):
        return SMScalarField.from_callable(
            lambda x, y, t: self(x, y),
            dx=lambda x, y, t: self.grad(x, y)[0],
            dy=lambda x, y, t: self.grad(x, y)[1],
            dtheta=lambda x, y, t: np.zeros(np.broadcast(
                np.asarray(x), np.asarray(y)).shape))


def gauge_bumps(spacing=0.25, slack=0.02):
    """Bump functions whose supports lie strictly inside the unit disk."""
    h = spacing
    k_max = int(np.floor(1.0 / spacing))
    centers = spacing * np.arange(-k_max, k_max + 1)
    bumps = []
    for cx in centers:
        for cy in centers:
            if np.hypot(abs(cx) + 2 * h, abs(cy) + 2 * h) <= 1.0 - slack:
                bumps.append(GaugeBump(cx, cy, h))
    return bumps


def gauge_basis(node_grid, spacing=0.25, slack=0.02):
    """Discretized gauge pairs (0, d psi) for a basis of interior bumps.

    Returns (matrix with one column per bump, list of bumps)."""
    bumps = gauge_bumps(spacing, slack)
    if not bumps:
        raise ValueError("no gauge bumps fit inside the disk at this spacing")
    xs, ys = node_grid.node_xy()
    n = node_grid.n_nodes
    cols = np.zeros((3 * n, len(bumps)))
    for k, b in enumerate(bumps):
        gx, gy = b.grad(xs, ys)
        cols[n:2 * n, k] = gx
        cols[2 * n:, k] = gy
    return cols, bumps


# ---------------------------------------------------------------------------
# Kernel analysis and reconstruction
# ---------------------------------------------------------------------------

def _largest_gap(sigma, floor=1e-14):
    """Index i maximizing sigma[i]/sigma[i+1] on the descending spectrum;
    returns (index, ratio)."""
    s = np.maximum(sigma, floor)
    ratios = s[:-1] / s[1:]
    i = int(np.argmax(ratios))
    return i, float(ratios[i])


def analyze_kernel(op, gauge_matrix, min_gap=10.0):
    """SVD spectrum of the ray matrix and its near-kernel geometry.

    The near-kernel is everything below the largest relative gap in the
    singular values; IllConditioned if that gap is under min_gap.
    Principal angles compare the near-kernel with the span of the gauge
    columns."""
    U, sigma, Vt = svd(op.matrix, full_matrices=False)
    gap_index, gap_ratio = _largest_gap(sigma)
    if gap_ratio < min_gap:
        raise IllConditioned(
            f"singular-value gap {gap_ratio:.2f}x is below {min_gap:.0f}x")
    kernel_dim = sigma.size - (gap_index + 1)
    kernel_basis = Vt[gap_index + 1:].T  # (n_cols, kernel_dim)
    angles = subspace_angles(kernel_basis, np.asarray(gauge_matrix))
    return {
        "singular_values": sigma,
        "gap_index": gap_index,
        "gap_ratio": gap_ratio,
        "kernel_dim": int(kernel_dim),
        "gauge_dim": int(np.asarray(gauge_matrix).shape[1]),
        "principal_angles_deg": np.rad2deg(angles),
        "kernel_basis": kernel_basis,
    }


@dataclass
class PairEstimate:
    """Nodal reconstruction: phi values plus the 1-form components.

    The 1-form itself is gauge-ambiguous; its exterior derivative
    (curl), computed by finite differences on the interpolant, is the
    gauge-invariant part."""

    node_grid: PolarNodeGrid
    phi_values: np.ndarray
    w_x_values: np.ndarray
    w_y_values: np.ndarray

    def phi_at(self, x, y):
        return self.node_grid.interpolate(self.phi_values, x, y)

    def curl_at(self, x, y, h=1e-3):
        g = self.node_grid
        dwy_dx = (g.interpolate(self.w_y_values, np.asarray(x) + h, y)
                  - g.interpolate(self.w_y_values, np.asarray(x) - h, y)) \
            / (2 * h)
        dwx_dy = (g.interpolate(self.w_x_values, x, np.asarray(y) + h)
                  - g.interpolate(self.w_x_values, x, np.asarray(y) - h)) \
            / (2 * h)
        return dwy_dx - dwx_dy


def reconstruct_pair(op, values, min_gap=10.0, rank=None):
    """Minimum-norm least squares through the truncated SVD.

    The truncation rank defaults to the largest-gap index, discarding
    the gauge directions; IllConditioned when the gap is insufficient
    and no explicit rank is supplied."""
    U, sigma, Vt = svd(op.matrix, full_matrices=False)
    if rank is None:
        gap_index, gap_ratio = _largest_gap(sigma)
        if gap_ratio < min_gap:
            raise IllConditioned(
                f"singular-value gap {gap_ratio:.2f}x is below "
                f"{min_gap:.0f}x")
        rank = gap_index + 1
    coeffs = (U[:, :rank].T @ np.asarray(values, dtype=float)) / sigma[:rank]
    solution = Vt[:rank].T @ coeffs
    n = op.node_grid.n_nodes
    return PairEstimate(node_grid=op.node_grid,
                        phi_values=solution[:n],
                        w_x_values=solution[n:2 * n],
                        w_y_values=solution[2 * n:])


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_operator(op, path):
    """One JSON header line followed by the raw float64 matrix bytes."""
    header = {
        "rows": op.matrix.shape[0],
        "cols": op.matrix.shape[1],
        "n_r": op.node_grid.n_r,
        "n_alpha": op.node_grid.n_alpha,
        "n_dropped": op.n_dropped,
        "quad_spacing": op.quad_spacing,
        "entries": [[r.entry.x, r.entry.y, r.entry.theta] for r in op.rays],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(op.matrix, dtype="<f8").tobytes())


def load_operator(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        data = np.frombuffer(fh.read(), dtype="<f8")
    matrix = data.reshape(header["rows"], header["cols"]).copy()
    grid = PolarNodeGrid(header["n_r"], header["n_alpha"])
    rays = [RayRecord(entry=SMPoint(*e), exit=SMPoint(*e), length=0.0,
                      value=0.0) for e in header["entries"]]
    return DiscreteXRayOperator(matrix=matrix, rays=rays, node_grid=grid,
                                n_dropped=header["n_dropped"],
                                quad_spacing=header["quad_spacing"])


def rays_to_csv(records, path):
    """entry_s, entry_angle, length, value rows at full precision."""
    with open(path, "w") as fh:
        fh.write("entry_s,entry_angle,length,value\n")
        for r in records:
            fh.write(",".join(f"{v:.17g}" for v in
                              (r.entry_s, r.entry_angle, r.length, r.value))
                     + "\n")
