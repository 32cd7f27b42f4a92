"""Ray transform of function/1-form pairs and its discretization."""

import numpy as np
import pytest

from thermolab.fields import SMPoint, SMScalarField
from thermolab.flow import ThermostatSpec, geodesic_spec
from thermolab.geometry import euclidean_disk
from thermolab.xray import PairField, PolarNodeGrid, \
    assemble_discrete_operator, boundary_corrector, chi_field, \
    corrected_pair, gauge_basis, gauge_bumps, load_operator, ray_fan, \
    rays_to_csv, reconstruct_pair, save_operator, transform_pair


def disk_spec():
    return geodesic_spec(euclidean_disk())


def entry_state(s, beta):
    return SMPoint(np.cos(s), np.sin(s), s + np.pi + beta)


def test_chord_lengths():
    spec = disk_spec()
    pair = PairField.from_expressions(phi="1")
    for s, beta in ((0.0, 0.0), (1.2, 0.5), (3.0, -1.0)):
        rec = transform_pair(spec, pair, entry_state(s, beta))
        d = np.sin(abs(beta))
        assert rec.length == pytest.approx(2 * np.sqrt(1 - d * d), abs=1e-10)
        assert rec.value == pytest.approx(rec.length, abs=1e-10)


def test_gauge_pair_integrates_to_zero():
    spec = disk_spec()
    psi = SMScalarField.from_expression("(1 - x^2 - y^2)^2")
    pair = PairField.gauge(psi)
    rng = np.random.default_rng(4)
    for _ in range(10):
        s = rng.uniform(0, 2 * np.pi)
        beta = rng.uniform(-1.2, 1.2)
        rec = transform_pair(spec, pair, entry_state(s, beta))
        assert abs(rec.value) < 1e-9


def test_transform_additive():
    spec = disk_spec()
    a = PairField.from_expressions(phi="1 - x^2 - y^2")
    b = PairField.from_expressions(w_x="y", w_y="-x")
    e = entry_state(0.7, 0.3)
    va = transform_pair(spec, a, e).value
    vb = transform_pair(spec, b, e).value
    vab = transform_pair(spec, a + b, e).value
    assert vab == pytest.approx(va + vb, abs=1e-9)


def test_chi_primitive():
    # chi at an interior state equals the integral along the backward ray,
    # and is independent of how far past the boundary the tail extends
    spec = disk_spec()
    q = SMScalarField.from_expression("1")
    state = SMPoint(0.2, 0.0, 0.0)
    val = chi_field(spec, q, state)
    assert val == pytest.approx(1.2, abs=1e-10)  # backward distance to rim
    assert chi_field(spec, q, state, tail=0.5) == pytest.approx(val,
                                                                abs=1e-10)


def test_boundary_corrector_vanishes_on_rim():
    model = euclidean_disk()
    w_x = SMScalarField.from_expression("1")
    w_y = SMScalarField.from_expression("0")
    psi = boundary_corrector(model, w_x, w_y)
    ss = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    vals = psi.eval(np.cos(ss), np.sin(ss), 0.0)
    assert np.max(np.abs(vals)) < 1e-14


def test_corrected_pair_same_transform():
    # subtracting an interior-supported gauge pair leaves ray data unchanged
    spec = disk_spec()
    pair = PairField.from_expressions(w_x="1 - x^2 - y^2")
    fixed, _ = corrected_pair(spec.model, pair)
    e = entry_state(1.0, 0.4)
    assert transform_pair(spec, fixed, e).value == pytest.approx(
        transform_pair(spec, pair, e).value, abs=1e-7)


def test_polar_grid_partition_of_unity():
    grid = PolarNodeGrid(8, 10)
    rng = np.random.default_rng(1)
    r = np.sqrt(rng.uniform(0, 1, 50))
    a = rng.uniform(0, 2 * np.pi, 50)
    x, y = r * np.cos(a), r * np.sin(a)
    ones = grid.interpolate(np.ones(grid.n_nodes), x, y)
    assert np.max(np.abs(ones - 1.0)) < 1e-12


def test_polar_grid_interpolates_smooth_field():
    grid = PolarNodeGrid(14, 14)
    f = lambda x, y: 1 - x ** 2 - y ** 2
    nx, ny = grid.node_xy()
    vals = f(nx, ny)
    rng = np.random.default_rng(6)
    r = np.sqrt(rng.uniform(0, 0.95, 100))
    a = rng.uniform(0, 2 * np.pi, 100)
    x, y = r * np.cos(a), r * np.sin(a)
    err = grid.interpolate(vals, x, y) - f(x, y)
    assert np.max(np.abs(err)) < 0.05


def test_ray_fan_size_and_margin():
    fan = ray_fan(10, 8, margin_deg=5.0)
    assert len(fan) == 80
    for p in fan:
        assert np.hypot(p.x, p.y) == pytest.approx(1.0)


def test_discrete_operator_matches_transform():
    spec = disk_spec()
    grid = PolarNodeGrid(10, 10)
    rays = ray_fan(8, 8)
    op = assemble_discrete_operator(spec, grid, rays)
    assert op.matrix.shape == (64, 3 * grid.n_nodes)
    pair = PairField.from_expressions(phi="1 - x^2 - y^2", w_x="0.3*y")
    vec = grid.discretize_pair(pair)
    direct = np.array([r.value for r in [
        transform_pair(spec, pair, r.entry) for r in op.rays]])
    assert np.max(np.abs(op.apply(vec) - direct)) < 0.05


def test_gauge_basis_shape():
    grid = PolarNodeGrid(12, 12)
    G, bumps = gauge_basis(grid, spacing=0.25)
    assert G.shape == (3 * grid.n_nodes, len(bumps))
    assert len(bumps) == len(gauge_bumps(0.25))
    # gauge vectors have no function component
    assert np.max(np.abs(G[:grid.n_nodes])) == 0.0


def test_reconstruct_phi_with_explicit_rank():
    spec = disk_spec()
    grid = PolarNodeGrid(12, 12)
    op = assemble_discrete_operator(spec, grid, ray_fan(20, 20))
    pair = PairField.from_expressions(phi="1 - x^2 - y^2")
    values = np.array([transform_pair(spec, pair, r.entry).value
                       for r in op.rays])
    est = reconstruct_pair(op, values, rank=280)
    rng = np.random.default_rng(9)
    r = np.sqrt(rng.uniform(0, 0.9, 300))
    a = rng.uniform(0, 2 * np.pi, 300)
    x, y = r * np.cos(a), r * np.sin(a)
    truth = 1 - x ** 2 - y ** 2
    err = np.linalg.norm(est.phi_at(x, y) - truth) / np.linalg.norm(truth)
    assert err < 0.05


def test_save_load_round_trip(tmp_path):
    spec = disk_spec()
    grid = PolarNodeGrid(6, 6)
    op = assemble_discrete_operator(spec, grid, ray_fan(5, 4))
    path = tmp_path / "op.bin"
    save_operator(op, path)
    op2 = load_operator(path)
    assert np.array_equal(op.matrix, op2.matrix)
    assert op2.node_grid.n_nodes == grid.n_nodes


def test_rays_to_csv(tmp_path):
    spec = disk_spec()
    pair = PairField.from_expressions(phi="1")
    recs = [transform_pair(spec, pair, entry_state(0.0, 0.2))]
    path = tmp_path / "rays.csv"
    rays_to_csv(recs, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "entry_s,entry_angle,length,value"
    assert len(lines) == 2
