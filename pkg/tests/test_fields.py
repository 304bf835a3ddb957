"""Raster-field and characteristic-vector tests.

The 9-bus characteristic vector is checked against a slow reference
implementation built from direct formulas (python loops, no shared code).
"""

import math

import numpy as np
import pytest

from gridscen.embedding import classical_mds
from gridscen.errors import (
    DimensionError, GridMismatch, NonFinite, SkippedScenario,
)
from gridscen.fields import (
    CHARACTERISTIC_COLUMNS, RasterConfig, RasterField, SsimParams,
    bounding_box, compute_characteristics, nodal_quantities, norm_matching,
    raster_fields, rasterize, ssim,
)
from gridscen.network import (
    Branch, Bus, Generator, Load, NetworkModel, build_impedance_matrix,
    electrical_distance, solve_power_flow,
)


def make_field(grid, bbox=(0.0, 1.0, 0.0, 1.0), tag=""):
    grid = np.asarray(grid, dtype=float)
    return RasterField(grid=grid, bbox=bbox, resolution=grid.shape[0], tag=tag)


@pytest.fixture(scope="module")
def case9_embedding(case9):
    D = electrical_distance(build_impedance_matrix(case9))
    return classical_mds(D, k=2)


# --- rasterize -------------------------------------------------------------

def test_single_node_deposits_all_mass():
    coords = np.array([[0.3, 0.7], [2.0, 1.5]])
    vals = np.array([10.0, 0.0])
    f = rasterize(coords, vals, resolution=16, bandwidth_factor=1.5)
    assert f.grid.sum() == pytest.approx(10.0, rel=1e-12)
    xmin, xmax, ymin, ymax = f.bbox
    iu = int((0.3 - xmin) / (xmax - xmin) * 16)
    iv = int((0.7 - ymin) / (ymax - ymin) * 16)
    assert np.unravel_index(np.argmax(f.grid), f.grid.shape) == (iu, iv)


def test_zero_values_give_zero_grid(rng):
    coords = rng.normal(size=(5, 2))
    f = rasterize(coords, np.zeros(5), resolution=8)
    assert np.all(f.grid == 0.0)


def test_coincident_nodes_additive():
    coords = np.array([[0.5, 0.5], [0.5, 0.5], [3.0, -1.0]])
    a = rasterize(coords, [3.0, 4.0, 1.0], resolution=12)
    b = rasterize(coords, [7.0, 0.0, 1.0], resolution=12)
    np.testing.assert_allclose(a.grid, b.grid, atol=1e-12)


def test_mass_conservation_random(rng):
    for _ in range(10):
        n = int(rng.integers(2, 30))
        coords = rng.normal(size=(n, 2)) * rng.uniform(0.1, 50)
        vals = rng.uniform(-5, 20, size=n)
        f = rasterize(coords, vals, resolution=int(rng.integers(4, 40)),
                      bandwidth_factor=float(rng.uniform(0.2, 3.0)))
        assert abs(f.grid.sum() - vals.sum()) <= 1e-9 * max(1.0, abs(vals.sum()))


def test_tiny_bandwidth_hits_single_cell():
    coords = np.array([[0.0, 0.0], [10.0, 10.0]])
    f = rasterize(coords, [2.0, 5.0], resolution=8, bandwidth_factor=1e-4)
    assert np.count_nonzero(f.grid) == 2
    assert f.grid.sum() == pytest.approx(7.0, rel=1e-12)


def test_rasterize_input_validation(rng):
    coords = rng.normal(size=(4, 2))
    with pytest.raises(NonFinite):
        rasterize(coords, [1.0, np.nan, 0.0, 2.0])
    with pytest.raises(DimensionError):
        rasterize(coords, [1.0, 2.0])
    with pytest.raises(DimensionError):
        rasterize(coords, np.ones(4), resolution=3)
    with pytest.raises(DimensionError):
        rasterize(coords[:, :1], np.ones(4))
    with pytest.raises(DimensionError):
        rasterize(coords, np.ones(4), bandwidth_factor=0.0)


def test_bounding_box_padding():
    coords = np.array([[0.0, -2.0], [10.0, 2.0]])
    xmin, xmax, ymin, ymax = bounding_box(coords)
    assert xmin == pytest.approx(-0.5) and xmax == pytest.approx(10.5)
    assert ymin == pytest.approx(-2.2) and ymax == pytest.approx(2.2)
    # degenerate axis gets a unit box
    xmin, xmax, _, _ = bounding_box(np.array([[1.0, 0.0], [1.0, 1.0]]))
    assert (xmin, xmax) == (0.5, 1.5)


# --- norm matching ---------------------------------------------------------

def test_norm_identity_zero(rng):
    g = rng.uniform(size=(8, 8))
    assert norm_matching(make_field(g), make_field(g.copy())) == 0.0


def test_norm_disjoint_unit_masses():
    a = np.zeros((6, 6))
    b = np.zeros((6, 6))
    a[1, 1] = 3.0
    b[4, 2] = 0.5
    assert norm_matching(make_field(a), make_field(b)) == pytest.approx(1.0, abs=1e-15)


def test_norm_all_zero_fields():
    z = make_field(np.zeros((5, 5)))
    assert norm_matching(z, z) == 0.0


def test_norm_matches_scan_oracle(rng):
    g1 = rng.uniform(size=(7, 7))
    g2 = rng.uniform(size=(7, 7))
    got = norm_matching(make_field(g1), make_field(g2))
    n1 = g1 / g1.sum()
    n2 = g2 / g2.sum()
    best = 0.0
    for i in range(7):
        for j in range(7):
            best = max(best, abs(n1[i, j] - n2[i, j]))
    assert got == pytest.approx(best, abs=1e-15)


def test_norm_symmetry_and_triangle(rng):
    fields = [make_field(rng.uniform(size=(6, 6))) for _ in range(3)]
    a, b, c = fields
    assert norm_matching(a, b) == norm_matching(b, a)
    assert norm_matching(a, c) <= norm_matching(a, b) + norm_matching(b, c) + 1e-15


def test_norm_grid_mismatch():
    with pytest.raises(GridMismatch):
        norm_matching(make_field(np.ones((4, 4))), make_field(np.ones((5, 5))))
    with pytest.raises(GridMismatch):
        norm_matching(make_field(np.ones((4, 4))),
                      make_field(np.ones((4, 4)), bbox=(0.0, 2.0, 0.0, 1.0)))


# --- ssim ------------------------------------------------------------------

def test_ssim_identity_exact(rng):
    g = rng.uniform(size=(8, 8))
    f = make_field(g)
    assert ssim(f, make_field(g.copy())) == 1.0


def test_ssim_constant_pair_exact():
    a = make_field(np.full((5, 5), 3.7))
    b = make_field(np.full((5, 5), 3.7))
    assert ssim(a, b) == 1.0


def test_ssim_mean_reflection_near_minus_one():
    g = np.ones((8, 8))
    g[::2, :] = -1.0  # zero mean, unit variance
    a = make_field(g)
    b = make_field(-g)
    # closed form: C2-stabilized (-2s + C2)/(2s + C2) with s = 1, L = 1
    c2 = (0.03 * 1.0) ** 2
    want = (-2.0 + c2) / (2.0 + c2)
    got = ssim(a, b)
    assert got == pytest.approx(want, abs=1e-12)
    assert -1.0 - 1e-12 <= got <= -0.99


def test_ssim_symmetric_and_bounded(rng):
    for _ in range(20):
        g1 = rng.normal(size=(6, 6)) * rng.uniform(0.1, 10)
        g2 = rng.normal(size=(6, 6)) * rng.uniform(0.1, 10)
        a, b = make_field(g1), make_field(g2)
        assert ssim(a, b) == ssim(b, a)
        assert abs(ssim(a, b)) <= 1.0 + 1e-12


def test_ssim_dynamic_range_override(rng):
    g1 = rng.uniform(size=(5, 5))
    g2 = rng.uniform(size=(5, 5))
    a, b = make_field(g1), make_field(g2)
    default = ssim(a, b)
    fixed = ssim(a, b, SsimParams(dynamic_range=max(g1.max(), g2.max())))
    assert default == fixed
    assert ssim(a, b, SsimParams(dynamic_range=100.0)) != default


def test_ssim_zero_fields_fall_back_to_unit_range():
    z = make_field(np.zeros((4, 4)))
    assert ssim(z, z) == 1.0


# --- characteristics -------------------------------------------------------

def matched_gen_load_net():
    buses = (
        Bus(id=1, base_kv=100.0, type="slack"),
        Bus(id=2, base_kv=100.0, type="PQ"),
        Bus(id=3, base_kv=100.0, type="PQ"),
    )
    branches = (Branch(1, 2, 0.01, 0.1), Branch(2, 3, 0.01, 0.1))
    gens = (
        Generator(bus=1, kind="synchronous", p_set=50.0, q_set=10.0,
                  inertia=5.0, xd_prime=0.1, p_max=100.0),
        Generator(bus=2, kind="synchronous", p_set=30.0, q_set=6.0,
                  inertia=4.0, xd_prime=0.1, p_max=80.0),
        Generator(bus=3, kind="synchronous", p_set=20.0, q_set=4.0,
                  inertia=3.0, xd_prime=0.1, p_max=60.0),
    )
    loads = (Load(1, 50.0, 10.0), Load(2, 30.0, 6.0), Load(3, 20.0, 4.0))
    return NetworkModel(base_mva=100.0, buses=buses, branches=branches,
                        generators=gens, loads=loads)


def test_matched_generation_load_vector():
    net = matched_gen_load_net()
    D = electrical_distance(build_impedance_matrix(net))
    emb = classical_mds(D, k=2)
    # dispatch fallback makes P_G exactly the dispatch pattern = the loads
    vec = compute_characteristics(net, None, emb, allow_dispatch_fallback=True)
    assert vec[0] == 0.0
    assert vec[1] == 1.0
    assert vec[2] == 0.0  # Q_G dispatch equals Q_L too
    assert vec[3] == 1.0


def test_nonconverged_without_fallback_is_skipped(case9, case9_embedding):
    with pytest.raises(SkippedScenario):
        compute_characteristics(case9, None, case9_embedding)


def test_zero_renewable_closed_forms():
    # single machine: the whole normalized sync field sits in one cell
    buses = (Bus(id=1, base_kv=100.0, type="slack"),
             Bus(id=2, base_kv=100.0, type="PQ"))
    net = NetworkModel(
        base_mva=100.0, buses=buses,
        branches=(Branch(1, 2, 0.01, 0.1),),
        generators=(Generator(bus=1, kind="synchronous", p_set=50.0,
                              q_set=10.0, inertia=5.0, xd_prime=0.1,
                              p_max=100.0),),
        loads=(Load(2, 50.0, 10.0),))
    D = electrical_distance(build_impedance_matrix(net))
    emb = classical_mds(D, k=1).X.repeat(2, axis=1)
    cfg = RasterConfig(resolution=16, bandwidth_factor=1e-4)
    f = raster_fields(net, None, emb, cfg, use_dispatch_fallback=True)
    assert np.all(f["P_re"].grid == 0.0)
    vec = compute_characteristics(net, None, emb, cfg,
                                  allow_dispatch_fallback=True)
    # empty renewable field vs a unit-mass single cell: difference is 1
    assert vec[6] == pytest.approx(1.0, abs=1e-12)
    # SSIM vs the zero field: mu1 = var1 = cov = 0
    g = f["Q_G"].grid.ravel()
    L = g.max()
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    want = (c1 * c2) / ((np.mean(g) ** 2 + c1) * (np.var(g) + c2))
    assert vec[4] == pytest.approx(want, rel=1e-12)


def test_zero_renewable_multi_machine_norm():
    # several machines: the peak is the largest machine's mass share
    net = matched_gen_load_net()
    D = electrical_distance(build_impedance_matrix(net))
    emb = classical_mds(D, k=2)
    cfg = RasterConfig(resolution=16, bandwidth_factor=1e-4)
    vec = compute_characteristics(net, None, emb, cfg,
                                  allow_dispatch_fallback=True)
    assert vec[6] == pytest.approx(50.0 / 100.0, abs=1e-12)


def test_characteristics_rescale_invariant(case9, case9_embedding):
    pf = solve_power_flow(case9)
    v1 = compute_characteristics(case9, pf, case9_embedding)
    scaled = case9_embedding.X * 10.0
    v2 = compute_characteristics(case9, pf, scaled)
    np.testing.assert_allclose(v1, v2, atol=1e-9)


def test_vector_finite_and_in_range(case9, case9_embedding):
    pf = solve_power_flow(case9)
    vec = compute_characteristics(case9, pf, case9_embedding)
    assert vec.shape == (len(CHARACTERISTIC_COLUMNS),)
    assert np.all(np.isfinite(vec))
    for idx in (0, 2, 6):
        assert vec[idx] >= 0.0
    for idx in (1, 3, 4, 5, 7):
        assert -1.0 - 1e-12 <= vec[idx] <= 1.0 + 1e-12


# --- slow reference implementation ----------------------------------------

def slow_rasterize(coords, values, G, bw, bbox):
    xmin, xmax, ymin, ymax = bbox
    wx = (xmax - xmin) / G
    wy = (ymax - ymin) / G
    grid = [[0.0] * G for _ in range(G)]
    for (x, y), v in zip(coords, values):
        if v == 0.0:
            continue
        u = (x - xmin) / wx
        w = (y - ymin) / wy
        weights = {}
        for i in range(G):
            for j in range(G):
                d = math.hypot(i + 0.5 - u, j + 0.5 - w)
                if d <= 4.0 * bw:
                    weights[(i, j)] = math.exp(-d * d / (2.0 * bw * bw))
        total = sum(weights.values())
        if total <= 0.0:
            ci = min(max(int(math.floor(u)), 0), G - 1)
            cj = min(max(int(math.floor(w)), 0), G - 1)
            grid[ci][cj] += v
        else:
            for (i, j), wt in weights.items():
                grid[i][j] += v * wt / total
    return grid


def slow_norm(g1, g2):
    s1 = sum(map(sum, g1))
    s2 = sum(map(sum, g2))
    best = 0.0
    for r1, r2 in zip(g1, g2):
        for a, b in zip(r1, r2):
            na = a / s1 if s1 != 0.0 else 0.0
            nb = b / s2 if s2 != 0.0 else 0.0
            best = max(best, abs(na - nb))
    return best


def slow_ssim(g1, g2):
    flat1 = [v for row in g1 for v in row]
    flat2 = [v for row in g2 for v in row]
    n = len(flat1)
    L = max(max(flat1), max(flat2))
    if L <= 0.0:
        L = 1.0
    c1 = (0.01 * L) ** 2
    c2 = (0.03 * L) ** 2
    mu1 = sum(flat1) / n
    mu2 = sum(flat2) / n
    var1 = sum((v - mu1) ** 2 for v in flat1) / n
    var2 = sum((v - mu2) ** 2 for v in flat2) / n
    cov = sum((a - mu1) * (b - mu2) for a, b in zip(flat1, flat2)) / n
    return ((2 * mu1 * mu2 + c1) * (2 * cov + c2)) / \
        ((mu1 ** 2 + mu2 ** 2 + c1) * (var1 + var2 + c2))


def test_case9_vector_matches_reference(case9, case9_embedding):
    pf = solve_power_flow(case9)
    assert pf.converged
    cfg = RasterConfig(resolution=16, bandwidth_factor=1.5)
    vec = compute_characteristics(case9, pf, case9_embedding, cfg)

    # rebuild everything with direct formulas
    coords = case9_embedding.X[:, :2]
    xs = [c[0] for c in coords]
    ys = [c[1] for c in coords]
    span_x = max(xs) - min(xs)
    span_y = max(ys) - min(ys)
    bbox = (min(xs) - 0.05 * span_x, max(xs) + 0.05 * span_x,
            min(ys) - 0.05 * span_y, max(ys) + 0.05 * span_y)
    q = nodal_quantities(case9, pf)
    grids = {tag: slow_rasterize(coords, list(q[tag]), 16, 1.5, bbox)
             for tag in q}
    want = [
        slow_norm(grids["P_G"], grids["P_L"]),
        slow_ssim(grids["P_G"], grids["P_L"]),
        slow_norm(grids["Q_G"], grids["Q_L"]),
        slow_ssim(grids["Q_G"], grids["Q_L"]),
        slow_ssim(grids["P_re"], grids["Q_G"]),
        slow_ssim(grids["J"], grids["P_L"]),
        slow_norm(grids["P_sync"], grids["P_re"]),
        slow_ssim(grids["P_sync"], grids["P_re"]),
    ]
    np.testing.assert_allclose(vec, want, atol=1e-9)
