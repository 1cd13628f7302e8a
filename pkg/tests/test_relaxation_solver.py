"""Masked-grid domains, discrete energy, gradient descent, and diagnostics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biaxldg import q8_topology as q8
from biaxldg import qtensor_core as qc
from biaxldg import relaxation_solver as rs
from biaxldg import vacuum_manifold as vm

MP = qc.derive_params(6.0, 1.0, 1.0, 1.0)  # r* = 1, kappa* = pi/2
KAPPA = MP.kappa_star
WELL = vm.manifold_point(np.array([1.0, 0.0, 0.0]),
                         np.array([0.0, 1.0, 0.0]), MP).coeffs


def _neighbor_or(mask):
    out = np.zeros_like(mask)
    for ax in range(mask.ndim):
        out |= np.roll(mask, 1, ax) | np.roll(mask, -1, ax)
    return out


# ---------------------------------------------------------------------------
# domains


def test_domain_masks_partition():
    dom = rs.disk2d(1.0, 1 / 16)
    assert dom.dim == 2 and dom.shape == (33, 33)
    assert not (dom.interior & dom.boundary).any()
    assert ((dom.interior | dom.boundary) == dom.inside).all()
    # interior nodes have all four face neighbors inside
    ok = dom.inside.copy()
    for ax in (0, 1):
        ok &= np.roll(dom.inside, 1, ax) & np.roll(dom.inside, -1, ax)
    # array edge counts as outside
    ok[0, :] = ok[-1, :] = ok[:, 0] = ok[:, -1] = False
    assert (dom.interior == ok).all()


def test_domain_spacing_must_divide_extent():
    with pytest.raises(ValueError):
        rs.square2d(1.0, 0.3)
    rs.square2d(1.0, 0.25)  # 0.5 / 0.25 = 2, fine


def test_annulus_has_a_hole():
    dom = rs.annulus2d(0.5, 1.0, 1 / 16)
    X, Y = dom.grids()
    rho = np.hypot(X, Y)
    assert not dom.inside[rho < 0.45].any()
    assert dom.inside[np.abs(rho - 0.75) < 0.05].all()


def test_cylinder_mask():
    dom = rs.cylinder3d(0.5, 0.5, 1 / 8)
    assert dom.dim == 3 and dom.shape == (9, 9, 9)
    X, Y, Z = dom.grids()
    rho = np.hypot(X, Y)
    assert dom.inside[(rho <= 0.5 - 1e-12) & (np.abs(Z) <= 0.5 - 1e-12)].all()
    assert not dom.inside[rho > 0.5 + 1e-12].any()


def test_rebuild_domain_roundtrip():
    for dom in (rs.square2d(1.0, 1 / 8), rs.disk2d(1.0, 1 / 8),
                rs.annulus2d(0.5, 1.0, 1 / 8), rs.box3d((1.0, 1.0, 0.5), 1 / 4),
                rs.cylinder3d(0.5, 0.5, 1 / 8)):
        back = rs.rebuild_domain(dom.kind, dom.extents, dom.h)
        assert back.kind == dom.kind and back.h == dom.h
        assert (back.inside == dom.inside).all()
        assert (back.interior == dom.interior).all()


# ---------------------------------------------------------------------------
# fields


def test_field_validation():
    dom = rs.disk2d(1.0, 1 / 8)
    good = np.zeros(dom.shape + (5,))
    with pytest.raises(ValueError):
        rs.Field(dom, np.zeros(dom.shape + (4,)), 0.1, MP)
    with pytest.raises(ValueError):
        rs.Field(dom, good, 0.0, MP)
    with pytest.raises(ValueError):
        rs.Field(dom, good, dom.min_extent(), MP)  # eps >= min_extent / 2
    rs.Field(dom, good, 0.1, MP)


def test_field_zeroes_exterior_without_touching_the_source():
    dom = rs.disk2d(1.0, 1 / 8)
    src = np.ones(dom.shape + (5,))
    f = rs.Field(dom, src, 0.1, MP)
    assert (f.values[~dom.inside] == 0.0).all()
    assert (src == 1.0).all()
    src[0, 0, 0] = 7.0  # the field owns a copy
    assert f.values[0, 0, 0] == 0.0
    g = f.copy()
    g.values += 1.0
    assert (f.values[dom.inside] == 1.0).all()


def test_constant_field_matches_function_sampling():
    dom = rs.annulus2d(0.5, 1.0, 1 / 16)
    f = rs.constant_field(dom, WELL, 0.1, MP)
    g = rs.field_from_function(dom, lambda X, Y: np.broadcast_to(
        WELL, X.shape + (5,)).copy(), 0.1, MP)
    assert np.array_equal(f.values, g.values)


# ---------------------------------------------------------------------------
# deterministic reduction


def test_tree_sum_matches_numpy_and_repeats():
    rng = np.random.default_rng(20260825)
    a = rng.standard_normal(1000) * 1e6
    s = rs.tree_sum(a)
    assert abs(s - np.sum(a)) <= 1e-12 * np.abs(a).sum()
    assert rs.tree_sum(a.copy()) == s  # bitwise repeatable
    assert rs.tree_sum(np.array([3.5])) == 3.5
    assert rs.tree_sum(np.array([])) == 0.0


@settings(max_examples=100, deadline=None, derandomize=True)
@given(st.lists(st.floats(min_value=-1e8, max_value=1e8,
                          allow_nan=False), min_size=1, max_size=128))
def test_tree_sum_tracks_fsum(xs):
    a = np.asarray(xs)
    exact = math.fsum(xs)
    assert abs(rs.tree_sum(a) - exact) <= 1e-12 * (np.abs(a).sum() + 1.0)


# ---------------------------------------------------------------------------
# energy assembly


def test_constant_well_has_zero_energy():
    dom = rs.disk2d(1.0, 1 / 16)
    rep = rs.assemble_energy(rs.constant_field(dom, WELL, 0.1, MP))
    assert rep.dirichlet == 0.0
    assert abs(rep.bulk) < 1e-10
    assert abs(rep.total) < 1e-10
    assert rep.max_dist < 1e-12


def test_zero_field_bulk_is_exactly_a1_times_volume():
    dom = rs.disk2d(1.0, 1 / 16)
    eps = 0.1
    rep = rs.assemble_energy(rs.constant_field(dom, np.zeros(5), eps, MP))
    expected = MP.a1 * dom.h ** 2 * int(dom.inside.sum()) / eps ** 2
    assert rep.dirichlet == 0.0
    assert abs(rep.bulk - expected) <= 1e-12 * expected
    # the mask integrates the unit disk to ~pi
    assert abs(rep.bulk - np.pi * MP.a1 / eps ** 2) < 0.05 * rep.bulk


def test_energy_splits_and_density_account_exactly():
    f = rs.hedgehog_2d("H1", 0.1, 1.0, MP, 1 / 32)
    rep = rs.assemble_energy(f)
    assert abs(rep.total - (rep.dirichlet + rep.bulk)) <= 1e-12 * rep.total
    acc = rs.tree_sum(rep.density[f.domain.inside]) * f.domain.h ** 2
    assert abs(acc - rep.total) <= 1e-10 * rep.total
    assert (rep.density >= -1e-15).all()
    assert (rep.density[~f.domain.inside] == 0.0).all()
    assert abs(rep.max_q - np.sqrt(2.0) * MP.r_star) < 1e-12
    fast = rs.assemble_energy(f, reduction="fast")
    assert abs(fast.total - rep.total) <= 1e-11 * rep.total


# ---------------------------------------------------------------------------
# gradient


def _smooth_field():
    dom = rs.disk2d(0.5, 1 / 8)

    def fn(X, Y):
        return np.stack([np.sin(np.pi * X) * np.cos(Y), 0.3 * np.cos(2 * X) * Y,
                         X * Y, 0.2 * np.sin(X + Y), 0.1 * np.cos(np.pi * Y)],
                        axis=-1)

    return rs.field_from_function(dom, fn, 0.12, MP)


def test_gradient_matches_directional_finite_differences():
    f = _smooth_field()
    dom = f.domain
    G = rs.energy_gradient(f)
    assert (G[~dom.interior] == 0.0).all()
    rng = np.random.default_rng(7)
    t = 1e-6
    for _ in range(20):
        d = rng.standard_normal(f.values.shape) * dom.interior[..., None]
        d /= np.linalg.norm(d)
        ep = rs.assemble_energy(rs.Field(dom, f.values + t * d, f.eps, MP)).total
        em = rs.assemble_energy(rs.Field(dom, f.values - t * d, f.eps, MP)).total
        fd = (ep - em) / (2.0 * t)
        assert abs(fd - float((G * d).sum())) <= 1e-5 * max(abs(fd), 1e-12)


def test_gradient_vanishes_at_the_well():
    dom = rs.disk2d(1.0, 1 / 16)
    G = rs.energy_gradient(rs.constant_field(dom, WELL, 0.1, MP))
    assert np.abs(G).max() < 1e-12


# ---------------------------------------------------------------------------
# descent


@pytest.fixture(scope="module")
def relaxed_hedgehog():
    f = rs.hedgehog_2d("H1", 0.1, 1.0, MP, 1 / 32)
    raw = rs.assemble_energy(f).total
    out, info = rs.relax_with_info(f, rs.SolveConfig(max_iters=3000,
                                                     grad_tol=1e-3))
    return f, raw, out, info


def test_relax_leaves_the_well_alone():
    dom = rs.disk2d(1.0, 1 / 16)
    f = rs.constant_field(dom, WELL, 0.1, MP)
    out, info = rs.relax_with_info(f)
    assert info.converged and info.iterations == 0
    assert np.array_equal(out.values, f.values)


def test_relax_descends_to_the_single_defect_energy(relaxed_hedgehog):
    f, raw, out, info = relaxed_hedgehog
    assert abs(raw - 11.501892) < 1e-4
    assert info.converged and info.final_residual < 1e-3
    assert 80 <= info.iterations <= 400
    assert abs(info.final_energy - 4.533890) < 1e-3
    hist = np.asarray(info.energy_history)
    assert hist[0] == pytest.approx(raw, rel=1e-12)
    assert (np.diff(hist) <= 1e-12 * hist[0]).all()  # monotone descent
    assert abs(info.final_energy
               - rs.assemble_energy(out).total) <= 1e-10 * info.final_energy


def test_relax_obeys_the_maximum_principle(relaxed_hedgehog):
    _, _, out, _ = relaxed_hedgehog
    norms = np.linalg.norm(out.values[out.domain.inside], axis=1)
    assert norms.max() <= np.sqrt(2.0) * MP.r_star + 1e-9


def test_relax_raises_on_backtracking_collapse():
    dom = rs.disk2d(0.5, 1 / 8)
    f = rs.constant_field(dom, 1e4 * WELL, 0.2, MP)
    with pytest.raises(rs.StagnationError) as ei:
        rs.relax(f)
    err = ei.value
    assert isinstance(err.partial, rs.Field)
    assert err.info.iterations == 0
    assert len(err.info.energy_history) == 1


def test_fixed_step_policy_also_descends():
    f = rs.hedgehog_2d("H1", 0.15, 1.0, MP, 1 / 16)
    cfg = rs.SolveConfig(max_iters=200, grad_tol=1e-12, step_policy="fixed")
    _, info = rs.relax_with_info(f, cfg)
    hist = np.asarray(info.energy_history)
    assert hist[-1] < hist[0]
    assert (np.diff(hist) <= 1e-12 * hist[0]).all()


# ---------------------------------------------------------------------------
# competitor fields


def test_hedgehog_biaxiality_equals_its_core_profile():
    f = rs.hedgehog_2d("H2", 0.1, 1.0, MP, 1 / 16)
    dom = f.domain
    X, Y = dom.grids()
    rho = np.hypot(X, Y)[dom.inside]
    phi0 = vm.biaxiality(f.values[dom.inside], MP, 0.25)[2]
    assert np.abs(phi0 - rs.eta_profile(rho, f.eps)).max() < 1e-12
    off_core = rho >= f.eps + dom.h
    dist = vm.dist_to_manifold(f.values[dom.inside][off_core], MP)
    assert dist.max() < 1e-12


def test_hedgehog_rejects_unknown_and_trivial_classes():
    with pytest.raises(ValueError):
        rs.hedgehog_2d("H0", 0.1, 1.0, MP, 1 / 16)
    with pytest.raises(ValueError):
        rs.hedgehog_2d("H7", 0.1, 1.0, MP, 1 / 16)


def test_hedgehog_energy_is_logarithmic_plus_constant():
    for eps in (0.1, 0.05):
        f = rs.hedgehog_2d("H1", eps, 1.0, MP, 1 / 64)
        E = rs.assemble_energy(f).total
        main = KAPPA * np.log(1.0 / eps)
        assert main < E < main + 9.0


def test_representative_coeffs_sit_on_the_wells_and_close_up():
    theta = np.linspace(0.0, 2.0 * np.pi, 33)
    for tag in ("H1", "H2", "H3", "H4"):
        c = rs.representative_coeffs(tag, MP, theta)
        assert vm.dist_to_manifold(c, MP).max() < 1e-12
        assert np.abs(c[0] - c[-1]).max() < 1e-12
    with pytest.raises(ValueError):
        rs.representative_coeffs("H0", MP, theta)


def _ring_loop(f, rho, N=256):
    """Bilinear samples of a 2-d field on the circle of radius rho."""
    dom = f.domain
    th = 2.0 * np.pi * np.arange(N) / N
    px, py = rho * np.cos(th), rho * np.sin(th)
    x0 = dom.coords[0][0]
    ix, iy = (px - x0) / dom.h, (py - x0) / dom.h
    i0, j0 = np.floor(ix).astype(int), np.floor(iy).astype(int)
    wx, wy = (ix - i0)[:, None], (iy - j0)[:, None]
    v = f.values
    c = ((1 - wx) * (1 - wy) * v[i0, j0] + wx * (1 - wy) * v[i0 + 1, j0]
         + (1 - wx) * wy * v[i0, j0 + 1] + wx * wy * v[i0 + 1, j0 + 1])
    return q8.NLoop.from_coeffs(vm.project_field(c, MP), MP)


def test_split_pair_boundary_classes_and_cores():
    for tag in ("H3", "H4"):
        f = rs.split_pair_2d(tag, 0.08, 1.0, MP, 1 / 32, separation=0.3)
        assert q8.classify(_ring_loop(f, 0.9), MP).tag == tag
        dom = f.domain
        X, Y = dom.grids()
        phi = np.full(dom.shape, np.nan)
        phi[dom.inside] = vm.biaxiality(f.values[dom.inside], MP, 0.25)[2]
        for cx in (0.3, -0.3):
            near = (np.hypot(X - cx, Y) < 0.06) & dom.inside
            assert np.nanmin(phi[near]) < 0.3  # a core sits at each puncture
        far = dom.inside & (np.hypot(X - 0.3, Y) > 0.15) \
            & (np.hypot(X + 0.3, Y) > 0.15)
        assert vm.dist_to_manifold(f.values[far], MP).max() < 1e-12


def test_split_pair_validation():
    with pytest.raises(ValueError):
        rs.split_pair_2d("H1", 0.08, 1.0, MP, 1 / 16)
    with pytest.raises(ValueError):
        rs.split_pair_2d("H3", 0.08, 1.0, MP, 1 / 16, separation=0.6)


def test_cylinder_boundary_extends_the_loop_along_the_axis():
    loop = q8.loop_A0(MP, 64)
    f = rs.cylinder_boundary(loop, 0.5, 0.5, 0.1, MP, 1 / 8)
    assert f.boundary_tag == "H1"
    assert f.domain.kind == "cylinder3d"
    # the initial data is a straight line-defect candidate: z-independent
    assert np.abs(f.values - f.values[:, :, :1]).max() == 0.0
    X, Y, _ = f.domain.grids()
    lateral = f.domain.inside & (np.hypot(X, Y) > 0.5 - 2 * f.domain.h)
    assert vm.dist_to_manifold(f.values[lateral], MP).max() < 0.05


# ---------------------------------------------------------------------------
# symmetry


def _conj5(c):
    R = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    return qc.from_matrix(np.einsum("ab,...bc,dc->...ad", R, qc.to_matrix(c), R))


def test_descent_commutes_with_quarter_turns():
    def g(X, Y):
        th = np.arctan2(Y, X)
        eta = rs.eta_profile(np.hypot(X, Y), 0.15)
        c = eta[..., None] * rs.representative_coeffs("H1", MP, th)
        c[..., 2] += 0.1 * np.sin(np.pi * X) * np.cos(2.0 * Y)
        return c

    dom = rs.disk2d(1.0, 1 / 16)
    f0 = rs.field_from_function(dom, g, 0.15, MP)
    f1 = rs.field_from_function(dom, lambda X, Y: _conj5(g(Y, -X)), 0.15, MP)
    cfg = rs.SolveConfig(max_iters=40, grad_tol=1e-12)
    o0, i0 = rs.relax_with_info(f0, cfg)
    o1, i1 = rs.relax_with_info(f1, cfg)
    pred = _conj5(np.rot90(o0.values, 1, axes=(0, 1)))
    assert np.abs(pred - o1.values).max() < 1e-10
    assert abs(i0.final_energy - i1.final_energy) < 1e-10


# ---------------------------------------------------------------------------
# diagnostics


def test_diagnostics_on_the_relaxed_defect(relaxed_hedgehog):
    _, _, out, _ = relaxed_hedgehog
    d = rs.diagnostics(out, centers=[(0.55, 0.0), (0.0, -0.5), (-0.45, 0.3)],
                       radii=np.array([0.1, 0.2, 0.3, 0.4]))
    assert d["monotone"] == [True, True, True]
    assert all(p < 0.01 for p in d["pohozaev"])
    assert d["mono_tol"] == pytest.approx(5.0 * out.domain.h
                                          * d["report"].total)
    assert len(d["profiles"]) == 3 and len(d["profiles"][0]) == 4
    assert d["stress_div_sup"] < 15.0
    assert 0.5 < d["sup_dist"] < 1.5  # the core is far from the wells


def test_energy_per_radius_decreases_at_the_core(relaxed_hedgehog):
    _, _, out, _ = relaxed_hedgehog
    prof = rs.monotonicity_profile(out, (0.0, 0.0), np.array([0.15, 0.3, 0.45]))
    assert (np.diff(prof) < 0.0).all()


def test_scaling_identities_vanish_on_a_constant_well():
    dom = rs.disk2d(1.0, 1 / 16)
    f = rs.constant_field(dom, WELL, 0.15, MP)
    assert rs.pohozaev_residual(f, (0.0, 0.0), 0.5) == 0.0
    assert rs.stress_divergence_sup(f) < 1e-12
    d = rs.diagnostics(f, centers=[(0.0, 0.0)], radii=np.array([0.2, 0.4]))
    assert d["monotone"] == [True]


def test_bulk_stiffness_is_cached_and_sane():
    a = rs.bulk_stiffness(MP)
    assert 50.0 < a < 150.0
    assert rs.bulk_stiffness(MP) == a
    b = rs.bulk_stiffness(qc.derive_params(2.0, 2.0, 4.0, 1.0))
    assert b > 0.0


# ---------------------------------------------------------------------------
# snapshots and exports


def test_snapshot_roundtrip(tmp_path):
    f = rs.hedgehog_2d("H1", 0.1, 1.0, MP, 1 / 16)
    path = tmp_path / "field.snap"
    rs.write_snapshot(path, f)
    back = rs.read_snapshot(path)
    assert np.array_equal(back.values, f.values)
    assert back.eps == f.eps
    assert back.domain.kind == f.domain.kind and back.domain.h == f.domain.h
    assert (back.domain.inside == f.domain.inside).all()
    assert back.params.r_star == pytest.approx(MP.r_star, rel=1e-14)


def test_snapshot_rejects_foreign_files(tmp_path):
    path = tmp_path / "junk.snap"
    path.write_bytes(b'{"magic": "something-else"}\n')
    with pytest.raises(ValueError):
        rs.read_snapshot(path)


def test_csv_export_is_deterministic_and_parsable(tmp_path):
    f = rs.hedgehog_2d("H1", 0.1, 1.0, MP, 1 / 16)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    rs.export_field_csv(p1, f)
    rs.export_field_csv(p2, f)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_text().splitlines()[0] == "x,y,c1,c2,c3,c4,c5"
    data = np.loadtxt(p1, delimiter=",", skiprows=1)
    assert data.shape == (int(f.domain.inside.sum()), 7)
    assert np.array_equal(data[:, 2:], f.values[f.domain.inside])
