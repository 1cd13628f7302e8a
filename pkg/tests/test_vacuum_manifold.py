"""Tests for the vacuum-manifold geometry.

The projection and distance routines are checked against brute-force
minimization over sampled manifold points; the differential-geometric
formulas are checked against finite differences of explicit curves.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biaxldg import qtensor_core as qc
from biaxldg import vacuum_manifold as vm

RNG = np.random.default_rng(42)
MP = qc.derive_params(6.0, 1.0, 1.0, 1.0)
MP2 = qc.derive_params(2.0, 2.0, 4.0, 1.0)


def random_coeffs(size=(), scale=1.0):
    return scale * RNG.standard_normal(size + (5,))


# ---------------------------------------------------------------------------
# manifold points and projection


def test_manifold_point_invariants():
    c, n, m = vm.random_manifold_points(MP, 50, RNG)
    for k in range(50):
        pt = vm.ManifoldPoint(coeffs=c[k], n=n[k], m=m[k])
        pt.validate()
        assert abs(pt.r_star - MP.r_star) < 1e-12
    pt = vm.manifold_point([1, 0, 0], [0.3, 1, 0], MP)  # re-orthonormalized
    pt.validate()


def test_project_fixed_point_and_diag():
    c, _, _ = vm.random_manifold_points(MP, 20, RNG)
    for k in range(20):
        out = vm.project(c[k], MP)
        assert np.abs(out.coeffs - c[k]).max() < 1e-10
    # ordered diagonal tensor projects onto r* diag(1, 0, -1) in its frame
    Q = qc.from_matrix(np.diag([0.9, 0.1, -1.0]))
    out = vm.project(Q, MP)
    assert np.abs(qc.to_matrix(out.coeffs) - MP.r_star * np.diag([1, 0, -1])).max() < 1e-10


def test_project_dilated_point():
    Q = 1.2 * MP.r_star * qc.from_matrix(np.diag([1.0, -1.0, 0.0]))
    out = vm.project(Q, MP)
    assert np.abs(qc.to_matrix(out.coeffs) - MP.r_star * np.diag([1, -1, 0])).max() < 1e-12
    gap = np.linalg.norm(Q - out.coeffs)
    assert abs(gap - 0.2 * MP.r_star * np.sqrt(2)) < 1e-12


def test_project_minimality_against_samples():
    cN, _, _ = vm.random_manifold_points(MP, 1000, RNG)
    for _ in range(25):
        c = random_coeffs(scale=1.2)
        try:
            out = vm.project(c, MP)
        except vm.ProjectionUndefinedError:
            continue
        d0 = np.linalg.norm(c - out.coeffs)
        dall = np.linalg.norm(cN - c, axis=1)
        assert d0 <= dall.min() + 1e-9


def test_project_degenerate_raises():
    uni = qc.from_matrix(0.7 * (np.diag([1.0, 0, 0]) - np.eye(3) / 3))
    with pytest.raises(vm.ProjectionUndefinedError):
        vm.project(uni, MP)
    with pytest.raises(vm.ProjectionUndefinedError):
        vm.project(np.zeros(5), MP)
    with pytest.raises(vm.ProjectionUndefinedError):
        vm.project_field(np.stack([random_coeffs(), np.zeros(5)]), MP)


def test_project_field_matches_pointwise():
    c = random_coeffs((200,))
    lam = qc.eigvals_coeffs(c)
    phi0 = np.minimum(lam[:, 0] - lam[:, 1], lam[:, 1] - lam[:, 2]) / MP.r_star
    c = c[phi0 > 0.05]
    out = vm.project_field(c, MP)
    for k in range(len(c)):
        ref = vm.project(c[k], MP)
        assert np.abs(out[k] - ref.coeffs).max() < 1e-9


# ---------------------------------------------------------------------------
# distance


def test_dist_trivial_values():
    c, _, _ = vm.random_manifold_points(MP, 100, RNG)
    assert np.abs(vm.dist_to_manifold(c, MP)).max() < 1e-10
    assert abs(vm.dist_to_manifold(np.zeros(5), MP) - np.sqrt(2) * MP.r_star) < 1e-14


def test_dist_brute_force_oracle():
    """Spectral distance vs min over 10^6 sampled manifold points."""
    cN, _, _ = vm.random_manifold_points(MP, 1_000_000, np.random.default_rng(7))
    for _ in range(8):
        c = random_coeffs(scale=1.5)
        d = float(vm.dist_to_manifold(c, MP))
        d_samp = np.linalg.norm(cN - c, axis=1).min()
        # sampling min overestimates the true distance by O(sample spacing)
        assert d <= d_samp + 1e-9
        assert d_samp - d < 0.02 * (1 + d)


def test_dist_matches_projection_gap():
    for _ in range(30):
        c = random_coeffs(scale=1.3)
        try:
            out = vm.project(c, MP)
        except vm.ProjectionUndefinedError:
            continue
        assert abs(np.linalg.norm(c - out.coeffs) - vm.dist_to_manifold(c, MP)) < 1e-9


# ---------------------------------------------------------------------------
# biaxiality


def test_biaxiality_trivial_cases():
    c, _, _ = vm.random_manifold_points(MP, 500, RNG)
    phi1, phi2, phi0, phit = vm.biaxiality(c, MP, 0.25)
    for arr in (phi1, phi2, phi0):
        assert np.abs(arr - 1).max() < 1e-9
    uni = qc.from_matrix(0.8 * (np.diag([1.0, 0, 0]) - np.eye(3) / 3))
    _, _, phi0u, phitu = vm.biaxiality(uni, MP, 0.25)
    assert abs(phi0u) < 1e-9 and abs(phitu) < 1e-9
    assert vm.biaxiality(np.zeros(5), MP, 0.25)[3] == 0.0


def test_biaxiality_branch_point():
    # eigenvalues (t, 0, -t) sit exactly at r = 1/2
    t = 0.37
    Q = qc.from_matrix(np.diag([t, 0.0, -t]))
    for tau in (0.05, 0.25, 0.45):
        _, _, _, phit = vm.biaxiality(Q, MP, tau)
        assert abs(phit - 2 * t * (6 - 5 * tau) / (12 * MP.r_star)) < 1e-10


def test_sandwich_property():
    c = random_coeffs((20_000,), scale=1.4)
    for tau in (0.05, 0.25, 0.45):
        _, _, phi0, phit = vm.biaxiality(c, MP, tau)
        assert (phit <= phi0 + 1e-8).all()
        assert (phi0 <= 6.0 / (6.0 - 5.0 * tau) * phit + 1e-8).all()


@settings(derandomize=True, max_examples=100)
@given(st.floats(1e-3, 1e3), st.integers(0, 2 ** 32 - 1))
def test_phi_homogeneity(t, seed):
    c = np.random.default_rng(seed).standard_normal(5)
    base = vm.biaxiality(c, MP, 0.25)
    scaled = vm.biaxiality(t * c, MP, 0.25)
    for a, b in zip(base, scaled):
        assert abs(t * a - b) < 1e-9 * (1 + abs(b))


def test_phi_tau_lipschitz():
    lip = 5.0 / MP.r_star
    for _ in range(200):
        a, b = random_coeffs(scale=1.5), random_coeffs(scale=1.5)
        for tau in (0.05, 0.25, 0.45):
            fa = vm.biaxiality(a, MP, tau)[3]
            fb = vm.biaxiality(b, MP, tau)[3]
            assert abs(fa - fb) <= lip * np.linalg.norm(a - b) + 1e-12


def _smooth_curve(rng, mp, amp=0.35):
    """Random closed curve staying clear of the degenerate cones."""
    c0, _, _ = vm.random_manifold_points(mp, 1, rng)
    A = amp * rng.standard_normal((2, 5)) * mp.r_star
    B = amp * rng.standard_normal((2, 5)) * mp.r_star

    def gamma(t):
        t = np.asarray(t, dtype=float)
        out = np.broadcast_to(c0[0], t.shape + (5,)).copy()
        for k in (1, 2):
            out += (np.sin(k * t)[..., None] * A[k - 1]
                    + np.cos(k * t)[..., None] * B[k - 1]) / k
        return out

    def dgamma(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (5,))
        for k in (1, 2):
            out += (np.cos(k * t)[..., None] * A[k - 1]
                    - np.sin(k * t)[..., None] * B[k - 1])
        return out

    return gamma, dgamma


def test_gradient_inequality_along_curves():
    """|g'|^2 >= (r*^2/18)|(phi_tau o g)'|^2 + (phi_tau o g)^2 |(rho o g)'|^2."""
    rng = np.random.default_rng(5150)
    tau = 0.25
    done = 0
    while done < 60:
        gamma, dgamma = _smooth_curve(rng, MP)
        ts = np.linspace(0, 2 * np.pi, 33)[:-1]
        vals = gamma(ts)
        phi0 = vm.biaxiality(vals, MP, tau)[2]
        if phi0.min() < 0.05:
            continue
        done += 1
        delta = 1e-5
        up, dn = gamma(ts + delta), gamma(ts - delta)
        dphi = (vm.biaxiality(up, MP, tau)[3] - vm.biaxiality(dn, MP, tau)[3]) / (2 * delta)
        drho = np.linalg.norm(
            (vm.project_field(up, MP) - vm.project_field(dn, MP)) / (2 * delta), axis=1)
        phit = vm.biaxiality(vals, MP, tau)[3]
        lhs = np.einsum("ij,ij->i", dgamma(ts), dgamma(ts))
        rhs = MP.r_star ** 2 / 18.0 * dphi ** 2 + phit ** 2 * drho ** 2
        assert (lhs + 1e-6 * (np.abs(lhs) + np.abs(rhs)) + 1e-12 >= rhs).all()


# ---------------------------------------------------------------------------
# sigma_tau


def test_sigma_tau_trivial():
    # on the vacuum manifold r = 1/2 sits in the blending window, where
    # phi_tau = beta_tau(1/2) = (6 - 5 tau)/6, so sigma_tau shrinks Q slightly
    tau = 0.25
    c, _, _ = vm.random_manifold_points(MP, 100, RNG)
    out = vm.sigma_tau(c, MP, tau)
    assert np.abs(out - (6 - 5 * tau) / 6 * c).max() < 1e-9
    uni = qc.from_matrix(0.8 * (np.diag([1.0, 0, 0]) - np.eye(3) / 3))
    assert np.abs(vm.sigma_tau(uni, MP, tau)).max() == 0.0
    assert np.abs(vm.sigma_tau(np.zeros(5), MP, tau)).max() == 0.0


def test_sigma_tau_fd_gradient_bound():
    """|d/dt sigma_tau(gamma)|^2 <= 4 |gamma'|^2 along random smooth curves."""
    rng = np.random.default_rng(999)
    for _ in range(40):
        gamma, dgamma = _smooth_curve(rng, MP, amp=0.5)
        ts = np.linspace(0, 2 * np.pi, 17)[:-1]
        delta = 1e-6
        ds = np.linalg.norm(
            (vm.sigma_tau(gamma(ts + delta), MP, 0.25)
             - vm.sigma_tau(gamma(ts - delta), MP, 0.25)) / (2 * delta), axis=1)
        speed2 = np.einsum("ij,ij->i", dgamma(ts), dgamma(ts))
        assert (ds ** 2 <= 4.0 * speed2 * (1 + 1e-3) + 1e-8).all()


# ---------------------------------------------------------------------------
# tangent/normal splitting and curvature


def base_point():
    return vm.manifold_point([1.0, 0, 0], [0, 1.0, 0], MP)


def test_tangent_split_cases():
    pt = base_point()
    # Q* itself is normal
    ts = vm.tangent_split(pt, pt.coeffs)
    assert np.abs(ts.par).max() < 1e-12
    assert np.abs(ts.perp - pt.coeffs).max() < 1e-12
    assert abs(ts.mu1 - np.sqrt(2) * MP.r_star) < 1e-12
    # the (nm + mn) direction is tangential
    X = qc.from_matrix(MP.r_star * np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0.0]]) / np.sqrt(2))
    ts = vm.tangent_split(pt, X)
    assert np.abs(ts.perp).max() < 1e-12
    assert np.abs(ts.par - X).max() < 1e-12
    # random: orthogonality by construction
    n1, n2 = vm.normal_frame(pt)
    for _ in range(20):
        ts = vm.tangent_split(pt, random_coeffs())
        assert abs(ts.par @ n1) < 1e-10 and abs(ts.par @ n2) < 1e-10
        assert abs(ts.par @ pt.coeffs) < 1e-10
        assert abs(ts.par @ qc.q2_coeffs(pt.coeffs)) < 1e-10


def test_second_fundamental_form_values():
    pt = base_point()  # Q* = r* diag(1, -1, 0)
    c = 0.8
    X = qc.from_matrix(c * MP.r_star * np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0.0]]))
    out = vm.second_fundamental_form(pt, X, X)
    # the value is normal and points along diag(-1, 1, 0)
    direction = qc.from_matrix(np.diag([-1.0, 1.0, 0.0]) / np.sqrt(2))
    cosang = out @ direction / np.linalg.norm(out)
    assert abs(cosang - 1.0) < 1e-12
    ts = vm.tangent_split(pt, out)
    assert np.abs(ts.par).max() < 1e-10
    # mixed pair vanishes
    Y = qc.from_matrix(MP.r_star * np.array([[0, 0, 1], [0, 0, 0], [1, 0, 0.0]]))
    assert np.abs(vm.second_fundamental_form(pt, X, Y)).max() < 1e-12


def test_second_fundamental_form_symmetry_and_precondition():
    pt = base_point()
    for _ in range(20):
        X = vm.tangent_split(pt, random_coeffs()).par
        Y = vm.tangent_split(pt, random_coeffs()).par
        a = vm.second_fundamental_form(pt, X, Y)
        b = vm.second_fundamental_form(pt, Y, X)
        assert np.abs(a - b).max() < 1e-12
        out = vm.tangent_split(pt, a)
        assert np.abs(out.par).max() < 1e-9
    with pytest.raises(vm.NotTangentError):
        vm.second_fundamental_form(pt, pt.coeffs, pt.coeffs)


def test_harmonic_tension_basic():
    pt = base_point()
    zero = vm.harmonic_tension(pt, np.zeros((3, 5)))
    assert np.abs(zero).max() == 0.0
    X = vm.tangent_split(pt, random_coeffs()).par
    single = vm.harmonic_tension(pt, [X, np.zeros(5), np.zeros(5)])
    assert np.abs(single - vm.second_fundamental_form(pt, X, X)).max() < 1e-12


def test_harmonic_tension_geodesic_loop():
    """The basic geodesic loop solves L'' = tension(L', L') to FD accuracy."""
    N = 10_000
    thetas = np.linspace(0, 2 * np.pi, N, endpoint=False)
    h = thetas[1] - thetas[0]

    def loop(t):
        n = np.stack([np.zeros_like(t), np.cos(t / 2), np.sin(t / 2)], axis=-1)
        e1 = np.zeros_like(n)
        e1[..., 0] = 1.0
        M = MP.r_star * (np.einsum("...i,...j->...ij", e1, e1)
                         - np.einsum("...i,...j->...ij", n, n))
        return qc.from_matrix(M)

    vals = loop(thetas)
    d1 = (loop(thetas + h) - loop(thetas - h)) / (2 * h)
    d2 = (loop(thetas + h) - 2 * vals + loop(thetas - h)) / h ** 2
    for k in range(0, N, 997):
        pt = vm.project(vals[k], MP)
        T = vm.harmonic_tension(pt, [d1[k]], tol=1e-4)
        resid = d2[k] - T
        split = vm.tangent_split(pt, resid)
        assert np.hypot(split.mu1, split.mu2) < 1e-4


# ---------------------------------------------------------------------------
# fitted comparison constants


def test_near_well_comparison():
    for mp in (MP, MP2):
        C = vm.well_comparison_constant(mp)
        assert C >= 1.0
        rng = np.random.default_rng(31337)
        cw, _, _ = vm.random_manifold_points(mp, 3000, rng)
        d = rng.uniform(1e-3, 0.1, 3000) * mp.r_star
        v = rng.standard_normal((3000, 5))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        c = cw + d[:, None] * v
        dist2 = vm.dist_to_manifold(c, mp) ** 2
        zeta, _ = qc.wells_gap(c, mp)
        g = qc.bulk_gradient(c, mp)
        for val in (zeta, np.einsum("ij,ij->i", g, g), qc.bulk_energy(c, mp)):
            ratio = val / dist2
            assert ratio.min() > 1.0 / C - 1e-12
            assert ratio.max() < C + 1e-12


def test_biaxial_gap_bound():
    c0 = vm.biaxial_gap_constant(MP)
    assert c0 > 0
    rng = np.random.default_rng(2222)
    c = rng.standard_normal((10_000, 5))
    c *= (rng.uniform(0, 3 * MP.r_star, 10_000) / np.linalg.norm(c, axis=1))[:, None]
    phi1, phi2, phi0, _ = vm.biaxiality(c, MP, 0.25)
    denom = np.maximum((1 - phi0) ** 2, np.maximum((1 - phi1) ** 2, (1 - phi2) ** 2))
    fb = qc.bulk_energy(c, MP)
    assert (fb >= 0).all()
    assert (fb >= c0 * denom - 1e-12).all()
