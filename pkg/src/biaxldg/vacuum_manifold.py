"""Geometry of the vacuum manifold of the sextic potential.

The zero set of f_b is the compact manifold N = { r*(nn - mm) : n.m = 0 },
consisting of maximally biaxial tensors with spectrum (r*, 0, -r*).  This
module provides the nearest-point projection rho onto N, the spectral
distance, the biaxiality functions phi_1, phi_2, phi_0 and their regularized
version phi_tau, the sigma_tau = phi_tau * rho composite, the tangent/normal
splitting at a point of N, the second fundamental form, and the tension field
that drives the limiting harmonic-map equation.

Degenerate tensors (lambda_1 = lambda_2 or lambda_2 = lambda_3, the two
uniaxial cones C1, C2) have no well-defined projection; phi_0 vanishes there
and every routine that needs rho either raises or extends by zero, following
the convention that phi_tau-weighted quantities vanish across the cones.
"""

from dataclasses import dataclass

import numpy as np

from .qtensor_core import (
    QTensor, eigvals_coeffs, from_matrix, spectral, to_matrix, trace_q2,
    trace_q3, q2_coeffs, bulk_energy, bulk_gradient, wells_gap,
)

__all__ = [
    "ManifoldPoint", "TangentSplit", "ProjectionUndefinedError",
    "NotTangentError", "manifold_point", "project", "project_field",
    "dist_to_manifold", "biaxiality", "sigma_tau", "tangent_split",
    "normal_frame", "second_fundamental_form", "harmonic_tension",
    "random_manifold_points", "well_comparison_constant",
    "biaxial_gap_constant",
]

_SQ2 = np.sqrt(2.0)
_SQ6 = np.sqrt(6.0)


class ProjectionUndefinedError(ValueError):
    """Projection requested in the degenerate cone neighbourhood."""


class NotTangentError(ValueError):
    """A vector handed to the second fundamental form is not tangential."""


def _coeffs_of(Q):
    return Q.coeffs if isinstance(Q, QTensor) else np.asarray(Q, dtype=float)


@dataclass
class ManifoldPoint:
    """A point r*(nn - mm) of N with its defining orthonormal pair (n, m).

    r_star is recovered from |Q*| = sqrt(2) r*, so the point is
    self-contained.
    """
    coeffs: np.ndarray
    n: np.ndarray
    m: np.ndarray

    @property
    def r_star(self):
        return float(np.linalg.norm(self.coeffs) / _SQ2)

    @property
    def matrix(self):
        return to_matrix(self.coeffs)

    @property
    def tensor(self):
        return QTensor(self.coeffs)

    def validate(self, tol_norm=1e-10, tol_ortho=1e-12):
        r2 = self.r_star ** 2
        if abs(trace_q2(self.coeffs) - 2 * r2) > tol_norm * (1 + r2):
            raise ValueError("|Q*|^2 != 2 r*^2")
        if abs(trace_q3(self.coeffs)) > tol_norm * (1 + r2 ** 1.5):
            raise ValueError("tr (Q*)^3 != 0")
        if abs(float(self.n @ self.m)) > tol_ortho:
            raise ValueError("frame is not orthogonal")
        return self


def manifold_point(n, m, mp):
    """Build r*(nn - mm) from an orthonormal pair; inputs are re-orthonormalized."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    m = np.asarray(m, dtype=float)
    m = m - (m @ n) * n
    m = m / np.linalg.norm(m)
    M = mp.r_star * (np.outer(n, n) - np.outer(m, m))
    return ManifoldPoint(coeffs=from_matrix(M), n=n, m=m)


def random_manifold_points(mp, size, rng=None):
    """size random points of N (uniform frames); returns (coeffs, n, m)."""
    rng = np.random.default_rng(rng)
    n = rng.standard_normal((size, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    m = rng.standard_normal((size, 3))
    m -= np.einsum("ij,ij->i", m, n)[:, None] * n
    m /= np.linalg.norm(m, axis=1, keepdims=True)
    M = mp.r_star * (np.einsum("ij,ik->ijk", n, n) - np.einsum("ij,ik->ijk", m, m))
    return from_matrix(M), n, m


# ---------------------------------------------------------------------------
# projection and distance

def _tol_degenerate(c, r_star):
    qn = np.sqrt(trace_q2(c))
    return 1e-8 * (1.0 + qn / r_star)


def project(Q, mp):
    """Nearest-point projection rho(Q) = r*(u1 u1 - u3 u3) onto N.

    Requires both eigenvalue gaps to be positive: raises
    ProjectionUndefinedError when phi_0(Q) <= 1e-8 (1 + |Q|/r*).
    """
    c = _coeffs_of(Q)
    sd = spectral(c)
    phi0 = min(sd.eigvals[0] - sd.eigvals[1], sd.eigvals[1] - sd.eigvals[2]) / mp.r_star
    if phi0 <= _tol_degenerate(c, mp.r_star):
        raise ProjectionUndefinedError(
            f"phi_0 = {phi0:.3e}: Q is too close to the uniaxial cones")
    n = sd.frame[:, 0]
    m = sd.frame[:, 2]
    M = mp.r_star * (np.outer(n, n) - np.outer(m, m))
    return ManifoldPoint(coeffs=from_matrix(M), n=n, m=m)


def _best_null_columns(A):
    """Unit null directions for a stack of near-rank-2 symmetric matrices."""
    c01 = np.cross(A[..., :, 0], A[..., :, 1])
    c02 = np.cross(A[..., :, 0], A[..., :, 2])
    c12 = np.cross(A[..., :, 1], A[..., :, 2])
    cand = np.stack([c01, c02, c12], axis=-2)          # (..., 3 candidates, 3)
    norms = np.linalg.norm(cand, axis=-1)
    pick = np.argmax(norms, axis=-1)
    v = np.take_along_axis(cand, pick[..., None, None], axis=-2)[..., 0, :]
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(nv, 1e-300)


def project_field(c, mp):
    """Vectorized rho over (..., 5) arrays; every entry must be non-degenerate."""
    c = np.asarray(c, dtype=float)
    lam = eigvals_coeffs(c)
    phi0 = np.minimum(lam[..., 0] - lam[..., 1], lam[..., 1] - lam[..., 2]) / mp.r_star
    tol = _tol_degenerate(c, mp.r_star)
    if np.any(phi0 <= tol):
        worst = np.unravel_index(np.argmin(phi0 - tol), phi0.shape)
        raise ProjectionUndefinedError(
            f"projection undefined at index {worst}: phi_0 = {phi0[worst]:.3e}")
    M = to_matrix(c)
    I3 = np.eye(3)
    u1 = _best_null_columns(M - lam[..., 0, None, None] * I3)
    u3 = _best_null_columns(M - lam[..., 2, None, None] * I3)
    u3 = u3 - np.einsum("...i,...i->...", u3, u1)[..., None] * u1
    u3 /= np.linalg.norm(u3, axis=-1, keepdims=True)
    P = mp.r_star * (np.einsum("...i,...j->...ij", u1, u1)
                     - np.einsum("...i,...j->...ij", u3, u3))
    return from_matrix(P)


def _eigvals_any(c):
    # single tensors go through the frame-refined path, which stays accurate
    # at multiple eigenvalues where the scalar cubic loses ~sqrt(eps)
    if c.ndim == 1:
        return spectral(c).eigvals
    return eigvals_coeffs(c)


def dist_to_manifold(Q, mp):
    """Spectral distance sqrt((l1-r*)^2 + l2^2 + (l3+r*)^2); vectorized."""
    c = _coeffs_of(Q)
    lam = _eigvals_any(c)
    r = mp.r_star
    d2 = (lam[..., 0] - r) ** 2 + lam[..., 1] ** 2 + (lam[..., 2] + r) ** 2
    return np.sqrt(d2)


# ---------------------------------------------------------------------------
# biaxiality functions

def biaxiality(Q, mp, tau):
    """(phi_1, phi_2, phi_0, phi_tau); vectorized over (..., 5).

    phi_1 = (l1 - l2)/r*, phi_2 = (l2 - l3)/r*, phi_0 = min(phi_1, phi_2).
    phi_tau regularizes phi_0 across the branch crossing r = 1/2 of the shape
    coordinates (s, r): it equals phi_2 for r below (1-2tau)/2, phi_1 above
    (1+2tau)/2, and s*beta_tau(r)/r* in the blending window, with

        beta_tau(r) = u^6/(24 tau^5) - 5 u^2/(8 tau) + (6-5tau)/12,
        u = (2r-1)/2.

    phi_tau(0) = 0 and phi_tau <= phi_0 <= 6/(6-5tau) phi_tau everywhere.
    """
    if not 0.0 < tau < 0.5:
        raise ValueError(f"tau must lie in (0, 1/2), got {tau}")
    c = _coeffs_of(Q)
    lam = _eigvals_any(c)
    r_star = mp.r_star
    phi1 = (lam[..., 0] - lam[..., 1]) / r_star
    phi2 = (lam[..., 1] - lam[..., 2]) / r_star
    phi0 = np.minimum(phi1, phi2)

    s = lam[..., 0] - lam[..., 2]
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(s > 0, (lam[..., 1] - lam[..., 2]) / np.where(s > 0, s, 1.0), 0.0)
    u = (2.0 * r - 1.0) / 2.0
    beta = (u ** 6 / (24.0 * tau ** 5) - 5.0 * u * u / (8.0 * tau)
            + (6.0 - 5.0 * tau) / 12.0)
    lo, hi = (1.0 - 2.0 * tau) / 2.0, (1.0 + 2.0 * tau) / 2.0
    phi_hat = np.where(r < lo, s * r, np.where(r > hi, s * (1.0 - r), s * beta))
    return phi1, phi2, phi0, phi_hat / r_star


def sigma_tau(Q, mp, tau):
    """phi_tau(Q) * rho(Q), extended by the zero tensor across the cones.

    Vectorized over (..., 5); returns coefficient arrays of the same shape.
    """
    c = np.atleast_2d(_coeffs_of(Q))
    single = _coeffs_of(Q).ndim == 1
    _, _, phi0, phit = biaxiality(c, mp, tau)
    out = np.zeros_like(c)
    mask = phi0 > _tol_degenerate(c, mp.r_star)
    if np.any(mask):
        out[mask] = phit[mask][..., None] * project_field(c[mask], mp)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# tangent/normal structure

@dataclass
class TangentSplit:
    """Orthogonal decomposition P = par + perp at a point of N.

    mu1, mu2 are the coordinates of perp along the orthonormal normal frame
    N1 = Q*/(sqrt(2) r*), N2 = sqrt(6) (Q*^2 - (2 r*^2/3) I) / (2 r*^2).
    """
    par: np.ndarray
    perp: np.ndarray
    mu1: float
    mu2: float


def normal_frame(base):
    """The two unit normals (N1, N2) at base, as coefficient vectors."""
    r2 = base.r_star ** 2
    n1 = base.coeffs / (_SQ2 * base.r_star)
    # q2_coeffs drops the trace part of Q*^2, which is exactly (2 r*^2/3) I
    n2 = _SQ6 * q2_coeffs(base.coeffs) / (2.0 * r2)
    return n1, n2


def tangent_split(base, P):
    """Split P into tangential and normal parts at base."""
    p = _coeffs_of(P)
    n1, n2 = normal_frame(base)
    mu1 = float(p @ n1)
    mu2 = float(p @ n2)
    perp = mu1 * n1 + mu2 * n2
    return TangentSplit(par=p - perp, perp=perp, mu1=mu1, mu2=mu2)


def _check_tangent(base, X, tol):
    x = _coeffs_of(X)
    q = base.coeffs
    r2 = base.r_star ** 2
    xn = np.linalg.norm(x) + 1e-300
    t1 = abs(float(x @ q)) / (xn * _SQ2 * base.r_star)
    t2 = abs(float(x @ q2_coeffs(q))) / (xn * np.sqrt(2.0 / 3.0) * r2)
    if max(t1, t2) > tol:
        raise NotTangentError(
            f"vector is not tangential: normalized residuals ({t1:.2e}, {t2:.2e})")
    return x


def second_fundamental_form(base, X, Y, tol=1e-8):
    """Pi(X, Y) = -(1/2r*^2) tr(XY) Q* - (3/r*^4) tr(XYQ*) (Q*^2 - 2r*^2/3 I).

    X and Y must be tangential at base (both trace pairings below tol);
    the value is normal-valued, bilinear and symmetric.
    """
    x = _check_tangent(base, X, tol)
    y = _check_tangent(base, Y, tol)
    r2 = base.r_star ** 2
    Mx, My, Mq = to_matrix(x), to_matrix(y), base.matrix
    tr_xy = float(x @ y)
    tr_xyq = float(np.einsum("ij,jk,ki->", Mx, My, Mq))
    qhat = q2_coeffs(base.coeffs)
    return -tr_xy / (2.0 * r2) * base.coeffs - 3.0 / r2 ** 2 * tr_xyq * qhat


def harmonic_tension(base, grads, tol=1e-6):
    """Sum of Pi(d_i Q, d_i Q) over the gradient components.

    This is the right-hand side of the limiting harmonic-map equation: a
    tangent map Q with gradient components grads is harmonic iff its
    Laplacian minus this tension is zero.
    """
    g = np.atleast_2d(np.asarray([_coeffs_of(x) for x in grads], dtype=float))
    for row in g:
        _check_tangent(base, row, tol)
    r2 = base.r_star ** 2
    Mg = to_matrix(g)
    tr_gg = float(np.einsum("kij,kij->", Mg, Mg))
    tr_ggq = float(np.einsum("kij,kjl,li->", Mg, Mg, base.matrix))
    qhat = q2_coeffs(base.coeffs)
    return -tr_gg / (2.0 * r2) * base.coeffs - 3.0 / r2 ** 2 * tr_ggq * qhat


# ---------------------------------------------------------------------------
# fitted comparison constants (one pre-pass per parameter set, then frozen)

_WELL_CONST_CACHE = {}
_GAP_CONST_CACHE = {}


def _key(mp):
    return (mp.a2, mp.a4, mp.a6, mp.a6p)


def well_comparison_constant(mp, n_samples=10_000):
    """The constant C with zeta/d^2, |Psi|^2/d^2, f_b/d^2 in [1/C, C] near N.

    Fitted once per parameter set over n_samples perturbations with
    dist(Q, N) < 0.1 r*, then cached; a 5% safety margin is included.
    """
    key = _key(mp)
    if key not in _WELL_CONST_CACHE:
        rng = np.random.default_rng(74123)
        cw, _, _ = random_manifold_points(mp, n_samples, rng)
        d = rng.uniform(1e-3, 0.1, n_samples) * mp.r_star
        v = rng.standard_normal((n_samples, 5))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        c = cw + d[:, None] * v
        dist = dist_to_manifold(c, mp)
        keep = dist > 1e-6 * mp.r_star
        c, dist = c[keep], dist[keep]
        zeta, _ = wells_gap(c, mp)
        psi2 = np.einsum("ij,ij->i", bulk_gradient(c, mp), bulk_gradient(c, mp))
        fb = bulk_energy(c, mp)
        d2 = dist * dist
        ratios = np.concatenate([zeta / d2, psi2 / d2, fb / d2])
        C = max(ratios.max(), 1.0 / ratios.min()) * 1.05
        _WELL_CONST_CACHE[key] = float(C)
    return _WELL_CONST_CACHE[key]


def biaxial_gap_constant(mp, n_samples=10_000):
    """The constant c0 with f_b(Q) >= c0 max_i (1 - phi_i(Q))^2 for |Q| <= 3r*.

    Fitted once per parameter set (with a 5% shrink), then cached.
    """
    key = _key(mp)
    if key not in _GAP_CONST_CACHE:
        rng = np.random.default_rng(74124)
        c = rng.standard_normal((n_samples, 5))
        c *= (rng.uniform(0, 3 * mp.r_star, n_samples)
              / np.linalg.norm(c, axis=1))[:, None]
        phi1, phi2, phi0, _ = biaxiality(c, mp, 0.25)
        denom = np.maximum((1 - phi0) ** 2,
                           np.maximum((1 - phi1) ** 2, (1 - phi2) ** 2))
        fb = bulk_energy(c, mp)
        keep = denom > 1e-12
        c0 = (fb[keep] / denom[keep]).min() * 0.95
        _GAP_CONST_CACHE[key] = float(c0)
    return _GAP_CONST_CACHE[key]
