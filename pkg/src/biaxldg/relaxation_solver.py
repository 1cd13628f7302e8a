"""Finite-difference relaxation of the sextic tensor energy.

Domains are masked Cartesian grids: every shape lives on a full rectangular
array with node roles exterior / boundary / interior, where a node is
interior exactly when all of its face neighbours lie inside the shape.
Interior stencils therefore never read exterior garbage, and Dirichlet data
on boundary nodes stays bit-identical through relaxation because descent
updates are masked to the interior.

The energy is

    E_eps(Q) = sum over inside-inside edges of |dQ|^2 h^d / (2 h^2)
             + sum over inside nodes of f_b(Q) h^d / eps^2,

whose exact discrete gradient at an interior node is
h^d (-lap_h Q + eps^-2 Psi(Q)).  Relaxation is explicit gradient descent
with Armijo backtracking (halving, sufficient decrease 1e-4), so energy is
monotone along accepted steps by construction.
"""

import json
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import q8_topology as q8t
from .qtensor_core import (
    MaterialParams, bulk_energy, bulk_gradient, derive_params, from_matrix,
)
from .vacuum_manifold import dist_to_manifold, project_field


class StagnationError(Exception):
    """Backtracking collapsed; carries the best field reached so far."""

    def __init__(self, message, partial=None, info=None):
        super().__init__(message)
        self.partial = partial
        self.info = info


# ---------------------------------------------------------------------------
# domains

class Domain:
    """Masked Cartesian grid for one of the supported shapes.

    coords holds one 1D axis array per dimension (ij indexing); inside,
    interior and boundary are boolean node masks with
    inside = interior | boundary.
    """

    def __init__(self, kind, h, coords, inside, extents):
        self.kind = kind
        self.h = float(h)
        self.coords = tuple(np.asarray(c, dtype=float) for c in coords)
        self.dim = len(self.coords)
        self.inside = inside
        interior = inside.copy()
        for ax in range(self.dim):
            nb = np.ones_like(inside)
            sl_lo = [slice(None)] * self.dim
            sl_hi = [slice(None)] * self.dim
            sl_lo[ax], sl_hi[ax] = slice(1, None), slice(None, -1)
            nb[tuple(sl_hi)] &= inside[tuple(sl_lo)]
            nb[tuple(sl_lo)] &= inside[tuple(sl_hi)]
            # array edge counts as outside
            lo_face = [slice(None)] * self.dim
            lo_face[ax] = 0
            nb[tuple(lo_face)] = False
            hi_face = [slice(None)] * self.dim
            hi_face[ax] = -1
            nb[tuple(hi_face)] = False
            interior &= nb
        self.interior = interior
        self.boundary = inside & ~interior
        self.extents = dict(extents)

    @property
    def shape(self):
        return tuple(len(c) for c in self.coords)

    def grids(self):
        """Meshgrid coordinate arrays (ij indexing)."""
        return np.meshgrid(*self.coords, indexing="ij")

    def min_extent(self):
        return min(self.extents.values())


def _axis(n_half, h):
    n = int(round(n_half / h))
    if abs(n * h - n_half) > 1e-9 * max(1.0, n_half):
        raise ValueError(f"h = {h} does not divide the extent {n_half}")
    return np.arange(-n, n + 1) * h


def square2d(side, h):
    """Axis-aligned square [-side/2, side/2]^2; every grid node is inside."""
    ax = _axis(side / 2.0, h)
    inside = np.ones((len(ax), len(ax)), dtype=bool)
    return Domain("square2d", h, (ax, ax), inside, {"side": side})


def disk2d(radius, h):
    ax = _axis(radius, h)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    inside = X ** 2 + Y ** 2 <= radius ** 2 + 1e-12
    return Domain("disk2d", h, (ax, ax), inside, {"radius": radius})


def annulus2d(r_in, r_out, h):
    if not 0.0 < r_in < r_out:
        raise ValueError("need 0 < r_in < r_out")
    ax = _axis(r_out, h)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    rho2 = X ** 2 + Y ** 2
    inside = (rho2 <= r_out ** 2 + 1e-12) & (rho2 >= r_in ** 2 - 1e-12)
    return Domain("annulus2d", h, (ax, ax), inside,
                  {"r_in": r_in, "r_out": r_out, "width": (r_out - r_in)})


def box3d(sides, h):
    axes = tuple(_axis(s / 2.0, h) for s in sides)
    inside = np.ones(tuple(len(a) for a in axes), dtype=bool)
    return Domain("box3d", h, axes, inside,
                  {"sx": sides[0], "sy": sides[1], "sz": sides[2]})


def cylinder3d(radius, half_length, h):
    ax = _axis(radius, h)
    az = _axis(half_length, h)
    X, Y, _ = np.meshgrid(ax, ax, az, indexing="ij")
    inside = X ** 2 + Y ** 2 <= radius ** 2 + 1e-12
    return Domain("cylinder3d", h, (ax, ax, az), inside,
                  {"radius": radius, "half_length": half_length})


_DOMAIN_BUILDERS = {
    "square2d": lambda ext, h: square2d(ext["side"], h),
    "disk2d": lambda ext, h: disk2d(ext["radius"], h),
    "annulus2d": lambda ext, h: annulus2d(ext["r_in"], ext["r_out"], h),
    "box3d": lambda ext, h: box3d((ext["sx"], ext["sy"], ext["sz"]), h),
    "cylinder3d": lambda ext, h: cylinder3d(ext["radius"], ext["half_length"], h),
}


def rebuild_domain(kind, extents, h):
    if kind not in _DOMAIN_BUILDERS:
        raise ValueError(f"unknown domain kind {kind!r}")
    return _DOMAIN_BUILDERS[kind](extents, h)


# ---------------------------------------------------------------------------
# fields

class Field:
    """Tensor coefficients on a domain, with coherence length and material."""

    def __init__(self, domain, values, eps, params):
        values = np.array(values, dtype=float)  # owned: exterior gets zeroed
        if values.shape != domain.shape + (5,):
            raise ValueError(
                f"values shape {values.shape} != {domain.shape + (5,)}")
        if not 0.0 < eps < domain.min_extent() / 2.0:
            raise ValueError(
                f"eps = {eps} must lie in (0, {domain.min_extent() / 2.0})")
        self.domain = domain
        self.values = values
        self.eps = float(eps)
        self.params = params
        self.values[~domain.inside] = 0.0

    def copy(self):
        return Field(self.domain, self.values.copy(), self.eps, self.params)


def field_from_function(domain, fn, eps, params):
    """Evaluate fn(meshgrid coords) -> (..., 5) on the whole grid."""
    c = np.asarray(fn(*domain.grids()), dtype=float)
    return Field(domain, c, eps, params)


def constant_field(domain, coeffs, eps, params):
    c = np.broadcast_to(np.asarray(coeffs, dtype=float),
                        domain.shape + (5,)).copy()
    return Field(domain, c, eps, params)


# ---------------------------------------------------------------------------
# energy and gradient

def tree_sum(a):
    """Fixed-order pairwise reduction; bitwise reproducible for equal shapes."""
    flat = np.asarray(a, dtype=float).ravel()
    n = flat.size
    if n == 0:
        return 0.0
    while n > 1:
        half = n // 2
        if n % 2:
            flat = np.concatenate([flat[: n - 1].reshape(half, 2).sum(axis=1),
                                   flat[n - 1:n]])
        else:
            flat = flat.reshape(half, 2).sum(axis=1)
        n = flat.size
    return float(flat[0])


def _reduce(a, mode):
    return tree_sum(a) if mode == "deterministic" else float(np.sum(a))


@dataclass
class EnergyReport:
    total: float
    dirichlet: float
    bulk: float
    density: np.ndarray
    max_q: float
    max_dist: float


def _edge_terms(values, inside, dim):
    """Yields (axis, slice_lo, slice_hi, dv, mask) over inside-inside edges."""
    for ax in range(dim):
        lo = [slice(None)] * dim
        hi = [slice(None)] * dim
        lo[ax], hi[ax] = slice(None, -1), slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        dv = values[hi] - values[lo]
        mask = inside[hi] & inside[lo]
        yield ax, lo, hi, dv, mask


def assemble_energy(f, reduction="deterministic"):
    """Energy report with an exactly consistent per-node density.

    Each edge's Dirichlet energy is split half/half between its endpoints,
    so the density sums back to dirichlet + bulk up to roundoff.
    """
    dom, v, p = f.domain, f.values, f.params
    h, d = dom.h, dom.dim
    hd = h ** d
    dens_dir = np.zeros(dom.shape)
    e_dir = 0.0
    for _, lo, hi, dv, mask in _edge_terms(v, dom.inside, d):
        e2 = np.einsum("...k,...k->...", dv, dv) * mask
        e_dir += _reduce(e2, reduction)
        share = e2 / (4.0 * h * h)
        dens_dir[lo] += share
        dens_dir[hi] += share
    e_dir *= hd / (2.0 * h * h)
    fb = bulk_energy(v, p) * dom.inside
    e_bulk = _reduce(fb, reduction) * hd / f.eps ** 2
    density = dens_dir + fb / f.eps ** 2
    density[~dom.inside] = 0.0
    norms = np.linalg.norm(v, axis=-1)
    dists = dist_to_manifold(v[dom.inside], p)
    return EnergyReport(total=e_dir + e_bulk, dirichlet=e_dir, bulk=e_bulk,
                        density=density, max_q=float(norms[dom.inside].max()),
                        max_dist=float(dists.max()))


def _energy_value(values, f, reduction):
    """Total energy only (line-search inner loop)."""
    dom = f.domain
    h, d = dom.h, dom.dim
    e_dir = 0.0
    for _, lo, hi, dv, mask in _edge_terms(values, dom.inside, d):
        e_dir += _reduce(np.einsum("...k,...k->...", dv, dv) * mask, reduction)
    e_dir *= h ** d / (2.0 * h * h)
    fb = bulk_energy(values, f.params) * dom.inside
    return e_dir + _reduce(fb, reduction) * h ** d / f.eps ** 2


def _masked_laplacian(values, interior, dim):
    lap = -2.0 * dim * values
    for ax in range(dim):
        lap += np.roll(values, 1, axis=ax) + np.roll(values, -1, axis=ax)
    return lap * interior[..., None]


def energy_gradient(f):
    """Discrete L2 gradient h^d(-lap Q + eps^-2 Psi); zero off the interior."""
    dom = f.domain
    lap = _masked_laplacian(f.values, dom.interior, dom.dim) / dom.h ** 2
    psi = bulk_gradient(f.values, f.params) * dom.interior[..., None]
    return (dom.h ** dom.dim) * (-lap + psi / f.eps ** 2)


# ---------------------------------------------------------------------------
# relaxation

@dataclass
class SolveConfig:
    max_iters: int = 20_000
    grad_tol: float = 1e-3
    step_policy: str = "backtracking"   # or "fixed"
    reduction: str = "deterministic"    # or "fast"


@dataclass
class RelaxInfo:
    iterations: int = 0
    converged: bool = False
    final_energy: float = float("nan")
    final_residual: float = float("nan")
    energy_history: list = dataclass_field(default_factory=list)


_STIFFNESS_CACHE = {}


def bulk_stiffness(p, samples=512):
    """Largest bulk Hessian norm over |Q| <= 2 r*, by sampled differencing.

    Deterministic (fixed sampling sequence); cached per material.
    """
    key = (p.a2, p.a4, p.a6, p.a6p)
    if key in _STIFFNESS_CACHE:
        return _STIFFNESS_CACHE[key]
    rng = np.random.default_rng(20260825)
    c = rng.standard_normal((samples, 5))
    c *= (2.0 * p.r_star * rng.random((samples, 1)) ** 0.2
          / np.linalg.norm(c, axis=1, keepdims=True))
    delta = 1e-5 * (1.0 + 2.0 * p.r_star)
    worst = 0.0
    eye = np.eye(5)
    for row in c:
        J = np.empty((5, 5))
        for k in range(5):
            J[:, k] = (bulk_gradient(row + delta * eye[k], p)
                       - bulk_gradient(row - delta * eye[k], p)) / (2 * delta)
        lam = np.abs(np.linalg.eigvalsh(0.5 * (J + J.T))).max()
        worst = max(worst, float(lam))
    _STIFFNESS_CACHE[key] = worst
    return worst


def _ball_radius(f):
    """Radius of the invariant ball: max(sqrt(2) r*, boundary sup norm)."""
    ring = f.domain.inside & ~f.domain.interior
    bmax = 0.0
    if ring.any():
        bmax = float(np.linalg.norm(f.values[ring], axis=-1).max())
    return max(np.sqrt(2.0) * f.params.r_star, bmax)


def relax_with_info(f, cfg=None):
    """Gradient descent with Armijo backtracking; returns (field, info).

    The initial step is h²/(8 + h²·λ_bulk) with λ_bulk = eps^-2 times the
    sampled bulk stiffness — half the explicit-Euler stability limit of the
    linearized flow — and regrows by doubling after clean accepts.

    Accepted iterates are retracted onto the ball |Q| <= max(sqrt(2) r*,
    boundary sup): the radial retraction is 1-Lipschitz and the bulk term
    is radially non-decreasing out there, so the retraction never raises
    the energy, and even budget-capped runs return fields inside the ball
    that minimizers occupy.
    """
    cfg = cfg or SolveConfig()
    out = f.copy()
    dom = out.domain
    hd = dom.h ** dom.dim
    lam_bulk = bulk_stiffness(out.params) / out.eps ** 2
    step0 = dom.h ** 2 / (8.0 + dom.h ** 2 * lam_bulk)
    step = step0
    cap = _ball_radius(out)
    info = RelaxInfo()
    energy = _energy_value(out.values, out, cfg.reduction)
    info.energy_history.append(energy)
    for it in range(cfg.max_iters):
        G = energy_gradient(out)
        direction = G / hd
        residual = float(np.abs(direction).max())
        info.final_residual = residual
        if residual < cfg.grad_tol:
            info.converged = True
            break
        if cfg.step_policy == "fixed":
            out.values = out.values - step0 * direction
            energy = _energy_value(out.values, out, cfg.reduction)
        else:
            slope = _reduce(G * direction, cfg.reduction)
            backtracked = False
            while True:
                trial = out.values - step * direction
                e_new = _energy_value(trial, out, cfg.reduction)
                if e_new <= energy - 1e-4 * step * slope:
                    break
                backtracked = True
                step *= 0.5
                if step < 1e-14:
                    info.iterations = it
                    info.final_energy = energy
                    raise StagnationError(
                        f"backtracking collapsed at iteration {it} "
                        f"(energy {energy:.6g})", partial=out, info=info)
            out.values, energy = trial, e_new
            if not backtracked:
                step *= 2.0
        # retract overshooting nodes; the guard keeps rounding-level
        # excursions from forcing an energy re-evaluation every step
        norms = np.linalg.norm(out.values, axis=-1)
        over = norms > cap * (1.0 + 1e-12)
        if over.any():
            out.values[over] *= (cap / norms[over])[:, None]
            energy = _energy_value(out.values, out, cfg.reduction)
        info.iterations = it + 1
        info.energy_history.append(energy)
    info.final_energy = energy
    return out, info


def relax(f, cfg=None):
    """Relax a field; see relax_with_info for the policy details."""
    out, _ = relax_with_info(f, cfg)
    return out


# ---------------------------------------------------------------------------
# boundary / initial data builders

def _rep_frames(tag, theta):
    """Frame vector arrays (n, m) of the explicit class representatives."""
    z = np.zeros_like(theta)
    o = np.ones_like(theta)
    if tag == "H1":
        n = np.stack([o, z, z], axis=-1)
        m = np.stack([z, np.cos(theta / 2), np.sin(theta / 2)], axis=-1)
    elif tag == "H2":
        n = np.stack([np.cos(theta / 2), z, np.sin(theta / 2)], axis=-1)
        m = np.stack([z, o, z], axis=-1)
    elif tag == "H3":
        n = np.stack([np.cos(theta / 2), np.sin(theta / 2), z], axis=-1)
        m = np.stack([-np.sin(theta / 2), np.cos(theta / 2), z], axis=-1)
    elif tag == "H4":
        n = np.stack([o, z, z], axis=-1)
        m = np.stack([z, np.cos(theta), np.sin(theta)], axis=-1)
    else:
        raise ValueError(f"no representative map for tag {tag!r}")
    return n, m


def representative_coeffs(tag, p, theta):
    """Coefficients of the class-representative loop at angles theta."""
    n, m = _rep_frames(tag, np.asarray(theta, dtype=float))
    nn = np.einsum("...i,...j->...ij", n, n)
    mm = np.einsum("...i,...j->...ij", m, m)
    return from_matrix(p.r_star * (nn - mm))


def eta_profile(rho, eps):
    """Linear core profile: rho/eps inside the core, 1 outside."""
    return np.clip(np.asarray(rho, dtype=float) / eps, 0.0, 1.0)


def hedgehog_2d(tag, eps, radius, p, h):
    """Radial competitor field eta_eps(|x|) P(arg x) on the disk.

    The boundary trace is exactly the class representative, phi_0 equals
    eta_eps(|x|) pointwise, and the field sits on the wells outside the
    eps-core, so its energy grows like E(class) log(r/eps) plus a constant.
    """
    if tag == "H0":
        raise ValueError(
            "trivial boundary class: extend the constant boundary value "
            "instead of building a hedgehog")
    if tag not in ("H1", "H2", "H3", "H4"):
        raise ValueError(f"unknown class tag {tag!r}")
    dom = disk2d(radius, h)

    def fn(X, Y):
        theta = np.arctan2(Y, X)
        eta = eta_profile(np.hypot(X, Y), eps)
        return eta[..., None] * representative_coeffs(tag, p, theta)

    return field_from_function(dom, fn, eps, p)


def _quat_tilt_i(theta):
    """Quaternion path with deck i: cos(t/4) + sin(t/4) i."""
    return np.stack([np.cos(theta / 4), np.sin(theta / 4),
                     np.zeros_like(theta), np.zeros_like(theta)], axis=-1)


def _quat_tilt_j(theta):
    """Quaternion path with deck -j: cos(t/4) - sin(t/4) j."""
    return np.stack([np.cos(theta / 4), np.zeros_like(theta),
                     -np.sin(theta / 4), np.zeros_like(theta)], axis=-1)


def split_pair_2d(tag, eps, radius, p, h, separation=0.3):
    """Two-core field whose boundary loop is in class H3 or H4.

    The H3 field multiplies one quaternion strand winding around each core
    (decks i and -j); the branch cuts of the two polar angles are collinear
    rays pointing away from each other, so the cut jumps are exact deck
    moves and the projected tensor field is continuous off the cores.  The
    cores are regularized by linear profiles, one per core.  Relaxing these
    fields lets each core carry a cheap single-tilt defect, realizing the
    concatenation-stable weight 2 kappa* instead of the one-core cost.
    """
    if not 0.0 < separation < radius / 2.0:
        raise ValueError("separation must lie in (0, radius/2)")
    dom = disk2d(radius, h)

    def fn(X, Y):
        return split_pair_coeffs(tag, X, Y, eps, p, separation)

    return field_from_function(dom, fn, eps, p)


def split_pair_coeffs(tag, X, Y, eps, p, separation):
    """Coefficients of the two-core competitor at the points (X, Y).

    Exposed separately so three-dimensional initial data can extrude the
    cross-section with a z-dependent separation.
    """
    if tag not in ("H3", "H4"):
        raise ValueError("split cores exist for classes H3 and H4 only")
    th1 = np.mod(np.arctan2(Y, X - separation), 2.0 * np.pi)
    th2 = np.arctan2(Y, X + separation)
    if tag == "H3":
        quat = q8t.quat_mul(_quat_tilt_i(th1), _quat_tilt_j(th2))
        n, m = q8t._cover_nm(quat)
    else:
        phi = 0.5 * (th1 + th2)
        z = np.zeros_like(phi)
        n = np.stack([np.ones_like(phi), z, z], axis=-1)
        m = np.stack([z, np.cos(phi), np.sin(phi)], axis=-1)
    nn = np.einsum("...i,...j->...ij", n, n)
    mm = np.einsum("...i,...j->...ij", m, m)
    c = from_matrix(p.r_star * (nn - mm))
    eta = (eta_profile(np.hypot(X - separation, Y), eps)
           * eta_profile(np.hypot(X + separation, Y), eps))
    return eta[..., None] * c


def _interp_loop(loop, theta):
    """Piecewise-linear loop samples at angles theta, reprojected to wells."""
    c = loop.coeffs
    N = len(loop)
    t = np.mod(np.asarray(theta, dtype=float), 2.0 * np.pi) * N / (2.0 * np.pi)
    i0 = np.floor(t).astype(int) % N
    i1 = (i0 + 1) % N
    w = (t - np.floor(t))[..., None]
    return (1.0 - w) * c[i0] + w * c[i1]


def cylinder_boundary(loop, radius, half_length, eps, p, h):
    """z-independent lateral data loop(θ) with hedgehog caps, as a Field.

    The classified loop is interpolated in angle, reprojected onto the
    wells, and scaled by the linear core profile in the cross-section; the
    same construction fills the interior as initial guess, so relaxation
    starts from a straight line-defect candidate along the axis.
    """
    tag = q8t.classify(loop, p).tag
    dom = cylinder3d(radius, half_length, h)

    def fn(X, Y, Z):
        theta = np.arctan2(Y, X)
        raw = _interp_loop(loop, theta)
        flat = project_field(raw.reshape(-1, 5), p).reshape(raw.shape)
        eta = eta_profile(np.hypot(X, Y), eps)
        return eta[..., None] * flat

    out = field_from_function(dom, fn, eps, p)
    out.boundary_tag = tag
    return out


# ---------------------------------------------------------------------------
# diagnostics

def _central_gradients(values, interior, h, dim):
    """Central-difference spatial derivatives, zero outside the interior."""
    grads = []
    for ax in range(dim):
        g = (np.roll(values, -1, axis=ax) - np.roll(values, 1, axis=ax)) / (2 * h)
        grads.append(g * interior[..., None])
    return grads


def monotonicity_profile(f, center, radii, density=None, reduction="deterministic"):
    """The profile rho -> E_eps(B_rho(center)) / rho on the node set."""
    dom = f.domain
    if density is None:
        density = assemble_energy(f, reduction).density
    mesh = dom.grids()
    dist2 = sum((g - c) ** 2 for g, c in zip(mesh, center))
    out = []
    for rho in radii:
        ball = (dist2 <= rho ** 2) & dom.inside
        out.append(_reduce(density * ball, reduction) * dom.h ** dom.dim / rho)
    return np.array(out)


def pohozaev_residual(f, center, rho, reduction="deterministic"):
    """Normalized defect of the scaling identity on a discrete ball.

    Compares the flux of (x - x0) . T through the ball's face boundary with
    the volume integral of d·e_eps - |∇Q|², where T = e_eps I - ∇Q ⊗ ∇Q is
    the stress tensor; both sides use the same central-difference energy
    density, and the output is |flux - volume| / E_total.
    """
    dom, v, p = f.domain, f.values, f.params
    h, d = dom.h, dom.dim
    grads = _central_gradients(v, dom.interior, h, d)
    grad2 = sum(np.einsum("...k,...k->...", g, g) for g in grads)
    e_node = 0.5 * grad2 + bulk_energy(v, p) * dom.inside / f.eps ** 2
    mesh = dom.grids()
    dist2 = sum((g - c) ** 2 for g, c in zip(mesh, center))
    ball = (dist2 <= rho ** 2) & dom.interior
    volume = _reduce((d * e_node - grad2) * ball, reduction) * h ** d
    flux = 0.0
    for ax in range(d):
        for orient in (+1, -1):
            nb = np.roll(ball, -orient, axis=ax)
            faces = ball & ~nb
            if not faces.any():
                continue
            xm = [mesh[a][faces] - center[a] for a in range(d)]
            xm[ax] += orient * h / 2.0
            here = tuple(np.argwhere(faces).T)
            other = list(here)
            other[ax] = other[ax] + orient
            other = tuple(other)
            e_avg = 0.5 * (e_node[here] + e_node[other])
            term = xm[ax] * e_avg
            for b in range(d):
                ga = 0.5 * (grads[ax][here] + grads[ax][other])
                gb = 0.5 * (grads[b][here] + grads[b][other])
                term -= xm[b] * np.einsum("ik,ik->i", ga, gb)
            flux += _reduce(term, reduction) * orient * h ** (d - 1)
    total = assemble_energy(f, reduction).total
    return abs(flux - volume) / max(total, 1e-300)


def stress_divergence_sup(f):
    """Sup norm of the discrete divergence of the stress tensor."""
    dom, v, p = f.domain, f.values, f.params
    h, d = dom.h, dom.dim
    grads = _central_gradients(v, dom.interior, h, d)
    grad2 = sum(np.einsum("...k,...k->...", g, g) for g in grads)
    e_node = 0.5 * grad2 + bulk_energy(v, p) * dom.inside / f.eps ** 2
    deep = dom.interior.copy()
    for ax in range(d):
        deep &= np.roll(dom.interior, 1, axis=ax) & np.roll(dom.interior, -1, axis=ax)
    worst = 0.0
    for jx in range(d):
        div = np.zeros(dom.shape)
        for ix in range(d):
            T = (e_node if ix == jx else 0.0) - np.einsum(
                "...k,...k->...", grads[ix], grads[jx])
            div += (np.roll(T, -1, axis=ix) - np.roll(T, 1, axis=ix)) / (2 * h)
        if deep.any():
            worst = max(worst, float(np.abs(div[deep]).max()))
    return worst


def diagnostics(f, centers=(), radii=(), region=None, mono_tol=None,
                reduction="deterministic"):
    """Near-critical-point health record.

    Returns per-center E(B_rho)/rho profiles with a monotonicity flag
    (tolerance 5 h E_total unless given), normalized scaling-identity
    residuals at the largest radius, the sup of the discrete stress
    divergence, and the sup of dist(Q, wells) over a region (default: the
    interior).
    """
    report = assemble_energy(f, reduction)
    dom = f.domain
    tol = mono_tol if mono_tol is not None else 5.0 * dom.h * report.total
    profiles, monotone, pohozaev = [], [], []
    for center in centers:
        prof = monotonicity_profile(f, center, radii, report.density, reduction)
        profiles.append(prof)
        drops = np.diff(prof)
        monotone.append(bool((drops >= -tol).all()))
        pohozaev.append(pohozaev_residual(f, center, max(radii), reduction))
    if region is None:
        region = dom.interior
    sup_dist = float(dist_to_manifold(f.values[region], f.params).max()) \
        if region.any() else 0.0
    return {
        "report": report,
        "profiles": profiles,
        "monotone": monotone,
        "pohozaev": pohozaev,
        "stress_div_sup": stress_divergence_sup(f),
        "sup_dist": sup_dist,
        "mono_tol": tol,
    }


# ---------------------------------------------------------------------------
# snapshots

_MAGIC = "biaxldg-field-v1"


def write_snapshot(path, f):
    """One JSON header line + raw little-endian float64 node block."""
    header = {
        "magic": _MAGIC,
        "kind": f.domain.kind,
        "extents": f.domain.extents,
        "h": f.domain.h,
        "eps": f.eps,
        "params": [f.params.a2, f.params.a4, f.params.a6, f.params.a6p],
        "shape": list(f.values.shape),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(f.values.astype("<f8").tobytes())


def read_snapshot(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("magic") != _MAGIC:
            raise ValueError(f"{path} is not a field snapshot")
        raw = fh.read()
    values = np.frombuffer(raw, dtype="<f8").reshape(header["shape"]).copy()
    dom = rebuild_domain(header["kind"], header["extents"], header["h"])
    params = derive_params(*header["params"])
    return Field(dom, values, header["eps"], params)


def export_field_csv(path, f):
    """Inside nodes as CSV rows: coordinates followed by five coefficients."""
    dom = f.domain
    mesh = dom.grids()
    cols = [g[dom.inside] for g in mesh] + [f.values[dom.inside][:, k]
                                            for k in range(5)]
    names = ["x", "y", "z"][: dom.dim] + [f"c{k+1}" for k in range(5)]
    data = np.column_stack(cols)
    np.savetxt(path, data, delimiter=",", header=",".join(names),
               comments="", fmt="%.17g")
