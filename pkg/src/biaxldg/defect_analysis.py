"""Defect extraction and certified lower bounds for relaxed tensor fields.

The biaxiality scalar phi_0 vanishes exactly where a field leaves the
well manifold through one of the uniaxial cones, so its sublevel sets
locate defect cores without any gauge choice.  This module turns that
observation into tooling:

* boolean defect masks with connected-component reports,
* the rescaled measure E_eps(cell)/log(1/eps) and its ball densities,
* the clearing-out test (small energy on a ball forces a defect-free
  half ball),
* a covering-radius functional for defect sets,
* the vortex ball-growth process, which converts a disjoint system of
  seed balls into a certified logarithmic lower bound with a replayable
  merge trace, and
* per-slice lower bounds that combine ring topology with the measured
  energy.

Everything consumes the Field/EnergyReport types of relaxation_solver
and the loop classification of q8_topology.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import q8_topology as q8t
from .relaxation_solver import assemble_energy
from .vacuum_manifold import biaxiality, dist_to_manifold, project_field


class CannotClassifyError(ValueError):
    """A bounding circle meets a defect core, so its class is undefined."""


class BallPreconditionError(ValueError):
    """Initial ball system violates the geometry the growth bound needs."""


# ---------------------------------------------------------------------------
# defect masks


@dataclass
class MaskComponent:
    label: int
    size: int
    centroid: np.ndarray
    extent: np.ndarray        # (dim, 2) coordinate bounding box
    nodes: np.ndarray         # (size, dim) node coordinates


@dataclass
class DefectMask:
    threshold: float
    mask: np.ndarray
    components: list


def defect_mask(f, threshold=0.5, tau=0.25):
    """Interior nodes with phi_0 below the threshold, grouped by adjacency.

    The default threshold 0.5 cuts the linear core profile of the model
    defects at half height; any value in (0, 1) keeps the mask inside the
    cores for the fields this package builds.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    dom = f.domain
    phi = np.full(dom.shape, np.inf)
    sub = f.values[dom.interior]
    if sub.size:
        phi[dom.interior] = biaxiality(sub, f.params, tau)[2]
    mask = dom.interior & (phi < threshold)
    # face adjacency only: the default cross-shaped structuring element
    labels, count = ndimage.label(mask)
    mesh = dom.grids()
    comps = []
    for lab in range(1, count + 1):
        sel = labels == lab
        nodes = np.stack([g[sel] for g in mesh], axis=-1)
        comps.append(MaskComponent(
            label=lab, size=int(sel.sum()),
            centroid=nodes.mean(axis=0),
            extent=np.stack([nodes.min(axis=0), nodes.max(axis=0)], axis=-1),
            nodes=nodes))
    return DefectMask(threshold=float(threshold), mask=mask, components=comps)


def write_mask_csv(path, dm):
    """One row per component: label, size, centroid, bounding box."""
    dim = dm.components[0].nodes.shape[1] if dm.components else dm.mask.ndim
    ax = "xyz"[:dim]
    head = ["label", "size"] + [f"centroid_{a}" for a in ax] \
        + [f"{a}_{side}" for a in ax for side in ("min", "max")]
    rows = []
    for c in dm.components:
        rows.append([c.label, c.size, *c.centroid, *c.extent.ravel()])
    with open(path, "w") as fh:
        fh.write(",".join(head) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


# ---------------------------------------------------------------------------
# rescaled measures


@dataclass
class MeasureGrid:
    origin: np.ndarray
    cell: float
    masses: np.ndarray
    eps: float
    total: float

    @property
    def dim(self):
        return self.masses.ndim


def rescaled_measure(f, cell):
    """Cell masses E_eps(cell)/log(1/eps) on a coarse partition.

    Every inside node is binned into exactly one cell, so the masses add
    up to E_eps(Omega)/log(1/eps) with no quadrature slack.
    """
    if not f.eps < 0.5:
        raise ValueError("the rescaling log(1/eps) needs eps < 1/2")
    if cell <= 0.0:
        raise ValueError("cell size must be positive")
    dom = f.domain
    rep = assemble_energy(f)
    scale = dom.h ** dom.dim / math.log(1.0 / f.eps)
    origin = np.array([c[0] for c in dom.coords])
    shape = tuple(int(np.ceil((c[-1] - c[0]) / cell)) + 1 for c in dom.coords)
    masses = np.zeros(shape)
    mesh = dom.grids()
    idx = tuple(((g[dom.inside] - origin[k]) / cell).astype(int)
                for k, g in enumerate(mesh))
    np.add.at(masses, idx, rep.density[dom.inside] * scale)
    return MeasureGrid(origin=origin, cell=float(cell), masses=masses,
                       eps=f.eps, total=float(masses.sum()))


def mass_in_ball(m, center, radius):
    """Total mass of cells whose centers lie in the closed ball."""
    center = np.asarray(center, dtype=float)
    grids = np.meshgrid(*[m.origin[k] + m.cell * (np.arange(n) + 0.5)
                          for k, n in enumerate(m.masses.shape)],
                        indexing="ij")
    d2 = sum((g - center[k]) ** 2 for k, g in enumerate(grids))
    return float(m.masses[d2 <= radius ** 2].sum())


def write_measure_csv(path, m):
    idx = np.stack(np.nonzero(np.ones_like(m.masses, dtype=bool)), axis=-1)
    centers = m.origin + m.cell * (idx + 0.5)
    ax = "xyz"[:m.dim]
    with open(path, "w") as fh:
        fh.write(",".join(ax) + ",mass\n")
        for row, mass in zip(centers, m.masses.ravel()):
            fh.write(",".join(f"{v:.17g}" for v in row)
                     + f",{mass:.17g}\n")


@dataclass
class DensityEstimate:
    theta: float
    radii: np.ndarray
    profile: np.ndarray
    eps: float

    def __float__(self):
        return self.theta


def density_estimate(m, x, radii):
    """Ball densities mu(B_r(x))/(2r) and their resolved line density.

    At finite eps the profile of a straight defect line is depressed by
    the factor log(r/eps)/log(1/eps), so the limiting density Theta is
    read off as the slope of the profile against that factor rather than
    by extrapolating the raw profile to r = 0.  For line-defect fields
    the result lands near kappa* or 2 kappa*.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    if radii.size < 2:
        raise ValueError("need at least two radii to extrapolate")
    prof = np.array([mass_in_ball(m, x, r) / (2.0 * r) for r in radii])
    t = np.log(radii / m.eps) / np.log(1.0 / m.eps)
    A = np.stack([t, np.ones_like(t)], axis=-1)
    slope, _ = np.linalg.lstsq(A, prof, rcond=None)[0]
    return DensityEstimate(theta=float(slope), radii=radii, profile=prof,
                           eps=m.eps)


def slab_density(m, x, r):
    """Line density of the whole defect bundle through x at scale r.

    mu(B_r(x))/(2r) divided by the saturating factor log(r/eps)/log(1/eps).
    The window regression of density_estimate reads the class tension of
    the circles in the window, which for a ball enclosing a bound
    multi-core bundle is the single-loop energy of the product class and
    overshoots the split price of the bundle.  The normalized one-ball
    value prices the bundle by everything from the cores out to r, which
    is the quantity that becomes the quantized line density in the small
    eps limit; on a thin single line the two estimators agree up to the
    core constant.
    """
    if r <= m.eps:
        raise ValueError("ball must be larger than the core scale")
    t = math.log(r / m.eps) / math.log(1.0 / m.eps)
    return mass_in_ball(m, x, r) / (2.0 * r) / t


# ---------------------------------------------------------------------------
# clearing out


@dataclass
class ClearingOut:
    verdict: str              # "bounded" or "hypothesis-failed"
    value: float              # E(B_{r/2})/r when bounded, else ball energy
    ball_energy: float
    threshold: float
    radius: float


def _ball_energy(f, density, center, radius):
    mesh = f.domain.grids()
    center = np.asarray(center, dtype=float)
    d2 = sum((g - center[k]) ** 2 for k, g in enumerate(mesh))
    sel = d2 <= radius ** 2
    return float(density[sel].sum()) * f.domain.h ** f.domain.dim, sel


def clearing_out(f, x, r, eta0, eps_bar0=0.5):
    """Small-energy test: E(B_r) <= eta0 r log(r/eps) caps E(B_{r/2})/r.

    Returns hypothesis-failed with the measured ball energy when the
    premise does not hold; otherwise the bounded verdict carries the
    half-ball energy per unit radius, the quantity the clearing-out
    property controls.
    """
    if not f.eps <= eps_bar0 * r:
        raise ValueError(f"need eps <= {eps_bar0} r for the clearing-out test")
    dom = f.domain
    center = np.asarray(x, dtype=float)
    d2 = sum((g - center[k]) ** 2 for k, g in enumerate(dom.grids()))
    if not dom.inside[d2 <= r ** 2].all():
        raise ValueError("the ball sticks out of the domain")
    rep = assemble_energy(f)
    e_ball, sel = _ball_energy(f, rep.density, x, r)
    threshold = eta0 * r * math.log(r / f.eps)
    if e_ball > threshold:
        return ClearingOut("hypothesis-failed", e_ball, e_ball, threshold, r)
    e_half, _ = _ball_energy(f, rep.density, x, 0.5 * r)
    return ClearingOut("bounded", e_half / r, e_ball, threshold, r)


# ---------------------------------------------------------------------------
# covering radius


def _enclosing_ball(pts):
    """Deterministic covering ball: two-pass seed, then grow to cover.

    Not the minimal ball, but always a cover and never farther than a
    small factor from optimal, which keeps the functional a valid upper
    bound for the covering radius.
    """
    p0 = pts[0]
    p1 = pts[np.argmax(((pts - p0) ** 2).sum(axis=1))]
    p2 = pts[np.argmax(((pts - p1) ** 2).sum(axis=1))]
    center = 0.5 * (p1 + p2)
    radius = 0.5 * float(np.sqrt(((p1 - p2) ** 2).sum()))
    for _ in range(64):
        d = np.sqrt(((pts - center) ** 2).sum(axis=1))
        k = int(np.argmax(d))
        if d[k] <= radius * (1.0 + 1e-12) + 1e-15:
            break
        # shift toward the straggler just enough to absorb it
        shift = 0.5 * (d[k] - radius)
        center = center + shift * (pts[k] - center) / d[k]
        radius += shift * (1.0 + 1e-12)
    return center, radius


def radius_of_set(nodes, h):
    """Greedy upper bound for the covering radius of a set of grid nodes.

    Each cluster is covered by one ball (enclosing radius plus h/2 of
    cell slack); nearest clusters merge while merging does not increase
    the covering sum, which glues grid-adjacent nodes into single balls
    but keeps well-separated groups apart.  The answer is capped by the
    one-ball cover, so it never exceeds the diameter of the set.
    """
    pts = np.asarray(nodes, dtype=float)
    if pts.size == 0:
        return 0.0
    pts = np.atleast_2d(pts)
    if len(pts) == 1:
        return 0.5 * h
    clusters = [pts[k:k + 1] for k in range(len(pts))]
    radii = [0.5 * h] * len(pts)
    while len(clusters) > 1:
        best, pair = None, None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                gap = np.sqrt(((clusters[i][:, None, :]
                                - clusters[j][None, :, :]) ** 2)
                              .sum(axis=-1)).min()
                if best is None or gap < best:
                    best, pair = gap, (i, j)
        i, j = pair
        merged = np.concatenate([clusters[i], clusters[j]])
        _, r_new = _enclosing_ball(merged)
        r_new += 0.5 * h
        if r_new > radii[i] + radii[j] + 1e-12:
            break
        clusters = [c for k, c in enumerate(clusters) if k not in pair] \
            + [merged]
        radii = [r for k, r in enumerate(radii) if k not in pair] + [r_new]
    total = float(sum(radii))
    _, one_ball = _enclosing_ball(pts)
    return min(total, one_ball + 0.5 * h)


# ---------------------------------------------------------------------------
# ball growth


@dataclass
class Ball:
    center: np.ndarray
    radius: float
    seed: float
    initial_sum: float = None   # sum of constituent initial radii
    ident: int = 0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.initial_sum is None:
            self.initial_sum = self.radius


@dataclass
class BallSystem:
    balls: list
    e_star: float

    def alpha(self):
        vals = [math.log(b.radius / b.seed) for b in self.balls]
        if max(vals) - min(vals) > 1e-10:
            raise ValueError("expansion parameter differs across balls")
        return vals[0]


def _pair_gap(balls):
    best, pair = None, None
    for i in range(len(balls)):
        for j in range(i + 1, len(balls)):
            gap = float(np.linalg.norm(balls[i].center - balls[j].center)) \
                - balls[i].radius - balls[j].radius
            if best is None or gap < best:
                best, pair = gap, (i, j)
    return (math.inf, None) if best is None else (best, pair)


def _boundary_gap(balls, r):
    return min(r - float(np.linalg.norm(b.center)) - b.radius for b in balls)


def _merge_pair(balls, i, j, alpha, trace, next_id):
    a, b = balls[i], balls[j]
    d = float(np.linalg.norm(a.center - b.center))
    if d < 1e-15:
        center = a.center.copy()
        radius = max(a.radius, b.radius)
    else:
        u = (b.center - a.center) / d
        lo = min(-a.radius, d - b.radius)
        hi = max(a.radius, d + b.radius)
        center = a.center + 0.5 * (lo + hi) * u
        radius = 0.5 * (hi - lo)
    radius = min(radius, a.radius + b.radius)   # enclosing, but never more
    seed = radius * math.exp(-alpha)
    merged = Ball(center, radius, seed,
                  initial_sum=a.initial_sum + b.initial_sum,
                  ident=next_id)
    if seed > merged.initial_sum + 1e-9:
        raise AssertionError("seed grew past the initial covering sum")
    trace.append({"time": alpha, "type": "merge",
                  "members": [a.ident, b.ident],
                  "radius": radius, "seed": seed})
    return [x for k, x in enumerate(balls) if k not in (i, j)] + [merged]


def _set_alpha(balls, alpha):
    for b in balls:
        b.radius = b.seed * math.exp(alpha)


def ball_construction(initial, lam, r, d_alpha=1e-3):
    """Grow, merge, and cash out the vortex-ball lower bound.

    All radii expand keeping log(radius/seed) common; tangencies (located
    by stepping in the expansion parameter and bisecting the gap sign
    change to 1e-10) merge the offending pair into the smallest enclosing
    ball, whose seed is fixed by continuity of the expansion parameter —
    so seeds add and the final seed never exceeds the initial covering
    sum.  The process ends when the surviving ball touches the circle of
    radius r, and the certified bound is E* log(radius/seed) there.
    Simultaneous contacts merge lowest-identity pairs first.
    """
    if lam < 19.0 / 40.0 or lam > 19.0 / 20.0:
        raise ValueError("the expansion factor needs 19/40 <= lambda <= 19/20")
    balls = [Ball(b.center.copy(), b.radius, b.seed, b.initial_sum, k)
             for k, b in enumerate(initial.balls)]
    for b in balls:
        if float(np.linalg.norm(b.center)) + b.radius > r / 20.0 + 1e-12:
            raise BallPreconditionError(
                "initial balls must sit inside the twentieth of the domain")
    alpha = BallSystem(balls, initial.e_star).alpha()
    trace = []
    next_id = len(balls)
    # preprocessing: merge overlapping closures before growing
    while len(balls) > 1:
        gap, pair = _pair_gap(balls)
        if gap > 0.0:
            break
        balls = _merge_pair(balls, *pair, alpha, trace, next_id)
        next_id += 1
    while True:
        if _boundary_gap(balls, r) <= 1e-12:
            break
        a0, a1 = alpha, alpha + d_alpha
        _set_alpha(balls, a1)
        hit_boundary = _boundary_gap(balls, r) <= 0.0
        gap, pair = _pair_gap(balls)
        if hit_boundary or gap <= 0.0:
            # bisect the first sign change inside (a0, a1)
            for _ in range(200):
                if a1 - a0 <= 1e-10:
                    break
                mid = 0.5 * (a0 + a1)
                _set_alpha(balls, mid)
                if _boundary_gap(balls, r) <= 0.0 \
                        or _pair_gap(balls)[0] <= 0.0:
                    a1 = mid
                else:
                    a0 = mid
            alpha = a1
            _set_alpha(balls, alpha)
            if _pair_gap(balls)[0] <= 1e-12 and len(balls) > 1:
                while len(balls) > 1:
                    gap, pair = _pair_gap(balls)
                    if gap > 1e-12:
                        break
                    balls = _merge_pair(balls, *pair, alpha, trace, next_id)
                    next_id += 1
                continue
            break   # boundary hit
        alpha = a1
    survivor = max(balls, key=lambda b: float(np.linalg.norm(b.center))
                   + b.radius)
    trace.append({"time": alpha, "type": "boundary-hit",
                  "members": [survivor.ident],
                  "radius": survivor.radius, "seed": survivor.seed})
    bound = initial.e_star * math.log(survivor.radius / survivor.seed)
    return bound, trace


def write_trace_json(path, trace, meta=None):
    payload = {"events": trace}
    if meta:
        payload.update(meta)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# ring sampling and slice bounds


def interp_at(f, pts):
    """Multilinear samples of the coefficient field at arbitrary points."""
    dom = f.domain
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    rel = (pts - np.array([c[0] for c in dom.coords])) / dom.h
    base = np.floor(rel).astype(int)
    for k, n in enumerate(dom.shape):
        base[:, k] = np.clip(base[:, k], 0, n - 2)
    w = rel - base
    out = np.zeros((len(pts), 5))
    for corner in range(2 ** dom.dim):
        bits = [(corner >> k) & 1 for k in range(dom.dim)]
        weight = np.ones(len(pts))
        for k, bit in enumerate(bits):
            weight = weight * (w[:, k] if bit else 1.0 - w[:, k])
        idx = tuple(base[:, k] + bits[k] for k in range(dom.dim))
        out += weight[:, None] * f.values[idx]
    return out


def _frame_perp(v):
    """Two unit vectors spanning the plane orthogonal to v (3-vector)."""
    v = v / np.linalg.norm(v)
    a = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(v, a)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(v, e1)


def ring_loop(f, center, rho, n=256, normal=None, dist_tol=0.4):
    """Classifiable loop of well points sampled on a circle in the field.

    In two dimensions the circle lies in the plane; in three it spans the
    plane orthogonal to the given normal.  Samples farther than dist_tol
    from the wells (relative to r*) mean the circle crosses a core and
    cannot carry a class.
    """
    center = np.asarray(center, dtype=float)
    th = 2.0 * np.pi * np.arange(n) / n
    if f.domain.dim == 2:
        pts = center + rho * np.stack([np.cos(th), np.sin(th)], axis=-1)
    else:
        if normal is None:
            raise ValueError("3-d ring sampling needs a normal direction")
        e1, e2 = _frame_perp(np.asarray(normal, dtype=float))
        pts = center + rho * (np.cos(th)[:, None] * e1
                              + np.sin(th)[:, None] * e2)
    c = interp_at(f, pts)
    if dist_to_manifold(c, f.params).max() > dist_tol * f.params.r_star:
        raise CannotClassifyError(
            "circle passes through a defect core; move or shrink it")
    return q8t.NLoop.from_coeffs(project_field(c, f.params), f.params)


_CFIT_CACHE = {}


def calibration_constant(p, h=1.0 / 48.0):
    """Slice-bound offset from the three canonical single-defect slices.

    Each eps in {0.1, 0.05, 0.025} model slice is relaxed on a fixed
    budget and its deficit (main term minus measured combination) is
    recorded; the constant is the worst deficit with a ten percent
    margin.  Relaxed slices measure less energy than raw competitors, so
    calibrating on them keeps the certificate valid for both; the value
    is cached per material so repeated certificates are stable.
    """
    from .relaxation_solver import (SolveConfig, StagnationError,
                                    hedgehog_2d, relax)
    key = (p.a2, p.a4, p.a6, p.a6p)
    if key in _CFIT_CACHE:
        return _CFIT_CACHE[key]
    worst = -math.inf
    cfg = SolveConfig(max_iters=1200, grad_tol=1e-3)
    for eps in (0.1, 0.05, 0.025):
        f = hedgehog_2d("H1", eps, 1.0, p, h)
        try:
            f = relax(f, cfg)
        except StagnationError as stalled:
            f = stalled.partial
        out = slice_lower_bound(f, 0.9, c_fit=0.0)
        worst = max(worst, out.main_term - out.measured)
    c_fit = worst + 0.1 * abs(worst)
    _CFIT_CACHE[key] = c_fit
    return c_fit


@dataclass
class SliceBound:
    main_term: float
    measured: float
    c_fit: float
    certified: bool
    tag: str
    phi_min: float
    e_star: float
    ball_energy: float
    ring_energy: float

    def __float__(self):
        return self.main_term - self.c_fit


def slice_lower_bound(f2d, r, tau=0.25, n_ring=256, c_fit=None):
    """Topological lower bound for the energy inside one 2-d circle.

    The class of the projected boundary circle prices the main term
    E*(class) (min phi_0)^2 log(r/eps); the measured side is the ball
    energy plus (4 log 5) times the circle's line energy, and the
    certificate asks measured >= main - C_fit with the calibrated offset.
    """
    if f2d.domain.dim != 2:
        raise ValueError("slice bounds live on 2-d fields")
    if not f2d.eps < 0.5 * r:
        raise ValueError("need eps < r/2 to separate the core scales")
    p = f2d.params
    th = 2.0 * np.pi * np.arange(n_ring) / n_ring
    pts = r * np.stack([np.cos(th), np.sin(th)], axis=-1)
    c = interp_at(f2d, pts)
    phi0 = biaxiality(c, p, tau)[2]
    phi_min = float(phi0.min())
    if phi_min <= 1e-6:
        raise CannotClassifyError("phi_0 vanishes on the circle")
    loop = q8t.NLoop.from_coeffs(project_field(c, p), p)
    tag = q8t.classify(loop, p).tag
    e_star = q8t.class_energies(p)[tag].e_star
    main = e_star * phi_min ** 2 * math.log(r / f2d.eps)
    rep = assemble_energy(f2d)
    e_ball, _ = _ball_energy(f2d, rep.density, (0.0, 0.0), r)
    dens_ring = _interp_scalar(rep.density, f2d.domain, pts)
    e_ring = float(dens_ring.sum()) * 2.0 * np.pi * r / n_ring
    measured = e_ball + 4.0 * math.log(5.0) * e_ring
    if c_fit is None:
        c_fit = calibration_constant(p)
    return SliceBound(main_term=main, measured=measured, c_fit=float(c_fit),
                      certified=measured >= main - c_fit, tag=tag,
                      phi_min=phi_min, e_star=e_star,
                      ball_energy=e_ball, ring_energy=e_ring)


def _interp_scalar(grid, dom, pts):
    rel = (np.atleast_2d(pts) - np.array([c[0] for c in dom.coords])) / dom.h
    base = np.floor(rel).astype(int)
    for k, n in enumerate(dom.shape):
        base[:, k] = np.clip(base[:, k], 0, n - 2)
    w = rel - base
    out = np.zeros(len(rel))
    for corner in range(2 ** dom.dim):
        bits = [(corner >> k) & 1 for k in range(dom.dim)]
        weight = np.ones(len(rel))
        for k, bit in enumerate(bits):
            weight = weight * (w[:, k] if bit else 1.0 - w[:, k])
        out += weight * grid[tuple(base[:, k] + bits[k]
                                   for k in range(dom.dim))]
    return out


# ---------------------------------------------------------------------------
# junction balance


@dataclass
class JunctionReport:
    directions: np.ndarray    # (k, dim) unit vectors of defect rays
    weights: np.ndarray       # (k,) class weights E*
    total: np.ndarray         # sum of weighted directions
    norm: float


def junction_balance(f, center, rho, threshold=0.5, ring_radius=None,
                     link_angle=0.5):
    """Tension balance of the defect rays leaving a ball around a point.

    Defect nodes in the outer half of the ball are clustered by angular
    proximity into rays; each ray is priced by classifying a small circle
    around it (orthogonal to the ray in three dimensions), and the report
    carries the weighted direction sum, which vanishes for a stationary
    junction and for a straight line through the center.
    """
    center = np.asarray(center, dtype=float)
    dom = f.domain
    dm = defect_mask(f, threshold)
    if not dm.components:
        raise CannotClassifyError("no defect nodes near the junction")
    nodes = np.concatenate([c.nodes for c in dm.components])
    rel = nodes - center
    dist = np.linalg.norm(rel, axis=1)
    # outer shell only: closer in, the junction core itself smears across
    # all directions and angular clustering cannot separate the rays
    shell = (dist > 0.6 * rho) & (dist <= rho)
    if not shell.any():
        raise CannotClassifyError("no defect rays cross the shell")
    dirs = rel[shell] / dist[shell][:, None]
    # angular single linkage
    groups = [[0]]
    for k in range(1, len(dirs)):
        placed = False
        for g in groups:
            if np.arccos(np.clip(dirs[g] @ dirs[k], -1.0, 1.0)).min() \
                    < link_angle:
                g.append(k)
                placed = True
                break
        if not placed:
            groups.append([k])
    # gluing pass: linkage chains can leave splittable groups
    merged = True
    while merged and len(groups) > 1:
        merged = False
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                cross = np.arccos(np.clip(
                    dirs[groups[i]] @ dirs[groups[j]].T, -1.0, 1.0))
                if cross.min() < link_angle:
                    groups[i] = groups[i] + groups[j]
                    del groups[j]
                    merged = True
                    break
            if merged:
                break
    if ring_radius is not None:
        radii = [float(ring_radius)]
    else:
        radii = [0.3 * rho, 0.4 * rho, 0.5 * rho, 0.6 * rho]
    shell_nodes = nodes[shell]
    shell_dist = dist[shell]
    vs, ws = [], []
    for gi, g in enumerate(groups):
        # the reported direction is the ray's local tangent: the chord
        # between the cluster's inner-half and outer-half centroids tracks
        # the tube axis even when the ray bows toward its boundary anchor
        # or is mid-split into a parallel bundle, where the radial mean of
        # node directions reads the offset, not the tangent
        med = np.median(shell_dist[g])
        lo = shell_dist[g] <= med
        if lo.any() and not lo.all():
            v = shell_nodes[g][~lo].mean(axis=0) - shell_nodes[g][lo].mean(axis=0)
        else:
            v = dirs[g].mean(axis=0)
        v /= np.linalg.norm(v)
        # anchor the circle on the tube midline: rays drift and thicken
        # during descent, so the nominal spot along v may be off-core
        band = np.abs(shell_dist[g] - 0.75 * rho) <= 0.2 * rho
        if band.any():
            anchor = shell_nodes[g][band].mean(axis=0)
        else:
            anchor = center + 0.75 * rho * v
        # never let the circle reach into a neighbouring ray: a wide loop
        # around two rays reads the product class and misprices this one
        gap = min((np.linalg.norm(shell_nodes[h] - anchor, axis=1).min()
                   for hj, h in enumerate(groups) if hj != gi),
                  default=np.inf)
        usable = [rr for rr in radii if rr <= 0.8 * gap] or radii[:1]
        loop = None
        for rr in usable:
            # widen until the circle clears the tube; a relaxed charge-two
            # ray is several eps across and may be mid-split into a pair,
            # and any circle around the whole bundle carries the same class
            try:
                loop = ring_loop(f, anchor, rr, n=128,
                                 normal=v if dom.dim == 3 else None)
                break
            except CannotClassifyError:
                continue
        if loop is None:
            raise CannotClassifyError(
                "no circle around the ray clears its core")
        tag = q8t.classify(loop, f.params).tag
        vs.append(v)
        ws.append(q8t.class_energies(f.params)[tag].e_star)
    vs, ws = np.array(vs), np.array(ws)
    total = (ws[:, None] * vs).sum(axis=0)
    return JunctionReport(directions=vs, weights=ws, total=total,
                          norm=float(np.linalg.norm(total)))
