"""Loop topology on the vacuum manifold.

The degenerate wells {r*(nn - mm)} form a quotient of the unit quaternions
by the eight-element group Q8 = {±1, ±i, ±j, ±k}: a unit quaternion q
determines an orthonormal frame (n, m, n x m) through the usual rotation
formulas, and the sixteen quaternions ±q·g, g in Q8, all produce the same
tensor r*(nn - mm).  Free homotopy classes of loops in the wells therefore
correspond to conjugacy classes of Q8, of which there are five:

    H0 <-> {1},  H1 <-> {±i},  H2 <-> {±j},  H3 <-> {±k},  H4 <-> {-1}.

This module lifts sampled loops to quaternion paths, extracts the deck
element relating the end of the lift to its start, classifies loops into
H0..H4, and tabulates the minimal Dirichlet energies of each class together
with explicit loop representatives attaining (or bracketing) them.

Energies use the embedded chordal discretization of (1/2) ∮ |L'(θ)|² dθ
over a uniform parameter grid, which is second-order accurate in the sample
count and slightly *under*-estimates the continuum value for smooth loops.
"""

import json
from dataclasses import dataclass

import numpy as np

from .qtensor_core import from_matrix
from .vacuum_manifold import ManifoldPoint, manifold_point, project, project_field


class RefineLoopError(Exception):
    """The sampled loop is too coarse to track through the covering space."""


class LiftFailedError(Exception):
    """The end-to-start quaternion mismatch is not close to a deck element."""


class InconsistentTopologyError(Exception):
    """Deck-element class and eigenvector-loop orientation classes disagree."""


# ---------------------------------------------------------------------------
# the deck group

_Q8_NAMES = ("1", "-1", "i", "-i", "j", "-j", "k", "-k")
_Q8_VECS = np.array([
    [1.0, 0.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, -1.0]])

_TAG_OF_NAME = {"1": "H0", "-1": "H4", "i": "H1", "-i": "H1",
                "j": "H2", "-j": "H2", "k": "H3", "-k": "H3"}
_CLASS_MEMBERS = {"H0": ("1",), "H1": ("i", "-i"), "H2": ("j", "-j"),
                  "H3": ("k", "-k"), "H4": ("-1",)}
# orientation classes (trivial=0 / half-turn=1) of the leading/trailing
# eigenvector loops for each tag
_H_PAIR = {"H0": (0, 0), "H1": (0, 1), "H2": (1, 0), "H3": (1, 1),
           "H4": (0, 0)}


def quat_mul(a, b):
    """Hamilton product; broadcasts over leading axes of (..., 4) arrays."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    w1, x1, y1, z1 = np.moveaxis(a, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(b, -1, 0)
    return np.stack([w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                     w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                     w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                     w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2], axis=-1)


def quat_conj(a):
    return np.asarray(a, dtype=float) * np.array([1.0, -1.0, -1.0, -1.0])


class Q8Element:
    """One of the eight deck transformations, acting by right multiplication."""

    __slots__ = ("name", "vec")

    def __init__(self, name):
        if name not in _Q8_NAMES:
            raise ValueError(f"unknown element {name!r}")
        self.name = name
        self.vec = _Q8_VECS[_Q8_NAMES.index(name)].copy()

    def __mul__(self, other):
        el, res = nearest_deck(quat_mul(self.vec, other.vec))
        return el

    @property
    def inverse(self):
        el, _ = nearest_deck(quat_conj(self.vec))
        return el

    @property
    def tag(self):
        """Conjugacy-class label H0..H4."""
        return _TAG_OF_NAME[self.name]

    def __eq__(self, other):
        return isinstance(other, Q8Element) and other.name == self.name

    def __hash__(self):
        return hash(self.name)

    def __repr__(self):
        return f"Q8Element({self.name!r})"


Q8 = {name: Q8Element(name) for name in _Q8_NAMES}


def nearest_deck(q):
    """Closest deck element to a 4-vector, with the Euclidean residual."""
    d = np.linalg.norm(_Q8_VECS - np.asarray(q, dtype=float), axis=1)
    pick = int(np.argmin(d))
    return Q8[_Q8_NAMES[pick]], float(d[pick])


# ---------------------------------------------------------------------------
# covering map and its inverse (frame -> quaternion)

def _cover_nm(q):
    """Frame columns (n, m) of the rotation encoded by unit quaternions."""
    a1, a2, a3, a4 = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    n = np.stack([a1 ** 2 + a2 ** 2 - a3 ** 2 - a4 ** 2,
                  2.0 * (a2 * a3 + a1 * a4),
                  2.0 * (a2 * a4 - a1 * a3)], axis=-1)
    m = np.stack([2.0 * (a2 * a3 - a1 * a4),
                  a1 ** 2 - a2 ** 2 + a3 ** 2 - a4 ** 2,
                  2.0 * (a1 * a2 + a3 * a4)], axis=-1)
    return n, m


def cover_project(q, p):
    """Covering map: unit quaternion -> well tensor r*(nn - mm).

    Both n and m are quadratic in q, so q and -q (and more generally the
    eight right translates q·g) land on the same tensor.  Inputs further
    than 1e-6 from unit length are rejected; closer ones are normalized.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise ValueError("expected a single 4-vector")
    nq = np.linalg.norm(q)
    if abs(nq - 1.0) > 1e-6:
        raise ValueError(f"|q| = {nq:.8f} is not within 1e-6 of 1")
    n, m = _cover_nm(q / nq)
    return manifold_point(n, m, p)


def _rot_to_quat(R):
    """Unit quaternion of a rotation matrix (sign convention arbitrary)."""
    m00, m01, m02 = R[0]
    m10, m11, m12 = R[1]
    m20, m21, m22 = R[2]
    tr = m00 + m11 + m22
    if tr > 0.0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s]
    elif m00 >= m11 and m00 >= m22:
        s = 2.0 * np.sqrt(1.0 + m00 - m11 - m22)
        q = [(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s]
    elif m11 >= m22:
        s = 2.0 * np.sqrt(1.0 + m11 - m00 - m22)
        q = [(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + m22 - m00 - m11)
        q = [(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s]
    q = np.array(q)
    return q / np.linalg.norm(q)


def _reference_lift(sample):
    """Some preimage of a well point: quaternion of the frame (n, m, n x m)."""
    R = np.stack([sample.n, sample.m, np.cross(sample.n, sample.m)], axis=1)
    return _rot_to_quat(R)


# ---------------------------------------------------------------------------
# loops

class NLoop:
    """A closed loop in the wells, sampled at N >= 16 points.

    The parametrization is implicit: sample i sits at θ_i = 2πi/N, and the
    loop closes from the last sample back to the first.  ``mesh`` is the
    largest chordal (Frobenius) gap between consecutive tensors, closing gap
    included; classification requires mesh < r*/4.
    """

    __slots__ = ("samples", "mesh")

    def __init__(self, samples):
        samples = list(samples)
        if len(samples) < 16:
            raise ValueError(f"a loop needs at least 16 samples, got {len(samples)}")
        if not all(isinstance(s, ManifoldPoint) for s in samples):
            raise TypeError("samples must be ManifoldPoint instances")
        self.samples = samples
        c = self.coeffs
        gaps = np.linalg.norm(np.roll(c, -1, axis=0) - c, axis=1)
        self.mesh = float(gaps.max())

    def __len__(self):
        return len(self.samples)

    @property
    def coeffs(self):
        """(N, 5) array of the sampled tensors in the orthonormal basis."""
        return np.stack([s.coeffs for s in self.samples])

    @classmethod
    def from_coeffs(cls, c, p):
        """Build a loop by projecting each row of an (N, 5) array to the wells."""
        c = np.asarray(c, dtype=float)
        return cls([project(row, p) for row in c])

    @classmethod
    def from_frames(cls, n, m, p):
        """Build a loop from (N, 3) arrays of frame vectors."""
        return cls([manifold_point(ni, mi, p) for ni, mi in zip(n, m)])


@dataclass
class QuatPath:
    """Lift of a loop: one quaternion per sample plus the continued endpoint.

    quats has shape (N+1, 4); rows 0 and N both sit over sample 0 and differ
    by right multiplication with ``deck``.
    """

    quats: np.ndarray
    deck: Q8Element

    def validate(self, loop, p, tol_cover=1e-8):
        norms = np.linalg.norm(self.quats, axis=1)
        assert np.abs(norms - 1.0).max() < 1e-12
        n, m = _cover_nm(self.quats[:-1])
        nn = np.einsum("...i,...j->...ij", n, n)
        mm = np.einsum("...i,...j->...ij", m, m)
        cq = from_matrix(p.r_star * (nn - mm))
        assert np.linalg.norm(cq - loop.coeffs, axis=1).max() < tol_cover
        end = quat_mul(self.quats[0], self.deck.vec)
        assert np.linalg.norm(end - self.quats[-1]) < 1e-9


def _mesh_guard(loop, p):
    limit = p.r_star / 4.0
    if not loop.mesh < limit:
        raise RefineLoopError(
            f"loop mesh {loop.mesh:.4g} is not below r*/4 = {limit:.4g}; "
            "refine the loop")


def lift_loop(loop, p, start=None):
    """Lift a loop through the covering, tracking the fiber step by step.

    Each sample gets a precomputed reference preimage from its frame; the
    tracked lift picks, among the eight right translates of the reference,
    the candidate closest to the previous quaternion.  This avoids the
    drift of integrating quaternion increments.  ``start`` optionally right
    multiplies the initial lift by a deck element (any other choice of
    starting fiber point); the extracted deck element is then conjugated.
    """
    _mesh_guard(loop, p)
    refs = np.stack([_reference_lift(s) for s in loop.samples])
    cur = refs[0] if start is None else quat_mul(refs[0], start.vec)
    out = [cur]
    N = len(loop)
    for i in range(1, N + 1):
        cands = quat_mul(refs[i % N][None, :], _Q8_VECS)
        d = np.linalg.norm(cands - cur, axis=1)
        order = np.argsort(d)
        if d[order[1]] - d[order[0]] <= 0.1 * d[order[1]]:
            raise RefineLoopError(
                f"ambiguous fiber step at sample {i % N}: nearest candidates "
                f"at {d[order[0]]:.4f} and {d[order[1]]:.4f}; refine the loop")
        cur = cands[order[0]]
        out.append(cur)
    quats = np.stack(out)
    raw = quat_mul(quat_conj(quats[0]), quats[-1])
    deck, residual = nearest_deck(raw)
    if residual > 0.2:
        raise LiftFailedError(
            f"end-to-start quaternion {np.round(raw, 4)} is {residual:.3f} "
            "from the nearest deck element")
    return QuatPath(quats=quats, deck=deck)


@dataclass(frozen=True)
class HomotopyClass:
    """Free homotopy class of a loop in the wells."""

    tag: str
    conjugacy: tuple
    h_pair: tuple


def _orientation_class(vecs):
    """0/1 orientability of a loop of unit vectors taken up to sign.

    Propagates a consistent sign along the loop and reads whether the
    transported vector returns aligned with the start (0) or flipped (1).
    Sample signs may be arbitrary; only the underlying direction loop
    matters.
    """
    prev = vecs[0]
    N = len(vecs)
    for i in range(1, N + 1):
        w = vecs[i % N]
        d = float(prev @ w)
        if abs(d) < 0.2:
            raise RefineLoopError(
                f"eigenvector loop turns too fast at sample {i % N}; "
                "refine the loop")
        prev = w if d > 0.0 else -w
    return 0 if float(prev @ vecs[0]) > 0.0 else 1


def classify(loop, p):
    """Free homotopy class of a loop, with an independent consistency check.

    The tag comes from the conjugacy class of the lifted deck element.  The
    orientation classes of the leading/trailing eigenvector loops are
    computed separately by sign transport and must match the tag's table
    ((0,0) for H0/H4, (0,1) for H1, (1,0) for H2, (1,1) for H3).
    """
    qp = lift_loop(loop, p)
    tag = qp.deck.tag
    h_pair = (_orientation_class(np.stack([s.n for s in loop.samples])),
              _orientation_class(np.stack([s.m for s in loop.samples])))
    if h_pair != _H_PAIR[tag]:
        raise InconsistentTopologyError(
            f"deck element {qp.deck.name} implies {tag} with eigenvector "
            f"classes {_H_PAIR[tag]}, measured {h_pair}")
    return HomotopyClass(tag=tag,
                         conjugacy=tuple(Q8[n] for n in _CLASS_MEMBERS[tag]),
                         h_pair=h_pair)


# ---------------------------------------------------------------------------
# loop energy

def loop_energy(loop):
    """Chordal discretization of (1/2) ∮ |L'(θ)|² dθ on the uniform grid.

    Second-order accurate; for smooth loops the error is an underestimate
    of relative size about (π/N)²/3.
    """
    c = loop.coeffs
    h = 2.0 * np.pi / len(loop)
    d = np.roll(c, -1, axis=0) - c
    return float((d * d).sum() / (2.0 * h))


def concatenate(l1, l2):
    """Loop traversing l1 then l2 (both should share their base point)."""
    return NLoop(list(l1.samples) + list(l2.samples))


def reverse_loop(loop):
    """Same loop traversed backwards, keeping the base point first."""
    return NLoop([loop.samples[0]] + loop.samples[:0:-1])


def swap_loop(loop):
    """Pointwise negation r*(nn - mm) -> r*(mm - nn).

    An involution on loops; on classes it fixes H0, H3, H4 and exchanges
    H1 with H2 (the leading and trailing eigenvectors trade places).
    """
    out = []
    for s in loop.samples:
        out.append(ManifoldPoint(coeffs=-s.coeffs, n=s.m.copy(), m=s.n.copy()))
    return NLoop(out)


# ---------------------------------------------------------------------------
# explicit representatives and class energies

def loop_A0(p, N=256):
    """Tilt loop r*(e¹e¹ - n(θ)n(θ)), n(θ) = (0, cos θ/2, sin θ/2); class H1."""
    th = 2.0 * np.pi * np.arange(N) / N
    e1 = np.tile([1.0, 0.0, 0.0], (N, 1))
    n = np.stack([np.zeros(N), np.cos(th / 2), np.sin(th / 2)], axis=1)
    return NLoop.from_frames(e1, n, p)


def loop_B0(p, N=256):
    """Tilt loop r*(m(θ)m(θ) - e²e²), m(θ) = (cos θ/2, 0, sin θ/2); class H2."""
    th = 2.0 * np.pi * np.arange(N) / N
    m = np.stack([np.cos(th / 2), np.zeros(N), np.sin(th / 2)], axis=1)
    e2 = np.tile([0.0, 1.0, 0.0], (N, 1))
    return NLoop.from_frames(m, e2, p)


def loop_L2(p, N=256):
    """Spin loop: both frame vectors rotate by π about e³; class H3."""
    th = 2.0 * np.pi * np.arange(N) / N
    n = np.stack([np.cos(th / 2), np.sin(th / 2), np.zeros(N)], axis=1)
    m = np.stack([-np.sin(th / 2), np.cos(th / 2), np.zeros(N)], axis=1)
    return NLoop.from_frames(n, m, p)


def loop_L3(p, N=256):
    """The H1 tilt loop traversed twice; class H4."""
    th = 2.0 * np.pi * np.arange(N) / N
    e1 = np.tile([1.0, 0.0, 0.0], (N, 1))
    n = np.stack([np.zeros(N), np.cos(th), np.sin(th)], axis=1)
    return NLoop.from_frames(e1, n, p)


def constant_loop(p, N=16):
    """Constant loop at the base well r*(e¹e¹ - e²e²); class H0."""
    base = manifold_point([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], p)
    return NLoop([base] * N)


_REPRESENTATIVE = {"H0": constant_loop, "H1": loop_A0, "H2": loop_B0,
                   "H3": loop_L2, "H4": loop_L3}


@dataclass(frozen=True)
class ClassEnergy:
    """Energy data of one homotopy class.

    lower/upper bracket the infimum energy E of loops in the class (equal
    when the infimum is known exactly); e_star is the concatenation-stable
    weight min over decompositions of sums of E over the parts.
    """

    lower: float
    upper: float
    e_star: float
    representative: object


def class_energies(p):
    """Energy table {tag -> ClassEnergy} with representative generators.

    With κ* = π r*²/2: E(H0) = 0, E(H1) = E(H2) = κ*, E(H3) strictly inside
    (2κ*, 4κ*), E(H4) = 4κ*; the concatenation-stable weights are
    E*(H0) = 0, E*(H1) = E*(H2) = κ*, E*(H3) = E*(H4) = 2κ*.
    """
    k = p.kappa_star
    return {
        "H0": ClassEnergy(0.0, 0.0, 0.0, lambda N=16: constant_loop(p, N)),
        "H1": ClassEnergy(k, k, k, lambda N=256: loop_A0(p, N)),
        "H2": ClassEnergy(k, k, k, lambda N=256: loop_B0(p, N)),
        "H3": ClassEnergy(2.0 * k, 4.0 * k, 2.0 * k, lambda N=256: loop_L2(p, N)),
        "H4": ClassEnergy(4.0 * k, 4.0 * k, 2.0 * k, lambda N=256: loop_L3(p, N)),
    }


def representative_loop(tag, p, N=256):
    """Explicit loop of the requested class (constant loop ignores N<16)."""
    if tag not in _REPRESENTATIVE:
        raise ValueError(f"unknown class tag {tag!r}")
    if tag == "H0":
        return constant_loop(p, max(N, 16))
    return _REPRESENTATIVE[tag](p, N)


def relax_loop(loop, p, iters=100_000, step=None):
    """Gradient descent of loop_energy with reprojection to the wells.

    Fixed step 1e-3 (2π/N)² by default (well inside the stability limit of
    the periodic second-difference operator).  Returns the relaxed loop;
    the class is preserved because every step is small and stays on the
    wells.  Used to probe the infimum energy of a class from above.
    """
    c = loop.coeffs
    N = len(loop)
    h = 2.0 * np.pi / N
    if step is None:
        step = 1e-3 * h * h
    for _ in range(iters):
        lap = np.roll(c, -1, axis=0) + np.roll(c, 1, axis=0) - 2.0 * c
        c = c + step * (lap / h)
        c = project_field(c, p)
    return NLoop.from_coeffs(c, p)


# ---------------------------------------------------------------------------
# reports

def classification_report(loop, p):
    """JSON-ready record {tag, deck, h-pair, energy, N, mesh} for one loop."""
    qp = lift_loop(loop, p)
    cls = classify(loop, p)
    return {"tag": cls.tag, "deck": qp.deck.name,
            "h-pair": list(cls.h_pair), "energy": loop_energy(loop),
            "N": len(loop), "mesh": loop.mesh}


def write_report_json(path, reports):
    """Write one or many classification records to a JSON file."""
    with open(path, "w") as fh:
        json.dump(reports, fh, indent=2)
        fh.write("\n")
