"""Coefficient algebra for symmetric traceless 3x3 tensors (Q-tensors).

A Q-tensor is stored by its five coordinates in the fixed orthonormal basis

    E1 = (e1e1 - e2e2)/sqrt(2)       E2 = (e1e1 + e2e2 - 2 e3e3)/sqrt(6)
    E3 = (e1e2 + e2e1)/sqrt(2)       E4 = (e1e3 + e3e1)/sqrt(2)
    E5 = (e2e3 + e3e2)/sqrt(2)

so that tr(Ei Ej) = delta_ij and |Q|^2 = sum_i c_i^2.  All field-level
routines accept arrays of shape (..., 5) and vectorize over the leading axes.

The bulk potential is the sextic

    f_b(Q) = a1 - (a2/2) trQ^2 + (a4/4) (trQ^2)^2 + (a6/6) (trQ^2)^3
             + (a6p/6) (trQ^3)^2

with a1 chosen so that min f_b = 0.  The minimizers are the maximally biaxial
states r*(nn - mm), n.m = 0, where r* solves 4 a6 r*^4 + 2 a4 r*^2 - a2 = 0.
On that set trQ^2 = 2 r*^2, trQ^3 = 0, and the eigenvalues are (r*, 0, -r*).
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BASIS", "QTensor", "MaterialParams", "SpectralData", "ShapeParams",
    "InvalidParameterError", "UndefinedShapeError",
    "to_matrix", "from_matrix", "trace_q2", "trace_q3", "q2_coeffs",
    "derive_params", "spectral", "eigvals_coeffs", "shape_params",
    "bulk_energy", "bulk_gradient", "wells_gap",
    "coeffs_to_bytes", "coeffs_from_bytes", "write_coeffs_csv",
    "read_coeffs_csv",
]

_SQ2 = np.sqrt(2.0)
_SQ3 = np.sqrt(3.0)
_SQ6 = np.sqrt(6.0)

BASIS = np.array([
    [[1, 0, 0], [0, -1, 0], [0, 0, 0]],
    [[1, 0, 0], [0, 1, 0], [0, 0, -2]],
    [[0, 1, 0], [1, 0, 0], [0, 0, 0]],
    [[0, 0, 1], [0, 0, 0], [1, 0, 0]],
    [[0, 0, 0], [0, 0, 1], [0, 1, 0]],
], dtype=float)
BASIS[0] /= _SQ2
BASIS[1] /= _SQ6
BASIS[2] /= _SQ2
BASIS[3] /= _SQ2
BASIS[4] /= _SQ2
BASIS.setflags(write=False)


class InvalidParameterError(ValueError):
    """Raised for material coefficients outside the admissible range."""


class UndefinedShapeError(ValueError):
    """Raised when shape parameters are requested for the zero tensor."""


def to_matrix(c):
    """Assemble the 3x3 matrix of a coefficient vector; vectorized over (..., 5)."""
    c = np.asarray(c, dtype=float)
    return np.einsum("...k,kij->...ij", c, BASIS)


def from_matrix(M):
    """Project a (stack of) 3x3 matrices onto the basis, returning (..., 5).

    Only the symmetric traceless part survives; the input is expected to be
    symmetric and traceless already (checked by the QTensor constructor).
    """
    M = np.asarray(M, dtype=float)
    return np.einsum("...ij,kij->...k", M, BASIS)


def trace_q2(c):
    c = np.asarray(c, dtype=float)
    return np.einsum("...k,...k->...", c, c)


def trace_q3(c):
    """tr(Q^3) as a closed-form cubic in the five coefficients."""
    c = np.asarray(c, dtype=float)
    c1, c2, c3, c4, c5 = (c[..., k] for k in range(5))
    return (_SQ6 / 2.0 * c1 * c1 * c2
            + 0.75 * _SQ2 * c1 * (c4 * c4 - c5 * c5)
            - _SQ6 / 6.0 * c2 ** 3
            + _SQ6 / 2.0 * c2 * c3 * c3
            - _SQ6 / 4.0 * c2 * (c4 * c4 + c5 * c5)
            + 1.5 * _SQ2 * c3 * c4 * c5)


def q2_coeffs(c):
    """Coefficients of the traceless part of Q^2, i.e. tr(Q^2 E_k) for each k."""
    c = np.asarray(c, dtype=float)
    c1, c2, c3, c4, c5 = (c[..., k] for k in range(5))
    s = np.empty(c.shape, dtype=float)
    s[..., 0] = _SQ6 / 3.0 * c1 * c2 + _SQ2 / 4.0 * (c4 * c4 - c5 * c5)
    s[..., 1] = _SQ6 / 12.0 * (2 * c1 * c1 - 2 * c2 * c2 + 2 * c3 * c3
                               - c4 * c4 - c5 * c5)
    s[..., 2] = _SQ6 / 3.0 * c2 * c3 + _SQ2 / 2.0 * c4 * c5
    s[..., 3] = _SQ2 / 2.0 * c1 * c4 - _SQ6 / 6.0 * c2 * c4 + _SQ2 / 2.0 * c3 * c5
    s[..., 4] = -_SQ2 / 2.0 * c1 * c5 - _SQ6 / 6.0 * c2 * c5 + _SQ2 / 2.0 * c3 * c4
    return s


class QTensor:
    """A single symmetric traceless tensor, stored by its 5 basis coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (5,):
            raise ValueError(f"expected 5 coefficients, got shape {c.shape}")
        self.coeffs = c.copy()

    @classmethod
    def from_matrix(cls, M, tol=1e-14):
        M = np.asarray(M, dtype=float)
        scale = 1.0 + np.abs(M).max()
        if np.abs(M - M.T).max() > tol * scale:
            raise ValueError("matrix is not symmetric")
        if abs(np.trace(M)) > tol * scale:
            raise ValueError("matrix is not traceless")
        return cls(from_matrix(M))

    @property
    def matrix(self):
        return to_matrix(self.coeffs)

    @property
    def norm(self):
        return float(np.sqrt(self.coeffs @ self.coeffs))

    def __add__(self, other):
        return QTensor(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return QTensor(self.coeffs - other.coeffs)

    def __mul__(self, t):
        return QTensor(self.coeffs * float(t))

    __rmul__ = __mul__

    def __neg__(self):
        return QTensor(-self.coeffs)

    def __repr__(self):
        return f"QTensor({np.array2string(self.coeffs, precision=6)})"


@dataclass(frozen=True)
class MaterialParams:
    """Bulk coefficients together with the derived well data.

    r_star satisfies 4 a6 r*^4 + 2 a4 r*^2 - a2 = 0, a1 makes min f_b = 0,
    and kappa_star = pi r*^2 / 2 is the basic loop-energy quantum.
    """
    a1: float
    a2: float
    a4: float
    a6: float
    a6p: float
    r_star: float
    kappa_star: float


def derive_params(a2, a4, a6, a6p):
    """Build MaterialParams from the four sextic coefficients.

    The well radius comes from the closed-form root of the quadratic in r*^2:
    r*^2 = (-a4 + sqrt(a4^2 + 4 a2 a6)) / (4 a6).
    """
    for name, v in (("a2", a2), ("a4", a4), ("a6", a6), ("a6p", a6p)):
        if not np.isfinite(v) or v <= 0:
            raise InvalidParameterError(f"{name} must be positive, got {v!r}")
    r2 = (-a4 + np.sqrt(a4 * a4 + 4.0 * a2 * a6)) / (4.0 * a6)
    r_star = float(np.sqrt(r2))
    a1 = a2 * r2 - a4 * r2 * r2 - (4.0 / 3.0) * a6 * r2 ** 3
    return MaterialParams(a1=float(a1), a2=float(a2), a4=float(a4),
                          a6=float(a6), a6p=float(a6p), r_star=r_star,
                          kappa_star=float(np.pi * r2 / 2.0))


# ---------------------------------------------------------------------------
# spectra

@dataclass
class SpectralData:
    """Eigenvalues (descending) and an orthonormal eigenframe.

    frame[:, k] is a unit eigenvector for eigvals[k]; signs are canonicalized
    so the largest-magnitude component of each column is positive.
    """
    eigvals: np.ndarray
    frame: np.ndarray


def eigvals_coeffs(c):
    """Descending eigenvalues of Q(c), vectorized over (..., 5) -> (..., 3).

    Cardano/trigonometric solve of lambda^3 - a lambda - b = 0 with
    a = trQ^2/2, b = det Q = trQ^3/3, followed by one Newton polish per root.
    """
    c = np.asarray(c, dtype=float)
    a = 0.5 * trace_q2(c)
    b = trace_q3(c) / 3.0
    safe = np.maximum(a, 1e-300)
    with np.errstate(invalid="ignore", divide="ignore"):
        arg = np.nan_to_num(1.5 * _SQ3 * b / safe ** 1.5)
    phi = np.arccos(np.clip(arg, -1.0, 1.0))
    amp = 2.0 * np.sqrt(safe / 3.0)
    k = np.arange(3.0)
    lam = amp[..., None] * np.cos((phi[..., None] - 2.0 * np.pi * k) / 3.0)
    # one Newton step on p(x) = x^3 - a x - b sharpens clustered roots
    deriv = 3.0 * lam * lam - a[..., None]
    resid = lam ** 3 - a[..., None] * lam - b[..., None]
    lam = lam - np.where(np.abs(deriv) > 1e-30, resid / np.where(deriv == 0, 1, deriv), 0.0)
    lam = np.where(a[..., None] < 1e-299, 0.0, lam)
    lam.sort(axis=-1)
    lam = lam[..., ::-1]
    lam = lam - lam.sum(axis=-1, keepdims=True) / 3.0
    return lam


def _null_vector(M):
    """Best null direction of a (near-)rank-2 symmetric matrix via cross products."""
    crosses = np.stack([
        np.cross(M[:, 0], M[:, 1]),
        np.cross(M[:, 0], M[:, 2]),
        np.cross(M[:, 1], M[:, 2]),
    ])
    norms = np.linalg.norm(crosses, axis=1)
    i = int(np.argmax(norms))
    if norms[i] < 1e-30:
        return None
    return crosses[i] / norms[i]


def _canon_sign(u):
    i = int(np.argmax(np.abs(u)))
    return -u if u[i] < 0 else u


def _complete_frame(fixed, start=0):
    """Gram-Schmidt the fixed axes e1,e2,e3 (in order) against `fixed` vectors."""
    out = []
    basis = list(fixed)
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        for v in basis:
            e = e - (e @ v) * v
        nrm = np.linalg.norm(e)
        if nrm > 1e-7:
            e /= nrm
            out.append(e)
            basis.append(e)
        if len(out) + len(fixed) == 3:
            break
    return out


def spectral(Q):
    """Full eigendecomposition of a single tensor (QTensor or 5-vector).

    Eigenvectors of well-separated eigenvalues come from cross products of the
    columns of Q - lambda I (pivoting on the largest product norm); clusters
    closer than 1e-9 (1 + |Q|) are completed by Gram-Schmidt against the fixed
    axes e1, e2, e3 in order, which makes the output deterministic on
    degenerate spectra.
    """
    c = Q.coeffs if isinstance(Q, QTensor) else np.asarray(Q, dtype=float)
    lam = eigvals_coeffs(c)
    M = to_matrix(c)
    qnorm = np.sqrt(c @ c)
    tol = 1e-9 * (1.0 + qnorm)

    gap01 = lam[0] - lam[1]
    gap12 = lam[1] - lam[2]
    I3 = np.eye(3)

    if gap01 < tol and gap12 < tol:
        frame = np.eye(3)
    elif gap01 < tol:
        u3 = _null_vector(M - lam[2] * I3)
        if u3 is None:
            frame = np.eye(3)
        else:
            u1, u2 = _complete_frame([u3])
            frame = np.stack([u1, u2, u3], axis=1)
    elif gap12 < tol:
        u1 = _null_vector(M - lam[0] * I3)
        if u1 is None:
            frame = np.eye(3)
        else:
            u2, u3 = _complete_frame([u1])
            frame = np.stack([u1, u2, u3], axis=1)
    else:
        u1 = _null_vector(M - lam[0] * I3)
        u3 = _null_vector(M - lam[2] * I3)
        if u1 is None or u3 is None:  # pragma: no cover - rank guard
            frame = np.eye(3)
        else:
            u3 = u3 - (u3 @ u1) * u1
            u3 /= np.linalg.norm(u3)
            u2 = np.cross(u1, u3)
            frame = np.stack([u1, u2, u3], axis=1)

    # Rayleigh quotients of the (orthonormal) frame recover full accuracy at
    # clustered eigenvalues, where the cubic root formula loses ~sqrt(eps)
    rq = np.einsum("ik,ij,jk->k", frame, M, frame)
    order = np.argsort(-rq, kind="stable")
    lam = rq[order]
    lam = lam - lam.sum() / 3.0
    frame = frame[:, order]
    frame = np.stack([_canon_sign(frame[:, k]) for k in range(3)], axis=1)
    return SpectralData(eigvals=lam, frame=frame)


@dataclass(frozen=True)
class ShapeParams:
    """Scale and biaxial-ratio coordinates (s, r) of the ordered spectrum.

    s = 2 l1 + l2 = l1 - l3 >= 0 and r = (l1 + 2 l2)/s = (l2 - l3)/(l1 - l3)
    in [0, 1]; r = 0 is the prolate uniaxial cone, r = 1 the oblate one.
    """
    s: float
    r: float


def shape_params(Q):
    """Shape coordinates of a tensor; raises UndefinedShapeError at Q = 0."""
    if isinstance(Q, (SpectralData,)):
        lam = Q.eigvals
    else:
        lam = spectral(Q).eigvals
    s = 2.0 * lam[0] + lam[1]
    if s <= 1e-14 * (1.0 + np.abs(lam).max()):
        raise UndefinedShapeError("shape parameters are undefined at Q = 0")
    r = (lam[0] + 2.0 * lam[1]) / s
    return ShapeParams(s=float(s), r=float(min(max(r, 0.0), 1.0)))


# ---------------------------------------------------------------------------
# bulk potential

def bulk_energy(c, mp):
    """f_b(Q); vectorized over (..., 5).  Zero exactly on the well set."""
    t2 = trace_q2(c)
    t3 = trace_q3(c)
    return (mp.a1 - 0.5 * mp.a2 * t2 + 0.25 * mp.a4 * t2 * t2
            + mp.a6 / 6.0 * t2 ** 3 + mp.a6p / 6.0 * t3 * t3)


def bulk_gradient(c, mp):
    """Intrinsic gradient of f_b on the traceless symmetric slice.

    Psi(Q) = (-a2 + a4 trQ^2 + a6 (trQ^2)^2) Q + a6p trQ^3 (Q^2 - trQ^2/3 I),
    returned in basis coefficients; vectorized over (..., 5).
    """
    c = np.asarray(c, dtype=float)
    t2 = trace_q2(c)[..., None]
    t3 = trace_q3(c)[..., None]
    return (-mp.a2 + mp.a4 * t2 + mp.a6 * t2 * t2) * c + mp.a6p * t3 * q2_coeffs(c)


def wells_gap(c, mp):
    """Algebraic distance-to-well witnesses (zeta, xi).

    zeta = |Q^3 - r*^2 Q|^2 vanishes exactly on the closure of the well set
    union {0}; xi = (trQ^2 - 2 r*^2)^2 sees the radius only.  Vectorized.
    """
    c = np.asarray(c, dtype=float)
    M = to_matrix(c)
    M3 = M @ M @ M
    D = M3 - mp.r_star ** 2 * M
    zeta = np.einsum("...ij,...ij->...", D, D)
    xi = (trace_q2(c) - 2.0 * mp.r_star ** 2) ** 2
    return zeta, xi


# ---------------------------------------------------------------------------
# serialization: coefficient blobs are little-endian float64 in E1..E5 order

def coeffs_to_bytes(c):
    c = np.ascontiguousarray(np.asarray(c, dtype=float), dtype="<f8")
    return c.tobytes()


def coeffs_from_bytes(buf, shape=(-1, 5)):
    arr = np.frombuffer(buf, dtype="<f8").astype(float)
    return arr.reshape(shape)


def write_coeffs_csv(path, c):
    """CSV with header c1..c5, one tensor per row (E1..E5 coefficient order)."""
    c = np.atleast_2d(np.asarray(c, dtype=float))
    np.savetxt(path, c, delimiter=",", header="c1,c2,c3,c4,c5", comments="",
               fmt="%.17g")


def read_coeffs_csv(path):
    arr = np.loadtxt(path, delimiter=",", skiprows=1, dtype=float)
    return np.atleast_2d(arr)
