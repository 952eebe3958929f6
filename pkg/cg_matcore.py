"""
Spectral toolkit for real symmetric matrices.

Every matrix function in the project (exponentials, inverses, square roots,
the convex functions used in the Jensen checks) is evaluated through a
symmetric eigendecomposition. The one non-symmetric exponential we need,
e^{-t*B*C}, is reduced to a symmetric one by similarity with C^{1/2}.

Symmetric matrices are plain 2D numpy arrays; `as_symmetric` is the single
gate that validates and symmetrizes them.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from cg_errors import (
    AsymmetryError,
    DimensionMismatchError,
    EigenSolverError,
    OrderViolationError,
    RankDeficiencyError,
    SingularityError,
)

logger = logging.getLogger(__name__)

# Asymmetry tolerated (relative to the largest entry, floor 1) before we refuse
SYMMETRY_TOL = 1e-12
# Smallest eigenvalue must exceed this fraction of the largest to count as SPD
SPD_RELATIVE_TOL = 1e-12


@dataclass(frozen=True)
class SpectralDecomp:
    """Eigen-pairs of a symmetric matrix, eigenvalues ascending"""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self):
        return self.eigenvalues.shape[0]

    def reconstruct(self):
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T

    def apply(self, values):
        """Q diag(values) Q^T for a vector of transformed eigenvalues"""
        q = self.eigenvectors
        return as_symmetric((q * values) @ q.T)


def as_symmetric(m, tol=SYMMETRY_TOL):
    """
    Validate a square matrix as symmetric and return (m + m^T) / 2.

    Parameters
    ----------
    m : array_like
        Square real matrix (a scalar or 1-vector of length 1 is promoted to 1x1).
    tol : float
        Allowed asymmetry, relative to max(1, largest absolute entry).

    Returns
    -------
    sym : ndarray
        Exactly symmetric float64 copy.
    """
    a = np.atleast_2d(np.asarray(m, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > tol * scale:
        raise AsymmetryError(f"matrix asymmetry {asym:.3e} exceeds tolerance {tol * scale:.3e}")
    return 0.5 * (a + a.T)


def spectral_decompose(m):
    """Ascending eigenvalues and orthogonal eigenvectors of a symmetric matrix"""
    a = as_symmetric(m)
    if not np.all(np.isfinite(a)):
        raise EigenSolverError(a.shape[0], "matrix has non-finite entries")
    try:
        w, q = scipy.linalg.eigh(a)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise EigenSolverError(a.shape[0], str(e)) from e
    return SpectralDecomp(eigenvalues=w, eigenvectors=q)


def _check_spd(decomp, what="matrix"):
    w = decomp.eigenvalues
    top = float(np.max(np.abs(w))) if w.size else 0.0
    if top == 0.0 or w[0] <= SPD_RELATIVE_TOL * top:
        raise OrderViolationError(
            f"{what} is not symmetric positive definite (smallest eigenvalue {w[0]:.3e})"
        )


def is_spd(m):
    try:
        _check_spd(spectral_decompose(m))
    except OrderViolationError:
        return False
    return True


def matrix_function(m, f, singular_tol=SPD_RELATIVE_TOL):
    """
    Evaluate f(m) = Q f(D) Q^T for a symmetric matrix.

    `f` must accept a numpy array of eigenvalues. Division by zero or invalid
    operations inside f are reported as SingularityError, as are non-finite
    results. An eigenvalue with |lambda| <= singular_tol * max(1, |lambda|_max)
    counts as zero: if f is undefined at 0 the matrix is rejected as singular
    even though f(lambda) itself would be finite.
    """
    decomp = m if isinstance(m, SpectralDecomp) else spectral_decompose(m)
    w = decomp.eigenvalues
    top = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    near_zero = np.abs(w) <= singular_tol * top
    if np.any(near_zero) and not _defined_at_zero(f):
        raise SingularityError(
            f"function undefined at 0 and matrix has eigenvalue "
            f"{w[np.argmax(near_zero)]:.3e} within tolerance {singular_tol:g}"
        )
    try:
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            values = np.asarray(f(decomp.eigenvalues), dtype=float)
    except FloatingPointError as e:
        raise SingularityError(f"function undefined at an eigenvalue: {e}") from e
    if values.shape != decomp.eigenvalues.shape or not np.all(np.isfinite(values)):
        raise SingularityError("function undefined at an eigenvalue")
    return decomp.apply(values)


def _defined_at_zero(f):
    try:
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            value = np.asarray(f(np.zeros(1)), dtype=float)
    except (FloatingPointError, ZeroDivisionError):
        return False
    return bool(np.all(np.isfinite(value)))


def expm_scaled(m, t):
    """e^{-t m} for symmetric m and t >= 0"""
    if t < 0:
        raise ValueError(f"lag must be nonnegative, got {t}")
    return matrix_function(m, lambda x: np.exp(-t * x))


def inv_sym(m):
    """Inverse of a symmetric matrix; eigenvalues within 1e-12 of zero are singular"""
    decomp = spectral_decompose(m)
    w = decomp.eigenvalues
    top = max(1.0, float(np.max(np.abs(w))))
    if np.min(np.abs(w)) <= SPD_RELATIVE_TOL * top:
        raise SingularityError(f"matrix is singular (eigenvalue {w[np.argmin(np.abs(w))]:.3e})")
    return decomp.apply(1.0 / w)


def sqrtm_sym(m):
    """Principal square root of an SPD matrix"""
    decomp = spectral_decompose(m)
    _check_spd(decomp)
    return decomp.apply(np.sqrt(decomp.eigenvalues))


def sqrtm_inv(m):
    """
    m^{-1/2} for SPD m.

    A (numerically) singular m signals redundant coarse-grained rows, so it is
    reported as a RankDeficiencyError carrying the numerical rank.
    """
    decomp = spectral_decompose(m)
    w = decomp.eigenvalues
    top = float(np.max(np.abs(w))) if w.size else 0.0
    rank = int(np.sum(w > SPD_RELATIVE_TOL * top)) if top > 0 else 0
    if rank < w.size:
        raise RankDeficiencyError(rank=rank, expected=w.size)
    return decomp.apply(1.0 / np.sqrt(w))


def expm_nonsym_similar(b, c, t):
    """
    e^{-t B C} for SPD B and C.

    B C = C^{-1/2} S C^{1/2} with S = C^{1/2} B C^{1/2} symmetric, so
    e^{-t B C} = C^{-1/2} e^{-t S} C^{1/2}.
    """
    c_decomp = spectral_decompose(c)
    _check_spd(c_decomp, "C")
    c_half = c_decomp.apply(np.sqrt(c_decomp.eigenvalues))
    c_mhalf = c_decomp.apply(1.0 / np.sqrt(c_decomp.eigenvalues))
    bs = as_symmetric(b)
    if bs.shape != c_half.shape:
        raise DimensionMismatchError(f"B is {bs.shape} but C is {c_half.shape}")
    s = as_symmetric(c_half @ bs @ c_half, tol=1e-9)
    return c_mhalf @ expm_scaled(s, t) @ c_half


def loewner_margin(a, b):
    """Smallest eigenvalue of a - b; a >= b in Loewner order iff this is >= 0"""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise DimensionMismatchError(f"cannot compare {a.shape} with {b.shape}")
    d = a - b
    d = 0.5 * (d + d.T)
    return float(spectral_decompose(d).eigenvalues[0])


def loewner_geq(a, b, tol=0.0):
    return loewner_margin(a, b) >= -tol


def frobenius_norm(m):
    a = np.asarray(m, dtype=float)
    return float(np.sqrt(np.sum(a * a)))


def jensen_margin(m, phi, f):
    """
    Margin of the matrix Jensen inequality f(phi m phi^T) <= phi f(m) phi^T.

    For a phi without orthonormal rows the weighted form
    S f(S^{-1} phi m phi^T S^{-1}) S <= phi f(m) phi^T, S = (phi phi^T)^{1/2},
    is checked instead. Returns the smallest eigenvalue of the difference.

    A convex f only guarantees a nonnegative margin for a single row (or rows
    spanning an invariant subspace of m). With several rows it takes operator
    convexity, which x e^{-tau/x} lacks, so negative margins do occur there.
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    m = as_symmetric(m)
    if phi.shape[1] != m.shape[0]:
        raise DimensionMismatchError(f"phi has {phi.shape[1]} columns, m is {m.shape}")
    rhs = phi @ matrix_function(m, f) @ phi.T
    gram = as_symmetric(phi @ phi.T, tol=1e-9)
    if np.allclose(gram, np.eye(gram.shape[0]), atol=1e-10):
        lhs = matrix_function(as_symmetric(phi @ m @ phi.T, tol=1e-9), f)
    else:
        s = sqrtm_sym(gram)
        s_inv = sqrtm_inv(gram)
        inner = as_symmetric(s_inv @ phi @ m @ phi.T @ s_inv, tol=1e-9)
        lhs = s @ matrix_function(inner, f) @ s
    return loewner_margin(rhs, lhs)
