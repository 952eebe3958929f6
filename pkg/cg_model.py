"""
Full linear overdamped Langevin system, coarse-graining maps and the
Markovian reduced models built from them.

Full dynamics:      dq = -A q dt + sqrt(2/beta) dW,   q in R^N
Coarse variables:   xi = Phi q (n rows), complement zeta = Psi q (m rows)

With A0 = Phi A Phi^T, alpha = Phi A Psi^T, A1 = Psi A Psi^T the effective
matrices are

    B = A0 - alpha A1^{-1} alpha^T
    C = (I + alpha A1^{-2} alpha^T)^{-1}

and the three reduced models differ in drift and noise:

    approach 0:  drift A0,   noise factor I
    approach 1:  drift B,    noise factor I
    approach 2:  drift C B,  noise factor C^{1/2}   (forcing also scaled by C)

All of them carry the memory forcing -alpha e^{-A1 t} zeta0.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from cg_errors import (
    ConfigError,
    DimensionMismatchError,
    OrderViolationError,
    RankDeficiencyError,
)
from cg_matcore import (
    as_symmetric,
    expm_scaled,
    frobenius_norm,
    inv_sym,
    is_spd,
    loewner_geq,
    sqrtm_inv,
    sqrtm_sym,
)

logger = logging.getLogger(__name__)

APPROACHES = (0, 1, 2)

# Products like Phi A Phi^T pick up roundoff asymmetry proportional to |A|
_PRODUCT_SYM_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SystemSpec:
    """Full model: SPD drift matrix A and inverse temperature beta"""

    a: np.ndarray
    beta: float

    def __post_init__(self):
        a = as_symmetric(self.a)
        if not is_spd(a):
            raise OrderViolationError("drift matrix A must be symmetric positive definite")
        if not np.isfinite(self.beta) or self.beta <= 0:
            raise ValueError(f"inverse temperature must be positive, got {self.beta}")
        object.__setattr__(self, "a", _frozen(a))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def dim(self):
        return self.a.shape[0]


@dataclass(frozen=True)
class CoarseGrainingMap:
    """Raw map, its normalization Phi and an orthonormal complement Psi"""

    raw: np.ndarray
    phi: np.ndarray
    psi: np.ndarray

    @property
    def n(self):
        return self.phi.shape[0]

    @property
    def m(self):
        return self.psi.shape[0]

    @property
    def dim(self):
        return self.phi.shape[1]

    @property
    def projector(self):
        """P = Phi^T Phi, the orthogonal projection onto the coarse row space"""
        return self.phi.T @ self.phi

    def with_complement(self, psi):
        """Same Phi with a different admissible complement (statistics are Psi-invariant)"""
        psi = np.atleast_2d(np.asarray(psi, dtype=float))
        if psi.shape != self.psi.shape:
            raise DimensionMismatchError(f"complement must be {self.psi.shape}, got {psi.shape}")
        if not np.allclose(psi @ psi.T, np.eye(self.m), atol=1e-10) or not np.allclose(
            self.phi @ psi.T, 0.0, atol=1e-10
        ):
            raise ValueError("complement rows must be orthonormal and orthogonal to Phi")
        return CoarseGrainingMap(raw=self.raw, phi=self.phi, psi=_frozen(psi))


@dataclass(frozen=True)
class BlockDecomposition:
    a0: np.ndarray
    alpha: np.ndarray
    a1: np.ndarray

    @property
    def n(self):
        return self.a0.shape[0]

    @property
    def m(self):
        return self.a1.shape[0]


@dataclass(frozen=True)
class MemoryTerm:
    """Data for the forcing -gain alpha e^{-A1 t} zeta0"""

    alpha: np.ndarray
    a1: np.ndarray
    zeta0: np.ndarray
    gain: np.ndarray

    def forcing(self, t):
        if self.zeta0.size == 0:
            return np.zeros(self.gain.shape[0])
        return -self.gain @ (self.alpha @ (expm_scaled(self.a1, t) @ self.zeta0))


@dataclass(frozen=True)
class ReducedModel:
    approach: int
    drift: np.ndarray
    noise_cov_factor: np.ndarray
    memory: Optional[MemoryTerm]
    b: np.ndarray
    c: np.ndarray
    a0: np.ndarray
    beta: float

    @property
    def dim(self):
        return self.drift.shape[0]

    @property
    def drift_matrix(self):
        """The matrix whose exponential governs the autocovariance (A0, B or B C)"""
        if self.approach == 0:
            return self.a0
        if self.approach == 1:
            return self.b
        return self.b @ self.c


def normalize_map(raw):
    """
    Normalize a raw coarse-graining map: Phi = (raw raw^T)^{-1/2} raw.

    The complement Psi is produced deterministically by QR-orthonormalizing
    [Phi^T | I_N], i.e. Gram-Schmidt of the canonical basis against Phi.
    """
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    n, dim = raw.shape
    # n == dim (identity-like maps) is allowed; Psi is then empty
    if n > dim:
        raise DimensionMismatchError(
            f"coarse-graining map cannot have more rows than columns, got {n}x{dim}"
        )
    rank = int(np.linalg.matrix_rank(raw))
    if rank < n:
        raise RankDeficiencyError(rank=rank, expected=n)
    gram = as_symmetric(raw @ raw.T, tol=_PRODUCT_SYM_TOL)
    phi = sqrtm_inv(gram) @ raw
    q, _ = scipy.linalg.qr(np.hstack([phi.T, np.eye(dim)]), mode="economic")
    psi = q[:, n:dim].T
    return CoarseGrainingMap(raw=_frozen(raw), phi=_frozen(phi), psi=_frozen(psi))


def block_decompose(sys, cg):
    if cg.dim != sys.dim:
        raise DimensionMismatchError(
            f"map acts on R^{cg.dim} but the system is {sys.dim}-dimensional"
        )
    a = sys.a
    a0 = as_symmetric(cg.phi @ a @ cg.phi.T, tol=_PRODUCT_SYM_TOL)
    alpha = cg.phi @ a @ cg.psi.T
    a1 = as_symmetric(cg.psi @ a @ cg.psi.T, tol=_PRODUCT_SYM_TOL)
    if a1.shape[0] and not is_spd(a1):
        raise OrderViolationError("A1 = Psi A Psi^T is not positive definite")
    return BlockDecomposition(a0=_frozen(a0), alpha=_frozen(alpha), a1=_frozen(a1))


def effective_matrices(bd):
    """
    B = A0 - alpha A1^{-1} alpha^T and C = (I + alpha A1^{-2} alpha^T)^{-1}.

    Returns
    -------
    b, c : ndarray
        Both SPD; B <= A0 and C <= I in Loewner order.
    """
    if bd.m == 0:
        return _frozen(bd.a0), _frozen(np.eye(bd.n))
    a1_inv = inv_sym(bd.a1)
    b = as_symmetric(bd.a0 - bd.alpha @ a1_inv @ bd.alpha.T, tol=_PRODUCT_SYM_TOL)
    if not is_spd(b):
        raise OrderViolationError("Schur complement B is not positive definite")
    k = as_symmetric(np.eye(bd.n) + bd.alpha @ a1_inv @ a1_inv @ bd.alpha.T, tol=_PRODUCT_SYM_TOL)
    c = inv_sym(k)
    return _frozen(b), _frozen(c)


def default_zeta0(bd, xi0):
    """zeta0 = -A1^{-1} alpha^T xi0, the complement state consistent with xi0"""
    xi0 = np.asarray(xi0, dtype=float).reshape(-1)
    if xi0.shape[0] != bd.n:
        raise DimensionMismatchError(f"xi0 must have length {bd.n}, got {xi0.shape[0]}")
    if bd.m == 0:
        return np.zeros(0)
    return -inv_sym(bd.a1) @ (bd.alpha.T @ xi0)


def build_reduced(sys, cg, approach, zeta0=None, xi0=None):
    """
    Build the Markovian approximation for approach 0, 1 or 2.

    zeta0 defaults to -A1^{-1} alpha^T xi0 when xi0 is given, else to zero.
    """
    if approach not in APPROACHES:
        raise ValueError(f"approach must be one of {APPROACHES}, got {approach!r}")
    bd = block_decompose(sys, cg)
    b, c = effective_matrices(bd)
    if zeta0 is None:
        zeta0 = default_zeta0(bd, xi0) if xi0 is not None else np.zeros(bd.m)
    zeta0 = np.asarray(zeta0, dtype=float).reshape(-1)
    if zeta0.shape[0] != bd.m:
        raise DimensionMismatchError(f"zeta0 must have length m={bd.m}, got {zeta0.shape[0]}")

    eye = np.eye(bd.n)
    if approach == 0:
        drift, noise, gain = bd.a0, eye, eye
    elif approach == 1:
        drift, noise, gain = b, eye, eye
    else:
        drift, noise, gain = c @ b, sqrtm_sym(c), c

    memory = MemoryTerm(alpha=bd.alpha, a1=bd.a1, zeta0=_frozen(zeta0), gain=_frozen(gain))
    logger.debug("built approach %d model (n=%d, m=%d)", approach, bd.n, bd.m)
    return ReducedModel(
        approach=approach,
        drift=_frozen(drift),
        noise_cov_factor=_frozen(noise),
        memory=memory,
        b=b,
        c=c,
        a0=bd.a0,
        beta=sys.beta,
    )


def check_eigenspace_alignment(sys, cg, tol=1e-9):
    """True iff ||alpha||_F <= tol ||A||_F, i.e. Phi spans eigenvectors of A"""
    bd = block_decompose(sys, cg)
    return frobenius_norm(bd.alpha) <= tol * frobenius_norm(sys.a)


def check_loewner_sandwich(bd, tol=1e-10):
    """0 < B <= A0 and 0 < C <= I"""
    b, c = effective_matrices(bd)
    return loewner_geq(bd.a0, b, tol) and loewner_geq(np.eye(bd.n), c, tol)


SYSTEM_KEYS = ("A", "beta", "phi_raw")


def system_from_document(doc, extra_keys=()):
    """
    Build (SystemSpec, CoarseGrainingMap) from {"A": [[...]], "beta": r, "phi_raw": [[...]]}.

    Keys listed in `extra_keys` (e.g. simulation parameters) are ignored here;
    anything else unknown is rejected.
    """
    if not isinstance(doc, dict):
        raise ConfigError("system document must be a JSON object")
    unknown = sorted(set(doc) - set(SYSTEM_KEYS) - set(extra_keys))
    if unknown:
        raise ConfigError(f"unknown key(s) in system document: {', '.join(unknown)}")
    missing = [k for k in SYSTEM_KEYS if k not in doc]
    if missing:
        raise ConfigError(f"missing key(s) in system document: {', '.join(missing)}")
    try:
        a = np.array(doc["A"], dtype=float)
        phi_raw = np.array(doc["phi_raw"], dtype=float)
        beta = float(doc["beta"])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"system document has non-numeric entries: {e}") from e
    if a.ndim != 2 or phi_raw.ndim != 2:
        raise ConfigError("'A' and 'phi_raw' must be row-major nested lists (2D)")
    sys = SystemSpec(a=a, beta=beta)
    cg = normalize_map(phi_raw)
    if cg.dim != sys.dim:
        raise ConfigError(f"'phi_raw' has {cg.dim} columns but 'A' is {sys.dim}x{sys.dim}")
    return sys, cg
