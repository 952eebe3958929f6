"""
Canonical systems for the experiment families and the progressive
coarse-graining harness.

- 2D:        A = diag(1, lam), Phi = (cos theta, sin theta)
- tridiag:   ascending diagonal with constant off-diagonal sigma
- chain:     overdamped spring-mass chain, free left end, right end tied to a wall
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from cg_analytics import TwoDSpec, acf_full, acf_reduced
from cg_errors import (
    CoarseGrainingError,
    ConfigError,
    DimensionMismatchError,
    OrderViolationError,
)
from cg_matcore import spectral_decompose
from cg_model import SystemSpec, build_reduced, normalize_map

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-10

# Diagonal of the 10D tridiagonal family
STANDARD_10D_DIAG = (1.0,) + tuple(np.linspace(1.5, 10.0, 9))


@dataclass(frozen=True)
class TridiagSpec:
    diag: Tuple[float, ...]
    offdiag_sigma: float
    beta: float = 1.0

    def __post_init__(self):
        diag = tuple(float(d) for d in self.diag)
        if len(diag) < 1:
            raise ValueError("tridiagonal system needs at least one diagonal entry")
        if any(b < a for a, b in zip(diag, diag[1:])):
            raise ValueError("diagonal entries must be ascending")
        if self.offdiag_sigma < 0:
            raise ValueError(f"off-diagonal sigma must be >= 0, got {self.offdiag_sigma}")
        object.__setattr__(self, "diag", diag)

    @classmethod
    def standard_10d(cls, sigma, beta=1.0):
        return cls(diag=STANDARD_10D_DIAG, offdiag_sigma=sigma, beta=beta)


@dataclass(frozen=True)
class ChainSpec:
    """
    Spring-mass chain of n_masses masses.

    Spring i (1-based, i < N) joins masses i and i+1, spring N joins mass N to
    the wall. Constants are (k1, k2, k3, k3, ...) unless `springs` overrides
    them one by one.
    """

    n_masses: int
    k1: float = 1.0
    k2: float = 1.0
    k3: float = 1.0
    beta: float = 1.0
    springs: Optional[Tuple[float, ...]] = field(default=None)

    def __post_init__(self):
        if int(self.n_masses) != self.n_masses or self.n_masses < 1:
            raise ValueError(f"n_masses must be a positive integer, got {self.n_masses}")
        if min(self.k1, self.k2, self.k3) <= 0:
            raise ValueError("spring constants must be positive")
        if self.springs is not None:
            springs = tuple(float(k) for k in self.springs)
            if len(springs) != self.n_masses:
                raise ValueError(f"need {self.n_masses} spring constants, got {len(springs)}")
            if min(springs) <= 0:
                raise ValueError("spring constants must be positive")
            object.__setattr__(self, "springs", springs)

    def spring_constants(self):
        if self.springs is not None:
            return np.array(self.springs)
        k = np.full(self.n_masses, float(self.k3))
        k[:2] = (self.k1, self.k2)[: self.n_masses]
        return k


@dataclass(frozen=True)
class ProgressiveSpec:
    """Outer X (d x n) and inner Phi (n x N) maps, both with orthonormal rows"""

    outer: np.ndarray
    inner: np.ndarray

    def __post_init__(self):
        outer = np.atleast_2d(np.asarray(self.outer, dtype=float))
        inner = np.atleast_2d(np.asarray(self.inner, dtype=float))
        if outer.shape[1] != inner.shape[0]:
            raise DimensionMismatchError(
                f"outer map has {outer.shape[1]} columns but inner map has {inner.shape[0]} rows"
            )
        for name, mat in (("outer", outer), ("inner", inner)):
            if not np.allclose(mat @ mat.T, np.eye(mat.shape[0]), atol=ORTHONORMAL_TOL):
                raise ValueError(f"{name} map must have orthonormal rows")
        y = outer @ inner
        if not np.allclose(y @ y.T, np.eye(y.shape[0]), atol=ORTHONORMAL_TOL):
            raise ValueError("composed map Y = X Phi does not have orthonormal rows")
        object.__setattr__(self, "outer", outer)
        object.__setattr__(self, "inner", inner)

    @property
    def composed(self):
        return self.outer @ self.inner

    @property
    def d(self):
        return self.outer.shape[0]


@dataclass(frozen=True)
class ProgressiveResult:
    """
    Curves (i) Y R Y^T, (ii) X R_k(Phi) X^T and (iii) R_k(Y) plus their gaps.

    Gap names follow the comparison options: full-vs-intermediate,
    full-vs-coarse and intermediate-vs-coarse.
    """

    approach: int
    full: object
    intermediate: object
    coarse: object
    gap_full_intermediate: np.ndarray
    gap_full_coarse: np.ndarray
    gap_intermediate_coarse: np.ndarray

    @property
    def lags(self):
        return self.full.lags

    def gaps_ordered(self, slack=1e-9):
        """Both gaps against the intermediate level are bounded by the full-vs-coarse gap"""
        ok1 = self.gap_full_intermediate <= self.gap_full_coarse + slack
        ok2 = self.gap_intermediate_coarse <= self.gap_full_coarse + slack
        return ok1 & ok2


def build_2d(spec, beta=1.0):
    """A = diag(1, lam), Phi = (cos theta, sin theta), Psi = (-sin theta, cos theta)"""
    c, s = math.cos(spec.theta), math.sin(spec.theta)
    sys = SystemSpec(a=np.diag([1.0, spec.lam]), beta=beta)
    cg = normalize_map([[c, s]]).with_complement([[-s, c]])
    return sys, cg


def build_tridiag(spec):
    n = len(spec.diag)
    a = np.diag(np.array(spec.diag))
    if n > 1:
        off = np.full(n - 1, float(spec.offdiag_sigma))
        a += np.diag(off, 1) + np.diag(off, -1)
    w = spectral_decompose(a).eigenvalues
    if w[0] <= 0:
        raise OrderViolationError(
            f"sigma={spec.offdiag_sigma:g} makes the tridiagonal matrix indefinite "
            f"(smallest eigenvalue {w[0]:.6g})"
        )
    return SystemSpec(a=a, beta=spec.beta)


def build_chain(spec):
    """Stiffness A = D^T diag(k) D from the spring incidence matrix D"""
    n = spec.n_masses
    incidence = np.eye(n)
    incidence[np.arange(n - 1), np.arange(1, n)] = -1.0
    k = spec.spring_constants()
    a = incidence.T @ (k[:, None] * incidence)
    return SystemSpec(a=a, beta=spec.beta)


def chain_stiffness_direct(spec):
    """A11 = k1, A_ii = k_{i-1} + k_i, off-diagonals -k_i"""
    n = spec.n_masses
    k = spec.spring_constants()
    diag = k.copy()
    diag[1:] += k[:-1]
    a = np.diag(diag)
    if n > 1:
        a += np.diag(-k[:-1], 1) + np.diag(-k[:-1], -1)
    return a


def selection_map(indices, dim):
    """Coordinate-selection rows e_i for each index (0-based)"""
    rows = np.zeros((len(indices), dim))
    rows[np.arange(len(indices)), list(indices)] = 1.0
    return rows


def progressive_spec_for_prefix(d, n, dim):
    """Observe the first d of the first n coordinates of R^dim"""
    if not 1 <= d <= n <= dim:
        raise DimensionMismatchError(f"need 1 <= d <= n <= N, got d={d}, n={n}, N={dim}")
    return ProgressiveSpec(outer=selection_map(range(d), n), inner=selection_map(range(n), dim))


def progressive_compare(sys, inner_map, outer_map, approach, lags):
    prog = ProgressiveSpec(outer=outer_map, inner=inner_map)
    if prog.inner.shape[1] != sys.dim:
        raise DimensionMismatchError(
            f"inner map acts on R^{prog.inner.shape[1]} but the system is {sys.dim}-dimensional"
        )
    inner_cg = normalize_map(prog.inner)
    coarse_cg = normalize_map(prog.composed)

    full = acf_full(sys, coarse_cg, lags)
    intermediate = acf_reduced(build_reduced(sys, inner_cg, approach), lags).project(
        prog.outer, label=f"intermediate{approach}"
    )
    coarse = acf_reduced(build_reduced(sys, coarse_cg, approach), lags)

    def gap(p, q):
        return np.sqrt(np.sum((p.values - q.values) ** 2, axis=(1, 2)))

    result = ProgressiveResult(
        approach=approach,
        full=full,
        intermediate=intermediate,
        coarse=coarse,
        gap_full_intermediate=gap(full, intermediate),
        gap_full_coarse=gap(full, coarse),
        gap_intermediate_coarse=gap(intermediate, coarse),
    )
    held = result.gaps_ordered()
    if not np.all(held):
        # expected for approach 2, where monotonicity is not guaranteed
        log = logger.warning if approach == 2 else logger.error
        log(
            "approach %d: progressive gap ordering fails at %d of %d lags (n=%d, d=%d)",
            approach,
            int(np.sum(~held)),
            held.size,
            prog.inner.shape[0],
            prog.d,
        )
    return result


BUILDER_KINDS = ("2d", "tridiag", "chain")


def system_from_builder(doc):
    """
    Build a SystemSpec (and, for "2d", its map) from a builder document.

    {"kind": "2d", "lambda": 20, "theta": 0.3, "beta": 1}
    {"kind": "tridiag", "diag": [...], "sigma": 0.5}  or  {"kind": "tridiag", "sigma": 0.5}
    {"kind": "chain", "n_masses": 40, "k1": 1, "k2": 1, "k3": 1}

    Returns (sys, cg) where cg is None unless the builder fixes a map.
    """
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError("builder document needs a 'kind' key")
    kind = doc["kind"]
    params = {k: v for k, v in doc.items() if k != "kind"}
    allowed = {
        "2d": {"lambda", "theta", "beta"},
        "tridiag": {"diag", "sigma", "beta"},
        "chain": {"n_masses", "k1", "k2", "k3", "beta", "springs"},
    }
    if kind not in allowed:
        raise ConfigError(
            f"unknown builder kind {kind!r}; expected one of {', '.join(BUILDER_KINDS)}"
        )
    unknown = sorted(set(params) - allowed[kind])
    if unknown:
        raise ConfigError(f"unknown key(s) for builder {kind!r}: {', '.join(unknown)}")
    beta = float(params.get("beta", 1.0))
    try:
        if kind == "2d":
            spec = TwoDSpec(lam=float(params["lambda"]), theta=float(params["theta"]))
            return build_2d(spec, beta)
        if kind == "tridiag":
            sigma = float(params.get("sigma", 0.0))
            diag = params.get("diag")
            if diag:
                spec = TridiagSpec(diag=tuple(diag), offdiag_sigma=sigma, beta=beta)
            else:
                spec = TridiagSpec.standard_10d(sigma, beta)
            return build_tridiag(spec), None
        springs = params.get("springs")
        spec = ChainSpec(
            n_masses=int(params.get("n_masses", 40)),
            k1=float(params.get("k1", 1.0)),
            k2=float(params.get("k2", 1.0)),
            k3=float(params.get("k3", 1.0)),
            beta=beta,
            springs=tuple(springs) if springs is not None else None,
        )
        return build_chain(spec), None
    except KeyError as e:
        raise ConfigError(f"builder {kind!r} is missing key {e.args[0]!r}") from e
    except CoarseGrainingError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid parameters for builder {kind!r}: {e}") from e
