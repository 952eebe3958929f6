"""
Closed-form statistics of the full and reduced dynamics.

Equilibrium autocovariances (xi0 = 0, E[zeta0] = 0):

    full        R(tau)  = beta^{-1} Phi A^{-1} e^{-tau A} Phi^T
    approach 0  R0(tau) = beta^{-1} A0^{-1} e^{-tau A0}
    approach 1  R1(tau) = beta^{-1} B^{-1} e^{-tau B}
    approach 2  R2(tau) = beta^{-1} B^{-1} e^{-tau B C}

plus mean-squared displacement, error metrics, the Loewner-order bound
checker, short-time Taylor expansions and the two-dimensional asymptotic
error predictions.
"""

import logging
import math
from dataclasses import dataclass
from functools import singledispatch

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

from cg_errors import LagGridError, UnsupportedCaseError
from cg_matcore import (
    as_symmetric,
    expm_nonsym_similar,
    frobenius_norm,
    inv_sym,
    loewner_margin,
    spectral_decompose,
)
from cg_model import (
    CoarseGrainingMap,
    ReducedModel,
    SystemSpec,
    block_decompose,
    build_reduced,
    effective_matrices,
)

logger = logging.getLogger(__name__)

# Default L1 quadrature resolution: points per unit lag
DEFAULT_POINTS_PER_UNIT_LAG = 512
BOUND_TOL = 1e-9
# Below this norm a relative error is 0/0 noise
_TINY = 1e-14

BOUND_NAMES = ("app1_lower", "app1_upper", "app2_lower", "app2_upper")

# Cases of bound_regime; only the first two guarantee the Loewner bounds
REGIME_ALIGNED = "aligned"
REGIME_SCALAR = "scalar"
REGIME_GENERAL = "general"
# ||alpha|| below this fraction of ||A|| (floor 1) counts as a decoupled map
ALIGNED_TOL = 1e-10


@dataclass(frozen=True)
class FullModel:
    """The full dynamics observed through a coarse-graining map"""

    sys: SystemSpec
    cg: CoarseGrainingMap

    @property
    def beta(self):
        return self.sys.beta


@dataclass(frozen=True)
class AcfCurve:
    """One symmetric n x n matrix per lag"""

    lags: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        lags = np.asarray(self.lags, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1, 1)
        if values.shape[0] != lags.shape[0] or values.shape[1] != values.shape[2]:
            raise ValueError(f"values shape {values.shape} does not match {lags.shape[0]} lags")
        if lags.size and (lags[0] < 0 or np.any(np.diff(lags) <= 0)):
            raise LagGridError("lags must be nonnegative and strictly ascending")
        values = 0.5 * (values + np.transpose(values, (0, 2, 1)))
        lags.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", values)

    @property
    def dim(self):
        return self.values.shape[1]

    def norms(self):
        return np.sqrt(np.sum(self.values**2, axis=(1, 2)))

    def project(self, x, label=None):
        """X R(tau) X^T at every lag"""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vals = np.einsum("ik,lkj,mj->lim", x, self.values, x)
        return AcfCurve(self.lags, vals, label if label is not None else self.label)

    def scalar(self):
        if self.dim != 1:
            raise ValueError("scalar() only applies to 1x1 curves")
        return self.values[:, 0, 0].copy()

    def to_frame(self):
        cols = {"tau": self.lags}
        n = self.dim
        for i in range(n):
            for j in range(n):
                cols[f"value_{i + 1}_{j + 1}"] = self.values[:, i, j]
        return pd.DataFrame(cols)


@dataclass(frozen=True)
class ErrorReport:
    lags: np.ndarray
    abs_err: np.ndarray
    rel_err: np.ndarray
    l1_mean_abs: np.ndarray
    l1_mean_rel: np.ndarray

    def to_frame(self):
        return pd.DataFrame(
            {
                "tau": self.lags,
                "abs": self.abs_err,
                "rel": self.rel_err,
                "l1_abs": self.l1_mean_abs,
                "l1_rel": self.l1_mean_rel,
            }
        )


@dataclass(frozen=True)
class TwoDSpec:
    """A = diag(1, lam), Phi = (cos theta, sin theta)"""

    lam: float
    theta: float

    def __post_init__(self):
        if not self.lam >= 1:
            raise ValueError(f"lambda must be >= 1, got {self.lam}")
        if not -math.pi / 2 < self.theta < math.pi / 2:
            raise ValueError(f"theta must lie in (-pi/2, pi/2), got {self.theta}")


@dataclass(frozen=True)
class BoundsReport:
    """Smallest-eigenvalue margins of the four Loewner inequalities per lag"""

    lags: np.ndarray
    margins: np.ndarray
    tol: float
    regime: str = REGIME_GENERAL

    @property
    def guaranteed(self):
        """Whether the bounds are known to hold for this system and map"""
        return self.regime != REGIME_GENERAL

    @property
    def violating_lags(self):
        return int(np.sum(~self.passed))

    @property
    def passed(self):
        return np.all(self.margins >= -self.tol, axis=1)

    @property
    def all_passed(self):
        return bool(np.all(self.passed))

    def to_frame(self):
        cols = {"tau": self.lags}
        for k, name in enumerate(BOUND_NAMES):
            cols[name] = self.margins[:, k]
        cols["passed"] = self.passed.astype(int)
        return pd.DataFrame(cols)


def lag_grid(tau_max, points_per_unit=DEFAULT_POINTS_PER_UNIT_LAG, include_zero=True):
    """Uniform lag grid on [0, tau_max] (or (0, tau_max])"""
    count = max(2, int(round(tau_max * points_per_unit)) + 1)
    grid = np.linspace(0.0, tau_max, count)
    return grid if include_zero else grid[1:]


def _as_lags(lags):
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    if lags.size and (lags[0] < 0 or np.any(np.diff(lags) <= 0)):
        raise LagGridError("lags must be nonnegative and strictly ascending")
    return lags


def acf_full(sys, cg, lags):
    """R(tau) = beta^{-1} Phi A^{-1} e^{-tau A} Phi^T"""
    lags = _as_lags(lags)
    decomp = spectral_decompose(sys.a)
    w = decomp.eigenvalues
    u = cg.phi @ decomp.eigenvectors
    weights = np.exp(-np.outer(lags, w)) / w
    values = np.einsum("ik,lk,jk->lij", u, weights, u) / sys.beta
    return AcfCurve(lags, values, "full")


def acf_reduced(model, lags):
    """Autocovariance of a reduced model (approach 0 uses A0 in place of B)"""
    lags = _as_lags(lags)
    if model.approach == 2:
        b_inv = inv_sym(model.b)
        values = np.array([b_inv @ expm_nonsym_similar(model.b, model.c, t) for t in lags])
        values = values / model.beta
    else:
        mat = model.a0 if model.approach == 0 else model.b
        decomp = spectral_decompose(mat)
        w = decomp.eigenvalues
        q = decomp.eigenvectors
        weights = np.exp(-np.outer(lags, w)) / w
        values = np.einsum("ik,lk,jk->lij", q, weights, q) / model.beta
    return AcfCurve(lags, values, f"approach{model.approach}")


@singledispatch
def acf(model, lags):
    raise TypeError(f"no autocovariance for {type(model).__name__}")


@acf.register
def _(model: FullModel, lags):
    return acf_full(model.sys, model.cg, lags)


@acf.register
def _(model: ReducedModel, lags):
    return acf_reduced(model, lags)


@singledispatch
def equilibrium_covariance(model):
    raise TypeError(f"no equilibrium covariance for {type(model).__name__}")


@equilibrium_covariance.register
def _(model: FullModel):
    cg = model.cg
    return as_symmetric(cg.phi @ inv_sym(model.sys.a) @ cg.phi.T, tol=1e-9) / model.beta


@equilibrium_covariance.register
def _(model: ReducedModel):
    mat = model.a0 if model.approach == 0 else model.b
    return inv_sym(mat) / model.beta


def msd(model, t_grid, xi0=None):
    """
    Mean-squared displacement from the deterministic start xi0 = 0.

    D(t) = tr[R(0) - R(2t)] for every model, i.e. the trace of the
    displacement covariance. A nonzero xi0 is not covered by this formula.
    """
    if xi0 is not None and np.any(np.asarray(xi0, dtype=float) != 0):
        raise UnsupportedCaseError(
            "msd assumes the zero-mean case xi0 = 0; use msd_full_with_offset for a full-model q0"
        )
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t_grid < 0):
        raise ValueError("times must be nonnegative")
    lags, inverse = np.unique(np.concatenate([[0.0], 2.0 * t_grid]), return_inverse=True)
    traces = np.trace(acf(model, lags).values, axis1=1, axis2=2)
    return traces[0] - traces[inverse[1:]]


def mean_path_full(sys, cg, q0, t_grid):
    """E[xi_t] = Phi e^{-t A} q0 for a deterministic q0, one row per time"""
    q0 = np.asarray(q0, dtype=float).reshape(-1)
    decomp = spectral_decompose(sys.a)
    coeffs = decomp.eigenvectors.T @ q0
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    modes = np.exp(-np.outer(t_grid, decomp.eigenvalues)) * coeffs
    return modes @ (cg.phi @ decomp.eigenvectors).T


def msd_full_with_offset(sys, cg, q0, t_grid):
    """Full-model MSD for a deterministic q0: covariance trace plus squared mean displacement"""
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    q0 = np.asarray(q0, dtype=float).reshape(-1)
    base = msd(FullModel(sys, cg), t_grid)
    drift = mean_path_full(sys, cg, q0, t_grid) - cg.phi @ q0
    return base + np.sum(drift**2, axis=1)


def error_report(truth, approx):
    """
    Pointwise Frobenius errors and their running L1 means over the lag grid.

    L1 means are trapezoid integrals from the first grid lag (0 for the exact
    L1(0, tau) quantities); the absolute mean is divided by the window length.
    """
    if truth.lags.shape != approx.lags.shape or not np.allclose(
        truth.lags, approx.lags, rtol=0, atol=1e-12
    ):
        raise LagGridError("truth and approximation are on different lag grids")
    if truth.dim != approx.dim:
        raise LagGridError(f"curves have different dimensions ({truth.dim} vs {approx.dim})")
    lags = truth.lags
    abs_err = np.sqrt(np.sum((approx.values - truth.values) ** 2, axis=(1, 2)))
    ref = truth.norms()
    rel_err = _safe_ratio(abs_err, ref)

    int_abs = cumulative_trapezoid(abs_err, lags, initial=0.0)
    int_ref = cumulative_trapezoid(ref, lags, initial=0.0)
    window = lags - lags[0]
    l1_abs = np.where(window > 0, int_abs / np.where(window > 0, window, 1.0), abs_err)
    l1_rel = np.where(window > 0, _safe_ratio(int_abs, int_ref), rel_err)
    return ErrorReport(
        lags=lags, abs_err=abs_err, rel_err=rel_err, l1_mean_abs=l1_abs, l1_mean_rel=l1_rel
    )


def _safe_ratio(num, den):
    """num / den, with 0/0 -> 0 and x/0 -> nan (undefined) below _TINY"""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.empty_like(num)
    small = den < _TINY
    out[~small] = num[~small] / den[~small]
    out[small] = np.where(num[small] < _TINY, 0.0, np.nan)
    return out


def _curves(sys, cg, lags):
    full = acf_full(sys, cg, lags)
    app1 = acf_reduced(build_reduced(sys, cg, 1), lags)
    app2 = acf_reduced(build_reduced(sys, cg, 2), lags)
    return full, app1, app2


def bound_regime(sys, cg, bd=None):
    """
    Which case of the Loewner bounds applies to (sys, cg).

    "aligned": Phi A Psi^T vanishes, so R = R1 = R2 and every margin is 0.
    "scalar": one coarse variable; the bounds follow from scalar Jensen.
    "general": several coupled coarse variables. The argument needs
    x e^{-tau/x} to be operator convex, which it is not, so the bounds
    can fail and are only measured.
    """
    bd = bd if bd is not None else block_decompose(sys, cg)
    if frobenius_norm(bd.alpha) <= ALIGNED_TOL * max(1.0, frobenius_norm(sys.a)):
        return REGIME_ALIGNED
    return REGIME_SCALAR if bd.n == 1 else REGIME_GENERAL


def check_bounds_thm_nd(sys, cg, lags, tol=BOUND_TOL):
    """
    Margins of the global pointwise bounds, per lag, in Loewner order:

        0 <= R - R1 <= 1/2 beta^{-1} tau^2 (A0 - B)
        beta^{-1} tau (C - I) <= R - R2 <= 1/2 beta^{-1} tau^2 (A0 - C B C) + beta^{-1} tau (C - I)

    Violations are reported through negative margins, never raised. They
    are logged as warnings in the aligned and scalar regimes, where the
    bounds are guaranteed, and as info otherwise.
    """
    lags = _as_lags(lags)
    if lags.size and lags[0] <= 0:
        raise LagGridError("bound checks need strictly positive lags")
    bd = block_decompose(sys, cg)
    regime = bound_regime(sys, cg, bd)
    b, c = effective_matrices(bd)
    eye = np.eye(bd.n)
    full, app1, app2 = _curves(sys, cg, lags)
    inv_beta = 1.0 / sys.beta
    a0_minus_b = bd.a0 - b
    a0_minus_cbc = bd.a0 - c @ b @ c
    margins = np.empty((lags.size, 4))
    for k, tau in enumerate(lags):
        d1 = full.values[k] - app1.values[k]
        d2 = full.values[k] - app2.values[k]
        lower2 = inv_beta * tau * (c - eye)
        margins[k, 0] = loewner_margin(d1, np.zeros_like(d1))
        margins[k, 1] = loewner_margin(0.5 * inv_beta * tau**2 * a0_minus_b, d1)
        margins[k, 2] = loewner_margin(d2, lower2)
        margins[k, 3] = loewner_margin(0.5 * inv_beta * tau**2 * a0_minus_cbc + lower2, d2)
    report = BoundsReport(lags=lags, margins=margins, tol=tol, regime=regime)
    if not report.all_passed:
        level = logging.WARNING if report.guaranteed else logging.INFO
        logger.log(
            level,
            "bound violations at %d of %d lags (worst margin %.3e, %s regime)",
            report.violating_lags,
            lags.size,
            float(margins.min()),
            regime,
        )
    return report


def find_tau_star(sys, cg, tau_max=1.0, n_grid=400, tol=1e-12):
    """
    Largest scanned tau such that, on every grid point up to it,
    R(tau) <= R2(tau) and beta^{-1} tau (C - I) <= R - R2 <= beta^{-1} tau (I - C).

    The grid is log-spaced from 1e-8 * tau_max so the region near 0 is resolved.
    Returns 0.0 if the first grid point already fails, and exactly tau_max
    when no scanned lag fails (the scan saturated; see tau_star_saturated).
    """
    lags = np.logspace(math.log10(tau_max) - 8, math.log10(tau_max), n_grid)
    lags[-1] = tau_max
    bd = block_decompose(sys, cg)
    _, c = effective_matrices(bd)
    eye = np.eye(bd.n)
    full, _, app2 = _curves(sys, cg, lags)
    tau_star = 0.0
    for k, tau in enumerate(lags):
        d2 = full.values[k] - app2.values[k]
        band = tau * (eye - c) / sys.beta
        ok = (
            loewner_margin(app2.values[k], full.values[k]) >= -tol
            and loewner_margin(d2, -band) >= -tol
            and loewner_margin(band, d2) >= -tol
        )
        if not ok:
            break
        tau_star = float(tau)
    return tau_star


def tau_star_saturated(tau_star, tau_max):
    """True when find_tau_star hit its scan cap, so tau* is only a lower bound"""
    return tau_star >= tau_max


def short_time_expansions(sys, cg, tau):
    """
    Second-order Taylor expansions at tau = 0 of R, R1 and R2:

        beta R  ~ B^{-1} - tau I + 1/2 tau^2 A0
        beta R1 ~ B^{-1} - tau I + 1/2 tau^2 B
        beta R2 ~ B^{-1} - tau C + 1/2 tau^2 C B C
    """
    bd = block_decompose(sys, cg)
    b, c = effective_matrices(bd)
    b_inv = inv_sym(b)
    eye = np.eye(bd.n)
    inv_beta = 1.0 / sys.beta
    r = inv_beta * (b_inv - tau * eye + 0.5 * tau**2 * bd.a0)
    r1 = inv_beta * (b_inv - tau * eye + 0.5 * tau**2 * b)
    r2 = inv_beta * (b_inv - tau * c + 0.5 * tau**2 * c @ b @ c)
    return r, r1, r2


def asymptotics_2d(spec, tau, beta=1.0):
    """
    Leading-order error predictions for the 2D system (lambda large).

    Long-time terms hold for tau >> 1/lambda, short-time terms for
    tau << 1/lambda << 1.
    """
    if not spec.lam > 1:
        raise ValueError(f"asymptotic predictions need lambda > 1, got {spec.lam}")
    lam, th = spec.lam, spec.theta
    cos2 = math.cos(th) ** 2
    sin2 = math.sin(th) ** 2
    tan2 = math.tan(th) ** 2
    sec2 = 1.0 / cos2
    inv_beta = 1.0 / beta
    decay = math.exp(-tau)
    return {
        "app1_abs": inv_beta * (decay - math.exp(-tau * sec2)) * cos2,
        "app1_rel": 1.0 - math.exp(-tau * tan2),
        "app2_abs": inv_beta * (sin2 / lam) * abs(math.exp(-lam * tau) - decay * (1.0 - tau)),
        "app2_rel": min(1.0, abs(tau - 1.0) / lam * tan2),
        "app1_rel_tau1": 1.0 - math.exp(-tan2),
        "app2_rel_tau1": tan2 * abs(1.0 - 0.5 * tan2) / lam**2,
        "short_app1_rel": 0.5 * tau**2 * (lam - 1.0) * tan2,
        "short_app2_rel": tau * tan2,
        "short_app1_abs": 0.5 * inv_beta * tau**2 * (lam - 1.0) * sin2,
        "short_app2_abs": inv_beta * tau * sin2,
    }


def relative_error_at(sys, cg, approach, tau):
    """Exact relative Frobenius ACF error of approach 1 or 2 at a single lag"""
    truth = acf_full(sys, cg, [tau]).values[0]
    approx = acf_reduced(build_reduced(sys, cg, approach), [tau]).values[0]
    return frobenius_norm(approx - truth) / frobenius_norm(truth)
