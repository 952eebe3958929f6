"""
Euler-Maruyama Monte Carlo for the full and reduced dynamics, and sample
autocovariance estimation.

Each trajectory i draws its Gaussians from its own Philox stream seeded by
SeedSequence(base_seed, spawn_key=(i,)), so a trajectory depends only on
(base_seed, i). Trajectories are integrated in fixed-size chunks whose
composition does not depend on the worker count; chunks run on a thread pool
and results are merged in trajectory order.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import singledispatch
from typing import Optional, Tuple

import numpy as np
import scipy.fft
import scipy.linalg

from cg_analytics import AcfCurve, FullModel
from cg_errors import ConfigError, DimensionMismatchError, LagGridError, StabilityError
from cg_matcore import expm_scaled
from cg_model import ReducedModel, default_zeta0

logger = logging.getLogger(__name__)

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:
    NUMBA_AVAILABLE = False

TRAJECTORIES_PER_CHUNK = 64
GAUSSIAN_BLOCK_STEPS = 4096
DEFAULT_STRIDE = 4
# Exact re-evaluation of e^{-A1 t} every this many steps
FORCING_REFRESH_STEPS = 10_000

SIM_KEYS = (
    "dt",
    "t_total",
    "n_samples",
    "base_seed",
    "burn_in_fraction",
    "q0",
    "xi0",
    "zeta0",
    "stride",
)


@dataclass(frozen=True)
class SimConfig:
    """
    Simulation parameters.

    q0 starts a full-model run (zeros if omitted); xi0/zeta0 start a reduced
    run. A zeta0 given here replaces the one stored in the reduced model.
    stride=None stores every DEFAULT_STRIDE-th step.
    """

    dt: float
    t_total: float
    n_samples: int
    base_seed: int = 0
    burn_in_fraction: float = 0.5
    q0: Optional[Tuple[float, ...]] = None
    xi0: Optional[Tuple[float, ...]] = None
    zeta0: Optional[Tuple[float, ...]] = None
    stride: Optional[int] = None
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_total >= self.dt:
            raise ValueError(f"t_total must be at least dt, got {self.t_total}")
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ValueError(f"n_samples must be a positive integer, got {self.n_samples}")
        if not 0 <= self.burn_in_fraction < 1:
            raise ValueError(f"burn_in_fraction must lie in [0, 1), got {self.burn_in_fraction}")
        if self.stride is not None and (int(self.stride) != self.stride or self.stride < 1):
            raise ValueError(f"stride must be a positive integer, got {self.stride}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        for name in ("q0", "xi0", "zeta0"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(float(v) for v in np.ravel(value)))

    @property
    def n_steps(self):
        return int(round(self.t_total / self.dt))

    def resolved_stride(self, lags=None):
        """Explicit stride, else 4 unless some lag is not a multiple of 4 dt"""
        if self.stride is not None:
            return int(self.stride)
        if lags is not None:
            spacing = DEFAULT_STRIDE * self.dt
            k = np.asarray(lags, dtype=float) / spacing
            if np.any(np.abs(k - np.round(k)) > 1e-9 * np.maximum(1.0, k)):
                logger.debug("lag grid needs full-resolution storage, stride=1")
                return 1
        return DEFAULT_STRIDE


@dataclass(frozen=True)
class Ensemble:
    """paths[i, k] is the observed state of trajectory i at times[k]"""

    times: np.ndarray
    paths: np.ndarray
    dt: float
    stride: int
    burn_in_fraction: float = 0.5

    def __post_init__(self):
        paths = np.asarray(self.paths, dtype=float)
        if paths.ndim == 2:
            paths = paths[:, :, None]
        if paths.ndim != 3 or paths.shape[1] != len(self.times):
            raise DimensionMismatchError(
                f"paths shape {paths.shape} does not match {len(self.times)} stored times"
            )
        object.__setattr__(self, "paths", paths)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))

    @property
    def n_samples(self):
        return self.paths.shape[0]

    @property
    def spacing(self):
        return self.dt * self.stride

    @property
    def burn_in_index(self):
        return int(math.floor(self.burn_in_fraction * len(self.times)))


@dataclass(frozen=True)
class _Dynamics:
    drift: np.ndarray
    noise_factor: np.ndarray
    readout: np.ndarray
    state0: np.ndarray
    forcing: np.ndarray
    beta: float


def em_step(state, drift_matrix, forcing, noise_factor, dt, gaussians, beta=1.0):
    """x' = x - dt (D x - f) + sqrt(2 dt / beta) G g"""
    state = np.asarray(state, dtype=float)
    drift_matrix = np.atleast_2d(drift_matrix)
    noise_factor = np.atleast_2d(noise_factor)
    return (
        state
        - dt * (drift_matrix @ state - np.asarray(forcing, dtype=float))
        + math.sqrt(2.0 * dt / beta) * (noise_factor @ np.asarray(gaussians, dtype=float))
    )


def max_stable_dt(drift_matrix):
    """2 / (largest real part of the drift spectrum)"""
    w = scipy.linalg.eigvals(np.atleast_2d(drift_matrix))
    top = float(np.max(w.real))
    return math.inf if top <= 0 else 2.0 / top


def check_stability(drift_matrix, dt):
    limit = max_stable_dt(drift_matrix)
    if not dt < limit:
        raise StabilityError(dt, limit)
    return limit


def forcing_schedule(memory, dt, n_steps, refresh=FORCING_REFRESH_STEPS):
    """
    Memory forcing at every step time t_s = s dt, shape (n_steps, n).

    e^{-A1 dt} is applied repeatedly and the state is re-evaluated exactly
    every `refresh` steps.
    """
    n = memory.gain.shape[0]
    if memory.zeta0.size == 0 or not np.any(memory.zeta0):
        return np.zeros((0, n))
    coupling = -memory.gain @ memory.alpha
    step = expm_scaled(memory.a1, dt)
    out = np.empty((n_steps, n))
    z = memory.zeta0.copy()
    for s in range(n_steps):
        if s % refresh == 0 and s > 0:
            z = expm_scaled(memory.a1, s * dt) @ memory.zeta0
            logger.debug("forcing refresh at step %d", s)
        out[s] = coupling @ z
        z = step @ z
    return out


def _em_block_numpy(
    states, drift_t, factor_t, forcing, gaussians, dt, scale, stride, step0, readout_t, out, slot
):
    # row-wise sums keep each trajectory independent of the chunk size
    has_forcing = forcing.shape[0] > 0
    for s in range(gaussians.shape[0]):
        f = forcing[step0 + s] if has_forcing else 0.0
        pull = np.sum(states[:, :, None] * drift_t[None, :, :], axis=1)
        kick = np.sum(gaussians[s][:, :, None] * factor_t[None, :, :], axis=1)
        states = states - dt * (pull - f) + scale * kick
        if (step0 + s + 1) % stride == 0:
            out[:, slot, :] = np.sum(states[:, :, None] * readout_t[None, :, :], axis=1)
            slot += 1
    return states, slot


def _em_block_loops(
    states, drift_t, factor_t, forcing, gaussians, dt, scale, stride, step0, readout_t, out, slot
):
    c, d = states.shape
    n_obs = readout_t.shape[1]
    has_forcing = forcing.shape[0] > 0
    new = np.empty_like(states)
    for s in range(gaussians.shape[0]):
        for r in range(c):
            for j in range(d):
                pull = states[r, 0] * drift_t[0, j]
                kick = gaussians[s, r, 0] * factor_t[0, j]
                for k in range(1, d):
                    pull += states[r, k] * drift_t[k, j]
                    kick += gaussians[s, r, k] * factor_t[k, j]
                if has_forcing:
                    pull -= forcing[step0 + s, j]
                new[r, j] = states[r, j] - dt * pull + scale * kick
        states, new = new, states
        if (step0 + s + 1) % stride == 0:
            for r in range(c):
                for j in range(n_obs):
                    acc = states[r, 0] * readout_t[0, j]
                    for k in range(1, d):
                        acc += states[r, k] * readout_t[k, j]
                    out[r, slot, j] = acc
            slot += 1
    return states, slot


if NUMBA_AVAILABLE:
    _em_block = njit(cache=True)(_em_block_loops)
else:
    _em_block = _em_block_numpy


def _trajectory_rng(base_seed, index):
    seq = np.random.SeedSequence(int(base_seed) & (2**64 - 1), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seq))


def _simulate_chunk(dyn, cfg, stride, indices):
    n_steps = cfg.n_steps
    d = dyn.drift.shape[0]
    n_obs = dyn.readout.shape[0]
    n_stored = n_steps // stride + 1
    out = np.empty((len(indices), n_stored, n_obs))
    out[:, 0, :] = dyn.readout @ dyn.state0
    rngs = [_trajectory_rng(cfg.base_seed, i) for i in indices]
    states = np.tile(dyn.state0, (len(indices), 1))
    drift_t = np.ascontiguousarray(dyn.drift.T)
    factor_t = np.ascontiguousarray(dyn.noise_factor.T)
    readout_t = np.ascontiguousarray(dyn.readout.T)
    scale = math.sqrt(2.0 * cfg.dt / dyn.beta)
    slot = 1
    for step0 in range(0, n_steps, GAUSSIAN_BLOCK_STEPS):
        block = min(GAUSSIAN_BLOCK_STEPS, n_steps - step0)
        g = np.stack([rng.standard_normal((block, d)) for rng in rngs], axis=1)
        states, slot = _em_block(
            states, drift_t, factor_t, dyn.forcing, np.ascontiguousarray(g),
            cfg.dt, scale, stride, step0, readout_t, out, slot,
        )
    logger.debug("chunk %d..%d done", indices[0], indices[-1])
    return out


def _chunks(n_samples):
    return [
        list(range(start, min(start + TRAJECTORIES_PER_CHUNK, n_samples)))
        for start in range(0, n_samples, TRAJECTORIES_PER_CHUNK)
    ]


def _map_chunks(fn, cfg):
    chunks = _chunks(cfg.n_samples)
    if cfg.workers == 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(fn, chunks))


@singledispatch
def _dynamics(model, cfg):
    raise TypeError(f"cannot simulate {type(model).__name__}")


@_dynamics.register
def _(model: FullModel, cfg):
    sys, cg = model.sys, model.cg
    if cfg.q0 is None:
        q0 = np.zeros(sys.dim)
    else:
        q0 = np.asarray(cfg.q0)
        if q0.shape[0] != sys.dim:
            raise DimensionMismatchError(f"q0 must have length {sys.dim}, got {q0.shape[0]}")
    check_stability(sys.a, cfg.dt)
    readout = cg.phi if cg is not None else np.eye(sys.dim)
    return _Dynamics(
        drift=sys.a,
        noise_factor=np.eye(sys.dim),
        readout=readout,
        state0=q0,
        forcing=np.zeros((0, sys.dim)),
        beta=sys.beta,
    )


@_dynamics.register
def _(model: ReducedModel, cfg):
    n = model.dim
    xi0 = np.zeros(n) if cfg.xi0 is None else np.asarray(cfg.xi0)
    if xi0.shape[0] != n:
        raise DimensionMismatchError(f"xi0 must have length {n}, got {xi0.shape[0]}")
    check_stability(model.drift, cfg.dt)
    memory = model.memory
    if cfg.zeta0 is not None:
        memory = replace(memory, zeta0=np.asarray(cfg.zeta0))
        if memory.zeta0.shape[0] != memory.a1.shape[0]:
            raise DimensionMismatchError(
                f"zeta0 must have length {memory.a1.shape[0]}, got {memory.zeta0.shape[0]}"
            )
    if memory is not None:
        forcing = forcing_schedule(memory, cfg.dt, cfg.n_steps)
    else:
        forcing = np.zeros((0, n))
    return _Dynamics(
        drift=model.drift,
        noise_factor=model.noise_cov_factor,
        readout=np.eye(n),
        state0=xi0,
        forcing=forcing,
        beta=model.beta,
    )


def _simulate(model, cfg, stride):
    dyn = _dynamics(model, cfg)
    parts = _map_chunks(lambda idx: _simulate_chunk(dyn, cfg, stride, idx), cfg)
    paths = np.concatenate(parts, axis=0)
    times = np.arange(paths.shape[1]) * stride * cfg.dt
    return Ensemble(
        times=times,
        paths=paths,
        dt=cfg.dt,
        stride=stride,
        burn_in_fraction=cfg.burn_in_fraction,
    )


def simulate_full(sys, cg, cfg, lags=None):
    """
    Euler-Maruyama paths of the full dynamics, recording xi = Phi q.

    With cg=None the full state q is recorded.
    """
    logger.info("simulating full model: %d trajectories, %d steps", cfg.n_samples, cfg.n_steps)
    return _simulate(FullModel(sys, cg), cfg, cfg.resolved_stride(lags))


def simulate_reduced(model, cfg, lags=None):
    logger.info(
        "simulating approach %d: %d trajectories, %d steps",
        model.approach,
        cfg.n_samples,
        cfg.n_steps,
    )
    return _simulate(model, cfg, cfg.resolved_stride(lags))


def reduced_start(bd, xi0):
    """(xi0, zeta0) pair with zeta0 = -A1^{-1} alpha^T xi0"""
    xi0 = np.asarray(xi0, dtype=float).reshape(-1)
    return xi0, default_zeta0(bd, xi0)


def _lag_steps(spacing, lags, n_retained):
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    if lags.size and (lags[0] < 0 or np.any(np.diff(lags) <= 0)):
        raise LagGridError("lags must be nonnegative and strictly ascending")
    k = np.round(lags / spacing)
    if np.any(np.abs(k * spacing - lags) > 1e-9 * np.maximum(1.0, lags)):
        raise LagGridError(f"lags must be integer multiples of the stored spacing {spacing:g}")
    k = k.astype(int)
    if k.size and k[-1] >= n_retained:
        raise LagGridError(
            f"lag {lags[-1]:g} exceeds the retained window ({(n_retained - 1) * spacing:g})"
        )
    return lags, k


def _lag_sums(x, ks):
    """
    For a retained path x (K, n): sum_t x_t x_{t+k}^T, the head sums
    sum_{t<K-k} x_t and the tail sums sum_{t>=k} x_t, for each k in ks.
    """
    n_keep, n = x.shape
    size = scipy.fft.next_fast_len(2 * n_keep)
    spectrum = scipy.fft.rfft(x, n=size, axis=0)
    cross = scipy.fft.irfft(np.conj(spectrum)[:, :, None] * spectrum[:, None, :], n=size, axis=0)
    csum = np.vstack([np.zeros((1, n)), np.cumsum(x, axis=0)])
    head = csum[n_keep - ks]
    tail = csum[n_keep] - csum[ks]
    return cross[ks], head, tail, csum[n_keep]


class AcfAccumulator:
    """Per-trajectory lag sums, combined into the mean-subtracted ensemble estimator"""

    def __init__(self, n_samples, lag_steps, n_keep, n):
        self.ks = lag_steps
        self.n_keep = n_keep
        self.prods = np.zeros((n_samples, len(lag_steps), n, n))
        self.heads = np.zeros((n_samples, len(lag_steps), n))
        self.tails = np.zeros((n_samples, len(lag_steps), n))
        self.totals = np.zeros((n_samples, n))

    def add(self, index, retained):
        prods, head, tail, total = _lag_sums(retained, self.ks)
        self.prods[index] = prods
        self.heads[index] = head
        self.tails[index] = tail
        self.totals[index] = total

    def per_trajectory(self):
        """Centered per-trajectory estimates, shape (n_samples, n_lags, n, n)"""
        mu = self.totals.sum(axis=0) / (self.totals.shape[0] * self.n_keep)
        counts = (self.n_keep - self.ks).astype(float)[None, :, None, None]
        est = (
            self.prods
            - self.heads[:, :, :, None] * mu[None, None, None, :]
            - mu[None, None, :, None] * self.tails[:, :, None, :]
        ) / counts + np.outer(mu, mu)[None, None]
        return 0.5 * (est + np.swapaxes(est, 2, 3))


def _accumulate(ens, lags):
    n_keep = len(ens.times) - ens.burn_in_index
    lags, ks = _lag_steps(ens.spacing, lags, n_keep)
    acc = AcfAccumulator(ens.n_samples, ks, n_keep, ens.paths.shape[2])
    for i in range(ens.n_samples):
        acc.add(i, ens.paths[i, ens.burn_in_index :])
    return lags, acc.per_trajectory()


def sample_acf(ens, lags):
    lags, est = _accumulate(ens, lags)
    return AcfCurve(lags, est.mean(axis=0), "sample")


def standard_error(ens, lags):
    """
    Across-trajectory standard deviation of per-trajectory estimates over
    sqrt(n_samples); matrix-valued curves report the Frobenius norm of the
    entrywise standard errors.
    """
    if ens.n_samples < 2:
        raise ValueError("standard errors need at least two trajectories")
    _, est = _accumulate(ens, lags)
    return _stderr(est)


def _stderr(est):
    sd = est.std(axis=0, ddof=1) / math.sqrt(est.shape[0])
    return np.sqrt(np.sum(sd**2, axis=(1, 2)))


def sample_acf_streaming(model, cfg, lags):
    """
    sample_acf and standard_error without keeping whole paths in memory.

    Paths are produced a chunk at a time and reduced to lag sums right away,
    so memory scales with the lag count instead of the trajectory length.
    """
    stride = cfg.resolved_stride(lags)
    dyn = _dynamics(model, cfg)
    n_stored = cfg.n_steps // stride + 1
    burn = int(math.floor(cfg.burn_in_fraction * n_stored))
    n_keep = n_stored - burn
    lags, ks = _lag_steps(cfg.dt * stride, lags, n_keep)
    acc = AcfAccumulator(cfg.n_samples, ks, n_keep, dyn.readout.shape[0])

    def run(indices):
        paths = _simulate_chunk(dyn, cfg, stride, indices)
        for local, i in enumerate(indices):
            acc.add(i, paths[local, burn:])
        return len(indices)

    done = sum(_map_chunks(run, cfg))
    logger.debug("accumulated lag sums for %d trajectories (stride %d)", done, stride)
    est = acc.per_trajectory()
    stderr = _stderr(est) if cfg.n_samples > 1 else np.zeros(len(lags))
    return AcfCurve(lags, est.mean(axis=0), "sample"), stderr


def em_stationary_covariance(drift_matrix, noise_factor, beta, dt):
    """
    Stationary covariance of the Euler-Maruyama recursion itself,
    solving S = M S M^T + (2 dt / beta) G G^T with M = I - dt D.
    """
    drift_matrix = np.atleast_2d(drift_matrix)
    check_stability(drift_matrix, dt)
    step = np.eye(drift_matrix.shape[0]) - dt * drift_matrix
    g = np.atleast_2d(noise_factor)
    return scipy.linalg.solve_discrete_lyapunov(step, (2.0 * dt / beta) * g @ g.T)


def sim_config_from_document(doc, workers=1):
    params = {k: doc[k] for k in SIM_KEYS if k in doc}
    try:
        return SimConfig(workers=workers, **params)
    except TypeError as e:
        raise ConfigError(f"missing simulation parameter: {e}") from e
    except ValueError as e:
        raise ConfigError(str(e)) from e
