import math

import numpy as np
import pytest
import scipy.signal

from cg_analytics import FullModel, TwoDSpec, acf_full, acf_reduced
from cg_errors import ConfigError, DimensionMismatchError, LagGridError, StabilityError
from cg_model import SystemSpec, block_decompose, build_reduced, normalize_map
from cg_montecarlo import (
    TRAJECTORIES_PER_CHUNK,
    Ensemble,
    SimConfig,
    check_stability,
    em_stationary_covariance,
    em_step,
    forcing_schedule,
    max_stable_dt,
    reduced_start,
    sample_acf,
    sample_acf_streaming,
    sim_config_from_document,
    simulate_full,
    simulate_reduced,
    standard_error,
)
from cg_systems import build_2d

# sqrt(2 dt / beta) noise far below every tolerance used here
COLD_BETA = 1e30


def _scalar_system(a=1.0, beta=1.0):
    return SystemSpec(a=[[a]], beta=beta), normalize_map([[1.0]])


def test_em_step_deterministic_euler(system_2d):
    sys, cg = system_2d
    model = build_reduced(sys, cg, 1)
    xi = np.array([0.7])
    out = em_step(xi, model.drift, np.zeros(1), model.noise_cov_factor, 0.01, np.zeros(1))
    np.testing.assert_allclose(out, xi - 0.01 * model.b @ xi)


def test_em_step_full_eigen_coordinates():
    out = em_step([1.0, 0.0], np.diag([1.0, 2.0]), np.zeros(2), np.eye(2), 0.1, np.zeros(2))
    np.testing.assert_allclose(out, [0.9, 0.0])


def test_em_step_pure_diffusion():
    g = np.array([0.3, -1.2])
    out = em_step(np.zeros(2), np.eye(2), np.zeros(2), np.eye(2), 0.01, g, beta=1.0)
    np.testing.assert_allclose(out, math.sqrt(0.02) * g)


def test_em_step_forcing_enters_with_plus_sign():
    out = em_step([0.0], [[1.0]], [2.0], [[1.0]], 0.5, [0.0])
    np.testing.assert_allclose(out, [1.0])


def test_stability_limit():
    assert max_stable_dt(np.diag([1.0, 4.0])) == pytest.approx(0.5)
    with pytest.raises(StabilityError) as info:
        check_stability(np.diag([1.0, 4.0]), 0.6)
    assert info.value.max_stable_dt == pytest.approx(0.5)


def test_simulate_rejects_unstable_dt():
    sys = SystemSpec(a=np.diag([1.0, 3.0]), beta=1.0)
    with pytest.raises(StabilityError):
        simulate_full(sys, None, SimConfig(dt=1.0, t_total=2.0, n_samples=1))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"dt": 0.0, "t_total": 1.0, "n_samples": 1},
        {"dt": 0.1, "t_total": 0.01, "n_samples": 1},
        {"dt": 0.1, "t_total": 1.0, "n_samples": 0},
        {"dt": 0.1, "t_total": 1.0, "n_samples": 1, "burn_in_fraction": 1.0},
        {"dt": 0.1, "t_total": 1.0, "n_samples": 1, "stride": 0},
    ],
)
def test_sim_config_validation(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


def test_resolved_stride():
    cfg = SimConfig(dt=0.01, t_total=1.0, n_samples=1)
    assert cfg.resolved_stride() == 4
    assert cfg.resolved_stride([0.0, 0.04, 0.08]) == 4
    assert cfg.resolved_stride([0.0, 0.01]) == 1
    assert SimConfig(dt=0.01, t_total=1.0, n_samples=1, stride=2).resolved_stride([0.01]) == 2


def test_scalar_decay_endpoint():
    sys, _ = _scalar_system(beta=COLD_BETA)
    cfg = SimConfig(dt=1e-4, t_total=1.0, n_samples=1, q0=(1.0,))
    ens = simulate_full(sys, None, cfg)
    assert ens.times[-1] == pytest.approx(1.0)
    assert ens.paths[0, -1, 0] == pytest.approx(math.exp(-1.0), abs=1e-3)


def test_cold_full_run_follows_mean_path(system_2d):
    sys, cg = system_2d
    cold = SystemSpec(a=sys.a, beta=COLD_BETA)
    cfg = SimConfig(dt=1e-4, t_total=1.0, n_samples=2, q0=(1.0, -0.5))
    ens = simulate_full(cold, cg, cfg)
    q = np.array([1.0, -0.5])
    expected = np.array([cg.phi @ (np.exp(-np.diag(sys.a) * t) * q) for t in ens.times])
    np.testing.assert_allclose(ens.paths[0], expected, atol=1e-4)
    np.testing.assert_allclose(ens.paths[0], ens.paths[1], atol=1e-12)


def test_cold_reduced_norm_nonincreasing(rng):
    a = rng.standard_normal((5, 5))
    sys = SystemSpec(a=a @ a.T / 5 + 0.5 * np.eye(5), beta=COLD_BETA)
    cg = normalize_map(rng.standard_normal((2, 5)))
    model = build_reduced(sys, cg, 1)
    cfg = SimConfig(dt=1e-3, t_total=2.0, n_samples=1, xi0=(1.0, -2.0))
    ens = simulate_reduced(model, cfg)
    norms = np.linalg.norm(ens.paths[0], axis=1)
    assert np.all(np.diff(norms) <= 1e-12)
    cfg = SimConfig(dt=1e-3, t_total=2.0, n_samples=1, q0=tuple(range(5)))
    full = simulate_full(sys, None, cfg)
    assert np.all(np.diff(np.linalg.norm(full.paths[0], axis=1)) <= 1e-12)


def test_trajectories_independent_of_workers(system_2d):
    sys, cg = system_2d
    n = 2 * TRAJECTORIES_PER_CHUNK + 2
    base = dict(dt=1e-2, t_total=0.5, n_samples=n, base_seed=11)
    one = simulate_full(sys, cg, SimConfig(**base, workers=1))
    three = simulate_full(sys, cg, SimConfig(**base, workers=3))
    np.testing.assert_array_equal(one.paths, three.paths)


def test_trajectory_depends_only_on_seed_and_index(system_2d):
    sys, cg = system_2d
    small = simulate_full(sys, cg, SimConfig(dt=1e-2, t_total=0.5, n_samples=3, base_seed=5))
    large = simulate_full(sys, cg, SimConfig(dt=1e-2, t_total=0.5, n_samples=70, base_seed=5))
    np.testing.assert_array_equal(small.paths, large.paths[:3])
    other = simulate_full(sys, cg, SimConfig(dt=1e-2, t_total=0.5, n_samples=3, base_seed=6))
    assert not np.array_equal(small.paths, other.paths)


def test_reduced_dimension_checks(system_2d):
    model = build_reduced(*system_2d, 1)
    with pytest.raises(DimensionMismatchError):
        simulate_reduced(model, SimConfig(dt=0.01, t_total=0.1, n_samples=1, xi0=(1.0, 2.0)))
    with pytest.raises(DimensionMismatchError):
        simulate_reduced(model, SimConfig(dt=0.01, t_total=0.1, n_samples=1, zeta0=(1.0, 2.0)))


def test_forcing_schedule_matches_exact_forcing(system_2d):
    sys, cg = system_2d
    bd = block_decompose(sys, cg)
    _, zeta0 = reduced_start(bd, [2.0])
    model = build_reduced(sys, cg, 2, zeta0=zeta0)
    dt = 0.01
    sched = forcing_schedule(model.memory, dt, 50, refresh=7)
    for s in (0, 6, 7, 13, 49):
        np.testing.assert_allclose(sched[s], model.memory.forcing(s * dt), atol=1e-12)


def test_forcing_schedule_empty_without_memory(system_2d):
    model = build_reduced(*system_2d, 1)
    assert forcing_schedule(model.memory, 0.01, 10).shape == (0, 1)


def test_forcing_drives_cold_reduced_path(system_2d):
    sys, cg = system_2d
    cold = SystemSpec(a=sys.a, beta=COLD_BETA)
    model = build_reduced(cold, cg, 1, zeta0=[1.0])
    cfg = SimConfig(dt=1e-3, t_total=0.2, n_samples=1, stride=1)
    path = simulate_reduced(model, cfg).paths[0, :, 0]
    # xi' = -B xi - alpha e^{-A1 t} zeta0 with alpha, zeta0 > 0 pushes xi negative
    assert path[0] == 0.0
    assert np.all(path[1:] < 0)


def test_zero_trajectories_give_zero_curve():
    times = np.arange(20) * 0.1
    ens = Ensemble(times=times, paths=np.zeros((3, 20)), dt=0.1, stride=1, burn_in_fraction=0.0)
    curve = sample_acf(ens, [0.0, 0.3, 0.5])
    np.testing.assert_array_equal(curve.values, 0.0)
    np.testing.assert_array_equal(standard_error(ens, [0.0, 0.3]), 0.0)


def test_sample_acf_of_known_sequence():
    x = np.array([1.0, -1.0, 2.0, -2.0])
    ens = Ensemble(times=np.arange(4.0), paths=x[None, :], dt=1.0, stride=1, burn_in_fraction=0.0)
    curve = sample_acf(ens, [0.0, 1.0])
    # mean is exactly zero
    assert curve.values[0, 0, 0] == pytest.approx(10.0 / 4.0)
    assert curve.values[1, 0, 0] == pytest.approx((-1.0 - 2.0 - 4.0) / 3.0)


def test_sample_acf_lag_checks():
    ens = Ensemble(times=np.arange(10.0), paths=np.zeros((2, 10)), dt=1.0, stride=1)
    with pytest.raises(LagGridError):
        sample_acf(ens, [0.5])
    with pytest.raises(LagGridError):
        sample_acf(ens, [0.0, 5.0])
    with pytest.raises(LagGridError):
        sample_acf(ens, [2.0, 1.0])


def test_burn_in_index():
    ens = Ensemble(times=np.arange(11.0), paths=np.zeros((1, 11)), dt=1.0, stride=1)
    assert ens.burn_in_index == 5


def test_ensemble_shape_check():
    with pytest.raises(DimensionMismatchError):
        Ensemble(times=np.arange(5.0), paths=np.zeros((2, 4)), dt=1.0, stride=1)


def test_white_noise_has_no_correlation(rng):
    paths = rng.standard_normal((200, 2000))
    ens = Ensemble(times=np.arange(2000.0), paths=paths, dt=1.0, stride=1, burn_in_fraction=0.0)
    lags = np.arange(1.0, 11.0)
    curve = sample_acf(ens, lags)
    se = standard_error(ens, lags)
    assert np.all(np.abs(curve.scalar()) <= 4 * se)
    assert sample_acf(ens, [0.0]).scalar()[0] == pytest.approx(1.0, abs=0.01)


def test_identical_trajectories_have_zero_error(rng):
    row = rng.standard_normal(100)
    ens = Ensemble(times=np.arange(100.0), paths=np.vstack([row, row]), dt=1.0, stride=1)
    np.testing.assert_allclose(standard_error(ens, [0.0, 1.0, 2.0]), 0.0, atol=1e-15)


def test_two_trajectory_standard_error():
    a = np.tile([1.0, -1.0], 20)
    b = np.tile([1.0, 1.0, -1.0, -1.0], 10)
    lags = [0.0, 1.0, 2.0, 3.0]

    def ensemble(paths):
        return Ensemble(times=np.arange(40.0), paths=paths, dt=1.0, stride=1, burn_in_fraction=0.0)

    def single(x):
        return sample_acf(ensemble(x[None, :]), lags).scalar()

    expected = 0.5 * np.abs(single(a) - single(b))
    both = ensemble(np.vstack([a, b]))
    np.testing.assert_allclose(standard_error(both, lags), expected, atol=1e-12)
    with pytest.raises(ValueError):
        standard_error(Ensemble(times=np.arange(40.0), paths=a[None, :], dt=1.0, stride=1), lags)


def test_standard_error_scales_with_sample_count(rng):
    coeff = 0.9
    lags = [0.0, 2.0, 5.0]

    def ar1(n):
        noise = rng.standard_normal((n, 1000)) * math.sqrt(1 - coeff**2)
        paths = scipy.signal.lfilter([1.0], [1.0, -coeff], noise, axis=1)
        return Ensemble(
            times=np.arange(1000.0), paths=paths, dt=1.0, stride=1, burn_in_fraction=0.1
        )

    ratio = standard_error(ar1(1000), lags) / standard_error(ar1(4000), lags)
    assert np.all((ratio > 1.8) & (ratio < 2.2))


def test_streaming_matches_stored_paths(system_2d):
    sys, cg = system_2d
    cfg = SimConfig(dt=1e-2, t_total=2.0, n_samples=5, base_seed=3)
    lags = [0.0, 0.04, 0.2]
    stored = simulate_full(sys, cg, cfg, lags)
    curve, se = sample_acf_streaming(FullModel(sys, cg), cfg, lags)
    np.testing.assert_allclose(
        curve.values, sample_acf(stored, lags).values, rtol=1e-12, atol=1e-15
    )
    np.testing.assert_allclose(se, standard_error(stored, lags), rtol=1e-12, atol=1e-15)


def test_streaming_is_thread_count_independent(system_2d):
    model = build_reduced(*system_2d, 2)
    base = dict(dt=1e-2, t_total=1.0, n_samples=150, base_seed=8)
    lags = [0.0, 0.04, 0.08]
    one, se1 = sample_acf_streaming(model, SimConfig(**base, workers=1), lags)
    many, se8 = sample_acf_streaming(model, SimConfig(**base, workers=8), lags)
    np.testing.assert_array_equal(one.values, many.values)
    np.testing.assert_array_equal(se1, se8)


def test_em_stationary_covariance_scalar():
    # exact EM variance for dx = -a x dt + sqrt(2) dW is 1 / (a (1 - a dt / 2))
    cov = em_stationary_covariance([[2.0]], [[1.0]], 1.0, 0.1)
    assert cov[0, 0] == pytest.approx(1.0 / (2.0 * (1.0 - 0.1)))


def test_em_variance_bias_is_first_order(system_2d):
    sys, cg = system_2d
    for approach in (1, 2):
        model = build_reduced(sys, cg, approach)
        target = 1.0 / model.b[0, 0]
        errors = []
        for dt in (0.02, 0.01):
            cov = em_stationary_covariance(model.drift, model.noise_cov_factor, 1.0, dt)
            errors.append(abs(cov[0, 0] - target))
        assert 1.5 <= errors[0] / errors[1] <= 2.5


def test_sim_config_from_document():
    doc = {"dt": 0.01, "t_total": 1.0, "n_samples": 4, "q0": [1, 2]}
    cfg = sim_config_from_document(doc, workers=2)
    assert cfg.q0 == (1.0, 2.0)
    assert cfg.workers == 2
    with pytest.raises(ConfigError):
        sim_config_from_document({"dt": 0.01})
    with pytest.raises(ConfigError):
        sim_config_from_document({"dt": -1.0, "t_total": 1.0, "n_samples": 1})


@pytest.mark.slow
def test_scalar_ou_sample_acf():
    sys, cg = _scalar_system()
    cfg = SimConfig(dt=0.01, t_total=50.0, n_samples=100, base_seed=1)
    lags = np.round(np.arange(0.0, 2.0 + 1e-9, 0.04), 10)
    curve, se = sample_acf_streaming(FullModel(sys, cg), cfg, lags)
    inside = np.abs(curve.scalar() - np.exp(-lags)) <= 3 * se + 0.01
    assert inside.mean() >= 0.9


@pytest.mark.slow
def test_reduced_equilibrium_variance():
    sys, cg = build_2d(TwoDSpec(lam=20.0, theta=0.3))
    model = build_reduced(sys, cg, 1)
    cfg = SimConfig(dt=5e-4, t_total=20.0, n_samples=128, base_seed=4)
    curve, se = sample_acf_streaming(model, cfg, [0.0])
    assert abs(curve.values[0, 0, 0] - 1.0 / model.b[0, 0]) <= 3 * se[0]


@pytest.mark.slow
def test_two_d_sample_acf_matches_analytic_curves():
    sys, cg = build_2d(TwoDSpec(lam=20.0, theta=0.3))
    q0 = np.array([5.0, -4.0])
    common = dict(dt=5e-4, t_total=20.0, n_samples=128, base_seed=2024, workers=4)
    lags = np.round(np.arange(0.02, 2.0 + 1e-9, 0.02), 10)
    xi0, zeta0 = reduced_start(block_decompose(sys, cg), cg.phi @ q0)

    runs = [(FullModel(sys, cg), acf_full(sys, cg, lags), SimConfig(q0=tuple(q0), **common))]
    for approach in (1, 2):
        model = build_reduced(sys, cg, approach, zeta0=zeta0)
        runs.append((model, acf_reduced(model, lags), SimConfig(xi0=tuple(xi0), **common)))

    for model, truth, cfg in runs:
        curve, se = sample_acf_streaming(model, cfg, lags)
        inside = np.abs(curve.scalar() - truth.scalar()) <= 3 * se
        assert inside.mean() >= 0.95
