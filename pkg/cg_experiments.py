"""
Experiment runners behind `cgmarkov run`.

Each experiment has a defaults dict; the user's config is merged over it
and unknown keys are rejected. Values are coerced to the type of their
default when the config is parsed. A runner returns the files it produced
(DataFrames plus ACF curve and ensemble files, keyed by file name)
and a small summary dict for the manifest.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import linregress

from cg_analytics import (
    FullModel,
    TwoDSpec,
    acf_full,
    acf_reduced,
    asymptotics_2d,
    check_bounds_thm_nd,
    error_report,
    find_tau_star,
    lag_grid,
    tau_star_saturated,
)
from cg_errors import CoarseGrainingError, ConfigError, LinearAlgebraError
from cg_io import key_line, load_json
from cg_matcore import frobenius_norm, inv_sym
from cg_model import (
    SystemSpec,
    block_decompose,
    build_reduced,
    effective_matrices,
    normalize_map,
    system_from_document,
)
from cg_montecarlo import SIM_KEYS, SimConfig, reduced_start, sample_acf_streaming
from cg_systems import (
    ChainSpec,
    TridiagSpec,
    build_2d,
    build_chain,
    build_tridiag,
    progressive_compare,
    progressive_spec_for_prefix,
    selection_map,
    system_from_builder,
)

logger = logging.getLogger(__name__)

DEFAULT_THETAS = [0.05, 0.2, 0.4, math.pi / 4]
FULL_SCALE_SAMPLES = 5000
# Relative disagreement tolerated between the tau and tau/2 short-lag rates
RICHARDSON_TOL = 1e-2
# Share of lags on which approach 2 should beat approach 1 in the direct chain comparison
CHAIN_FRACTION_THRESHOLD = 0.8

COMMON_KEYS = ("experiment", "output_path")
# Type templates for parameters whose default is None
OPTIONAL_PARAM_TYPES = {"stride": 1}


@dataclass
class ExperimentConfig:
    experiment: str
    output_path: str
    params: dict
    raw: dict = field(default_factory=dict)
    source_text: str = ""


@dataclass
class RunContext:
    workers: int = 1
    full_scale: bool = False


@dataclass
class ExperimentOutput:
    """
    tables: file name -> DataFrame
    curves: file name -> AcfCurve, written as tau,value_i_j
    ensembles: file name -> (sample AcfCurve, stderr), written as tau,acf_hat,stderr
    """

    tables: dict
    summary: dict = field(default_factory=dict)
    base_seed: object = None
    curves: dict = field(default_factory=dict)
    ensembles: dict = field(default_factory=dict)


def _random_spd(rng, dim):
    m = rng.standard_normal((dim, dim))
    return m @ m.T / dim + 0.1 * np.eye(dim)


def _random_map(rng, n, dim):
    q, _ = np.linalg.qr(rng.standard_normal((dim, n)))
    return q[:, :n].T


def _acf_frame(curves, **extra):
    frame = pd.DataFrame({"tau": curves[0].lags})
    for curve in curves:
        frame[curve.label] = curve.scalar()
    for name, value in reversed(list(extra.items())):
        frame.insert(0, name, value)
    return frame


def run_acf_2d(params, ctx):
    lam, beta = params["lambda"], params["beta"]
    lags = lag_grid(params["tau_max"], params["points_per_unit"])
    curve_frames, error_frames = [], []
    curves = {}
    for theta in params["thetas"]:
        sys, cg = build_2d(TwoDSpec(lam=lam, theta=theta), beta)
        full = acf_full(sys, cg, lags)
        approx = [acf_reduced(build_reduced(sys, cg, k), lags) for k in (1, 2)]
        curve_frames.append(_acf_frame([full] + approx, theta=theta))
        for curve in [full] + approx:
            curves[f"acf_2d_theta_{theta:.4g}_{curve.label}.csv"] = curve
        for k, curve in zip((1, 2), approx):
            frame = error_report(full, curve).to_frame()
            frame.insert(0, "approach", k)
            frame.insert(0, "theta", theta)
            error_frames.append(frame)
    return ExperimentOutput(
        tables={
            "acf_2d_curves.csv": pd.concat(curve_frames, ignore_index=True),
            "acf_2d_errors.csv": pd.concat(error_frames, ignore_index=True),
        },
        curves=curves,
    )


def short_lag_rates(sys, cg, tau):
    """
    Short-lag relative error rates rel1/tau^2 and rel2/tau.

    Returns (limit1, limit2, numeric1, numeric2, consistent): the limits come
    from the second-order expansions, the numeric values are Richardson
    combinations of evaluations at tau and tau/2.
    """
    bd = block_decompose(sys, cg)
    b, c = effective_matrices(bd)
    ref = frobenius_norm(inv_sym(b))
    limit1 = 0.5 * frobenius_norm(bd.a0 - b) / ref
    limit2 = frobenius_norm(np.eye(bd.n) - c) / ref

    def rates(t):
        lags = [t]
        full = acf_full(sys, cg, lags)
        r1 = error_report(full, acf_reduced(build_reduced(sys, cg, 1), lags)).rel_err[0]
        r2 = error_report(full, acf_reduced(build_reduced(sys, cg, 2), lags)).rel_err[0]
        return r1 / t**2, r2 / t

    a1, a2 = rates(tau)
    h1, h2 = rates(tau / 2)
    numeric1, numeric2 = 2 * h1 - a1, 2 * h2 - a2
    consistent = all(
        abs(x - y) <= RICHARDSON_TOL * max(abs(y), 1e-300)
        for x, y in ((h1, a1), (h2, a2))
    )
    return limit1, limit2, numeric1, numeric2, consistent


def run_sweep_lambda(params, ctx):
    lambdas = np.logspace(
        math.log10(params["lambda_min"]), math.log10(params["lambda_max"]), params["n_lambda"]
    )
    rows = []
    inconsistent = 0
    for theta in params["thetas"]:
        for lam in lambdas:
            spec = TwoDSpec(lam=float(lam), theta=theta)
            sys, cg = build_2d(spec, params["beta"])
            limit1, limit2, num1, num2, ok = short_lag_rates(sys, cg, params["tau_small"])
            if not ok:
                inconsistent += 1
            full = acf_full(sys, cg, [1.0])
            rel = [
                error_report(full, acf_reduced(build_reduced(sys, cg, k), [1.0])).rel_err[0]
                for k in (1, 2)
            ]
            pred = asymptotics_2d(spec, 1.0, params["beta"])
            rows.append(
                {
                    "theta": theta,
                    "lambda": lam,
                    "short_rate_app1": limit1,
                    "short_rate_app2": limit2,
                    "short_rate_app1_numeric": num1,
                    "short_rate_app2_numeric": num2,
                    "short_rate_app1_pred": 0.5 * (lam - 1.0) * math.tan(theta) ** 2,
                    "short_rate_app2_pred": math.tan(theta) ** 2,
                    "rel_app1_tau1": rel[0],
                    "rel_app2_tau1": rel[1],
                    "rel_app1_tau1_pred": pred["app1_rel_tau1"],
                    "rel_app2_tau1_pred": pred["app2_rel_tau1"],
                }
            )
    if inconsistent:
        logger.warning(
            "%d sweep points have roundoff-dominated short-lag rates at tau=%g; "
            "use the expansion-limit columns",
            inconsistent,
            params["tau_small"],
        )
    return ExperimentOutput(
        tables={"sweep_lambda.csv": pd.DataFrame(rows)},
        summary={"richardson_inconsistent": inconsistent},
    )


def loglog_slope(x, y):
    """Least-squares slope of log y against log x where both are positive"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    if np.sum(keep) < 2:
        return float("nan")
    return float(linregress(np.log(x[keep]), np.log(y[keep])).slope)


def run_abs_vs_tau(params, ctx):
    lam, beta = params["lambda"], params["beta"]
    tables = {}
    summary = {}
    grids = {
        "long": lag_grid(params["tau_max"], params["points_per_unit"]),
        "short": np.linspace(0.0, params["tau_short_max"], params["n_short"]),
    }
    for regime, lags in grids.items():
        frames = []
        for theta in params["thetas"]:
            spec = TwoDSpec(lam=lam, theta=theta)
            sys, cg = build_2d(spec, beta)
            full = acf_full(sys, cg, lags)
            errs = [
                error_report(full, acf_reduced(build_reduced(sys, cg, k), lags)) for k in (1, 2)
            ]
            preds = [asymptotics_2d(spec, float(t), beta) for t in lags]
            prefix = "" if regime == "long" else "short_"
            if regime == "short":
                for k, err in zip((1, 2), errs):
                    key = f"short_slope_app{k}_theta_{theta:.4g}"
                    summary[key] = loglog_slope(lags, err.abs_err)
            frames.append(
                pd.DataFrame(
                    {
                        "theta": theta,
                        "tau": lags,
                        "abs_app1": errs[0].abs_err,
                        "abs_app2": errs[1].abs_err,
                        "pred_app1": [p[prefix + "app1_abs"] for p in preds],
                        "pred_app2": [p[prefix + "app2_abs"] for p in preds],
                    }
                )
            )
        tables[f"abs_vs_tau_{regime}.csv"] = pd.concat(frames, ignore_index=True)
    return ExperimentOutput(tables=tables, summary=summary)


def _q1_relative_errors(sys, lags):
    cg = normalize_map(selection_map([0], sys.dim))
    full = acf_full(sys, cg, lags)
    return [
        error_report(full, acf_reduced(build_reduced(sys, cg, k), lags)).rel_err for k in (1, 2)
    ]


def run_tridiag_progressive(params, ctx):
    lags = np.linspace(0.0, params["tau_max"], params["n_lags"] + 1)[1:]
    sys = build_tridiag(TridiagSpec.standard_10d(params["sigma"], params["beta"]))
    rows = []
    app1_failures = 0
    app2_violations = 0
    for approach in params["approaches"]:
        for n in params["ns"]:
            prog = progressive_spec_for_prefix(params["d"], n, sys.dim)
            res = progressive_compare(sys, prog.inner, prog.outer, approach, lags)
            held = res.gaps_ordered()
            if approach == 1:
                app1_failures += int(np.sum(~held))
            else:
                app2_violations += int(np.sum(~held))
            rows.append(
                pd.DataFrame(
                    {
                        "approach": approach,
                        "n": n,
                        "tau": lags,
                        "gap_full_intermediate": res.gap_full_intermediate,
                        "gap_full_coarse": res.gap_full_coarse,
                        "gap_intermediate_coarse": res.gap_intermediate_coarse,
                        "ordering_holds": held.astype(int),
                    }
                )
            )
    sweep = []
    for sigma in params["sigma_sweep"]:
        sys_s = build_tridiag(TridiagSpec.standard_10d(sigma, params["beta"]))
        rel1, rel2 = _q1_relative_errors(sys_s, lags)
        sweep.append(
            pd.DataFrame({"sigma": sigma, "tau": lags, "rel_app1": rel1, "rel_app2": rel2})
        )
    if app2_violations:
        logger.info("approach 2 ordering fails at %d (n, tau) points", app2_violations)
    return ExperimentOutput(
        tables={
            "tridiag_progressive.csv": pd.concat(rows, ignore_index=True),
            "tridiag_sigma_sweep.csv": pd.concat(sweep, ignore_index=True),
        },
        summary={
            "app1_ordering_failures": app1_failures,
            "app2_ordering_violations": app2_violations,
        },
    )


def chain_option_labels(dim, n, d):
    """Labels of the three comparisons, e.g. 40D_vs_2D, 40D_vs_4D, 4D_vs_2D"""
    return (f"{dim}D_vs_{d}D", f"{dim}D_vs_{n}D", f"{n}D_vs_{d}D")


def chain_option_errors(res, labels):
    """Relative errors of the three comparison options from one progressive result"""
    full_norm = res.full.norms()
    inter_norm = res.intermediate.norms()
    return {
        labels[0]: res.gap_full_coarse / full_norm,
        labels[1]: res.gap_full_intermediate / full_norm,
        labels[2]: res.gap_intermediate_coarse / inter_norm,
    }


def run_chain(params, ctx):
    lags = np.linspace(0.0, params["tau_max"], params["n_lags"] + 1)[1:]
    n_masses, d, n = params["n_masses"], params["d"], params["n"]
    curves, fractions = [], []
    labels = None
    for k2 in params["k2_values"]:
        for k3 in params["k3_values"]:
            spec = ChainSpec(
                n_masses=n_masses, k1=params["k1"], k2=k2, k3=k3, beta=params["beta"]
            )
            sys = build_chain(spec)
            prog = progressive_spec_for_prefix(d, n, sys.dim)
            labels = chain_option_labels(sys.dim, n, d)
            errs = {
                k: chain_option_errors(
                    progressive_compare(sys, prog.inner, prog.outer, k, lags), labels
                )
                for k in (1, 2)
            }
            for option in labels:
                rel1, rel2 = errs[1][option], errs[2][option]
                key = {"k2": k2, "k3": k3, "option": option}
                curves.append(
                    pd.DataFrame({**key, "tau": lags, "rel_app1": rel1, "rel_app2": rel2})
                )
                fractions.append({**key, "fraction_app2_le_app1": float(np.mean(rel2 <= rel1))})
    if labels is None:
        raise ConfigError("chain needs at least one value in k2_values and k3_values")
    frac = pd.DataFrame(fractions)
    frac["meets_threshold"] = (
        frac["fraction_app2_le_app1"] > CHAIN_FRACTION_THRESHOLD
    ).astype(int)
    direct = frac[frac["option"] == labels[0]]
    for row in direct.itertuples():
        logger.info(
            "k2=%g k3=%g: approach 2 error <= approach 1 error on %.1f%% of %s lags (%s)",
            row.k2,
            row.k3,
            100 * row.fraction_app2_le_app1,
            labels[0],
            "above threshold" if row.meets_threshold else "below threshold",
        )
    meeting = direct[direct["meets_threshold"] == 1]
    return ExperimentOutput(
        tables={
            "chain_errors.csv": pd.concat(curves, ignore_index=True),
            "chain_fractions.csv": frac,
        },
        summary={
            "mean_fraction_app2_le_app1_direct": float(direct["fraction_app2_le_app1"].mean()),
            "fraction_threshold": CHAIN_FRACTION_THRESHOLD,
            "direct_configs_meeting_threshold": [
                [float(k2), float(k3)] for k2, k3 in zip(meeting["k2"], meeting["k3"])
            ],
            "direct_configs_total": len(direct),
        },
    )


def system_from_config(doc, extra_keys=()):
    """
    (SystemSpec, CoarseGrainingMap) from a config's "system" entry.

    Either an explicit {"A", "beta", "phi_raw"} document or a builder
    document {"kind": "2d" | "tridiag" | "chain", ...}. Builders that do not
    fix a map ("tridiag", "chain") take it from a "phi_raw" key.
    """
    if not isinstance(doc, dict) or "kind" not in doc:
        return system_from_document(doc, extra_keys=extra_keys)
    kind = doc["kind"]
    builder = {k: v for k, v in doc.items() if k != "phi_raw" and k not in extra_keys}
    sys, cg = system_from_builder(builder)
    if "phi_raw" in doc:
        if cg is not None:
            raise ConfigError(f"builder {kind!r} fixes its own map; drop 'phi_raw'")
        try:
            phi_raw = np.array(doc["phi_raw"], dtype=float)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"'phi_raw' has non-numeric entries: {e}") from e
        if phi_raw.ndim != 2 or phi_raw.shape[1] != sys.dim:
            raise ConfigError(f"'phi_raw' must be a 2D list with {sys.dim} columns")
        cg = normalize_map(phi_raw)
    if cg is None:
        raise ConfigError(f"builder {kind!r} needs a 'phi_raw' map")
    return sys, cg


def _mc_system(params):
    if params.get("system") is not None:
        doc = params["system"]
        sys, cg = system_from_config(doc, extra_keys=SIM_KEYS)
        sim_overrides = {k: doc[k] for k in SIM_KEYS if k in doc}
        return sys, cg, sim_overrides
    sys, cg = build_2d(TwoDSpec(lam=params["lambda"], theta=params["theta"]), params["beta"])
    return sys, cg, {}


def run_mc_validate(params, ctx):
    sys, cg, overrides = _mc_system(params)
    if cg.n != 1:
        raise ConfigError("mc-validate compares scalar coarse variables; phi_raw must have one row")
    sim = {k: params[k] for k in SIM_KEYS if k in params and params[k] is not None}
    if params.get("system") is not None:
        # the initial state belongs to the system document
        sim.pop("q0", None)
    sim.update(overrides)
    if ctx.full_scale:
        sim["n_samples"] = FULL_SCALE_SAMPLES
    q0 = np.asarray(sim.get("q0", np.zeros(sys.dim)), dtype=float)
    xi0, zeta0 = reduced_start(block_decompose(sys, cg), cg.phi @ q0)
    full_cfg = SimConfig(workers=ctx.workers, **sim)
    reduced_cfg = SimConfig(
        workers=ctx.workers, **{**sim, "q0": None, "xi0": tuple(xi0), "zeta0": tuple(zeta0)}
    )
    step = params["lag_step"]
    lags = np.arange(0, int(round(params["tau_max"] / step)) + 1) * step

    frames = []
    summary = {}
    ensembles = {}
    models = [("full", FullModel(sys, cg))] + [
        (f"approach{k}", build_reduced(sys, cg, k, zeta0=zeta0)) for k in (1, 2)
    ]
    for name, model in models:
        cfg = full_cfg if name == "full" else reduced_cfg
        hat, stderr = sample_acf_streaming(model, cfg, lags)
        ensembles[f"mc_ensemble_{name}.csv"] = (hat, stderr)
        exact = acf_full(sys, cg, lags) if name == "full" else acf_reduced(model, lags)
        analytic = exact.scalar()
        est = hat.scalar()
        within = np.abs(est - analytic) <= 3.0 * stderr
        positive = lags > 0
        summary[f"{name}_fraction_within_3se"] = float(np.mean(within[positive]))
        with np.errstate(divide="ignore", invalid="ignore"):
            frames.append(
                pd.DataFrame(
                    {
                        "model": name,
                        "tau": lags,
                        "analytic": analytic,
                        "acf_hat": est,
                        "stderr": stderr,
                        "log_analytic": np.log(analytic),
                        "log_acf_hat": np.log(est),
                        "within_3se": within.astype(int),
                    }
                )
            )
        logger.info(
            "%s: %.1f%% of lags within 3 standard errors",
            name,
            100 * summary[f"{name}_fraction_within_3se"],
        )
    summary["n_samples"] = full_cfg.n_samples
    return ExperimentOutput(
        tables={"mc_validate.csv": pd.concat(frames, ignore_index=True)},
        summary=summary,
        base_seed=full_cfg.base_seed,
        ensembles=ensembles,
    )


def run_bounds_check(params, ctx):
    if params.get("system") is not None:
        sys, cg = system_from_config(params["system"])
    else:
        rng = np.random.default_rng(params["seed"])
        sys = SystemSpec(a=_random_spd(rng, params["dim"]), beta=params["beta"])
        cg = normalize_map(_random_map(rng, params["n"], params["dim"]))
    lags = np.linspace(0.0, params["tau_max"], params["n_lags"] + 1)[1:]
    report = check_bounds_thm_nd(sys, cg, lags, tol=params["tol"])
    tau_max = params["tau_star_max"]
    tau_star = find_tau_star(sys, cg, tau_max=tau_max)
    saturated = tau_star_saturated(tau_star, tau_max)
    logger.info(
        "bounds hold at %d of %d lags (%s regime, %s); tau* %s %.6g",
        lags.size - report.violating_lags,
        lags.size,
        report.regime,
        "guaranteed" if report.guaranteed else "not guaranteed",
        ">=" if saturated else "=",
        tau_star,
    )
    return ExperimentOutput(
        tables={"bounds_check.csv": report.to_frame()},
        summary={
            "all_passed": report.all_passed,
            "regime": report.regime,
            "bounds_guaranteed": report.guaranteed,
            "violating_lags": report.violating_lags,
            "tau_star": tau_star,
            "tau_star_saturated": saturated,
        },
        base_seed=params.get("seed"),
    )


EXPERIMENTS = {
    "acf-2d": (
        {
            "lambda": 2.0,
            "thetas": DEFAULT_THETAS,
            "beta": 1.0,
            "tau_max": 5.0,
            "points_per_unit": 512,
        },
        run_acf_2d,
    ),
    "sweep-lambda": (
        {
            "thetas": DEFAULT_THETAS,
            "lambda_min": 1.1,
            "lambda_max": 1000.0,
            "n_lambda": 60,
            "beta": 1.0,
            "tau_small": 1e-6,
        },
        run_sweep_lambda,
    ),
    "abs-vs-tau": (
        {
            "lambda": 10.0,
            "thetas": DEFAULT_THETAS,
            "beta": 1.0,
            "tau_max": 5.0,
            "points_per_unit": 512,
            "tau_short_max": 1e-3,
            "n_short": 201,
        },
        run_abs_vs_tau,
    ),
    "tridiag-progressive": (
        {
            "sigma": 0.5,
            "beta": 1.0,
            "d": 1,
            "ns": [2, 4, 6, 8],
            "approaches": [1, 2],
            "tau_max": 5.0,
            "n_lags": 200,
            "sigma_sweep": [0.25, 0.5, 0.75, 1.0],
        },
        run_tridiag_progressive,
    ),
    "chain": (
        {
            "n_masses": 40,
            "k1": 1.0,
            "k2_values": [0.5, 1.0, 2.0],
            "k3_values": [0.5, 1.0, 2.0],
            "beta": 1.0,
            "d": 2,
            "n": 4,
            "tau_max": 25.0,
            "n_lags": 250,
        },
        run_chain,
    ),
    "mc-validate": (
        {
            "lambda": 20.0,
            "theta": 0.3,
            "beta": 1.0,
            "system": None,
            "dt": 5e-4,
            "t_total": 60.0,
            "n_samples": 500,
            "base_seed": 2024,
            "burn_in_fraction": 0.5,
            "q0": [5.0, -4.0],
            "stride": None,
            "tau_max": 2.0,
            "lag_step": 0.01,
        },
        run_mc_validate,
    ),
    "bounds-check": (
        {
            "system": None,
            "dim": 6,
            "n": 2,
            "beta": 1.0,
            "seed": 7,
            "tau_max": 5.0,
            "n_lags": 100,
            "tol": 1e-9,
            "tau_star_max": 1.0,
        },
        run_bounds_check,
    ),
}


def _coerce(value, default):
    """Coerce a config value to the type of its default (None: taken as is)"""
    if default is None or isinstance(default, str):
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError(f"expected true or false, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise TypeError(f"expected a list, got {value!r}")
        return [_coerce(v, default[0]) for v in value] if default else list(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"expected a number, got {value!r}")
    if isinstance(default, int):
        if value != int(value):
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def parse_experiment_config(doc, source_text="", output_override=None):
    """Validate a config document against the experiment's defaults"""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object", line=1)
    name = doc.get("experiment")
    if name is None:
        raise ConfigError("missing 'experiment' key", line=1)
    if name not in EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment {name!r}; expected one of {', '.join(sorted(EXPERIMENTS))}",
            line=key_line(source_text, "experiment"),
        )
    defaults, _ = EXPERIMENTS[name]
    for key in doc:
        if key not in COMMON_KEYS and key not in defaults:
            raise ConfigError(
                f"unknown key {key!r} for experiment {name!r}", line=key_line(source_text, key)
            )
    params = dict(defaults)
    for key, value in doc.items():
        if key in COMMON_KEYS:
            continue
        default = defaults[key]
        if default is None and value is not None:
            default = OPTIONAL_PARAM_TYPES.get(key)
        try:
            params[key] = _coerce(value, default)
        except (TypeError, ValueError, OverflowError) as e:
            raise ConfigError(
                f"bad value for {key!r} in {name!r}: {e}", line=key_line(source_text, key)
            ) from e
    output_path = output_override or doc.get("output_path") or f"results_{name}"
    return ExperimentConfig(
        experiment=name,
        output_path=output_path,
        params=params,
        raw=dict(doc),
        source_text=source_text,
    )


def load_experiment_config(path, output_override=None):
    doc, text = load_json(path)
    return parse_experiment_config(doc, text, output_override)


def run_experiment(config, ctx=None):
    ctx = ctx or RunContext()
    _, runner = EXPERIMENTS[config.experiment]
    try:
        return runner(config.params, ctx)
    except CoarseGrainingError:
        raise
    except np.linalg.LinAlgError as e:
        raise LinearAlgebraError(f"{config.experiment}: {e}") from e
    except ValueError as e:
        # range checks in the parameter dataclasses, e.g. lambda >= 1 or dt > 0
        raise ConfigError(f"invalid parameters for {config.experiment!r}: {e}") from e
