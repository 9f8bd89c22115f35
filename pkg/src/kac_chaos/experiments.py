"""Experiment harness: replica orchestration, rate estimation and output.

Each experiment runs independent replicas on disjoint random streams,
aggregates ensemble estimates with standard errors, fits log-log slopes
where a rate is predicted, and emits a deterministic CSV table (plus an
optional JSON mirror carrying the fits and closed-form rates).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import ndtri
from scipy.stats import t as student_t

from kac_chaos.coupling import estimate_cov_u2, estimate_decoupling_gap, run_coupled
from kac_chaos.events import EventStream, RngStream
from kac_chaos.flows import (
    StationaryGaussianFlow,
    ReferenceFlowConfig,
    build_reference_flow,
    default_snapshot_times,
    stationary_gaussian,
)
from kac_chaos.kac import SystemState, advance, sample_kac_sphere
from kac_chaos.transport import QuantileFn, wasserstein_p, wasserstein_quantile

EXPERIMENTS = (
    "chaos-rate",
    "chaos-rate-w4",
    "covariance",
    "decoupling",
    "gap-decay",
    "equilibrium",
    "iid-rate",
)


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration."""


# ---------------------------------------------------------------------------
# initial distributions


@dataclass(frozen=True)
class F0Spec:
    """Initial distribution scenario: gaussian(E), uniform(a,b) or the
    heavy-tailed family with density (p/2)(1+|v|)^-(p+1) ("student:p")."""

    kind: str
    params: tuple

    @classmethod
    def parse(cls, text: str) -> "F0Spec":
        name, _, args = text.partition(":")
        name = name.strip().lower()
        params = tuple(float(x) for x in args.split(",")) if args else ()
        if name == "gaussian":
            energy = params[0] if params else 1.0
            if energy <= 0:
                raise ConfigError("gaussian energy must be positive")
            return cls("gaussian", (energy,))
        if name == "uniform":
            if len(params) != 2 or params[0] >= params[1]:
                raise ConfigError("uniform needs bounds a < b, e.g. uniform:-1,1")
            return cls("uniform", params)
        if name in ("student", "student-like"):
            if len(params) != 1 or params[0] <= 2:
                raise ConfigError("student-like tail index must exceed 2")
            return cls("student", params)
        raise ConfigError(f"unknown initial distribution {text!r}")

    @property
    def energy(self) -> float:
        if self.kind == "gaussian":
            return self.params[0]
        if self.kind == "uniform":
            a, b = self.params
            return (a * a + a * b + b * b) / 3.0
        p = self.params[0]
        # second moment of the symmetric density (p/2)(1+|v|)^-(p+1)
        return p / (p - 2.0) - 2.0 * p / (p - 1.0) + 1.0

    @property
    def moment_order(self) -> float:
        """Largest r with E|V|^r finite (inf for compact/gaussian tails)."""
        return self.params[0] if self.kind == "student" else math.inf

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return np.asarray(self.quantile(gen.random(size)))

    def quantile(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "gaussian":
            return math.sqrt(self.params[0]) * ndtri(u)
        if self.kind == "uniform":
            a, b = self.params
            return a + (b - a) * u
        p = self.params[0]
        tail = 2.0 * np.minimum(u, 1.0 - u)
        mag = tail ** (-1.0 / p) - 1.0
        return np.where(u < 0.5, -mag, mag)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    experiment: str
    n_list: list = field(default_factory=lambda: [64, 128, 256, 512, 1024, 2048, 4096])
    t_grid: list = field(default_factory=lambda: [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0])
    replicas: int = 200
    p_init: float = 12.0
    f0: str = "gaussian:1.0"
    seed: int = 42
    n_ref: int = 500_000
    param: str = "polar"
    q: float = 2.0
    n_system: int = 1000
    output: str | None = None
    json_output: bool = False
    check: bool = False

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.replicas < 2:
            raise ConfigError("need at least 2 replicas")
        if not self.n_list:
            raise ConfigError("n_list must not be empty")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ConfigError("n_list must be strictly ascending")
        if self.param not in ("rotation", "polar"):
            raise ConfigError("param must be rotation or polar")
        if not self.t_grid or any(t < 0 for t in self.t_grid):
            raise ConfigError("t_grid must be nonempty and nonnegative")
        F0Spec.parse(self.f0)

    @property
    def f0_spec(self) -> F0Spec:
        return F0Spec.parse(self.f0)


# ---------------------------------------------------------------------------
# slope fitting


@dataclass
class RateFit:
    slope: float
    intercept: float
    slope_ci: tuple
    r_squared: float

    def as_dict(self):
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_ci": list(self.slope_ci),
            "r_squared": self.r_squared,
        }


def _ols(x: np.ndarray, y: np.ndarray):
    """Plain least squares; returns slope, intercept, slope se, r^2, df."""
    k = x.shape[0]
    xm = x - x.mean()
    ym = y - y.mean()
    sxx = float(np.sum(xm * xm))
    slope = float(np.sum(xm * ym) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - intercept - slope * x
    df = k - 2
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum(ym**2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    se = math.sqrt(ss_res / df / sxx) if df > 0 else 0.0
    return slope, intercept, se, r2, df


def fit_loglog_slope(xs, ys) -> RateFit:
    """OLS on (log x, log y) with a 95% confidence interval for the slope."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape[0] < 2 or x.shape != y.shape:
        raise ValueError("need at least 2 matching points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs strictly positive values")
    slope, intercept, se, r2, df = _ols(np.log(x), np.log(y))
    margin = float(student_t.ppf(0.975, df)) * se if df > 0 else 0.0
    return RateFit(slope, intercept, (slope - margin, slope + margin), r2)


def theoretical_rates(p: float, n: int):
    """Closed-form chaos and contraction rates (gamma, gamma_tilde, lambda_n)
    for an initial law with finite p-th moment, p > 4 and p != 8."""
    if p <= 4:
        raise ValueError("rates require p > 4")
    if p == 8:
        raise ValueError("p = 8 is excluded (logarithmic corrections)")
    if n < 2:
        raise ValueError("need n >= 2")
    gamma = min(1.0 / 3.0, (p - 4.0) / (2.0 * p - 4.0))
    if p < 8:
        gamma_tilde = (p - 4.0) / (2.0 * p)
    else:
        gamma_tilde = (p - 4.0) / (3.0 * p - 8.0)
    lambda_n = 0.25 * (n + 2.0) / (n - 1.0)
    return gamma, gamma_tilde, lambda_n


# ---------------------------------------------------------------------------
# results


@dataclass
class ExperimentResult:
    experiment: str
    columns: list
    rows: list  # list of tuples matching columns
    fits: dict = field(default_factory=dict)  # label -> RateFit or plain dict
    extra: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)  # (name, passed, message)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def column(self, name):
        k = self.columns.index(name)
        return [row[k] for row in self.rows]

    def select(self, **conditions):
        idx = {name: self.columns.index(name) for name in conditions}
        return [
            row
            for row in self.rows
            if all(row[idx[name]] == value for name, value in conditions.items())
        ]


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def result_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(result.columns)
    for row in result.rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def result_json(result: ExperimentResult, config: ExperimentConfig) -> str:
    fits = {
        label: (fit.as_dict() if isinstance(fit, RateFit) else fit)
        for label, fit in result.fits.items()
    }
    payload = {
        "experiment": result.experiment,
        "columns": result.columns,
        "rows": [[float(v) for v in row] for row in result.rows],
        "fits": fits,
        "extra": result.extra,
        "checks": [{"name": n, "passed": ok, "message": msg} for n, ok, msg in result.checks],
    }
    try:
        g, gt, lam = theoretical_rates(config.p_init, max(config.n_list))
        payload["theoretical_rates"] = {"gamma": g, "gamma_tilde": gt, "lambda_n": lam}
    except ValueError:
        payload["theoretical_rates"] = None
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# shared helpers

_CELL_STRIDE = 1 << 32
_FLOW_STREAM = 1 << 60


def _make_flow(config: ExperimentConfig, horizon: float, enforce_budget: bool = True):
    """The exact stationary flow for a Gaussian start, otherwise an
    empirical reference flow built from one large auxiliary simulation."""
    f0 = config.f0_spec
    if f0.kind == "gaussian":
        return stationary_gaussian(f0.energy)
    if enforce_budget and config.n_ref < 100 * max(config.n_list):
        raise ConfigError(
            f"reference budget violated: n_ref={config.n_ref} must be at least "
            f"100 x max(N)={100 * max(config.n_list)} so the flow-representation "
            "error stays an order below the measured error"
        )
    ref = ReferenceFlowConfig(
        snapshot_times=default_snapshot_times(horizon),
        n_ref=config.n_ref,
        seed=RngStream(config.seed, _FLOW_STREAM),
    )
    return build_reference_flow(lambda gen, size: f0.sample(gen, size), ref)


def _mean_se(values: np.ndarray):
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(values.shape[0]))


# ---------------------------------------------------------------------------
# experiments


def chaos_rate_experiment(config: ExperimentConfig, metric: str | None = None) -> ExperimentResult:
    """Empirical-measure error of the particle system against the flow.

    metric 'w2sq' compares squared empirical measures in W_2^2 (the energy
    form), 'w4' the plain measures in W_4^4, 'w2' the plain measures in
    W_2^2.  For each N and t the error is averaged over replicas; a
    log-log slope in N is fitted per observation time.
    """
    if metric is None:
        metric = "w4" if config.experiment == "chaos-rate-w4" else "w2sq"
    if metric not in ("w2sq", "w4", "w2"):
        raise ConfigError(f"unknown chaos metric {metric!r}")
    t_grid = sorted(float(t) for t in config.t_grid)
    flow = _make_flow(config, t_grid[-1])
    f0 = config.f0_spec

    rows = []
    errors_by_t = {t: [] for t in t_grid}
    for n_idx, n in enumerate(config.n_list):
        mid = (np.arange(n) + 0.5) / n
        errs = np.empty((config.replicas, len(t_grid)))
        for rep in range(config.replicas):
            gen = RngStream(config.seed, n_idx * _CELL_STRIDE + rep).generator()
            state = SystemState(f0.sample(gen, n))
            stream = EventStream(n, gen)
            for k, t in enumerate(t_grid):
                if t > state.time:
                    state = advance(state, t, config.param, stream)
                v = np.sort(state.velocities)
                if metric == "w2sq":
                    target = np.asarray(flow.squared_quantile(t, mid))
                    errs[rep, k] = float(np.mean((np.sort(v * v) - target) ** 2))
                elif metric == "w4":
                    target = np.asarray(flow.quantile(t, mid))
                    errs[rep, k] = float(np.mean((v - target) ** 4))
                else:
                    target = np.asarray(flow.quantile(t, mid))
                    errs[rep, k] = float(np.mean((v - target) ** 2))
        for k, t in enumerate(t_grid):
            mean, se = _mean_se(errs[:, k])
            rows.append((n, t, mean, se))
            errors_by_t[t].append(mean)

    fits = {}
    if len(config.n_list) >= 2:
        for t in t_grid:
            ys = errors_by_t[t]
            if all(y > 0 for y in ys):
                fits[f"t={t:g}"] = fit_loglog_slope(config.n_list, ys)
    result = ExperimentResult(
        experiment=config.experiment,
        columns=["N", "t", "error_mean", "error_se"],
        rows=rows,
        fits=fits,
        extra={"metric": metric},
    )
    result.checks = check_chaos_rate(result, config, metric)
    return result


def covariance_experiment(config: ExperimentConfig) -> ExperimentResult:
    """cov(U_i^2, U_j^2) across system sizes and times."""
    t_grid = sorted(float(t) for t in config.t_grid)
    flow = _make_flow(config, t_grid[-1], enforce_budget=False)
    rows = []
    for n_idx, n in enumerate(config.n_list):
        for k, t in enumerate(t_grid):
            base = RngStream(config.seed, (n_idx * len(t_grid) + k) * _CELL_STRIDE)
            est, se = estimate_cov_u2(n, flow, t, config.replicas, base)
            rows.append((n, t, est, se))
    result = ExperimentResult(
        experiment="covariance",
        columns=["N", "t", "estimate", "std_error"],
        rows=rows,
    )
    result.checks = check_covariance(result, config)
    return result


def decoupling_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Gap E(U_i^2 - U~_i^2)^2 between the coupled and decoupled processes,
    for tracked-subset sizes n (taken from n_list) in a system of size
    n_system."""
    t_grid = sorted(float(t) for t in config.t_grid)
    flow = _make_flow(config, t_grid[-1], enforce_budget=False)
    n_sys = config.n_system
    if max(config.n_list) > n_sys:
        raise ConfigError("tracked subset size cannot exceed n_system")
    rows = []
    for n_idx, n in enumerate(config.n_list):
        for k, t in enumerate(t_grid):
            base = RngStream(config.seed, (n_idx * len(t_grid) + k) * _CELL_STRIDE)
            est = estimate_decoupling_gap(n, n_sys, flow, t, config.replicas, base)
            rows.append((n, t, est.gap, est.gap_se, est.shared_fraction, est.shared_fraction_se))
    result = ExperimentResult(
        experiment="decoupling",
        columns=["n", "t", "gap_mean", "gap_se", "shared_fraction", "shared_fraction_se"],
        rows=rows,
        extra={"n_system": n_sys},
    )
    result.checks = check_decoupling(result, config)
    return result


def gap_decay_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Decay of h_t = E(V_i^2 - U_i^2)^2 from a nonzero initial coupling
    distance: V_0 uniform on the Kac sphere at the flow energy (so the
    energy fluctuation term vanishes), U_0 i.i.d. from the flow."""
    t_grid = np.asarray(sorted(float(t) for t in config.t_grid))
    flow = _make_flow(config, float(t_grid[-1]), enforce_budget=False)
    rows = []
    fits = {}
    for n_idx, n in enumerate(config.n_list):
        h_all = np.empty((config.replicas, t_grid.shape[0]))
        for rep in range(config.replicas):
            gen = RngStream(config.seed, n_idx * _CELL_STRIDE + rep).generator()
            v0 = sample_kac_sphere(n, flow.energy, gen)
            u0 = flow.sample(0.0, gen, n)
            diag = run_coupled(v0, u0, flow, float(t_grid[-1]), gen, obs_times=t_grid)
            h_all[rep] = diag.h_series
        h_mean = h_all.mean(axis=0)
        h_se = h_all.std(axis=0, ddof=1) / math.sqrt(config.replicas)
        for k, t in enumerate(t_grid):
            rows.append((n, float(t), float(h_mean[k]), float(h_se[k])))
        fits[f"N={n}"] = _fit_gap_decay(t_grid, h_mean, n)
    result = ExperimentResult(
        experiment="gap-decay",
        columns=["N", "t", "h_mean", "h_se"],
        rows=rows,
        fits=fits,
    )
    result.checks = check_gap_decay(result, config)
    return result


def _fit_gap_decay(t_grid: np.ndarray, h_mean: np.ndarray, n: int) -> dict:
    """Early-window exponential fit of h_t above its plateau.

    The plateau is the mean over the last quarter of the grid; the fit
    window runs to the point where the excess has halved.
    """
    _, _, lambda_n = theoretical_rates(12.0, n)
    tail = max(1, t_grid.shape[0] // 4)
    plateau = float(np.mean(h_mean[-tail:]))
    h0 = float(h_mean[0])
    out = {"plateau": plateau, "h0": h0, "lambda_n": lambda_n, "rate": None, "degenerate": False}
    if plateau >= h0:
        out["degenerate"] = True
        return out
    excess = h_mean - plateau
    half = 0.5 * (h0 - plateau)
    end = int(np.argmax(excess <= half)) if np.any(excess <= half) else t_grid.shape[0] - 1
    end = max(end, 2)
    window = slice(0, end + 1)
    mask = excess[window] > 0
    ts = t_grid[window][mask]
    ys = np.log(excess[window][mask])
    if ts.shape[0] < 2:
        out["degenerate"] = True
        return out
    slope, _, se, r2, df = _ols(ts, ys)
    out["rate"] = -slope
    out["rate_se"] = se
    out["r_squared"] = r2
    return out


def equilibrium_experiment(config: ExperimentConfig) -> ExperimentResult:
    """W_2 between the evolving ensemble and a Kac-sphere sample of matched
    energy; for a non-Gaussian start the flow-to-Gaussian distance is
    reported alongside (in the JSON extras)."""
    t_grid = sorted(float(t) for t in config.t_grid)
    n = config.n_list[0]
    f0 = config.f0_spec
    flow = None
    if f0.kind != "gaussian" and config.n_ref >= 1_000:
        flow = _make_flow(config, t_grid[-1], enforce_budget=False)

    w2sq = np.empty((config.replicas, len(t_grid)))
    for rep in range(config.replicas):
        gen = RngStream(config.seed, rep).generator()
        state = SystemState(f0.sample(gen, n))
        stream = EventStream(n, gen)
        for k, t in enumerate(t_grid):
            if t > state.time:
                state = advance(state, t, config.param, stream)
            sphere = sample_kac_sphere(n, float(np.mean(state.velocities**2)), gen)
            w2sq[rep, k] = wasserstein_p(state.velocities, sphere, 2.0)

    rows = []
    flow_curve = {}
    gauss_q = QuantileFn.from_callable(lambda u: math.sqrt(f0.energy) * ndtri(u))
    for k, t in enumerate(t_grid):
        mean, se = _mean_se(w2sq[:, k])
        w2 = math.sqrt(mean)
        # delta method: se of sqrt(mean)
        rows.append((t, w2, se / (2.0 * w2) if w2 > 0 else 0.0))
        if flow is not None:
            flow_curve[f"t={t:g}"] = math.sqrt(
                wasserstein_quantile(lambda u: flow.quantile(t, u), gauss_q, 2.0, 4096)
            )
    result = ExperimentResult(
        experiment="equilibrium",
        columns=["t", "w2_to_equilibrium", "se"],
        rows=rows,
        extra={"flow_w2_to_gaussian": flow_curve, "N": n},
    )
    result.checks = check_equilibrium(result, config)
    return result


def iid_rate_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Empirical-measure W_q^q rate for i.i.d. samples from f0 (no dynamics):
    the baseline chaoticity of independent draws."""
    f0 = config.f0_spec
    q = config.q
    rows = []
    means = []
    for n_idx, n in enumerate(config.n_list):
        errs = np.empty(config.replicas)
        quantile = QuantileFn.from_callable(f0.quantile)
        for rep in range(config.replicas):
            gen = RngStream(config.seed, n_idx * _CELL_STRIDE + rep).generator()
            sample = np.sort(f0.sample(gen, n))
            errs[rep] = wasserstein_quantile(QuantileFn.from_sorted(sample), quantile, q, n)
        mean, se = _mean_se(errs)
        rows.append((n, mean, se))
        means.append(mean)
    fits = {}
    if len(config.n_list) >= 2 and all(m > 0 for m in means):
        fits["rate"] = fit_loglog_slope(config.n_list, means)
    result = ExperimentResult(
        experiment="iid-rate",
        columns=["n", "error_mean", "error_se"],
        rows=rows,
        fits=fits,
    )
    result.checks = check_iid_rate(result, config)
    return result


# ---------------------------------------------------------------------------
# acceptance-style checks (drive the CLI --check exit status)


def check_chaos_rate(result, config, metric) -> list:
    checks = []
    threshold = -0.25 if metric == "w4" else -0.30
    t_fit = 10.0 if 10.0 in [r[1] for r in result.rows] else sorted(config.t_grid)[-1]
    fit = result.fits.get(f"t={t_fit:g}")
    if len(config.n_list) < 2:
        checks.append(("slope-fit", True, "single system size: fit refused, table emitted"))
        return checks
    if fit is None:
        checks.append(("slope-fit", False, f"no fit available at t={t_fit:g}"))
        return checks
    ok = fit.slope <= threshold and fit.slope_ci[1] < 0.0
    checks.append(
        (
            "slope-fit",
            ok,
            f"slope {fit.slope:.3f} (CI {fit.slope_ci[0]:.3f}..{fit.slope_ci[1]:.3f}) "
            f"vs threshold {threshold}",
        )
    )
    ts = sorted(set(r[1] for r in result.rows))
    if 5.0 in ts and 50.0 in ts:
        worst = ""
        ok_t = True
        for n in config.n_list:
            e5 = result.select(N=n, t=5.0)[0]
            e50 = result.select(N=n, t=50.0)[0]
            slack = 3.0 * (e50[3] + 2.0 * e5[3])
            if e50[2] > 2.0 * e5[2] + slack:
                ok_t = False
                worst = f" (N={n}: {e50[2]:.3g} > 2x{e5[2]:.3g})"
        checks.append(("uniform-in-time", ok_t, f"error at t=50 <= 2x error at t=5{worst}"))
    return checks


def check_covariance(result, config) -> list:
    checks = []
    ts = sorted(set(r[1] for r in result.rows))
    if 0.0 in ts:
        ok = all(abs(row[2]) <= 3.0 * row[3] for row in result.select(t=0.0))
        checks.append(("independent-at-t0", ok, "t=0 estimates within 3 SE of 0"))
    if len(config.n_list) >= 2:
        t_big = ts[-1]
        n_lo, n_hi = config.n_list[0], config.n_list[-1]
        lo = result.select(N=n_lo, t=t_big)[0]
        hi = result.select(N=n_hi, t=t_big)[0]
        if abs(hi[2]) > 0 and abs(lo[2]) > 0:
            ratio = abs(lo[2]) / abs(hi[2])
            rel = 3.0 * math.sqrt((lo[3] / lo[2]) ** 2 + (hi[3] / hi[2]) ** 2)
            target = n_hi / n_lo
            # the 1/N law holds to leading order; allow an O(1/N) finite-size
            # correction at the smaller system size
            ok = abs(math.log(ratio / target)) <= math.log1p(rel) + 2.0 / n_lo
            checks.append(
                (
                    "one-over-n-scaling",
                    ok,
                    f"|cov| ratio N={n_lo} vs N={n_hi} is {ratio:.2f}, target {target:g}",
                )
            )
        else:
            checks.append(("one-over-n-scaling", False, "zero estimate, cannot form ratio"))
    return checks


def check_decoupling(result, config) -> list:
    checks = []
    for row in result.rows:
        if row[0] == 1 and row[2] != 0.0:
            checks.append(("n1-path-identity", False, f"gap {row[2]} at n=1 should be exactly 0"))
            break
    else:
        if any(row[0] == 1 for row in result.rows):
            checks.append(("n1-path-identity", True, "n=1 gap identically 0"))
    sizes = [n for n in config.n_list if n > 1]
    ts = sorted(set(r[1] for r in result.rows))
    t_big = max(t for t in ts if t > 0) if any(t > 0 for t in ts) else None
    if len(sizes) >= 2 and t_big is not None:
        n_lo, n_hi = sizes[0], sizes[-1]
        lo = result.select(n=n_lo, t=t_big)[0]
        hi = result.select(n=n_hi, t=t_big)[0]
        if lo[2] > 0 and hi[2] > 0:
            ratio = hi[2] / lo[2]
            rel = 3.0 * math.sqrt((lo[3] / lo[2]) ** 2 + (hi[3] / hi[2]) ** 2)
            target = n_hi / n_lo
            ok = abs(math.log(ratio / target)) <= math.log1p(rel) + abs(
                math.log(target / ((n_hi - 1) / (n_lo - 1)))
            )
            checks.append(
                (
                    "linear-in-n",
                    ok,
                    f"gap ratio n={n_hi} vs n={n_lo} is {ratio:.2f}, target {target:g}",
                )
            )
        n_sys = result.extra["n_system"]
        ok_shared = True
        msg = []
        for n in sizes:
            row = result.select(n=n, t=t_big)[0]
            expected = 1.0 - n / (2.0 * n_sys)
            slack = 3.0 * row[5] + abs((n - 1) / (2.0 * (n_sys - 1)) - n / (2.0 * n_sys))
            if abs(row[4] - expected) > slack:
                ok_shared = False
            msg.append(f"n={n}: {row[4]:.4f} vs {expected:.4f}")
        checks.append(("shared-jump-fraction", ok_shared, "; ".join(msg)))
    return checks


def check_gap_decay(result, config) -> list:
    checks = []
    for n in config.n_list:
        fit = result.fits.get(f"N={n}")
        if fit is None or fit.get("degenerate"):
            checks.append((f"decay-rate-N{n}", True, "degenerate decay: plateau-only report"))
            continue
        lam = fit["lambda_n"]
        ok = 0.5 * lam <= fit["rate"] <= 2.0 * lam
        checks.append(
            (
                f"decay-rate-N{n}",
                ok,
                f"fitted rate {fit['rate']:.3f} vs lambda_N {lam:.4f} (window [{0.5 * lam:.3f}, {2 * lam:.3f}])",
            )
        )
    if len(config.n_list) >= 2:
        lo_fit = result.fits[f"N={config.n_list[0]}"]
        hi_fit = result.fits[f"N={config.n_list[-1]}"]
        # plateau SE proxy: SE of the h rows in the tail region
        tail_se = {}
        for n in (config.n_list[0], config.n_list[-1]):
            rows = result.select(N=n)
            tail = max(1, len(rows) // 4)
            tail_se[n] = float(np.mean([r[3] for r in rows[-tail:]]))
        ok = hi_fit["plateau"] <= lo_fit["plateau"] + 3.0 * (
            tail_se[config.n_list[0]] + tail_se[config.n_list[-1]]
        )
        checks.append(
            (
                "plateau-shrinks-with-n",
                ok,
                f"plateau N={config.n_list[-1]}: {hi_fit['plateau']:.4g} <= "
                f"N={config.n_list[0]}: {lo_fit['plateau']:.4g}",
            )
        )
    return checks


def check_equilibrium(result, config) -> list:
    w = result.column("w2_to_equilibrium")
    se = result.column("se")
    floor = float(np.mean(w[-2:]))
    if w[0] <= 2.0 * floor:
        return [("decay-to-floor", True, "already at the Monte Carlo floor (stationary start)")]
    ok = True
    for k in range(len(w) - 1):
        if w[k] <= 1.3 * floor:
            break
        if w[k + 1] > w[k] + 3.0 * (se[k] + se[k + 1]):
            ok = False
            break
    return [
        (
            "decay-to-floor",
            ok,
            f"W_2 decreases from {w[0]:.4g} to the floor {floor:.4g}",
        )
    ]


def check_iid_rate(result, config) -> list:
    fit = result.fits.get("rate")
    if fit is None:
        return [("iid-slope", len(config.n_list) < 2, "no fit (need >= 2 sizes)")]
    r = config.f0_spec.moment_order
    eta = min(0.5, 1.0 - config.q / r) if math.isfinite(r) else 0.5
    # the bound is an upper bound; light-tailed laws beat it, so only the
    # heavy-tailed regime gets slack
    threshold = -eta + (0.15 if math.isfinite(r) else 0.0)
    ok = fit.slope <= threshold
    return [("iid-slope", ok, f"slope {fit.slope:.3f} vs threshold {threshold:.3f}")]


# ---------------------------------------------------------------------------
# dispatch

_RUNNERS = {
    "chaos-rate": chaos_rate_experiment,
    "chaos-rate-w4": chaos_rate_experiment,
    "covariance": covariance_experiment,
    "decoupling": decoupling_experiment,
    "gap-decay": gap_decay_experiment,
    "equilibrium": equilibrium_experiment,
    "iid-rate": iid_rate_experiment,
}


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    config.validate()
    return _RUNNERS[config.experiment](config)
