"""Couplings between the particle system and nonlinear processes.

Two constructions:

* the V/U coupling: particle system V and nonlinear processes U driven by
  the same collision events, where each U-participant replaces its
  partner's contribution by the optimal-map value F taken against the flow
  (optimal for the cost (x^2 - y^2)^2 on the leave-one-out empirical
  measure of U);
* the decoupled system: auxiliary processes U~_1..U~_n that reuse U's
  collision atoms except those producing joint jumps among the first n
  processes, with the missing jump intensity restored from an independent
  compensating Poisson source.

All ensemble diagnostics used in the analysis (the squared-energy gap
h_t, covariances of squared processes, sign agreement, first-jump times)
are recorded here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from kac_chaos.events import TWO_PI, CollisionEvent, EventStream, as_generator
from kac_chaos.flows import FlowModel, StationaryGaussianFlow
from kac_chaos.kac import SystemState

HALF_PI = 0.5 * math.pi


def _loo_rank(usq: np.ndarray, excl: int, member: int) -> int:
    """0-based rank of usq[member] in the array with index `excl` removed.

    Ties break stably by original index, matching the stable sort used by
    the optimal map.
    """
    x = usq[member]
    rank = int(np.count_nonzero(usq < x))
    if usq[excl] < x:
        rank -= 1
    rank += int(np.count_nonzero(usq[:member] == x))
    if excl < member and usq[excl] == x:
        rank -= 1
    return rank


class _SquaredQuantileSource:
    """Per-event F^2 lookups at the fixed rank grid (k + 1/2)/(N - 1).

    A stationary flow is tabulated once; a time-dependent flow is queried
    per event.
    """

    def __init__(self, flow: FlowModel, n_particles: int):
        self.flow = flow
        self.m = n_particles - 1
        self._grid = (np.arange(self.m) + 0.5) / self.m
        if isinstance(flow, StationaryGaussianFlow):
            self._table = np.asarray(flow.squared_quantile(0.0, self._grid))
        else:
            self._table = None

    def fsq(self, t: float, rank: int) -> float:
        if self._table is not None:
            return float(self._table[rank])
        if not self.flow.covers(t):
            raise ValueError(f"flow does not cover time {t}")
        return float(self.flow.squared_quantile(t, self._grid[rank]))


@dataclass
class CoupledState:
    """Particle system V and nonlinear processes U sharing one event stream."""

    v: SystemState
    u: SystemState
    flow: FlowModel

    def __post_init__(self):
        if self.v.n != self.u.n:
            raise ValueError("V and U must have the same number of particles")
        if self.v.time != self.u.time:
            raise ValueError("V and U must carry the same time")

    @property
    def time(self) -> float:
        return self.v.time

    @property
    def n(self) -> int:
        return self.v.n


def _jump_pair(v, u, usq, i, j, theta, fsq_i, fsq_j):
    """Apply one collision to (V, U) in place; usq is kept consistent."""
    ci = math.cos(theta)
    cj = math.cos(theta - HALF_PI)
    r = math.hypot(v[i], v[j])
    v[i] = r * ci
    v[j] = r * cj
    u[i] = math.sqrt(usq[i] + fsq_i) * ci
    u[j] = math.sqrt(usq[j] + fsq_j) * cj
    usq[i] = u[i] * u[i]
    usq[j] = u[j] * u[j]


def step_coupled(state: CoupledState, event: CollisionEvent) -> CoupledState:
    """Apply one collision event to the coupled pair.

    V collides with the polar rule; each U participant jumps to
    sqrt(U^2 + F^2) * cos(own angle), with F^2 read from the flow's squared
    quantile at its partner's leave-one-out squared rank.
    """
    t_event = state.time + event.dt
    source = _SquaredQuantileSource(state.flow, state.n)
    i, j = event.i - 1, event.j - 1
    usq = state.u.velocities**2
    fsq_i = source.fsq(t_event, _loo_rank(usq, i, j))
    fsq_j = source.fsq(t_event, _loo_rank(usq, j, i))
    v = state.v.velocities.copy()
    u = state.u.velocities.copy()
    _jump_pair(v, u, usq, i, j, event.theta, fsq_i, fsq_j)
    return CoupledState(
        v=SystemState(v, t_event, state.v.energy),
        u=SystemState(u, t_event),
        flow=state.flow,
    )


@dataclass
class CouplingDiagnostics:
    """Per-trajectory time series of the proof diagnostics.

    h_series estimates E(V_i^2 - U_i^2)^2 (mean over particles);
    cov_u2 is the within-trajectory pair-averaged estimate of
    cov(U_i^2, U_j^2) with the flow energy as known mean; sign_agreement
    is the fraction of already-jumped particles whose V and U signs agree.
    Averaging these series across replicas gives the ensemble estimates.
    """

    times: np.ndarray
    h_series: np.ndarray
    cov_u2: np.ndarray
    sign_agreement: np.ndarray
    first_jump_times: np.ndarray
    b_n: float


def _pair_cov_estimate(usq: np.ndarray, mean_sq: float) -> float:
    # unbiased over ordered pairs, using the known marginal mean
    d = usq - mean_sq
    s = float(np.sum(d))
    n = d.shape[0]
    return (s * s - float(np.sum(d * d))) / (n * (n - 1))


def run_coupled(v0, u0, flow: FlowModel, horizon: float, rng, obs_times=None) -> CouplingDiagnostics:
    """Evolve one coupled trajectory to `horizon`, recording diagnostics
    on the observation grid (default spacing 0.5)."""
    v = np.array(v0, dtype=np.float64)
    u = np.array(u0, dtype=np.float64)
    if v.shape != u.shape or v.ndim != 1:
        raise ValueError("v0 and u0 must be 1D arrays of equal length")
    n = v.shape[0]
    if obs_times is None:
        obs_times = np.arange(0.0, horizon + 1e-12, 0.5)
    obs_times = np.asarray(obs_times, dtype=np.float64)
    if obs_times.shape[0] and not flow.covers(float(obs_times[-1])):
        raise ValueError("flow does not cover the requested horizon")

    source = _SquaredQuantileSource(flow, n)
    stream = EventStream(n, rng)
    usq = u**2
    mean_sq = flow.energy
    b_n = (float(np.mean(v**2)) - flow.energy) ** 2
    first_jump = np.full(n, np.inf)

    h_out = np.empty(obs_times.shape[0])
    cov_out = np.empty(obs_times.shape[0])
    sign_out = np.empty(obs_times.shape[0])

    def record(k, t_obs):
        h_out[k] = float(np.mean((v**2 - usq) ** 2))
        cov_out[k] = _pair_cov_estimate(usq, mean_sq)
        jumped = first_jump <= t_obs
        if np.any(jumped):
            sign_out[k] = float(np.mean(np.sign(v[jumped]) == np.sign(u[jumped])))
        else:
            sign_out[k] = 1.0

    t = 0.0
    k_obs = 0
    while True:
        dt, ii, jj, th = stream.next_arrays(1024)
        for m in range(dt.shape[0]):
            t_event = t + dt[m]
            while k_obs < obs_times.shape[0] and obs_times[k_obs] < t_event:
                record(k_obs, obs_times[k_obs])
                k_obs += 1
            if t_event > horizon:
                while k_obs < obs_times.shape[0]:
                    record(k_obs, obs_times[k_obs])
                    k_obs += 1
                return CouplingDiagnostics(
                    times=obs_times,
                    h_series=h_out,
                    cov_u2=cov_out,
                    sign_agreement=sign_out,
                    first_jump_times=first_jump,
                    b_n=b_n,
                )
            i = int(ii[m])
            j = int(jj[m])
            fsq_i = source.fsq(t_event, _loo_rank(usq, i, j))
            fsq_j = source.fsq(t_event, _loo_rank(usq, j, i))
            _jump_pair(v, u, usq, i, j, th[m], fsq_i, fsq_j)
            if first_jump[i] == np.inf:
                first_jump[i] = t_event
            if first_jump[j] == np.inf:
                first_jump[j] = t_event
            t = t_event


def _run_nonlinear(u: np.ndarray, usq: np.ndarray, flow, source, stream, t0: float, horizon: float) -> float:
    """Evolve the U system alone (in place) from t0 to horizon."""
    t = t0
    while True:
        dt, ii, jj, th = stream.next_arrays(1024)
        for m in range(dt.shape[0]):
            t_event = t + dt[m]
            if t_event > horizon:
                return horizon
            i = int(ii[m])
            j = int(jj[m])
            fsq_i = source.fsq(t_event, _loo_rank(usq, i, j))
            fsq_j = source.fsq(t_event, _loo_rank(usq, j, i))
            ci = math.cos(th[m])
            cj = math.sin(th[m])
            u[i] = math.sqrt(usq[i] + fsq_i) * ci
            u[j] = math.sqrt(usq[j] + fsq_j) * cj
            usq[i] = u[i] * u[i]
            usq[j] = u[j] * u[j]
            t = t_event


@dataclass
class DecoupledState:
    """Nonlinear system U plus the n decoupled companions U~."""

    u: SystemState
    u_tilde: np.ndarray
    n: int
    flow: FlowModel
    aux_rng: object
    shared_jumps: int = 0
    suppressed_jumps: int = 0
    compensating_jumps: int = 0

    def __post_init__(self):
        self.u_tilde = np.asarray(self.u_tilde, dtype=np.float64)
        if not 1 <= self.n <= self.u.n:
            raise ValueError("need 1 <= n <= N")
        if self.u_tilde.shape != (self.n,):
            raise ValueError("u_tilde must hold exactly n values")

    @property
    def total_tracked_jumps(self) -> int:
        return self.shared_jumps + self.suppressed_jumps


def compensation_rate(n: int, n_particles: int) -> float:
    """Per-particle intensity of the suppressed atom set: each U~_i loses
    exactly the atoms where i is the second index and the first index lies
    among the other n - 1 tracked particles."""
    if n < 2:
        return 0.0
    return (n - 1) / (2.0 * (n_particles - 1))


def step_decoupled(state: DecoupledState, event: CollisionEvent) -> DecoupledState:
    """Apply one shared collision atom to (U, U~).

    U evolves exactly as in the coupled dynamics.  U~_k jumps along with
    U_k, except when k is the second index and the first index is another
    tracked process (that atom is suppressed for U~_k); the suppressed
    intensity is restored separately by the compensating source.
    """
    t_event = state.u.time + event.dt
    n_sys = state.u.n
    source = _SquaredQuantileSource(state.flow, n_sys)
    i, j = event.i - 1, event.j - 1
    u = state.u.velocities.copy()
    usq = u**2
    ut = state.u_tilde.copy()
    fsq_i = source.fsq(t_event, _loo_rank(usq, i, j))
    fsq_j = source.fsq(t_event, _loo_rank(usq, j, i))
    ci = math.cos(event.theta)
    cj = math.sin(event.theta)
    shared = state.shared_jumps
    suppressed = state.suppressed_jumps
    if i < state.n:
        ut[i] = math.sqrt(ut[i] * ut[i] + fsq_i) * ci
        shared += 1
    if j < state.n:
        if i < state.n:
            suppressed += 1  # joint jump among tracked processes: U~_j skips it
        else:
            ut[j] = math.sqrt(ut[j] * ut[j] + fsq_j) * cj
            shared += 1
    u[i] = math.sqrt(usq[i] + fsq_i) * ci
    u[j] = math.sqrt(usq[j] + fsq_j) * cj
    return DecoupledState(
        u=SystemState(u, t_event),
        u_tilde=ut,
        n=state.n,
        flow=state.flow,
        aux_rng=state.aux_rng,
        shared_jumps=shared,
        suppressed_jumps=suppressed,
        compensating_jumps=state.compensating_jumps,
    )


@dataclass
class DecoupledRun:
    times: np.ndarray
    gap_series: np.ndarray  # mean over i <= n of (U_i^2 - U~_i^2)^2
    shared_fraction: float  # fraction of tracked U jumps shared with U~
    u_final: np.ndarray
    u_tilde_final: np.ndarray


def run_decoupled(u0, n: int, flow: FlowModel, horizon: float, rng, aux_rng, obs_times=None) -> DecoupledRun:
    """Evolve (U, U~) to `horizon` with the shared stream `rng` and the
    independent compensating source `aux_rng`."""
    u = np.array(u0, dtype=np.float64)
    n_sys = u.shape[0]
    if not 1 <= n <= n_sys:
        raise ValueError("need 1 <= n <= N")
    if obs_times is None:
        obs_times = np.array([horizon])
    obs_times = np.asarray(obs_times, dtype=np.float64)

    source = _SquaredQuantileSource(flow, n_sys)
    stream = EventStream(n_sys, rng)
    aux = as_generator(aux_rng)
    usq = u**2
    ut = u[:n].copy()
    rate_comp_total = n * compensation_rate(n, n_sys)

    shared = 0
    suppressed = 0
    gap_out = np.empty(obs_times.shape[0])
    k_obs = 0
    t = 0.0
    next_comp = t + (aux.exponential(1.0 / rate_comp_total) if rate_comp_total > 0.0 else np.inf)
    pend = stream.next_event()
    next_main = t + pend.dt

    def record_until(t_next):
        nonlocal k_obs
        while k_obs < obs_times.shape[0] and obs_times[k_obs] < t_next:
            gap_out[k_obs] = float(np.mean((usq[:n] - ut * ut) ** 2))
            k_obs += 1

    while True:
        t_event = min(next_main, next_comp)
        record_until(t_event)
        if t_event > horizon:
            break
        if next_main <= next_comp:
            i, j, theta = pend.i - 1, pend.j - 1, pend.theta
            fsq_i = source.fsq(t_event, _loo_rank(usq, i, j))
            fsq_j = source.fsq(t_event, _loo_rank(usq, j, i))
            ci = math.cos(theta)
            cj = math.sin(theta)
            if i < n:
                ut[i] = math.sqrt(ut[i] * ut[i] + fsq_i) * ci
                shared += 1
            if j < n:
                if i < n:
                    suppressed += 1
                else:
                    ut[j] = math.sqrt(ut[j] * ut[j] + fsq_j) * cj
                    shared += 1
            u[i] = math.sqrt(usq[i] + fsq_i) * ci
            u[j] = math.sqrt(usq[j] + fsq_j) * cj
            usq[i] = u[i] * u[i]
            usq[j] = u[j] * u[j]
            pend = stream.next_event()
            next_main = t_event + pend.dt
        else:
            # compensating atom: a tracked process jumps alone as second
            # index, its partner drawn among the other tracked processes
            a = int(aux.integers(0, n))
            l = int(aux.integers(0, n - 1))
            l = l + (l >= a)
            theta = float(aux.uniform(0.0, TWO_PI))
            fsq = source.fsq(t_event, _loo_rank(usq, a, l))
            ut[a] = math.sqrt(ut[a] * ut[a] + fsq) * math.sin(theta)
            next_comp = t_event + aux.exponential(1.0 / rate_comp_total)
        t = t_event

    while k_obs < obs_times.shape[0]:
        gap_out[k_obs] = float(np.mean((usq[:n] - ut * ut) ** 2))
        k_obs += 1
    total = shared + suppressed
    return DecoupledRun(
        times=obs_times,
        gap_series=gap_out,
        shared_fraction=shared / total if total else 1.0,
        u_final=u,
        u_tilde_final=ut,
    )


def estimate_cov_u2(n_particles: int, flow: FlowModel, t: float, replicas: int, rng):
    """Across-replica estimate of cov(U_i^2, U_j^2) at time t, with its
    standard error.  Each replica contributes the pair-averaged estimator
    with the known marginal mean (the flow energy)."""
    if replicas < 100:
        raise ValueError("need at least 100 replicas")
    vals = np.empty(replicas)
    base = rng if hasattr(rng, "child") else None
    gen0 = None if base is not None else as_generator(rng)
    source = _SquaredQuantileSource(flow, n_particles)
    for r in range(replicas):
        gen = base.child(r).generator() if base is not None else gen0
        u = np.asarray(flow.sample(0.0, gen, n_particles), dtype=np.float64)
        usq = u**2
        if t > 0.0:
            _run_nonlinear(u, usq, flow, source, EventStream(n_particles, gen), 0.0, t)
        vals[r] = _pair_cov_estimate(usq, flow.energy)
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(replicas))


@dataclass
class GapEstimate:
    gap: float
    gap_se: float
    shared_fraction: float
    shared_fraction_se: float


def estimate_decoupling_gap(n: int, n_particles: int, flow: FlowModel, t: float, replicas: int, rng=None) -> GapEstimate:
    """Monte Carlo estimate of E(U_i^2 - U~_i^2)^2 averaged over the n
    tracked processes at time t."""
    if rng is None:
        raise ValueError("an RngStream is required")
    gaps = np.empty(replicas)
    shared = np.empty(replicas)
    for r in range(replicas):
        gen = rng.child(2 * r).generator()
        aux = rng.child(2 * r + 1).generator()
        u0 = flow.sample(0.0, gen, n_particles)
        run = run_decoupled(u0, n, flow, t, gen, aux, obs_times=np.array([t]))
        gaps[r] = run.gap_series[-1]
        shared[r] = run.shared_fraction
    return GapEstimate(
        gap=float(np.mean(gaps)),
        gap_se=float(np.std(gaps, ddof=1) / math.sqrt(replicas)),
        shared_fraction=float(np.mean(shared)),
        shared_fraction_se=float(np.std(shared, ddof=1) / math.sqrt(replicas)),
    )
