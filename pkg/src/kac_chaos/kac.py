"""The Kac particle system: collision rules, exact event-driven evolution,
and equilibrium (Kac sphere) sampling.

Both collision parametrizations are provided: the plain rotation rule
(v, v*) -> (v cos t - v* sin t, v* cos t + v sin t) and the polar rule
(v, v*) -> sqrt(v^2 + v*^2) (cos t, sin t), which generate the same law
for the system.  Both conserve v^2 + v*^2 exactly up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from kac_chaos import _kernels
from kac_chaos.events import TWO_PI, EventStream, as_generator

# Events between from-scratch energy refreshes; in between the cached
# energy is simply carried (each collision conserves it up to rounding).
ENERGY_REFRESH_EVENTS = 1_000_000

PARAMETRIZATIONS = ("rotation", "polar")


@dataclass
class SystemState:
    """N velocities plus elapsed time and cached mean energy."""

    velocities: np.ndarray
    time: float = 0.0
    energy: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.velocities = np.asarray(self.velocities, dtype=np.float64)
        if self.velocities.ndim != 1 or self.velocities.shape[0] < 1:
            raise ValueError("velocities must be a nonempty 1D array")
        if self.energy is None:
            self.energy = float(np.mean(self.velocities**2))

    @property
    def n(self) -> int:
        return self.velocities.shape[0]

    def copy(self) -> "SystemState":
        return SystemState(self.velocities.copy(), self.time, self.energy)

    def refresh_energy(self) -> float:
        self.energy = float(np.mean(self.velocities**2))
        return self.energy


def collide_rotation(v: float, v_star: float, theta: float):
    """Rotate the velocity pair by theta."""
    c = math.cos(theta)
    s = math.sin(theta)
    return v * c - v_star * s, v_star * c + v * s


def collide_polar(v: float, v_star: float, theta: float):
    """Place the pair at angle theta on its energy circle."""
    r = math.hypot(v, v_star)
    return r * math.cos(theta), r * math.sin(theta)


def advance(state: SystemState, horizon: float, parametrization: str = "polar", rng=None) -> SystemState:
    """Evolve the system to `horizon` by consuming collision events in order.

    Events are consumed until the first event time exceeds the horizon
    (that overshoot event is discarded; exponential gaps are memoryless).
    Returns a new state; the input is left untouched.
    """
    if horizon < state.time:
        raise ValueError(f"horizon {horizon} earlier than state time {state.time}")
    if parametrization not in PARAMETRIZATIONS:
        raise ValueError(f"unknown parametrization {parametrization!r}")
    if rng is None:
        raise ValueError("an RngStream, Generator or EventStream is required")

    n = state.n
    if n < 2:
        raise ValueError("dynamics needs at least 2 particles")
    stream = rng if isinstance(rng, EventStream) else EventStream(n, rng)
    kernel = (
        _kernels.apply_events_polar
        if parametrization == "polar"
        else _kernels.apply_events_rotation
    )

    v = state.velocities.copy()
    t = state.time
    since_refresh = 0
    while True:
        expected = max(16, int(n * (horizon - t) / 2.0) + 1)
        want = min(expected + 4 * int(math.sqrt(expected)) + 16, 1 << 16)
        dt, i, j, theta = stream.next_arrays(want)
        times = t + np.cumsum(dt)
        cut = int(np.searchsorted(times, horizon, side="right"))
        kernel(v, i[:cut], j[:cut], theta[:cut])
        since_refresh += cut
        if cut < dt.shape[0]:
            # the event at `cut` is the first past the horizon: consumed, not applied
            break
        t = times[-1] if times.shape[0] else t

    out = SystemState(v, horizon, state.energy)
    if since_refresh >= ENERGY_REFRESH_EVENTS:
        out.refresh_energy()
    return out


def sample_kac_sphere(n: int, mean_energy: float, rng) -> np.ndarray:
    """Uniform sample on the sphere {x in R^n : (1/n) sum x_i^2 = mean_energy}.

    A standard Gaussian vector rescaled to the target norm is uniform on
    the sphere by rotation invariance.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not mean_energy > 0.0:
        raise ValueError("mean_energy must be positive")
    gen = as_generator(rng)
    while True:
        z = gen.standard_normal(n)
        norm = np.linalg.norm(z)
        if norm > 0.0:
            return z * (math.sqrt(n * mean_energy) / norm)


def save_velocities(path, velocities: np.ndarray) -> None:
    """Write one velocity per line as round-trippable decimal text."""
    with open(path, "w") as fh:
        for v in np.asarray(velocities, dtype=np.float64):
            fh.write(f"{float(v)!r}\n")


def load_velocities(path) -> np.ndarray:
    with open(path) as fh:
        return np.array([float(line) for line in fh if line.strip()], dtype=np.float64)
