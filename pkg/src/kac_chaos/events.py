"""Poisson collision events driving the Kac dynamics.

The global clock rings at rate N/2; at each ring an ordered pair (i, j)
with i != j is picked uniformly among the N(N-1) possibilities together
with an angle theta uniform on [0, 2*pi).  Each replica of a simulation
runs on its own counter-based random stream so replicas are independent
and individually reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class CollisionEvent:
    """One atom of the collision point measure.

    ``i`` and ``j`` are 1-based particle indices: ``i`` is the first (row)
    index, ``j`` the second (column) index, always distinct.  ``dt`` is the
    time elapsed since the previous event.
    """

    dt: float
    i: int
    j: int
    theta: float

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("collision requires two distinct particles")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if not 0.0 <= self.theta < TWO_PI:
            raise ValueError("theta must lie in [0, 2*pi)")


@dataclass(frozen=True)
class RngStream:
    """Identifier of an independent random stream.

    Streams are realized with the counter-based Philox generator keyed by
    (seed, stream_id), so the same pair always reproduces the identical
    sequence and distinct stream_ids are statistically independent.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = (self.seed & _MASK64) | ((self.stream_id & _MASK64) << 64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, offset: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + offset)


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream or an already-live numpy Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng)!r}")


def _sample_batch(n_particles: int, size: int, gen: np.random.Generator):
    """Draw `size` events as parallel arrays (0-based indices)."""
    dt = gen.exponential(scale=2.0 / n_particles, size=size)
    i = gen.integers(0, n_particles, size=size)
    j = gen.integers(0, n_particles - 1, size=size)
    j = j + (j >= i)  # uniform over the remaining N-1 indices
    theta = gen.uniform(0.0, TWO_PI, size=size)
    return dt, i, j, theta


class EventStream:
    """Buffered sequential view of the event point process.

    Events are drawn in chunks for speed but consumed strictly in order,
    so a stream replayed from the same RngStream yields the identical
    event sequence regardless of how consumers batch their reads.
    """

    def __init__(self, n_particles: int, rng, chunk: int = 4096):
        if n_particles < 2:
            raise ValueError("need at least 2 particles to collide")
        self.n_particles = n_particles
        self._gen = as_generator(rng)
        self._chunk = chunk
        self._pos = 0
        self._dt = np.empty(0)
        self._i = np.empty(0, dtype=np.int64)
        self._j = np.empty(0, dtype=np.int64)
        self._theta = np.empty(0)

    def _refill(self):
        self._dt, self._i, self._j, self._theta = _sample_batch(
            self.n_particles, self._chunk, self._gen
        )
        self._pos = 0

    def next_event(self) -> CollisionEvent:
        if self._pos >= self._dt.shape[0]:
            self._refill()
        k = self._pos
        self._pos += 1
        return CollisionEvent(
            dt=float(self._dt[k]),
            i=int(self._i[k]) + 1,
            j=int(self._j[k]) + 1,
            theta=float(self._theta[k]),
        )

    def next_arrays(self, max_size: int):
        """Pop up to `max_size` buffered events as arrays (0-based indices)."""
        if self._pos >= self._dt.shape[0]:
            self._refill()
        hi = min(self._pos + max_size, self._dt.shape[0])
        sl = slice(self._pos, hi)
        self._pos = hi
        return self._dt[sl], self._i[sl], self._j[sl], self._theta[sl]


def sample_event(n_particles: int, rng) -> CollisionEvent:
    """Draw a single collision event: dt ~ Exp(N/2), (i, j) uniform ordered
    pair with i != j, theta uniform on [0, 2*pi), all independent."""
    if n_particles < 2:
        raise ValueError("need at least 2 particles to collide")
    gen = as_generator(rng)
    dt, i, j, theta = _sample_batch(n_particles, 1, gen)
    return CollisionEvent(dt=float(dt[0]), i=int(i[0]) + 1, j=int(j[0]) + 1, theta=float(theta[0]))


def angle_for_particle(event: CollisionEvent, k: int):
    """Angle seen by particle k in this event, or None if k is a bystander.

    The first index keeps theta; the second index sees theta - pi/2
    (mod 2*pi), turning the sine of the joint rotation into a cosine.
    """
    if k == event.i:
        return event.theta
    if k == event.j:
        return (event.theta - 0.5 * math.pi) % TWO_PI
    return None
