"""Exact one-dimensional optimal transport.

W_p between equal-size samples reduces to matching order statistics;
comparisons against continuous marginals go through quantile functions
on the midpoint grid (k - 1/2)/m.  The comonotone rearrangement of
squared values realizes the optimal map for the cost (x^2 - y^2)^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from kac_chaos.events import as_generator


@dataclass
class EmpiricalMeasure:
    """Uniform probability measure on a finite multiset of atoms."""

    atoms: np.ndarray

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=np.float64)
        if self.atoms.ndim != 1 or self.atoms.shape[0] < 1:
            raise ValueError("atoms must be a nonempty 1D array")

    @cached_property
    def sorted(self) -> np.ndarray:
        return self.atoms[self.sorted_indices]

    @cached_property
    def sorted_indices(self) -> np.ndarray:
        # stable: equal atoms keep their original relative order
        return np.argsort(self.atoms, kind="stable")

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    def quantile_fn(self) -> "QuantileFn":
        return QuantileFn.from_sorted(self.sorted)

    def squared(self) -> "EmpiricalMeasure":
        return squared_pushforward(self)


@dataclass
class QuantileFn:
    """Left-continuous generalized inverse CDF, vectorized over u in (0,1)."""

    evaluator: Callable[[np.ndarray], np.ndarray]

    def __call__(self, u):
        return self.evaluator(np.asarray(u, dtype=np.float64))

    @classmethod
    def from_sorted(cls, sorted_values: np.ndarray) -> "QuantileFn":
        vals = np.asarray(sorted_values, dtype=np.float64)
        n = vals.shape[0]

        def evaluate(u):
            idx = np.clip(np.ceil(u * n).astype(np.int64) - 1, 0, n - 1)
            return vals[idx]

        return cls(evaluate)

    @classmethod
    def from_callable(cls, fn) -> "QuantileFn":
        return cls(lambda u: np.asarray(fn(u), dtype=np.float64))


def _atoms(measure) -> np.ndarray:
    if isinstance(measure, EmpiricalMeasure):
        return measure.atoms
    return np.asarray(measure, dtype=np.float64)


def wasserstein_p(xs, ys, p: float = 2.0) -> float:
    """Normalized W_p^p between equal-size samples: (1/k) sum |x_(i) - y_(i)|^p.

    Matching ascending order statistics is the optimal coupling in 1D.
    """
    if p < 1.0:
        raise ValueError("p must be >= 1")
    a = _atoms(xs)
    b = _atoms(ys)
    if a.shape[0] == 0 or a.shape[0] != b.shape[0]:
        raise ValueError(f"atom counts must match and be positive, got {a.shape[0]} and {b.shape[0]}")
    return float(np.mean(np.abs(np.sort(a) - np.sort(b)) ** p))


def wasserstein_quantile(mu, nu, p: float = 2.0, m: int = 1000) -> float:
    """Midpoint-rule W_p^p between two quantile functions on an m-point grid.

    Exact when both are empirical measures with m atoms.
    """
    if m < 1:
        raise ValueError("grid size must be >= 1")
    if p < 1.0:
        raise ValueError("p must be >= 1")
    u = (np.arange(m) + 0.5) / m
    return float(np.mean(np.abs(np.asarray(mu(u)) - np.asarray(nu(u))) ** p))


def squared_pushforward(mu: EmpiricalMeasure) -> EmpiricalMeasure:
    """Image measure under v -> v^2."""
    return EmpiricalMeasure(_atoms(mu) ** 2)


def optimal_map_squared_cost(others, flow_sq_quantile, sign_source=None, rng=None) -> np.ndarray:
    """Optimal partner values for the cost (x^2 - y^2)^2, one per atom of `others`.

    The atom with squared-rank k (stable ties) is matched to the value F
    with F^2 = flow_sq_quantile((k - 1/2)/m), the comonotone and hence
    optimal assignment of squares.  Signs come from `sign_source`
    (a quantile-like map evaluated at the same ranks, e.g. signed atoms of
    an empirical flow) or, for a symmetric flow, uniformly at random.
    The returned array is aligned with the original atom order.
    """
    atoms = _atoms(others)
    m = atoms.shape[0]
    sq = atoms**2
    order = np.argsort(sq, kind="stable")
    u = (np.arange(m) + 0.5) / m
    fsq = np.asarray(flow_sq_quantile(u), dtype=np.float64)
    if np.any(fsq < 0.0):
        raise ValueError("squared-quantile source returned a negative value")
    if sign_source is not None:
        signs = np.where(np.asarray(sign_source(u)) < 0.0, -1.0, 1.0)
    elif rng is not None:
        signs = np.where(as_generator(rng).random(m) < 0.5, -1.0, 1.0)
    else:
        raise ValueError("need a sign_source or an rng to set the sign of the map")
    result = np.empty(m)
    result[order] = signs * np.sqrt(fsq)
    return result
