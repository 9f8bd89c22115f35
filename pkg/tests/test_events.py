import math

import numpy as np
import pytest
from scipy.stats import chi2, kstest

from kac_chaos import CollisionEvent, EventStream, RngStream, angle_for_particle, sample_event

TWO_PI = 2.0 * math.pi


def test_invalid_particle_count():
    with pytest.raises(ValueError):
        sample_event(1, RngStream(0))


def test_event_invariants():
    gen = RngStream(123).generator()
    for _ in range(1000):
        e = sample_event(7, gen)
        assert e.i != e.j
        assert 1 <= e.i <= 7 and 1 <= e.j <= 7
        assert 0.0 <= e.theta < TWO_PI
        assert e.dt > 0.0


def test_n2_only_admissible_pairs():
    counts = {}
    gen = RngStream(5).generator()
    for _ in range(4000):
        e = sample_event(2, gen)
        counts[(e.i, e.j)] = counts.get((e.i, e.j), 0) + 1
    # each ordered pair with probability 1/2
    assert abs(counts[(1, 2)] / 4000 - 0.5) < 0.05


def test_dt_mean_matches_rate():
    n = 100
    stream = EventStream(n, RngStream(7))
    dts = np.array([stream.next_event().dt for _ in range(10**6)])
    se = dts.std() / math.sqrt(dts.shape[0])
    assert abs(dts.mean() - 2.0 / n) < 3 * se


def test_fixed_particle_collision_rate():
    # a fixed particle takes part in events at rate ~1 per unit time
    n = 25
    stream = EventStream(n, RngStream(11))
    t = 0.0
    hits = 0
    total = 200_000
    for _ in range(total):
        e = stream.next_event()
        t += e.dt
        if e.i == 1 or e.j == 1:
            hits += 1
    rate = hits / t
    se = math.sqrt(hits) / t
    assert abs(rate - 1.0) < 3 * se


def test_replay_identical():
    a = EventStream(10, RngStream(42, 3))
    b = EventStream(10, RngStream(42, 3))
    for _ in range(500):
        assert a.next_event() == b.next_event()


def test_distinct_streams_differ():
    a = EventStream(10, RngStream(42, 0))
    b = EventStream(10, RngStream(42, 1))
    assert any(a.next_event() != b.next_event() for _ in range(10))


def test_theta_uniformity_ks():
    stream = EventStream(5, RngStream(2024))
    thetas = np.array([stream.next_event().theta for _ in range(10**5)])
    stat = kstest(thetas, "uniform", args=(0.0, TWO_PI)).statistic
    # 1% critical value for the KS statistic
    critical = 1.63 / math.sqrt(thetas.shape[0])
    assert stat < critical


def test_pair_uniformity_chisquare():
    n = 5
    stream = EventStream(n, RngStream(31))
    counts = np.zeros((n, n))
    total = 10**5
    for _ in range(total):
        e = stream.next_event()
        counts[e.i - 1, e.j - 1] += 1
    observed = counts[~np.eye(n, dtype=bool)]
    expected = total / (n * (n - 1))
    stat = float(np.sum((observed - expected) ** 2 / expected))
    assert stat < chi2.ppf(0.99, df=n * (n - 1) - 1)


def test_angle_for_participants():
    e = CollisionEvent(dt=0.5, i=2, j=5, theta=0.0)
    assert angle_for_particle(e, 2) == 0.0
    e2 = CollisionEvent(dt=0.5, i=2, j=5, theta=math.pi / 2)
    assert angle_for_particle(e2, 5) == pytest.approx(0.0)
    assert angle_for_particle(e2, 3) is None


def test_second_index_angle_turns_sin_into_cos():
    gen = RngStream(8).generator()
    for _ in range(200):
        e = sample_event(6, gen)
        assert math.cos(angle_for_particle(e, e.j)) == pytest.approx(math.sin(e.theta), abs=1e-12)


def test_angle_complementarity():
    gen = RngStream(9).generator()
    for _ in range(1000):
        e = sample_event(4, gen)
        ci = math.cos(angle_for_particle(e, e.i))
        cj = math.cos(angle_for_particle(e, e.j))
        assert abs(ci * ci + cj * cj - 1.0) < 1e-12
