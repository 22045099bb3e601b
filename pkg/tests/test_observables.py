import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from winfree.experiments import SimSetup, simulate_cell
from winfree.observables import (
    DESYNCHRONIZED,
    SYNCHRONIZED,
    mean_dispersion,
    order_d,
    order_r,
    sync_verdict,
)

vectors = st.lists(st.floats(-50, 50), min_size=1, max_size=30)


def test_mean_dispersion_examples():
    assert mean_dispersion([1, 2, 3]) == (2.0, 2.0)
    assert mean_dispersion([4.2] * 5)[1] == 0.0
    assert mean_dispersion([0, 2 * math.pi, 4 * math.pi])[1] == pytest.approx(4 * math.pi)


def test_empty_input():
    with pytest.raises(ValueError):
        mean_dispersion([])


def test_order_r_examples():
    assert order_r([0.7] * 6) == pytest.approx(1.0, abs=1e-15)
    assert order_r([0, math.pi / 2, math.pi, 3 * math.pi / 2]) == pytest.approx(0.0, abs=1e-15)
    assert order_r([0, math.pi / 3]) == pytest.approx(math.cos(math.pi / 6), abs=1e-6)


def test_order_d_examples():
    assert order_d([1, 2, 3]) == 1.0
    assert order_d([3.0] * 4) == 0.0


def test_d_bracketed_by_dispersion_on_random_vectors():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        x = rng.normal(0, 5, rng.integers(1, 40))
        _, delta = mean_dispersion(x)
        d = order_d(x)
        assert delta / 2 - 1e-12 <= d <= delta + 1e-12


@given(vectors)
def test_observable_bounds(x):
    _, delta = mean_dispersion(x)
    r = order_r(x)
    assert 0.0 <= r <= 1.0
    assert delta >= 0.0
    assert delta / 2 - 1e-9 <= order_d(x) <= delta + 1e-9


@given(vectors, st.integers(0, 29), st.integers(-3, 3))
def test_r_ignores_whole_turns(x, idx, k):
    y = np.array(x)
    y[idx % len(y)] += 2 * math.pi * k
    assert order_r(y) == pytest.approx(order_r(x), abs=1e-9)


def test_dispersion_sees_whole_turns():
    x = np.array([0.0, 0.1, 0.2])
    y = x.copy()
    y[0] += 2 * math.pi
    assert mean_dispersion(y) != mean_dispersion(x)


@given(vectors, st.floats(-20, 20))
def test_global_shift(x, c):
    y = np.array(x) + c
    assert order_r(y) == pytest.approx(order_r(x), abs=1e-9)
    assert order_d(y) == pytest.approx(order_d(x), abs=1e-9)
    assert mean_dispersion(y)[1] == pytest.approx(mean_dispersion(x)[1], abs=1e-9)


def test_verdict_boundary():
    assert sync_verdict(0.0) == SYNCHRONIZED
    assert sync_verdict(3 * math.pi) == DESYNCHRONIZED
    assert sync_verdict(math.nextafter(3 * math.pi, 0)) == SYNCHRONIZED
    with pytest.raises(ValueError):
        sync_verdict(1.0, threshold=0.0)


def test_identical_frequencies_stay_synchronized():
    setup = SimSetup(N=100, t_end=1500.0, seed=5, ic_low=-math.pi, ic_high=math.pi)
    rec = simulate_cell(0.0, 0.0, 0.6, setup)
    assert rec["verdict"] == SYNCHRONIZED
