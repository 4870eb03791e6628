from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from portfolio_pursuit.market_env import CustomerFeatures, CustomerGenerator
from portfolio_pursuit.portfolio import (
    IndicatorSet,
    add_customer,
    batch_loss,
    generate_indicator_sets,
    generate_target,
    loss,
    membership,
)


def loss_oracle(f, g):
    """Direct per-term evaluation of the portfolio loss with the 0/0 convention."""
    total = 0.0
    for a, b in zip(f, g):
        m = max(a, b)
        total += 0.0 if m == 0 else abs(a - b) / m
    return total / len(f)


def customer(**kw):
    base = dict(customer_id=0, age=30.0, region="london", occupation="clerical", vehicle_value=12000.0,
                years_licensed=8.0, income=30000.0, risk_score=0.3)
    base.update(kw)
    return CustomerFeatures(**base)


# -- membership ----------------------------------------------------------------


def test_no_sets_gives_empty_membership():
    assert membership([], customer()).tolist() == []


def test_full_age_range_contains_everyone():
    gen = CustomerGenerator()
    rng = np.random.default_rng(0)
    s = [IndicatorSet("age", 18.0, 90.0)]
    assert all(membership(s, gen(rng).features)[0] for _ in range(2000))


SETS = [
    IndicatorSet("age", 25.0, 40.0),
    IndicatorSet("region", values=("london", "east")),
    IndicatorSet("risk_score", 0.5, 1.0),
    IndicatorSet("occupation", values=("student",)),
]


@pytest.mark.parametrize(
    "c, expected",
    [
        (customer(), [True, True, False, False]),
        (customer(age=41.0, region="north", risk_score=0.5, occupation="student"), [False, False, True, True]),
        (customer(age=25.0, region="east", risk_score=0.49), [True, True, False, False]),
    ],
)
def test_hand_built_membership(c, expected):
    assert membership(SETS, c).tolist() == expected


def test_indicator_round_trip():
    for s in SETS:
        assert IndicatorSet.from_dict(s.to_dict()) == s


def test_generated_sets_use_distinct_features():
    sets = generate_indicator_sets(np.random.default_rng(1), 5, n_reference=2000)
    assert len({s.feature for s in sets}) == 5
    for s in sets:
        if s.values is not None:
            assert 0 < len(s.values)
        else:
            assert s.low < s.high


def test_too_many_sets_rejected():
    with pytest.raises(ValueError):
        generate_indicator_sets(np.random.default_rng(0), 8, n_reference=10)


# -- frequency vectors -----------------------------------------------------------


def test_add_nothing():
    f = np.array([1, 2, 3])
    assert add_customer(f, np.zeros(3, bool)).tolist() == [1, 2, 3]


def test_add_all_to_zero():
    assert add_customer(np.zeros(4, np.int64), np.ones(4, bool)).tolist() == [1, 1, 1, 1]


def test_add_length_mismatch():
    with pytest.raises(ValueError):
        add_customer(np.zeros(3), np.ones(2, bool))


@given(st.lists(st.lists(st.booleans(), min_size=4, max_size=4), min_size=1, max_size=12), st.randoms())
def test_add_order_independent(members, rnd):
    order = list(range(len(members)))
    rnd.shuffle(order)
    f1 = np.zeros(4, np.int64)
    f2 = np.zeros(4, np.int64)
    for m in members:
        f1 = add_customer(f1, np.array(m))
    for i in order:
        f2 = add_customer(f2, np.array(members[i]))
    assert f1.tolist() == f2.tolist()


# -- loss ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "f, target, expected",
    [((3, 4, 5), (3, 4, 5), 0.0), ((0, 0), (5, 7), 1.0), ((5,), (10,), 0.5), ((0, 2), (0, 4), 0.25)],
)
def test_loss_hand_cases(f, target, expected):
    assert loss(f, target) == expected


counts = st.lists(st.integers(0, 200), min_size=1, max_size=8)


@given(st.data())
def test_loss_properties(data):
    f = data.draw(counts)
    g = data.draw(st.lists(st.integers(0, 200), min_size=len(f), max_size=len(f)))
    v = loss(f, g)
    assert 0.0 <= v <= 1.0
    assert v == loss(g, f)
    assert (v == 0.0) == (f == g)
    assert v == pytest.approx(loss_oracle(f, g), abs=1e-15)


def test_batch_loss_matches_scalar():
    rng = np.random.default_rng(2)
    F = rng.integers(0, 30, size=(100, 5))
    target = rng.integers(1, 30, size=5)
    assert np.allclose(batch_loss(F, target), [loss(f, target) for f in F], atol=0, rtol=0)


# -- targets -------------------------------------------------------------------


class FixedCoins:
    def __init__(self, u):
        self.u = np.asarray(u, dtype=float)

    def random(self, n):
        return self.u[:n]


def test_small_counts_double():
    halved, target = generate_target([4.0], FixedCoins([0.1]))
    assert target.tolist() == [8] and halved.tolist() == []


def test_large_count_halved_on_coin():
    halved, target = generate_target([20.0], FixedCoins([0.2]))
    assert target.tolist() == [10] and halved.tolist() == [0]
    _, target = generate_target([20.0], FixedCoins([0.7]))
    assert target.tolist() == [40]


def test_rounding_directions():
    _, target = generate_target([3.3, 21.5, 21.5], FixedCoins([0.9, 0.1, 0.9]))
    assert target.tolist() == [7, 10, 43]


def test_zero_count_forced_to_one():
    _, target = generate_target([0.0], FixedCoins([0.5]))
    assert target.tolist() == [1]


@given(st.lists(st.floats(0.0, 500.0), min_size=1, max_size=6), st.integers(0, 2**32 - 1))
def test_targets_positive_and_branch_consistent(hist, seed):
    halved, target = generate_target(hist, np.random.default_rng(seed))
    assert (target >= 1).all()
    for i, fb in enumerate(hist):
        if i in halved:
            assert fb > 10 and target[i] == max(1, int(fb // 2))
        else:
            assert target[i] == max(1, int(np.ceil(2 * fb)))


def test_loss_zero_only_at_target():
    target = np.array([2, 3])
    for f in itertools.product(range(5), repeat=2):
        assert (loss(f, target) == 0) == (tuple(f) == (2, 3))
