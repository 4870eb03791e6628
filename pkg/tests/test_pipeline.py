from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import expit

from portfolio_pursuit.market_env import CustomerGenerator, InteractionRecord, MarketVariables, Offer
from portfolio_pursuit.model_zoo import InsufficientDataError, dumps
from portfolio_pursuit.pipeline import (
    ACTION_CLAMP,
    EXPLORATION_FACTORS,
    Explorer,
    base_action,
    quote_price,
    random_policy_quote,
    train_pipeline,
    training_window,
)


def synthetic_history(n_epochs=3, per_epoch=400, seed=0):
    """Young customers face cheap markets, older ones expensive markets."""
    rng = np.random.default_rng(seed)
    gen = CustomerGenerator()
    out = []
    for e in range(1, n_epochs + 1):
        for t in range(1, per_epoch + 1):
            c = gen(rng).features
            m1 = 1.05 if c.age < 40 else 1.35
            m = MarketVariables(m1, m1 + 0.04, m1 + 0.08)
            a = float(rng.uniform(1.0, 1.6))
            accepted = bool(rng.random() < expit(12.0 * (m1 + 0.05 - a)))
            out.append(InteractionRecord(e, t, c, 100.0, a, 100.0 * a, (Offer(1, 100.0 * m1),), m, accepted))
    return out


@pytest.fixture(scope="module")
def history():
    return synthetic_history()


@pytest.fixture(scope="module")
def models(history):
    return train_pipeline(history, 4, np.random.default_rng(1), n_action_samples=200)


def test_window_larger_than_history_uses_everything(history):
    assert training_window(history, 10) == history
    assert {r.epoch for r in training_window(history, 2)} == {2, 3}


def test_training_is_deterministic(history):
    a = train_pipeline(history, 4, np.random.default_rng(2), n_action_samples=100)
    b = train_pipeline(history, 4, np.random.default_rng(2), n_action_samples=100)
    for name in ("market", "conversion", "action"):
        assert dumps(getattr(a, name)) == dumps(getattr(b, name))


def test_k_aware_flag_leaves_shared_models_alone(history):
    a = train_pipeline(history, 4, np.random.default_rng(3), n_action_samples=100)
    b = train_pipeline(history, 4, np.random.default_rng(3), k_aware=True, n_action_samples=100)
    assert dumps(a.action) == dumps(b.action)
    assert b.action_k is not None and a.action_k is None


def test_cheap_market_gets_lower_action(models):
    gen = CustomerGenerator()
    rng = np.random.default_rng(4)
    young, old = [], []
    while len(young) < 20 or len(old) < 20:
        c = gen(rng).features
        (young if c.age < 35 else old if c.age > 45 else []).append(c)
    a_young = np.mean([base_action(models, c) for c in young[:20]])
    a_old = np.mean([base_action(models, c) for c in old[:20]])
    # measured gap about 0.16
    assert a_young < a_old - 0.01


def test_quote_without_exploration_is_the_policy(models):
    c = CustomerGenerator()(np.random.default_rng(5)).features
    a, price = quote_price(models, c, 250.0)
    expected = float(models.action.predict(models.market.predict(c))[0])
    assert a == expected
    assert price == 250.0 * expected
    assert 1.0 <= a <= 2.0 and price > 0


def test_exploration_rate_and_factors(models):
    c = CustomerGenerator()(np.random.default_rng(6)).features
    base, _ = quote_price(models, c, 100.0)
    rng = np.random.default_rng(7)
    n = 10_000
    actions = np.array([quote_price(models, c, 100.0, rng, explore=True)[0] for _ in range(n)])
    explored = actions != base
    frac = explored.mean()
    assert 0.11 <= frac <= 0.13
    ratios = np.round(actions[explored] / base, 6)
    m = explored.sum()
    se = math.sqrt((1 / 6) * (5 / 6) / m)
    for f in EXPLORATION_FACTORS:
        assert abs((ratios == f).mean() - 1 / 6) < 3 * se


def test_exploration_clamps_actions():
    ex = Explorer(rate=1.0, factors=(1.2,))
    rng = np.random.default_rng(8)
    assert ex.factor(rng) == 1.2
    assert np.clip(2.0 * 1.2, *ACTION_CLAMP) == ACTION_CLAMP[1]


def test_explorer_consumes_fixed_draws():
    a, b = np.random.default_rng(9), np.random.default_rng(9)
    Explorer(rate=0.0).factor(a)
    Explorer(rate=1.0).factor(b)
    assert a.random() == b.random()


def test_random_policy_support_mean_and_seed():
    rng = np.random.default_rng(10)
    draws = np.array([random_policy_quote(100.0, rng)[0] for _ in range(10_000)])
    assert draws.min() >= 1.0 and draws.max() <= 1.2
    se = draws.std(ddof=1) / 100.0
    assert abs(draws.mean() - 1.1) < 3 * se
    again = np.array([random_policy_quote(100.0, np.random.default_rng(10))[0]])
    assert again[0] == draws[0]
    a, price = random_policy_quote(80.0, np.random.default_rng(11))
    assert price == 80.0 * a


def test_empty_history_is_an_error():
    with pytest.raises(InsufficientDataError):
        train_pipeline([], 4, np.random.default_rng(0))


def test_tiny_history_names_the_model():
    with pytest.raises(InsufficientDataError, match="market model"):
        train_pipeline(synthetic_history(1, 20), 4, np.random.default_rng(0))
