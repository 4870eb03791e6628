"""Agent-based motor-insurance market behind a price comparison website.

Customers arrive one at a time. Every competitor quotes a price, our insurer
quotes a price, and the customer picks one offer (or walks away) through a
multinomial logit over price-to-cost ratios. Competitors only change their
markups at epoch boundaries.

All randomness is drawn from three independent streams per epoch (customers,
competitor offers, choices) and every draw consumes a fixed number of
variates, so two insurers facing the same seed see the same customers and the
same competitor quotes even when their own prices differ.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "REGIONS",
    "OCCUPATIONS",
    "NUMERIC_FEATURES",
    "CATEGORICAL_FEATURES",
    "MarketConfig",
    "CustomerFeatures",
    "Customer",
    "Offer",
    "MarketVariables",
    "CompetitorState",
    "ChoiceOutcome",
    "InteractionRecord",
    "EpochResult",
    "CustomerGenerator",
    "sample_customer",
    "true_cost",
    "competitor_offers",
    "adapt_competitors",
    "market_variables",
    "choice_probabilities",
    "customer_choice",
    "initial_competitors",
    "run_epoch",
    "epoch_streams",
    "write_records_csv",
    "RECORD_COLUMNS",
    "OUR_ID",
]

OUR_ID = 0

REGIONS = ("north", "north_west", "yorkshire", "midlands", "east", "london", "south_east", "south_west")
OCCUPATIONS = ("student", "manual", "clerical", "professional", "self_employed", "retired")

NUMERIC_FEATURES = ("age", "vehicle_value", "years_licensed", "income", "risk_score")
CATEGORICAL_FEATURES = ("region", "occupation")

_REGION_P = np.array([0.10, 0.12, 0.10, 0.16, 0.10, 0.16, 0.14, 0.12])
_REGION_INCOME = np.array([24000.0, 26000.0, 24500.0, 27000.0, 28500.0, 38000.0, 33000.0, 28000.0])
# rows: region, cols: occupation
_OCC_P = np.array(
    [
        [0.08, 0.30, 0.22, 0.14, 0.10, 0.16],
        [0.10, 0.28, 0.24, 0.16, 0.10, 0.12],
        [0.08, 0.30, 0.22, 0.14, 0.10, 0.16],
        [0.08, 0.28, 0.24, 0.16, 0.11, 0.13],
        [0.07, 0.22, 0.24, 0.20, 0.12, 0.15],
        [0.12, 0.14, 0.24, 0.32, 0.12, 0.06],
        [0.08, 0.18, 0.24, 0.26, 0.12, 0.12],
        [0.06, 0.22, 0.22, 0.18, 0.12, 0.20],
    ]
)
_OCC_INCOME = np.array([0.45, 0.85, 0.95, 1.45, 1.15, 0.70])

AGE_MEAN, AGE_SD, AGE_LO, AGE_HI = 42.0, 15.0, 18.0, 90.0
VEHICLE_LOG_MEAN, VEHICLE_LOG_SD = math.log(14000.0), 0.45
INCOME_NOISE_SD = 0.25
SENSITIVITY_NOISE_SD = 0.2


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def risk_logit(age, years_licensed, vehicle_value):
    """Linear score behind ``risk_score``; vectorised over numpy inputs."""
    return (
        -0.4
        - 0.03 * (np.asarray(age) - 40.0)
        - 0.05 * (np.asarray(years_licensed) - 12.0)
        + 0.8 * np.log(np.asarray(vehicle_value) / 14000.0)
    )


@dataclass(frozen=True)
class MarketConfig:
    """Environment constants. Money is in pounds."""

    cost_scale: float = 180.0  # c0
    vehicle_ref: float = 14000.0  # v0
    cost_min: float = 40.0
    cost_max: float = 1200.0
    walk_away: float = 1.3  # w: walk-away reference, as a multiple of cost
    sensitivity_scale: float = 9.0
    sensitivity_income_elasticity: float = 0.35
    markup_low: float = 1.02
    markup_high: float = 1.4
    initial_markup_low: float = 1.10
    initial_markup_high: float = 1.30
    noise_scale: float = 0.06
    adaptation_rate: float = 0.3
    adaptation_noise: float = 0.01
    price_floor: float = 0.8  # competitor prices never fall below floor * cost


@dataclass(frozen=True)
class CustomerFeatures:
    """Features an insurer can see through the comparison site."""

    customer_id: int
    age: float
    region: str
    occupation: str
    vehicle_value: float
    years_licensed: float
    income: float
    risk_score: float

    def get(self, name: str):
        return getattr(self, name)


@dataclass(frozen=True)
class Customer:
    """A generated customer: public features plus the hidden price sensitivity."""

    features: CustomerFeatures
    price_sensitivity: float = field(repr=False)


@dataclass(frozen=True)
class Offer:
    insurer_id: int
    price: float


@dataclass(frozen=True)
class MarketVariables:
    m1: float
    m3: float
    m5: float

    def as_array(self) -> np.ndarray:
        return np.array([self.m1, self.m3, self.m5])


@dataclass(frozen=True)
class CompetitorState:
    insurer_id: int
    base_markup: float
    noise_scale: float
    adaptation_rate: float


@dataclass(frozen=True)
class ChoiceOutcome:
    chosen_insurer: int | None

    @property
    def accepted_ours(self) -> bool:
        return self.chosen_insurer == OUR_ID


@dataclass(frozen=True)
class InteractionRecord:
    """One logged interaction: (s_t, C(s_t), a_t, o_t, y_t) plus bookkeeping."""

    epoch: int
    t: int
    customer: CustomerFeatures
    cost: float
    action: float
    price: float
    competitor_offers: tuple[Offer, ...]
    market: MarketVariables
    accepted: bool


@dataclass
class EpochResult:
    records: list[InteractionRecord]
    frequency: np.ndarray
    profit: float
    choice_counts: dict[int, int]


class CustomerGenerator:
    """Stateful customer source; hands out unique, increasing ids."""

    def __init__(self, config: MarketConfig | None = None, start_id: int = 0):
        self.config = config or MarketConfig()
        self.next_id = start_id

    def __call__(self, rng: np.random.Generator) -> Customer:
        c = sample_customer(rng, self.next_id, self.config)
        self.next_id += 1
        return c


def sample_customer(rng: np.random.Generator, customer_id: int = 0, config: MarketConfig | None = None) -> Customer:
    """Draw one customer from the hierarchical generative model.

    Consumes exactly four uniforms and three normals from ``rng``.
    """
    config = config or MarketConfig()
    u = rng.random(4)
    z = rng.standard_normal(3)

    region_idx = int(np.searchsorted(np.cumsum(_REGION_P), u[0] * _REGION_P.sum(), side="right"))
    region_idx = min(region_idx, len(REGIONS) - 1)
    occ_p = _OCC_P[region_idx]
    occ_idx = int(np.searchsorted(np.cumsum(occ_p), u[1] * occ_p.sum(), side="right"))
    occ_idx = min(occ_idx, len(OCCUPATIONS) - 1)

    a_lo = (AGE_LO - AGE_MEAN) / AGE_SD
    a_hi = (AGE_HI - AGE_MEAN) / AGE_SD
    lo, hi = ndtr(a_lo), ndtr(a_hi)
    age = float(AGE_MEAN + AGE_SD * ndtri(lo + u[2] * (hi - lo)))
    age = min(max(age, AGE_LO), AGE_HI)
    years_licensed = float(u[3] * (age - 17.0))
    vehicle_value = float(math.exp(VEHICLE_LOG_MEAN + VEHICLE_LOG_SD * z[0]))
    income = float(
        _REGION_INCOME[region_idx]
        * _OCC_INCOME[occ_idx]
        * (1.0 + 0.01 * (age - 18.0))
        * math.exp(INCOME_NOISE_SD * z[1])
    )
    risk = float(_sigmoid(risk_logit(age, years_licensed, vehicle_value)))
    sensitivity = float(
        config.sensitivity_scale
        * (income / 30000.0) ** (-config.sensitivity_income_elasticity)
        * math.exp(SENSITIVITY_NOISE_SD * z[2])
    )
    features = CustomerFeatures(
        customer_id=customer_id,
        age=age,
        region=REGIONS[region_idx],
        occupation=OCCUPATIONS[occ_idx],
        vehicle_value=vehicle_value,
        years_licensed=years_licensed,
        income=income,
        risk_score=risk,
    )
    return Customer(features=features, price_sensitivity=sensitivity)


def cost_formula(risk_score, vehicle_value, config: MarketConfig | None = None):
    """Vectorised expected-cost formula, clamped to the configured band."""
    config = config or MarketConfig()
    raw = config.cost_scale * (0.5 + np.asarray(risk_score)) * (np.asarray(vehicle_value) / config.vehicle_ref) ** 0.3
    return np.clip(raw, config.cost_min, config.cost_max)


def true_cost(c: CustomerFeatures | Customer, config: MarketConfig | None = None) -> float:
    if isinstance(c, Customer):
        c = c.features
    return float(cost_formula(c.risk_score, c.vehicle_value, config))


def initial_competitors(n: int, rng: np.random.Generator, config: MarketConfig | None = None) -> list[CompetitorState]:
    config = config or MarketConfig()
    markups = rng.uniform(config.initial_markup_low, config.initial_markup_high, size=n)
    return [
        CompetitorState(
            insurer_id=i + 1,
            base_markup=float(m),
            noise_scale=config.noise_scale,
            adaptation_rate=config.adaptation_rate,
        )
        for i, m in enumerate(markups)
    ]


def competitor_offers(
    c: CustomerFeatures | Customer,
    states: Sequence[CompetitorState],
    rng: np.random.Generator,
    cost: float | None = None,
    config: MarketConfig | None = None,
) -> list[Offer]:
    """One offer per competitor: ``cost * (markup + noise_scale * N(0,1))``, floored."""
    if not states:
        raise ValueError("need at least one competitor")
    config = config or MarketConfig()
    if cost is None:
        cost = true_cost(c, config)
    z = rng.standard_normal(len(states))
    offers = []
    for s, zi in zip(states, z):
        price = cost * (s.base_markup + s.noise_scale * zi)
        offers.append(Offer(s.insurer_id, float(max(price, config.price_floor * cost))))
    return offers


def adapt_competitors(
    states: Sequence[CompetitorState],
    choice_counts: dict[int, int],
    rng: np.random.Generator,
    noise: float | None = None,
    config: MarketConfig | None = None,
) -> list[CompetitorState]:
    """Move every markup toward the epoch's best-selling competitor.

    ``choice_counts`` maps insurer id to number of customers won during the
    epoch; our own id is ignored. Ties go to the lowest id. One normal is
    drawn per competitor whatever the noise level.
    """
    config = config or MarketConfig()
    noise = config.adaptation_noise if noise is None else noise
    ids = [s.insurer_id for s in states]
    winner = max(ids, key=lambda i: (choice_counts.get(i, 0), -i))
    target = next(s.base_markup for s in states if s.insurer_id == winner)
    z = rng.standard_normal(len(states))
    out = []
    for s, zi in zip(states, z):
        m = s.base_markup + s.adaptation_rate * (target - s.base_markup) + noise * zi
        m = min(max(m, config.markup_low), config.markup_high)
        out.append(replace(s, base_markup=float(m)))
    return out


def market_variables(offers: Sequence[Offer], cost: float, min_offers: int = 5) -> MarketVariables:
    """Mean of the 1, 3 and 5 lowest competitor prices, divided by cost.

    Markets thinner than ``min_offers`` are rejected. When a caller lowers
    ``min_offers`` below 5, ``m_k`` averages the ``min(k, n)`` lowest prices.
    """
    if cost <= 0:
        raise ValueError("cost must be positive")
    if len(offers) < max(min_offers, 1):
        raise ValueError(f"market variables need at least {min_offers} offers, got {len(offers)}")
    prices = np.sort(np.array([o.price for o in offers], dtype=float))
    m = [float(prices[: min(k, len(prices))].mean() / cost) for k in (1, 3, 5)]
    return MarketVariables(*m)


def choice_probabilities(prices_over_cost: np.ndarray, sensitivity: float, walk_away: float) -> np.ndarray:
    """Logit choice probabilities; last entry is the walk-away option."""
    u = -sensitivity * np.append(np.asarray(prices_over_cost, dtype=float), walk_away)
    u -= u.max()
    e = np.exp(u)
    return e / e.sum()


def customer_choice(
    our_offer: Offer | None,
    others: Sequence[Offer],
    c: Customer,
    rng: np.random.Generator,
    cost: float | None = None,
    config: MarketConfig | None = None,
) -> ChoiceOutcome:
    """Multinomial-logit purchase decision. Consumes exactly one uniform."""
    config = config or MarketConfig()
    if cost is None:
        cost = true_cost(c, config)
    offers = ([our_offer] if our_offer is not None else []) + list(others)
    if any(o.price <= 0 for o in offers):
        raise ValueError("offer prices must be positive")
    probs = choice_probabilities(np.array([o.price for o in offers]) / cost, c.price_sensitivity, config.walk_away)
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    if idx >= len(offers):
        return ChoiceOutcome(None)
    return ChoiceOutcome(offers[idx].insurer_id)


# policy(features, cost, t, frequency) -> price multiplier
Policy = Callable[[CustomerFeatures, float, int, np.ndarray], float]


def epoch_streams(seed: np.random.SeedSequence | int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent (customer, offer, choice) generators for one epoch."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return tuple(np.random.default_rng(s) for s in ss.spawn(3))


def run_epoch(
    policy: Policy,
    competitors: Sequence[CompetitorState],
    T: int,
    seed: np.random.SeedSequence | int,
    *,
    epoch: int = 0,
    customers: CustomerGenerator | None = None,
    membership_fn: Callable[[CustomerFeatures], np.ndarray] | None = None,
    n_sets: int = 0,
    config: MarketConfig | None = None,
    on_step: Callable[[InteractionRecord, np.ndarray], None] | None = None,
) -> EpochResult:
    """Run ``T`` sequential customer arrivals against fixed competitors.

    ``membership_fn`` maps accepted customers to indicator-set membership;
    the running frequency vector starts empty and is passed to the policy.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    config = config or MarketConfig()
    customers = customers or CustomerGenerator(config)
    min_offers = min(5, len(competitors))
    cust_rng, offer_rng, choice_rng = epoch_streams(seed)

    f = np.zeros(n_sets, dtype=np.int64)
    profit = 0.0
    counts: dict[int, int] = {}
    records: list[InteractionRecord] = []
    for t in range(1, T + 1):
        cust = customers(cust_rng)
        cost = true_cost(cust.features, config)
        offers = competitor_offers(cust, competitors, offer_rng, cost=cost, config=config)
        m = market_variables(offers, cost, min_offers=min_offers)
        action = float(policy(cust.features, cost, t, f.copy()))
        price = cost * action
        outcome = customer_choice(Offer(OUR_ID, price), offers, cust, choice_rng, cost=cost, config=config)
        if outcome.chosen_insurer is not None:
            counts[outcome.chosen_insurer] = counts.get(outcome.chosen_insurer, 0) + 1
        accepted = outcome.accepted_ours
        if accepted:
            profit += cost * (action - 1.0)
            if membership_fn is not None:
                f = f + np.asarray(membership_fn(cust.features), dtype=np.int64)
        rec = InteractionRecord(
            epoch=epoch,
            t=t,
            customer=cust.features,
            cost=cost,
            action=action,
            price=price,
            competitor_offers=tuple(offers),
            market=m,
            accepted=accepted,
        )
        records.append(rec)
        if on_step is not None:
            on_step(rec, f)
    return EpochResult(records=records, frequency=f, profit=profit, choice_counts=counts)


RECORD_COLUMNS = (
    "epoch", "t", "customer_id", "age", "region", "occupation", "vehicle_value", "years_licensed",
    "income", "risk_score", "cost", "our_action", "our_price", "m1", "m3", "m5", "accepted",
)


def _record_row(r: InteractionRecord) -> list:
    c = r.customer
    return [
        r.epoch, r.t, c.customer_id, repr(c.age), c.region, c.occupation, repr(c.vehicle_value),
        repr(c.years_licensed), repr(c.income), repr(c.risk_score), repr(r.cost), repr(r.action),
        repr(r.price), repr(r.market.m1), repr(r.market.m3), repr(r.market.m5), int(r.accepted),
    ]


def write_records_csv(records: Iterable[InteractionRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow(_record_row(r))
