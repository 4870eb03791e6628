"""One trial: shared burn-in, target generation, then frozen-model test epochs.

Randomness is keyed by ``(trial seed, stream, epoch)`` so every stream that
drives the market (customers, competitor offers, choices, competitor
adaptation) is the same for every method of a paired trial.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..baseline import BaselineParams, default_grid, grid_search_params, historic_frequency, modulate, modulation_factor
from ..market_env import (
    CompetitorState,
    CustomerGenerator,
    InteractionRecord,
    MarketConfig,
    adapt_competitors,
    initial_competitors,
    run_epoch,
)
from ..model_zoo.models import ACTION_GRID, GP_LENGTH_SCALES
from ..model_zoo.serialize import dumps
from ..pipeline import Explorer, PipelineModels, base_action, quote_price, random_policy_quote, train_pipeline, training_window
from ..portfolio import IndicatorSet, batch_loss, generate_indicator_sets, generate_target, membership
from ..rl_pursuit import (
    K_CLIP,
    CustomerReplayBuffer,
    HorizonValue,
    LapseModel,
    SamplerConfig,
    TerminalValue,
    ValueTraining,
    k_value_leaving,
    quote_price_rl,
    train_value_function,
)
from .config import METHODS, ExperimentConfig

# stream identifiers; method-specific streams never feed the market
STREAM_SETS = 0
STREAM_COMPETITORS = 1
STREAM_EPOCH = 2
STREAM_ADAPT = 3
STREAM_TRAIN = 4
STREAM_EXPLORE = 5
STREAM_RANDOM_POLICY = 6
STREAM_TARGET = 7
STREAM_BASELINE = 8
STREAM_RL = 9
STREAM_RL_QUOTE = 10

K_TABLE = 101  # k grid points for the tabulated policy used in value training

MODEL_HYPERPARAMETERS = {
    "market_forest": {"n_estimators": 30, "max_depth": 8, "min_samples_leaf": 5, "max_features": "d//3"},
    "conversion_mlp": {"hidden": [16, 16], "activation": "softplus", "epochs": 150, "batch_size": 64,
                       "lr": 0.01, "weight_decay": 1e-4},
    "action_gp": {"kernel": "matern52", "length_scale_candidates": list(GP_LENGTH_SCALES), "selection": "loo",
                  "noise": 1e-4},
    "conversion_action_grid": {"low": float(ACTION_GRID[0]), "high": float(ACTION_GRID[-1]), "points": len(ACTION_GRID)},
    "action_k_prior": {"distribution": "laplace", "loc": 1.0, "scale": 0.1},
    "value_mlp": {"hidden": [32, 32], "batch_size": 256, "lr": 3e-3},
    "k_clip": list(K_CLIP),
    "ridge": 1e-6,
    "sampler_ratio": [1, 1, 2],
    "target_sampler_rate_correction": False,
    "previous_sampler_rate_correction": True,
    "random_policy_range": [1.0, 1.2],
    "policy_k_table": K_TABLE,
}


def trial_seed(master_seed: int, trial: int) -> int:
    """Per-trial seed derived from the master seed by a spawn key."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(trial,))
    return int(ss.generate_state(1, np.uint64)[0])


def stream(seed: int, key: int, epoch: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(key, epoch))


def rng_for(seed: int, key: int, epoch: int = 0) -> np.random.Generator:
    return np.random.default_rng(stream(seed, key, epoch))


# --------------------------------------------------------------------------
# burn-in


@dataclass
class BurnIn:
    """Everything both methods share up to the first test epoch."""

    seed: int
    records: list[InteractionRecord]
    sets: list[IndicatorSet]
    epoch_frequencies: np.ndarray
    f_bar: np.ndarray
    target: np.ndarray
    halved: np.ndarray
    models: PipelineModels
    competitors: list[CompetitorState]
    next_customer_id: int
    baseline_params: BaselineParams
    baseline_scores: list[float]

    def window(self, config: ExperimentConfig) -> list[InteractionRecord]:
        return training_window(self.records, config.training_window_epochs)


def run_burnin(config: ExperimentConfig, seed: int, market: MarketConfig | None = None) -> BurnIn:
    market = market or MarketConfig()
    sets = generate_indicator_sets(rng_for(seed, STREAM_SETS), config.I, config=market)
    competitors = initial_competitors(config.competitors, rng_for(seed, STREAM_COMPETITORS), market)
    customers = CustomerGenerator(market)
    explorer = Explorer(rate=config.exploration_rate)

    def member(c):
        return membership(sets, c)

    records: list[InteractionRecord] = []
    freqs = []
    models = None
    for epoch in range(1, config.burnin_epochs + 1):
        if epoch == 1:
            prng = rng_for(seed, STREAM_RANDOM_POLICY)

            def policy(c, cost, t, f, prng=prng):
                return random_policy_quote(cost, prng)[0]
        else:
            models = train_pipeline(records, config.training_window_epochs, rng_for(seed, STREAM_TRAIN, epoch),
                                    n_action_samples=config.n_action_samples)
            erng = rng_for(seed, STREAM_EXPLORE, epoch)

            def policy(c, cost, t, f, models=models, erng=erng):
                return quote_price(models, c, cost, erng, explore=True, explorer=explorer)[0]

        res = run_epoch(policy, competitors, config.T, stream(seed, STREAM_EPOCH, epoch), epoch=epoch,
                        customers=customers, membership_fn=member, n_sets=config.I, config=market)
        records.extend(res.records)
        freqs.append(res.frequency)
        competitors = adapt_competitors(competitors, res.choice_counts, rng_for(seed, STREAM_ADAPT, epoch),
                                        config=market)

    # frozen models for testing, trained on the trailing window of the full burn-in
    final_epoch = config.burnin_epochs + 1
    models = train_pipeline(records, config.training_window_epochs, rng_for(seed, STREAM_TRAIN, final_epoch),
                            k_aware=True, n_action_samples=config.n_action_samples)
    F = np.array(freqs)
    f_bar = historic_frequency(F)
    halved, target = generate_target(f_bar, rng_for(seed, STREAM_TARGET))

    window = training_window(records, config.training_window_epochs)
    pool_customers = [r.customer for r in window]
    base = models.action.predict(models.market.predict(pool_customers))
    params, scores = grid_search_params(
        default_grid(), config.baseline_eval_budget, rng_for(seed, STREAM_BASELINE),
        base_actions=base,
        costs=np.array([r.cost for r in window]),
        markets=np.array([r.market.as_array() for r in window]),
        members=np.array([membership(sets, c) for c in pool_customers]),
        conversion=models.conversion, f_bar=f_bar, target=target, lam=config.lam, T=config.T,
    )
    return BurnIn(seed, records, sets, F, f_bar, target, halved, models, competitors, customers.next_id,
                  params, scores)


# --------------------------------------------------------------------------
# results


@dataclass
class EpochSeries:
    """Per-step series of one test epoch.

    ``profit`` is cumulative realised profit, ``loss`` is ``lam * L`` of the
    running portfolio, ``reward = profit - loss``.
    """

    epoch: int
    action: np.ndarray
    accepted: np.ndarray
    k: np.ndarray
    profit: np.ndarray
    loss: np.ndarray
    reward: np.ndarray
    frequency: np.ndarray

    @property
    def final_profit(self) -> float:
        return float(self.profit[-1])

    @property
    def final_loss(self) -> float:
        return float(self.loss[-1])

    @property
    def final_reward(self) -> float:
        return float(self.reward[-1])


@dataclass
class TrialResult:
    trial: int
    seed: int
    method: str
    manifest: dict
    epochs: list[EpochSeries]
    burnin: BurnIn | None = field(default=None, repr=False, compare=False)
    value_training: ValueTraining | None = field(default=None, repr=False, compare=False)

    def finals(self, name: str) -> np.ndarray:
        return np.array([getattr(e, f"final_{name}") for e in self.epochs])

    @property
    def final_profit(self) -> float:
        return float(self.finals("profit").mean())

    @property
    def final_loss(self) -> float:
        return float(self.finals("loss").mean())

    @property
    def final_reward(self) -> float:
        return float(self.finals("reward").mean())


def build_manifest(config: ExperimentConfig, burnin: BurnIn, method: str, trial: int) -> dict:
    return {
        "trial": trial,
        "seed": burnin.seed,
        "method": method,
        "config": config.to_dict(),
        "indicator_sets": [s.to_dict() for s in burnin.sets],
        "historic_frequency": [float(x) for x in burnin.f_bar],
        "target": [int(x) for x in burnin.target],
        "halved_sets": [int(i) for i in burnin.halved],
        "baseline_params": {"n": burnin.baseline_params.n, "beta": burnin.baseline_params.beta},
        "baseline_scores": [float(s) for s in burnin.baseline_scores],
        "model_hyperparameters": MODEL_HYPERPARAMETERS,
        "action_length_scales": {
            "plain": float(burnin.models.action.gp.length_scale),
            "k_aware": float(burnin.models.action_k.gp.length_scale),
        },
    }


# --------------------------------------------------------------------------
# test phase


def _rl_value(config: ExperimentConfig, burnin: BurnIn, seed: int) -> tuple[HorizonValue, ValueTraining]:
    models = burnin.models
    window = burnin.window(config)
    buffer = CustomerReplayBuffer.from_records(window, burnin.sets)
    cfg = SamplerConfig.from_frequencies(burnin.f_bar, burnin.target, config.T, config.sigma)
    lapse = LapseModel(config.lapse_q) if config.lapse_q > 0 else None
    training = train_value_function(
        lambda M, k: models.action_k.predict(M, k), models.conversion, buffer, burnin.target, config.lam,
        config.T, cfg, rng_for(seed, STREAM_RL), N=config.N, J=config.J, J_plus=config.J_plus,
        lapse=lapse, n_mc=config.n_mc, value_kw={"epochs": config.value_epochs}, tabulate_k=K_TABLE,
    )
    V = HorizonValue(training.value_fn, TerminalValue(burnin.target, config.lam), config.T)
    return V, training


def make_test_policy(method: str, config: ExperimentConfig, burnin: BurnIn, seed: int, epoch: int,
                     V: HorizonValue | None, k_log: list) -> Callable:
    models = burnin.models
    sets = burnin.sets
    if method == "pipeline":
        def policy(c, cost, t, f):
            k_log.append(1.0)
            return base_action(models, c)
    elif method == "baseline":
        p = burnin.baseline_params

        def policy(c, cost, t, f):
            k_log.append(1.0)
            factor = modulation_factor(membership(sets, c), burnin.f_bar, burnin.target, p)
            return modulate(base_action(models, c), factor)
    elif method == "rl":
        if config.lapse_q > 0:
            lapse = LapseModel(config.lapse_q)
            qrng = rng_for(seed, STREAM_RL_QUOTE, epoch)

            def policy(c, cost, t, f):
                k = k_value_leaving(V, f, membership(sets, c), cost, t, lapse, config.n_mc, qrng)
                k = float(np.clip(k, *K_CLIP))
                k_log.append(k)
                m = models.market.predict(c)
                return float(np.clip(models.action_k.predict(m, k)[0], 1.0, 2.0))
        else:
            def policy(c, cost, t, f):
                a, _, k = quote_price_rl(models, V, f, t, c, cost, sets)
                k_log.append(k)
                return a
    else:
        raise ValueError(f"unknown method {method!r}")
    return policy


def run_test(config: ExperimentConfig, burnin: BurnIn, method: str, trial: int = 0,
             market: MarketConfig | None = None) -> TrialResult:
    """Test epochs for one method starting from a shared burn-in."""
    market = market or MarketConfig()
    seed = burnin.seed
    V, training = (None, None)
    if method == "rl":
        V, training = _rl_value(config, burnin, seed)
    competitors = list(burnin.competitors)
    customers = CustomerGenerator(market, start_id=burnin.next_customer_id)
    sets = burnin.sets
    target = burnin.target
    series = []
    for j in range(config.test_epochs):
        epoch = config.burnin_epochs + 1 + j
        k_log: list[float] = []
        F = np.zeros((config.T, config.I), dtype=np.int64)

        def on_step(rec, f, F=F):
            F[rec.t - 1] = f

        policy = make_test_policy(method, config, burnin, seed, epoch, V, k_log)
        res = run_epoch(policy, competitors, config.T, stream(seed, STREAM_EPOCH, epoch), epoch=epoch,
                        customers=customers, membership_fn=lambda c: membership(sets, c), n_sets=config.I,
                        config=market, on_step=on_step)
        action = np.array([r.action for r in res.records])
        accepted = np.array([r.accepted for r in res.records])
        cost = np.array([r.cost for r in res.records])
        profit = np.cumsum(np.where(accepted, cost * (action - 1.0), 0.0))
        loss = config.lam * batch_loss(F, target)
        series.append(EpochSeries(epoch, action, accepted, np.array(k_log), profit, loss, profit - loss, F))
        competitors = adapt_competitors(competitors, res.choice_counts, rng_for(seed, STREAM_ADAPT, epoch),
                                        config=market)
    return TrialResult(trial, seed, method, build_manifest(config, burnin, method, trial), series, burnin, training)


def run_trial(config: ExperimentConfig, seed: int, method: str, trial: int = 0,
              market: MarketConfig | None = None) -> TrialResult:
    """Full protocol for one method: burn-in then test epochs."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    burnin = run_burnin(config, seed, market)
    return run_test(config, burnin, method, trial, market)


def models_blob(burnin: BurnIn) -> bytes:
    """Frozen pipeline models in the model-zoo blob format."""
    m = burnin.models
    return dumps({"market": m.market, "conversion": m.conversion, "action": m.action, "action_k": m.action_k})


__all__ = [
    "BurnIn", "EpochSeries", "TrialResult", "MODEL_HYPERPARAMETERS", "build_manifest", "make_test_policy",
    "models_blob", "rng_for", "run_burnin", "run_test", "run_trial", "stream", "trial_seed",
]
