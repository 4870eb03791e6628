from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from portfolio_pursuit.harness import ExperimentConfig, run_burnin
from portfolio_pursuit.harness.trial import trial_seed

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# small protocol used by module tests that need fitted models
SMALL = ExperimentConfig(T=60, burnin_epochs=3, test_epochs=2, trials=2, lam=100.0, competitors=5, N=40, J=8,
                         J_plus=8, n_action_samples=120, baseline_eval_budget=2, value_epochs=5, n_mc=8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_config() -> ExperimentConfig:
    return SMALL


@pytest.fixture(scope="session")
def small_burnin():
    return run_burnin(SMALL, trial_seed(SMALL.seed, 0))


def pytest_terminal_summary(terminalreporter):
    from criteria_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
