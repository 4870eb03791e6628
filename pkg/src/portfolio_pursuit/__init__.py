"""Portfolio pursuit for competitive insurance pricing.

Subpackages and modules
-----------------------
market_env
    Simulated price comparison market with competing insurers.
model_zoo
    From-scratch forest, network and Gaussian process regressors plus the
    market, conversion and action models built on them.
pipeline
    Standard per-customer pricing pipeline with exploration.
portfolio
    Indicator sets, frequency vectors, the portfolio loss and targets.
baseline
    Industry-style multiplicative price modulation.
rl_pursuit
    Backward fitted value iteration and k-value pricing.
stats
    Mann-Whitney U, Cohen's d and CLES.
harness
    Experiment protocol, persistence, reports and the command line.
"""

__version__ = "0.1.0"
