"""Experiment protocol, persistence, reports and the command line."""

from .config import METHODS, PROFILES, ConfigError, ExperimentConfig, from_dict, load_config, profile, save_config
from .experiment import ExperimentOutcome, TrialFailure, run_experiment, run_trial_all_methods, write_outputs
from .report import REFERENCE, REFERENCE_FLAG, ReportError, figure_series, report
from .trial import BurnIn, EpochSeries, TrialResult, run_burnin, run_test, run_trial, trial_seed
