from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from portfolio_pursuit.harness import ExperimentConfig, run_burnin
from portfolio_pursuit.harness.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, main
from portfolio_pursuit.harness.config import PROFILES, ConfigError, from_dict, load_config, profile, save_config
from portfolio_pursuit.harness.experiment import run_experiment
from portfolio_pursuit.harness.report import REFERENCE, REFERENCE_FLAG, ReportError, report
from portfolio_pursuit.harness.trial import run_test, trial_seed
from portfolio_pursuit.market_env import write_records_csv
from portfolio_pursuit.stats import mann_whitney_u

TINY = dict(T=60, burnin_epochs=2, test_epochs=2, trials=2, lam=50.0, N=20, J=4, J_plus=4, n_action_samples=60,
            baseline_eval_budget=1, value_epochs=2, n_mc=4)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- configuration ----------------------------------------------------------------


def test_defaults_follow_protocol():
    c = ExperimentConfig()
    assert (c.T, c.burnin_epochs, c.test_epochs, c.trials, c.lam, c.I, c.competitors) == (1000, 6, 8, 24, 2000.0,
                                                                                          5, 5)
    assert (c.exploration_rate, c.training_window_epochs, c.sigma, c.N, c.J, c.J_plus) == (0.12, 4, 0.9, 500, 24,
                                                                                           120)


def test_desk_profile():
    c = profile("desk")
    assert (c.T, c.competitors, c.trials, c.lam, c.N, c.J_plus) == (200, 3, 8, 400.0, 200, 60)
    assert profile("paper") == ExperimentConfig()
    assert set(PROFILES) == {"desk", "paper"}


@pytest.mark.parametrize("bad", [dict(T=0), dict(trials=-1), dict(lam=-1.0), dict(methods=()), dict(methods=("ga",)),
                                 dict(methods=("rl", "rl")), dict(sigma=1.0), dict(exploration_rate=1.5),
                                 dict(lapse_q=1.0), dict(J=2), dict(burnin_epochs=1), dict(T=2.5)])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad)


def test_json_round_trip(tmp_path):
    c = ExperimentConfig(T=77, lam=12.5, methods=("rl",), seed=4)
    save_config(c, tmp_path / "c.json")
    assert load_config(tmp_path / "c.json") == c
    assert json.loads((tmp_path / "c.json").read_text())["lambda"] == 12.5


def test_overlay_and_lambda_alias():
    c = from_dict({"lambda": 10}, profile("desk"))
    assert c.lam == 10.0 and c.T == 200
    with pytest.raises(ConfigError, match="unknown config keys"):
        from_dict({"horizon": 5})
    with pytest.raises(ConfigError):
        from_dict({"lambda": 1, "lam": 2})


@pytest.mark.parametrize("text", ["{not json", "[1, 2]"])
def test_bad_config_files(tmp_path, text):
    (tmp_path / "c.json").write_text(text)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.json")


# -- CLI ----------------------------------------------------------------------------


def test_cli_config_error_exit_code(tmp_path, capsys):
    (tmp_path / "c.json").write_text('{"T": 0}')
    assert main(["run", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_cli_stats(tmp_path, capsys):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,3\n2,4\n")
    assert main(["stats", str(path), "a", "b", "--alternative", "less"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "U=0.0" in out and "p=0.166667" in out and "cles 0.0000" in out
    assert main(["stats", str(path), "a", "zz"]) == EXIT_CONFIG


def test_cli_report_missing_dir(tmp_path):
    assert main(["report", "--out", str(tmp_path / "nothing")]) == EXIT_CONFIG


def test_cli_partial_failure_exit_code(tmp_path, monkeypatch):
    import portfolio_pursuit.harness.experiment as ex

    real = ex.run_test

    def flaky(config, burnin, method, trial=0, market=None):
        if method == "baseline":
            raise RuntimeError("injected")
        return real(config, burnin, method, trial, market)

    monkeypatch.setattr(ex, "run_test", flaky)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**TINY, "trials": 1, "methods": ["pipeline", "baseline"]}))
    assert main(["run", "--config", str(cfg), "--sequential", "--out", str(tmp_path / "o")]) == EXIT_PARTIAL
    rows = read_rows(tmp_path / "o" / "trials.csv")
    assert [(r["method"], r["status"]) for r in rows] == [("pipeline", "ok"), ("baseline", "failed")]
    assert "injected" in rows[1]["error"]


def test_cli_trial_outputs(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**TINY, "methods": ["pipeline", "rl"]}))
    out = tmp_path / "t"
    assert main(["trial", "--config", str(cfg), "--trial", "1", "--out", str(out)]) == EXIT_OK
    for name in ("burnin.csv", "models.pzoo", "manifest.json", "value_estimates.csv", "steps.csv", "trials.csv"):
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == trial_seed(ExperimentConfig().seed, 1)
    assert "rl" in capsys.readouterr().out


# -- trials ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_config():
    return ExperimentConfig(**TINY)


def test_burnin_is_deterministic_and_shared(tiny_config, tmp_path):
    seed = trial_seed(tiny_config.seed, 0)
    a, b = run_burnin(tiny_config, seed), run_burnin(tiny_config.replace(methods=("rl",)), seed)
    write_records_csv(a.records, tmp_path / "a.csv")
    write_records_csv(b.records, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert np.array_equal(a.target, b.target)


def test_paired_manifests_differ_only_by_method(small_config, small_burnin):
    base = run_test(small_config, small_burnin, "baseline")
    rl = run_test(small_config, small_burnin, "rl")
    strip = lambda m: {k: v for k, v in m.items() if k != "method"}  # noqa: E731
    assert strip(base.manifest) == strip(rl.manifest)
    assert base.manifest["method"] == "baseline" and rl.manifest["method"] == "rl"


def test_test_phase_is_deterministic(small_config, small_burnin):
    a = run_test(small_config, small_burnin, "rl")
    b = run_test(small_config, small_burnin, "rl")
    for x, y in zip(a.epochs, b.epochs):
        assert x.action.tobytes() == y.action.tobytes() and x.k.tobytes() == y.k.tobytes()


@pytest.mark.parametrize("method", ["pipeline", "baseline", "rl"])
def test_series_identities(small_config, small_burnin, method):
    res = run_test(small_config, small_burnin, method)
    for e in res.epochs:
        assert np.array_equal(e.reward, e.profit - e.loss)
        assert ((e.loss >= 0) & (e.loss <= small_config.lam)).all()
        assert len(e.profit) == small_config.T == len(e.k)
        if (e.action >= 1).all():
            assert (np.diff(e.profit) >= 0).all()
        assert np.array_equal(e.frequency[-1], e.frequency.max(axis=0))


def test_single_pipeline_trial(tmp_path, tiny_config):
    outcome = run_experiment(tiny_config.replace(trials=1, methods=("pipeline",)), tmp_path)
    assert outcome.ok
    assert len(read_rows(tmp_path / "trials.csv")) == 1
    rows = read_rows(tmp_path / "aggregate.csv")
    assert [r["row"] for r in rows] == ["pipeline"]


# -- outputs and report -------------------------------------------------------------


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, tiny_config):
    out = tmp_path_factory.mktemp("run")
    run_experiment(tiny_config, out, sequential=True)
    return out


def test_aggregate_reward_identity(run_dir):
    for r in read_rows(run_dir / "aggregate.csv"):
        assert float(r["final_reward"]) == float(r["final_profit"]) - float(r["final_loss"])


def test_comparisons_cover_units_and_sides(run_dir):
    rows = read_rows(run_dir / "comparisons.csv")
    seen = {(r["method_a"], r["method_b"], r["metric"], r["unit"], r["alternative"]) for r in rows}
    assert ("rl", "baseline", "loss", "trial", "two-sided") in seen
    assert ("rl", "baseline", "profit", "trial_epoch", "greater") in seen
    assert ("rl", "baseline", "reward", "trial", "greater") in seen


def test_report_series(run_dir, tiny_config):
    text = report(run_dir)
    assert "rl vs baseline" in text and REFERENCE_FLAG not in text
    fig = read_rows(run_dir / "fig1_data.csv")
    assert {r["grouping"] for r in fig} == {"trial", "trial_epoch"}
    finals = {}
    for r in read_rows(run_dir / "trials.csv"):
        finals.setdefault(r["method"], []).append(float(r["final_reward"]))
    for method, vals in finals.items():
        last = [r for r in fig if r["method"] == method and r["grouping"] == "trial" and int(r["t"]) == tiny_config.T]
        assert float(last[0]["reward_mean"]) == pytest.approx(np.mean(vals), rel=1e-12, abs=1e-9)


def test_single_trial_has_zero_sd(tmp_path, tiny_config):
    run_experiment(tiny_config.replace(trials=1, test_epochs=1, methods=("pipeline",)), tmp_path)
    report(tmp_path)
    for r in read_rows(tmp_path / "fig1_data.csv"):
        assert float(r["profit_sd"]) == 0.0 and float(r["loss_sd"]) == 0.0 and float(r["reward_sd"]) == 0.0


def test_report_names_missing_columns(run_dir, tmp_path):
    (tmp_path / "epochs.csv").write_text((run_dir / "epochs.csv").read_text())
    (tmp_path / "steps.csv").write_text("trial,method,epoch\n0,rl,7\n")
    with pytest.raises(ReportError, match="t, action, k"):
        report(tmp_path)


def test_reference_lines_at_full_scale(run_dir, tmp_path):
    for name in ("steps.csv", "epochs.csv"):
        (tmp_path / name).write_text((run_dir / name).read_text())
    save_config(ExperimentConfig(), tmp_path / "config.json")
    text = report(tmp_path)
    for ref in REFERENCE.values():
        for v in ref.values():
            assert f"{v:.1f}" in text
    assert text.count(REFERENCE_FLAG) >= 6


@pytest.mark.slow
def test_no_portfolio_pressure_rl_tracks_pipeline():
    config = ExperimentConfig(T=100, burnin_epochs=3, test_epochs=2, trials=8, lam=0.0, competitors=3, N=60, J=8,
                              J_plus=8, n_action_samples=200, baseline_eval_budget=1, value_epochs=5, n_mc=8,
                              methods=("pipeline", "rl"))
    outcome = run_experiment(config, sequential=True)
    assert outcome.ok
    profit = {m: [r.final_profit for r in outcome.results if r.method == m] for m in config.methods}
    _, p = mann_whitney_u(profit["rl"], profit["pipeline"])
    assert p > 0.01
