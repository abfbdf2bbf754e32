"""Config parsing, trace serialization, experiment fan-out, CLI contracts."""
import json
import math

import numpy as np
import pytest

from knapdual.cli import main as cli_main
from knapdual.core import BudgetState
from knapdual.env import Distribution, ScriptedRequests
from knapdual.harness import (ConfigError, aggregate_from_traces,
                              baseline_report, parse_config, read_trace_csv,
                              run_experiment, write_trace_csv)
from knapdual.meta import run_episode
from knapdual.regret import DualOMD, SimplexOMD
from tests.test_meta import CHEAP_ARM, FixedDual, FixedPrimal


def write_config(tmp_path, name="cfg.txt", **overrides):
    base = {
        "application": "bwk",
        "environment": "stochastic",
        "T": 200,
        "B": 100,
        "seeds": "1,2,3",
        "env.instance": "builtin:saturating_arm",
        "output_dir": str(tmp_path / "out"),
        "figures": "false",
    }
    base.update(overrides)
    path = tmp_path / name
    path.write_text("\n".join(f"{k} = {v}" for k, v in base.items()) + "\n")
    return path


class TestParseConfig:
    def test_minimal_config_echoes_rho(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, T=1000, B=500))
        assert cfg.rho == pytest.approx(0.5)
        assert cfg.echo()["rho"] == pytest.approx(0.5)
        assert cfg.echo()["delta"] == 0.05  # default applied and echoed

    def test_budget_above_horizon(self, tmp_path):
        with pytest.raises(ConfigError, match="budget exceeds horizon"):
            parse_config(write_config(tmp_path, T=100, B=101))

    def test_unknown_key_is_named(self, tmp_path):
        path = write_config(tmp_path)
        path.write_text(path.read_text() + "alpha = 3\n")
        with pytest.raises(ConfigError, match="alpha"):
            parse_config(path)

    def test_missing_required_key_is_named(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("application = bwk\n")
        with pytest.raises(ConfigError, match="environment"):
            parse_config(path)

    def test_empty_seeds_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="seeds"):
            parse_config(write_config(tmp_path, seeds=""))

    def test_pacing_forces_dual_first(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, application="fpa_continuous",
                                        T=64, B=32, **{"alg.levels": 2,
                                                       "alg.bid_step": 0.25,
                                                       "env.instance": ""}))
        assert cfg.values["order"] == "dual_first"

    def test_pacing_rejects_bandit_feedback(self, tmp_path):
        with pytest.raises(ConfigError, match="feedback"):
            parse_config(write_config(tmp_path, application="fpa_finite",
                                      feedback="bandit", T=64, B=32,
                                      **{"env.instance": ""}))


class TestTraceCsv:
    def make_trace(self, horizon=2, budget=1):
        env = ScriptedRequests([CHEAP_ARM] * horizon)
        state = BudgetState(budget, horizon, 1)
        return run_episode(env, FixedPrimal([0.5, 0.5]), FixedDual([0.3], 0.5),
                           state, seed=0)

    def test_two_round_trace_line_count(self, tmp_path):
        trace = self.make_trace()
        trace.precommitment = None
        trace.config = {}
        path = tmp_path / "t.csv"
        write_trace_csv(trace, path)
        lines = path.read_text().strip().split("\n")
        comments = [l for l in lines if l.startswith("#")]
        data = [l for l in lines if not l.startswith("#")]
        assert len(data) == 3       # header + two rounds
        assert len(comments) == 2   # tau and total_reward
        assert comments[0].startswith("# tau=")
        assert comments[1].startswith("# total_reward=")

    def test_header_layout(self, tmp_path):
        trace = self.make_trace()
        path = tmp_path / "t.csv"
        write_trace_csv(trace, path)
        header = [l for l in path.read_text().split("\n")
                  if l and not l.startswith("#")][0]
        assert header == ("t,action,reward,cost_1,lambda_1,remaining_1,void_forced")

    def test_void_round_serialization(self, tmp_path):
        env = ScriptedRequests([CHEAP_ARM] * 4)
        state = BudgetState(1, 4, 1)
        trace = run_episode(env, FixedPrimal([0.0, 1.0]), FixedDual([0.0], 0.25),
                            state, seed=0)
        path = tmp_path / "t.csv"
        write_trace_csv(trace, path)
        parsed = read_trace_csv(path)
        forced = parsed.void_forced
        assert forced.any()
        assert np.all(parsed.reward[forced] == 0.0)
        assert np.all(parsed.costs[forced] == 0.0)

    def test_round_trip_reproduces_totals(self, tmp_path):
        trace = self.make_trace(horizon=50, budget=20)
        path = tmp_path / "t.csv"
        write_trace_csv(trace, path)
        parsed = read_trace_csv(path)
        # nine significant digits bound the per-entry round-trip error
        scale = max(1.0, float(np.abs(parsed.reward).max()))
        assert abs(parsed.reward.sum() - parsed.total_reward) <= 50 * 1e-8 * scale
        assert parsed.tau == trace.stop_time
        # re-serializing the parsed numbers is a fixed point of the format
        assert f"{parsed.total_reward:.9g}" == f"{trace.total_reward:.9g}"


class TestRunExperiment:
    def test_seed_fanout_and_aggregate(self, tmp_path):
        cfg = parse_config(write_config(tmp_path))
        manifest = run_experiment(cfg)
        assert len(manifest["traces"]) == 3
        agg = json.loads(manifest["aggregate"].read_text())
        assert agg["n_seeds"] == 3
        assert agg["total_reward"]["mean"] is not None

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = parse_config(write_config(tmp_path))
        first = run_experiment(cfg)
        blobs = [p.read_bytes() for p in first["traces"]]
        second = run_experiment(cfg)
        for p, blob in zip(second["traces"], blobs):
            assert p.read_bytes() == blob

    def test_precommitment_in_every_trace_header(self, tmp_path):
        cfg = parse_config(write_config(tmp_path))
        manifest = run_experiment(cfg)
        for p in manifest["traces"]:
            assert "# precommitment=" in p.read_text()

    def test_aggregate_matches_recomputation_exactly(self, tmp_path):
        cfg = parse_config(write_config(tmp_path))
        manifest = run_experiment(cfg)
        agg = json.loads(manifest["aggregate"].read_text())
        parsed = [read_trace_csv(p) for p in manifest["traces"]]
        mean = float(np.mean([p.total_reward for p in parsed]))
        assert agg["total_reward"]["mean"] == mean
        upper = agg["per_seed"][0]["regret_vs_upper"] + parsed[0].total_reward
        recomputed = aggregate_from_traces(cfg, manifest["traces"],
                                           {p.seed: upper for p in parsed})
        assert recomputed["total_reward"] == agg["total_reward"]
        assert recomputed["per_seed"] == agg["per_seed"]

    def test_figures_written_when_enabled(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, figures="true", seeds="1"))
        manifest = run_experiment(cfg)
        assert len(manifest["figures"]) == 3
        for p in manifest["figures"]:
            assert p.exists() and p.stat().st_size > 0

    def test_stackelberg_and_adversarial_paths(self, tmp_path):
        cfg = parse_config(write_config(
            tmp_path, application="stackelberg", seeds="1",
            **{"env.instance": "builtin:patrol"}))
        manifest = run_experiment(cfg)
        assert len(manifest["traces"]) == 1

        cfg = parse_config(write_config(
            tmp_path, name="cfg2.txt", environment="adversarial", seeds="1",
            **{"env.instance": "builtin:two_phase"}))
        manifest = run_experiment(cfg)
        agg = json.loads(manifest["aggregate"].read_text())
        assert agg["competitive_lhs"]["mean"] is not None

    def test_nonstationary_run(self, tmp_path):
        cfg = parse_config(write_config(
            tmp_path, environment="nonstationary", seeds="1",
            **{"env.corrupt_rounds": "1,2,3",
               "env.corrupt_instance": "builtin:zero_reward"}))
        manifest = run_experiment(cfg)
        assert len(manifest["traces"]) == 1


class TestBaselines:
    def test_bwk_stochastic_baseline(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, T=1000, B=500))
        report = baseline_report(cfg)
        assert report["opt_lp_value"] == pytest.approx(0.5, abs=1e-9)
        assert report["opt_dp_upper"] == pytest.approx(500.0, abs=1e-6)

    def test_finite_fpa_baseline_runs(self, tmp_path):
        cfg = parse_config(write_config(
            tmp_path, application="fpa_finite", T=64, B=32,
            **{"env.instance": "", "alg.bid_step": 0.25}))
        report = baseline_report(cfg)
        assert report["opt_dp_upper"] > 0


class TestCli:
    def test_run_and_exit_codes(self, tmp_path, capsys):
        path = write_config(tmp_path, seeds="1")
        assert cli_main(["run", str(path)]) == 0
        bad = write_config(tmp_path, name="bad.txt", T=10, B=20)
        assert cli_main(["run", str(bad)]) == 2

    def test_capacity_error_exit_code(self, tmp_path):
        path = write_config(tmp_path, application="fpa_continuous", T=64, B=32,
                            seeds="1",
                            **{"env.instance": "", "alg.levels": 2,
                               "alg.bid_step": 0.125, "alg.node_cap": 50})
        assert cli_main(["run", str(path)]) == 3

    def test_gapdemo_output(self, capsys):
        assert cli_main(["gapdemo", "--step", "0.01"]) == 0
        out = capsys.readouterr().out
        assert "primal=1" in out and "gap=0.99" in out

    def test_goodedge_on_generated_trace(self, tmp_path, capsys):
        path = write_config(tmp_path, application="fpa_continuous", T=64, B=32,
                            seeds="5",
                            **{"env.instance": "", "alg.levels": 2,
                               "alg.bid_step": 0.25})
        assert cli_main(["run", str(path)]) == 0
        out_dir = next((tmp_path / "out").iterdir())
        trace = out_dir / "trace_seed0005.csv"
        assert trace.exists()
        assert cli_main(["goodedge", str(trace)]) == 0
        out = capsys.readouterr().out
        assert "violations=0" in out
