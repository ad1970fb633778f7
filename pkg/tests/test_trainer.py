"""Training loop: validation, determinism, checkpoints, stopping, noise,
divergence, replay and CSV serialization."""

from __future__ import annotations

import math

import numpy as np
import pytest

from theorylab.flow_model import LogFlowParams
from theorylab.oracle import enumerate_trajectories
from theorylab.trainer import (
    CSV_COLUMNS,
    NoiseConfig,
    TrainConfig,
    TrainingDivergedError,
    lr,
    replay_order,
    train,
)


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"objective": "nope"},
            {"objective": "fm", "schedule": "warmup"},
            {"objective": "fm", "sampling_mode": "offline"},
            {"objective": "fm", "eta0": -0.1},
            {"objective": "fm", "steps": 0},
            {"objective": "fm", "batch_size": 0},
            {"objective": "fm", "init": "gauss"},
            {"objective": "fm", "sampling_mode": "custom"},  # missing probs
        ],
    )
    def test_train_config_rejects(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"kind": "poisson"},
            {"kind": "gaussian", "sigma2": -1.0},
            {"kind": "gaussian", "floor": 0.0},
            {"kind": "gaussian", "resample": "sometimes"},
        ],
    )
    def test_noise_config_rejects(self, kwargs):
        with pytest.raises(ValueError):
            NoiseConfig(**kwargs)

    def test_noise_derived_values(self, fan13):
        _, rewards = fan13
        n = NoiseConfig(kind="uniform", sigma2=3.0)
        assert n.half_width == 3.0  # variance h^2/3
        assert n.floor_value(rewards) == rewards.r_min / 10.0
        assert NoiseConfig(kind="gaussian", floor=0.5).floor_value(rewards) == 0.5

    def test_noise_with_exhaustive_rejected(self, fan13):
        dag, rewards = fan13
        cfg = TrainConfig("fm", sampling_mode="exhaustive", steps=5)
        with pytest.raises(ValueError):
            train(dag, rewards, cfg, noise=NoiseConfig(kind="gaussian", sigma2=0.01))

    def test_custom_probs_validated_against_table(self, diamond):
        dag, rewards = diamond
        cfg = TrainConfig("tb", sampling_mode="custom", steps=5, custom_probs=(1.0,))
        with pytest.raises(ValueError):
            train(dag, rewards, cfg)
        cfg = TrainConfig("tb", sampling_mode="custom", steps=5, custom_probs=(0.9, 0.3))
        with pytest.raises(ValueError):
            train(dag, rewards, cfg)

    def test_unknown_stop_metric(self, fan13):
        dag, rewards = fan13
        with pytest.raises(ValueError):
            train(dag, rewards, TrainConfig("tb", steps=5), stop_metric="loss")

    @pytest.mark.parametrize("bad", [0, [], [0, 5], [7]])
    def test_bad_checkpoints(self, fan13, bad):
        dag, rewards = fan13
        with pytest.raises(ValueError):
            train(dag, rewards, TrainConfig("tb", steps=5), checkpoint_every=bad)

    def test_replay_validation(self, diamond):
        dag, rewards = diamond
        with pytest.raises(ValueError):
            replay_order(dag, rewards, [], TrainConfig("fm"))
        trajs = list(enumerate_trajectories(dag, rewards).trajectories)
        with pytest.raises(ValueError):
            replay_order(dag, rewards, trajs, TrainConfig("tb"), track_exact=True)


class TestSchedules:
    def test_values(self):
        assert lr("inv_sqrt", 0.1, 4) == pytest.approx(0.05)
        assert lr("two_thirds", 0.8, 8) == pytest.approx(0.2)
        assert lr("constant", 0.3, 999) == 0.3

    def test_rejects(self):
        with pytest.raises(ValueError):
            lr("inv_sqrt", 0.1, 0)
        with pytest.raises(ValueError):
            lr("warmup", 0.1, 1)


class TestDeterminism:
    def test_identical_runs_are_bitwise_equal(self, fan13, tmp_path):
        dag, rewards = fan13
        cfg = TrainConfig("tb", eta0=0.3, steps=300, seed=17)
        a = train(dag, rewards, cfg)
        b = train(dag, rewards, cfg)
        assert np.array_equal(a.final_params.w, b.final_params.w)
        assert a.final_params.zeta == b.final_params.zeta
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        a.to_csv(str(pa))
        b.to_csv(str(pb))
        assert pa.read_bytes() == pb.read_bytes()

    def test_seed_changes_the_run(self, fan13):
        dag, rewards = fan13
        a = train(dag, rewards, TrainConfig("tb", steps=100, seed=0))
        b = train(dag, rewards, TrainConfig("tb", steps=100, seed=1))
        assert not np.array_equal(a.final_params.w, b.final_params.w)

    def test_uniform_init_reproducible(self, diamond):
        dag, rewards = diamond
        cfg = TrainConfig("fm", steps=1, seed=9, init="uniform", init_scale=0.3)
        a = train(dag, rewards, cfg, checkpoint_every=[1])
        b = train(dag, rewards, cfg, checkpoint_every=[1])
        assert np.array_equal(a.final_params.w, b.final_params.w)


class TestCheckpoints:
    def test_geometric(self, fan13):
        dag, rewards = fan13
        rec = train(dag, rewards, TrainConfig("tb", steps=100))
        assert [r.t for r in rec.rows] == [1, 2, 4, 8, 16, 32, 64, 100]

    def test_every_k(self, fan13):
        dag, rewards = fan13
        rec = train(dag, rewards, TrainConfig("tb", steps=100), checkpoint_every=30)
        assert [r.t for r in rec.rows] == [30, 60, 90, 100]

    def test_explicit_list(self, fan13):
        dag, rewards = fan13
        rec = train(dag, rewards, TrainConfig("tb", steps=100), checkpoint_every=[10, 50])
        assert [r.t for r in rec.rows] == [10, 50, 100]

    def test_snapshots(self, fan13):
        dag, rewards = fan13
        rec = train(dag, rewards, TrainConfig("tb", steps=64), keep_snapshots=True)
        assert rec.snapshots is not None
        assert len(rec.snapshots) == len(rec.rows)
        assert np.array_equal(rec.snapshots[-1].w, rec.final_params.w)
        assert rec.snapshots[-1].zeta == rec.final_params.zeta
        plain = train(dag, rewards, TrainConfig("tb", steps=64))
        assert plain.snapshots is None


class TestStopping:
    def test_first_passage_records_step(self, fan13):
        dag, rewards = fan13
        # initial terminal law is (1/2, 1/2) vs target (1/4, 3/4): tv = 1/4
        rec = train(
            dag, rewards, TrainConfig("tb", steps=50),
            stop_metric="terminal_tv", stop_eps=0.3,
        )
        assert rec.stop_step == 1
        assert rec.rows[-1].t == 1

    def test_unreachable_eps_never_stops(self, fan13):
        dag, rewards = fan13
        rec = train(
            dag, rewards, TrainConfig("tb", steps=50),
            stop_metric="terminal_tv", stop_eps=1e-12,
        )
        assert rec.stop_step == 0
        assert rec.rows[-1].t == 50

    def test_flow_tv_stop_on_chain(self, chain4):
        dag, rewards = chain4
        rec = train(
            dag, rewards,
            TrainConfig("fm", schedule="constant", eta0=0.2, steps=5000),
            stop_metric="flow_tv", stop_eps=0.05,
        )
        assert 0 < rec.stop_step < 5000
        assert rec.rows[-1].t == rec.stop_step


class TestNoise:
    def test_per_draw_and_fixed_realization_differ(self, fan13):
        dag, rewards = fan13
        cfg = TrainConfig("tb", steps=200, seed=3)
        per = train(dag, rewards, cfg, NoiseConfig("gaussian", 0.04))
        fixed = train(
            dag, rewards, cfg, NoiseConfig("gaussian", 0.04, resample="fixed_realization")
        )
        assert not np.array_equal(per.final_params.w, fixed.final_params.w)
        assert per.eval_count == 200
        assert fixed.eval_count == len(dag.terminals)

    def test_zero_variance_fixed_realization_is_inert(self, fan13):
        dag, rewards = fan13
        cfg = TrainConfig("tb", steps=200, seed=3)
        clean = train(dag, rewards, cfg)
        zero = train(
            dag, rewards, cfg, NoiseConfig("gaussian", 0.0, resample="fixed_realization")
        )
        assert np.array_equal(clean.final_params.w, zero.final_params.w)
        assert zero.clamp_count == 0

    def test_clamping_is_counted(self, fan13):
        dag, rewards = fan13
        rec = train(
            dag, rewards, TrainConfig("tb", eta0=0.01, steps=200, seed=1),
            NoiseConfig("gaussian", 25.0),
        )
        assert rec.clamp_count > 0
        assert rec.rows[-1].clamp_rate == rec.clamp_count / rec.eval_count

    def test_noiseless_run_counts_nothing(self, fan13):
        dag, rewards = fan13
        rec = train(dag, rewards, TrainConfig("tb", steps=50))
        assert rec.eval_count == 0
        assert rec.clamp_count == 0
        assert rec.rows[-1].clamp_rate == 0.0


class TestDivergence:
    def test_diverged_error_carries_partial_record(self, fan13):
        dag, rewards = fan13
        with pytest.raises(TrainingDivergedError) as exc:
            train(dag, rewards, TrainConfig("tb", schedule="constant", eta0=1e4, steps=100))
        err = exc.value
        assert err.step >= 1
        assert err.record.diverged_step == err.step
        assert err.record.rows[-1].t == err.step
        assert math.isnan(err.record.rows[-1].loss)


class TestReplay:
    def test_replay_is_deterministic_and_rewrites_config(self, diamond):
        dag, rewards = diamond
        table = enumerate_trajectories(dag, rewards)
        trajs = [table.trajectories[i % 2] for i in range(20)]
        cfg = TrainConfig("fm", schedule="constant", eta0=0.1, steps=999, batch_size=7)
        a = replay_order(dag, rewards, trajs, cfg)
        b = replay_order(dag, rewards, trajs, cfg)
        assert np.array_equal(a.final_params.w, b.final_params.w)
        assert a.config.steps == 20
        assert a.config.batch_size == 1

    def test_order_matters(self, diamond):
        dag, rewards = diamond
        table = enumerate_trajectories(dag, rewards)
        t0, t1 = table.trajectories
        cfg = TrainConfig("db", schedule="inv_sqrt", eta0=0.2, steps=1)
        a = replay_order(dag, rewards, [t0, t1, t0, t1], cfg)
        b = replay_order(dag, rewards, [t1, t0, t1, t0], cfg)
        assert not np.array_equal(a.final_params.w, b.final_params.w)

    def test_replay_descends_on_fixed_data(self, chain4):
        dag, rewards = chain4
        traj = enumerate_trajectories(dag, rewards).trajectories[0]
        cfg = TrainConfig("db", schedule="constant", eta0=0.2, steps=1)
        rec = replay_order(
            dag, rewards, [traj] * 400, cfg, checkpoint_every=[1], track_exact=True
        )
        assert rec.rows[-1].loss < rec.rows[0].loss
        assert rec.rows[-1].loss < 1e-3


class TestMetricsAndCsv:
    def test_exhaustive_fm_improves_flow_error(self, chain4):
        dag, rewards = chain4
        cfg = TrainConfig(
            "fm", schedule="constant", eta0=0.2, steps=2000, sampling_mode="exhaustive"
        )
        rec = train(dag, rewards, cfg)
        assert rec.rows[-1].l1_flow_err < rec.rows[0].l1_flow_err
        assert rec.rows[-1].l1_flow_err <= 1e-2
        assert rec.rows[-1].tv <= 1e-3

    def test_row_constants(self, diamond):
        dag, rewards = diamond
        rec = train(dag, rewards, TrainConfig("db", steps=50))
        last = rec.rows[-1]
        assert last.k_est == 4.0  # max in-degree 2, squared
        assert last.g_est > 0
        assert last.eta == pytest.approx(0.1 / math.sqrt(50))
        assert rec.rows[0].min_grad_sq >= rec.rows[-1].min_grad_sq

    def test_csv_schema_and_stability(self, fan13, tmp_path):
        dag, rewards = fan13
        rec = train(dag, rewards, TrainConfig("tb", steps=32))
        p1, p2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
        rec.to_csv(str(p1))
        rec.to_csv(str(p2))
        assert p1.read_bytes() == p2.read_bytes()
        lines = p1.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == len(rec.rows) + 1
        first = lines[1].split(",")
        assert int(first[0]) == rec.rows[0].t
        assert float(first[2]) == rec.rows[0].loss

    def test_final_row_helper(self, fan13):
        dag, rewards = fan13
        rec = train(dag, rewards, TrainConfig("tb", steps=16))
        assert rec.final_row() is rec.rows[-1]

    def test_params0_override_is_used(self, diamond):
        dag, rewards = diamond
        start = LogFlowParams(np.array([0.5, -0.5, 0.25, -0.25]), 0.7)
        rec = train(
            dag, rewards, TrainConfig("fm", eta0=0.0, steps=3), params0=start
        )
        assert np.array_equal(rec.final_params.w, start.w)
        assert start.zeta == 0.7  # caller's copy untouched
