"""The training kernels: registry, cross-implementation bit identity, and
agreement with the reference loss/gradient definitions."""

from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from theorylab._kernels import active_name, implementations
from theorylab.flow_model import init_params
from theorylab.objectives import db_loss_grad, fm_loss_grad, tb_loss_grad
from theorylab.oracle import enumerate_trajectories
from theorylab.trainer import NoiseConfig, TrainConfig, replay_order, train

from conftest import bundled_envs

_HAS_COMPILED = "compiled" in implementations()


class TestRegistry:
    def test_python_always_available(self):
        impls = implementations()
        assert "python" in impls
        assert callable(impls["python"])
        assert active_name() in impls

    def test_env_var_forces_fallback(self):
        out = subprocess.run(
            [sys.executable, "-c",
             "from theorylab._kernels import active_name; print(active_name())"],
            env={**os.environ, "THEORYLAB_PURE_PYTHON": "1"},
            capture_output=True, text=True, check=True,
        )
        assert out.stdout.strip() == "python"


def _cells():
    envs = bundled_envs()
    yield envs["chain4"], TrainConfig("fm", eta0=0.1, steps=2000, seed=11), None
    yield envs["fan13"], TrainConfig("tb", eta0=0.3, steps=2000, seed=12), None
    yield envs["diamond"], TrainConfig("db", eta0=0.2, steps=2000, seed=13,
                                       sampling_mode="backward"), None
    yield envs["grid22"], TrainConfig("tb", eta0=0.2, steps=2000, seed=14,
                                      sampling_mode="uniform_traj"), None
    yield envs["grid23"], TrainConfig("fm", eta0=0.1, steps=500, seed=15,
                                      sampling_mode="exhaustive"), None
    yield envs["fan13"], TrainConfig("tb", eta0=0.1, steps=2000, seed=16), NoiseConfig(
        "gaussian", 0.04)


@pytest.mark.skipif(not _HAS_COMPILED, reason="compiled kernel not built")
class TestBitIdentity:
    def test_all_cells_match_exactly(self):
        for (dag, rewards), cfg, noise in _cells():
            key = f"{cfg.objective}/{cfg.sampling_mode}/{dag.n_states}"
            recs = {
                name: train(dag, rewards, cfg, noise, impl=name)
                for name in sorted(implementations())
            }
            ref = recs.pop("compiled")
            for name, rec in recs.items():
                assert np.array_equal(ref.final_params.w, rec.final_params.w), key
                assert ref.final_params.zeta == rec.final_params.zeta, key
                assert ref.stop_step == rec.stop_step, key
                assert ref.clamp_count == rec.clamp_count, key
                assert len(ref.rows) == len(rec.rows), key
                for ra, rb in zip(ref.rows, rec.rows):
                    assert ra == rb, key

    def test_active_matches_explicit_choice(self, fan13):
        dag, rewards = fan13
        cfg = TrainConfig("tb", steps=200, seed=5)
        implicit = train(dag, rewards, cfg)
        explicit = train(dag, rewards, cfg, impl=active_name())
        assert np.array_equal(implicit.final_params.w, explicit.final_params.w)


class TestReplayAgainstReference:
    """One replayed step must apply exactly eta times the reference gradient
    of the single-trajectory loss (items weighted uniformly within it)."""

    @pytest.mark.parametrize("objective", ["fm", "db", "tb"])
    @pytest.mark.parametrize("impl", sorted(implementations()))
    def test_single_step(self, diamond, objective, impl):
        dag, rewards = diamond
        traj = enumerate_trajectories(dag, rewards).trajectories[0]
        p0 = init_params(dag, rewards)
        eta = 0.25
        cfg = TrainConfig(objective, schedule="constant", eta0=eta, steps=1)
        rec = replay_order(dag, rewards, [traj], cfg, params0=p0, impl=impl)

        if objective == "fm":
            batch = [dag.edges[e][1] for e in traj.edges]
            lg = fm_loss_grad(p0, dag, rewards, batch)
        elif objective == "db":
            lg = db_loss_grad(p0, dag, rewards, list(traj.edges))
        else:
            lg = tb_loss_grad(p0, dag, rewards, [traj])
        np.testing.assert_allclose(
            rec.final_params.w, p0.w - eta * lg.grad_w, rtol=1e-12, atol=1e-14
        )
        assert rec.final_params.zeta == pytest.approx(
            p0.zeta - eta * lg.grad_zeta, rel=1e-12, abs=1e-14
        )
