"""Top-level acceptance gate.

Each test covers one release criterion at its stated tolerance and prints a
single ``ACCEPTANCE nn PASS|FAIL`` line (visible with ``pytest -s`` or on
failure) in addition to the usual pytest verdict.
"""

from __future__ import annotations

import math

import numpy as np

from theorylab.flow_model import (
    LogFlowParams,
    sample_backward,
    sample_forward,
)
from theorylab.graph import (
    build_asym_diamond,
    build_chain,
    build_diamond,
    build_fan,
    build_grid,
)
from theorylab.harness import ExperimentSpec, emit, run_experiment
from theorylab.objectives import db_loss_grad, fm_loss_grad, tb_loss_grad
from theorylab.oracle import (
    build_incidence,
    enumerate_trajectories,
    feasibility_residual,
    flow_entropy,
    max_entropy_flow,
    min_norm_flow,
    random_feasible_flow,
)
from theorylab.trainer import TrainConfig, train

from helpers import fd_gradient, max_rel_err


def _verdict(num: int, label: str, ok: bool, detail: str = "") -> None:
    line = f"ACCEPTANCE {num:02d} {'PASS' if ok else 'FAIL'}: {label}"
    if detail:
        line += f"  [{detail}]"
    print(line)
    assert ok, line


def _envs_small():
    return {
        "chain4": build_chain(4, 2.0),
        "diamond": build_diamond(1.0),
        "grid23": build_grid(2, 3),
    }


def _envs_all():
    e = _envs_small()
    e.update({
        "fan13": build_fan([1.0, 3.0]),
        "asym_diamond": build_asym_diamond(),
        "grid22": build_grid(2, 2),
        "grid22_corner": build_grid(2, 2, "corner"),
    })
    return e


def test_01_analytic_gradients_match_finite_differences():
    """100 random parameter points per environment and objective, all three
    objectives, worst relative error <= 1e-6."""
    worst = 0.0
    for env_name, (dag, rewards) in _envs_small().items():
        table = enumerate_trajectories(dag, rewards)
        states = [s for s in range(dag.n_states) if s != dag.source]
        edges = list(range(dag.n_edges))
        trajs = list(table.trajectories)
        batches = {
            "fm": lambda p: fm_loss_grad(p, dag, rewards, states),
            "db": lambda p: db_loss_grad(p, dag, rewards, edges),
            "tb": lambda p: tb_loss_grad(p, dag, rewards, trajs),
        }
        for obj_name, fn in batches.items():
            rng = np.random.default_rng(abs(hash((env_name, obj_name))) % 2**32)
            for _ in range(100):
                params = LogFlowParams(
                    rng.uniform(-1.0, 1.0, size=dag.n_edges), rng.uniform(-0.5, 0.5)
                )
                out = fn(params)
                fd_w, fd_z = fd_gradient(lambda p: fn(p).loss, params)
                err = max_rel_err(out.grad_w, fd_w)
                err = max(err, abs(out.grad_zeta - fd_z) / max(1.0, abs(out.grad_zeta)))
                worst = max(worst, err)
    _verdict(1, "analytic gradients within 1e-6 of central differences",
             worst <= 1e-6, f"worst rel err {worst:.3g}")


def test_02_flow_solvers_feasible_and_entropy_optimal():
    """Both canonical solvers reach max |Af - b| <= 1e-9 on every bundled
    environment; the max-entropy solution dominates 64 random feasible
    flows wherever the flow polytope has positive dimension."""
    worst_residual = 0.0
    worst_gap = math.inf
    rng = np.random.default_rng(2024)
    for name, (dag, rewards) in _envs_all().items():
        system = build_incidence(dag, rewards)
        worst_residual = max(
            worst_residual, feasibility_residual(system, min_norm_flow(system))
        )
        sol = max_entropy_flow(system, dag)
        worst_residual = max(
            worst_residual, feasibility_residual(system, sol.edge_flows)
        )
        if system.a.shape[1] - np.linalg.matrix_rank(system.a) == 0:
            continue
        table = enumerate_trajectories(dag, rewards)
        for _ in range(64):
            f = random_feasible_flow(dag, rewards, table, rng)
            worst_gap = min(worst_gap, sol.entropy - flow_entropy(f, rewards.z_r))
    _verdict(2, "solvers feasible to 1e-9 and entropy-dominant",
             worst_residual <= 1e-9 and worst_gap >= -1e-9,
             f"residual {worst_residual:.3g}, min entropy margin {worst_gap:.3g}")


def test_03_samplers_match_exact_laws():
    """1e5 draws per sampler and environment stay inside four-sigma binomial
    bands around the exact per-trajectory laws."""
    n = 100_000
    worst_sigmas = 0.0
    menu = {
        "fan13": build_fan([1.0, 3.0]),
        "diamond": build_diamond(1.0),
        "grid22": build_grid(2, 2),
    }
    for name, (dag, rewards) in menu.items():
        table = enumerate_trajectories(dag, rewards)
        index = {t.edges: i for i, t in enumerate(table.trajectories)}

        prng = np.random.default_rng(1234)
        params = LogFlowParams(prng.uniform(-1.0, 1.0, size=dag.n_edges), 0.0)
        expected_f = table.forward_probs(params, dag)
        # backward law: terminal proportional to reward, then uniform parents
        expected_b = np.array([
            rewards.reward(t.terminal)
            / rewards.z_r
            * math.prod(1.0 / len(dag.in_adjacency[s]) for s in t.states[1:])
            for t in table.trajectories
        ])
        for tag, expected, draw in (
            ("forward", expected_f, lambda r: sample_forward(params, dag, r)),
            ("backward", expected_b, lambda r: sample_backward(dag, rewards, r)),
        ):
            rng = np.random.default_rng(hash((name, tag)) % 2**32)
            counts = np.zeros(table.count)
            for _ in range(n):
                counts[index[draw(rng).edges]] += 1
            for i, p in enumerate(expected):
                sigma = math.sqrt(n * p * (1.0 - p))
                if sigma > 0:
                    worst_sigmas = max(worst_sigmas, abs(counts[i] - n * p) / sigma)
    _verdict(3, "samplers inside 4-sigma bands of the exact laws",
             worst_sigmas <= 4.0, f"worst deviation {worst_sigmas:.2f} sigma")


def test_04_training_reaches_the_target_laws():
    """Trajectory-ratio training drives the terminal law within KL 1e-3 of
    the reward law; exhaustive conservation training recovers the reference
    flow within L1 1e-2."""
    worst_kl = 0.0
    for dag, rewards in (build_fan([1.0, 3.0]), build_diamond(1.0)):
        cfg = TrainConfig(objective="tb", schedule="inv_sqrt", eta0=0.5, steps=20_000)
        rec = train(dag, rewards, cfg, checkpoint_every=cfg.steps, track_exact=False)
        worst_kl = max(worst_kl, rec.rows[-1].kl)
    dag, rewards = build_chain(4, 2.0)
    cfg = TrainConfig(objective="fm", schedule="constant", eta0=0.2, steps=10_000,
                      sampling_mode="exhaustive")
    rec = train(dag, rewards, cfg, checkpoint_every=cfg.steps, track_exact=False)
    l1 = rec.rows[-1].l1_flow_err
    _verdict(4, "trained laws reach KL <= 1e-3 and L1 <= 1e-2",
             worst_kl <= 1e-3 and l1 <= 1e-2,
             f"worst KL {worst_kl:.3g}, chain L1 {l1:.3g}")


def test_05_convergence_rate_experiment():
    summary = run_experiment(ExperimentSpec("convergence"))
    failed = [c.name for c in summary.checks if c.direction != "info" and not c.passed]
    _verdict(5, "gradient-decay rate experiment passes all asserted checks",
             summary.passed, f"failed: {failed}" if failed else "all checks green")


def test_06_noise_robustness_experiments():
    obj = run_experiment(ExperimentSpec("noise_objective"))
    drift = run_experiment(ExperimentSpec("noise_drift"))
    clamp_ok = all(row[5] <= 0.01 and row[6] == 0 for row in obj.tables[0].rows)
    clamp_ok = clamp_ok and all(
        row[5] <= 0.01 and row[6] == 0 for row in drift.tables[0].rows
    )
    failed = [c.name for s in (obj, drift) for c in s.checks
              if c.direction != "info" and not c.passed]
    _verdict(6, "noise loss-increase and law-drift bounds hold with clamping under 1%",
             obj.passed and drift.passed and clamp_ok,
             f"failed: {failed}" if failed else "all bounds hold")


def test_07_noise_sample_ratio_experiment():
    summary = run_experiment(ExperimentSpec("noise_sample_ratio"))
    zero = [c for c in summary.checks if c.name.endswith("_zero_ratio")]
    iso = [c for c in summary.checks if c.name.endswith("_isotonic")]
    ok = (
        summary.passed
        and zero and all(c.passed and c.value == 1.0 for c in zero)
        and iso and all(c.passed for c in iso)
    )
    _verdict(7, "sample-count inflation: unit at zero noise, isotonic, modeled",
             ok, f"censored runs {summary.censored}")


def test_08_regularization_experiment():
    summary = run_experiment(ExperimentSpec("regularization"))
    failed = [c.name for c in summary.checks if c.direction != "info" and not c.passed]
    _verdict(8, "entropy selection and balance-loss/divergence match",
             summary.passed, f"failed: {failed}" if failed else "all checks green")


def test_09_error_accumulation_experiment():
    summary = run_experiment(ExperimentSpec("error_accum"))
    failed = [c.name for c in summary.checks if c.direction != "info" and not c.passed]
    _verdict(9, "per-edge to trajectory error envelope holds on held-out lengths",
             summary.passed, f"failed: {failed}" if failed else "all checks green")


def test_10_end_to_end_determinism(tmp_path):
    """Repeating an experiment and re-emitting artifacts reproduces every
    file byte for byte."""
    mismatches = []
    for exp in ("audit", "error_accum"):
        spec = ExperimentSpec(exp, seed=0)
        a = tmp_path / f"{exp}_a"
        b = tmp_path / f"{exp}_b"
        paths_a = sorted(emit(run_experiment(spec), str(a), formats=("csv", "svg")))
        paths_b = sorted(emit(run_experiment(spec), str(b), formats=("csv", "svg")))
        if len(paths_a) != len(paths_b):
            mismatches.append(f"{exp}: file count")
        for pa, pb in zip(paths_a, paths_b):
            if open(pa, "rb").read() != open(pb, "rb").read():
                mismatches.append(pa.rsplit("/", 1)[-1])
    _verdict(10, "experiments and artifacts are byte-reproducible",
             not mismatches, f"mismatched: {mismatches}" if mismatches else "all files identical")
