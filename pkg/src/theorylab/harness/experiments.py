"""Experiment drivers.

Each ``run_<name>`` function executes a fixed protocol over a small grid of
training cells, computes the quantities its theory statement bounds, and
returns a :class:`~theorylab.harness.emit.Summary` whose checks assert only
the guaranteed direction (upper bounds, monotonicity, exact zeros).  Every
driver is a pure function of (spec, base seed): cell seeds are ``base + i``
so that paired cells share sampling randomness, and all Monte-Carlo streams
derive from tagged SeedSequences.

Default cell parameters (learning rates, accuracy targets, grid values) were
confirmed by pilot runs and then frozen; ``ExperimentSpec`` grid overrides
are supported but the shipped defaults are the reference configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .. import objectives, oracle
from ..flow_model import LogFlowParams
from ..graph import Dag, RewardTable, build_chain, build_diamond, build_grid
from ..trainer import NoiseConfig, RunRecord, TrainConfig, train, replay_order, lr
from . import fits
from .emit import Check, Series, Summary, Table
from .envs import build_env

__all__ = [
    "ExperimentSpec",
    "EXPERIMENTS",
    "run_experiment",
    "run_convergence",
    "run_sample_complexity",
    "run_order",
    "run_error_accum",
    "run_noise_objective",
    "run_noise_drift",
    "run_noise_sample_ratio",
    "run_regularization",
    "run_audit",
]

_CAP = 10**6  # hard sample cap; first-passage runs beyond it count as censored


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run: experiment id, environment, swept grids, seeds, base seed.

    ``grid`` maps sweep keys (e.g. "T", "L", "D", "side", "delta", "draws")
    to value tuples; unset keys fall back to the per-experiment defaults.
    ``sigma2`` and ``eps`` are the noise and accuracy grids used by the
    experiments that sweep them.
    """

    experiment: str
    env: str | None = None
    env_params: Mapping[str, str] = field(default_factory=dict)
    grid: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    seeds: int | None = None
    sigma2: tuple[float, ...] | None = None
    eps: tuple[float, ...] | None = None
    seed: int = 0
    slack: float = 0.25
    retrain: bool = False

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; "
                f"expected one of {sorted(EXPERIMENTS)}"
            )
        if self.seeds is not None and self.seeds < 1:
            raise ValueError(f"seeds must be >= 1, got {self.seeds}")

    def seed_list(self, default: int) -> list[int]:
        n = self.seeds if self.seeds is not None else default
        return [self.seed + i for i in range(n)]

    def grid_values(self, key: str, default: tuple[float, ...]) -> tuple[float, ...]:
        vals = tuple(self.grid.get(key, default))
        if not vals:
            raise ValueError(f"empty grid for {key!r}")
        return vals

    def resolve_env(self, default_env: str, default_params: Mapping[str, str]):
        if self.env is None:
            return build_env(default_env, dict(default_params))
        return build_env(self.env, dict(self.env_params))


def _bounded(name: str, value: float, threshold: float, detail: str = "") -> Check:
    return Check(name, bool(value <= threshold), float(value), float(threshold), "<=", detail)


def _at_least(name: str, value: float, threshold: float, detail: str = "") -> Check:
    return Check(name, bool(value >= threshold), float(value), float(threshold), ">=", detail)


def _exactly(name: str, value: float, target: float, detail: str = "") -> Check:
    return Check(name, bool(value == target), float(value), float(target), "==", detail)


def _info(name: str, value: float, threshold: float = math.nan, detail: str = "") -> Check:
    return Check(name, True, float(value), float(threshold), "info", detail)


def _mc_rng(base_seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, tag]))


def _stop_run(
    dag: Dag,
    rewards: RewardTable,
    config: TrainConfig,
    stop_metric: str,
    stop_eps: float,
    noise: NoiseConfig | None = None,
) -> int:
    """First-passage sample count for one cell run; _CAP when censored."""
    rec = train(
        dag, rewards, config, noise, checkpoint_every=config.steps,
        stop_metric=stop_metric, stop_eps=stop_eps, track_exact=True,
    )
    return rec.stop_step if rec.stop_step else _CAP


# ---------------------------------------------------------------- convergence


def run_convergence(spec: ExperimentSpec) -> Summary:
    """Decay of the best-so-far exact gradient norm against run length.

    For each objective/schedule pair, one long run per seed records
    min over t <= T of the exact expected-gradient squared norm at every T in
    the grid; the mean over seeds is fitted log-log against T.  The rate
    statements give upper envelopes, so only slope upper bounds and
    monotonicity are asserted.
    """
    dag, rewards = spec.resolve_env("diamond", {})
    t_grid = sorted(int(v) for v in spec.grid_values("T", (100.0, 1000.0, 10000.0, 100000.0)))
    if len(t_grid) < 3:
        raise ValueError("convergence needs >= 3 grid points for the fit")
    seeds = spec.seed_list(10)
    menu = (("fm", "inv_sqrt", 0.1, -0.3), ("db", "two_thirds", 0.1, -0.15))

    curve_rows: list[tuple] = []
    slope_rows: list[tuple] = []
    checks: list[Check] = []
    series_lines = []
    records: list[tuple[str, RunRecord]] = []
    slopes: dict[str, float] = {}
    for objective, schedule, eta0, slope_max in menu:
        per_t = np.zeros((len(seeds), len(t_grid)))
        for i, seed in enumerate(seeds):
            cfg = TrainConfig(
                objective=objective, schedule=schedule, eta0=eta0,
                steps=t_grid[-1], sampling_mode="on_policy", seed=seed,
            )
            rec = train(dag, rewards, cfg, checkpoint_every=t_grid, track_exact=True)
            if i == 0:
                records.append((f"{objective}_seed{seed}", rec))
            by_t = {r.t: r.min_grad_sq for r in rec.rows}
            per_t[i] = [by_t[t] for t in t_grid]
        mean_curve = per_t.mean(axis=0)
        fit = fits.fit_loglog(list(zip(map(float, t_grid), mean_curve)))
        slopes[objective] = fit.slope
        slope_rows.append((objective, schedule, eta0, fit.slope, fit.intercept, fit.r2, fit.n_points))
        for t, v in zip(t_grid, mean_curve):
            curve_rows.append((objective, t, v))
        series_lines.append((objective, tuple(map(float, t_grid)), tuple(mean_curve)))
        checks.append(
            _bounded(f"{objective}_slope", fit.slope, slope_max,
                     f"log-log slope of mean best gradient norm vs T ({schedule})")
        )
        checks.append(
            Check(f"{objective}_curve_nonincreasing",
                  fits.is_nonincreasing(list(mean_curve), tol=0.0),
                  float(max(np.diff(mean_curve), default=0.0)), 0.0, "<=",
                  "best-so-far gradient norm can only improve with longer runs")
        )
    checks.append(
        _info("db_minus_fm_slope", slopes["db"] - slopes["fm"], -1.0,
              "recorded rate ordering; not asserted as strict")
    )

    return Summary(
        experiment="convergence",
        tables=(
            Table("slope", ("objective", "schedule", "eta0", "slope", "intercept", "r2", "n_points"),
                  tuple(slope_rows)),
            Table("mingrad", ("objective", "T", "mean_min_grad_sq"), tuple(curve_rows)),
        ),
        checks=tuple(checks),
        series=(
            Series("mingrad", "best exact gradient norm vs run length",
                   "T (steps)", "mean over seeds of min grad^2", tuple(series_lines),
                   logx=True, logy=True),
        ),
        records=tuple(records),
    )


# -------------------------------------------------------- sample complexity


def run_sample_complexity(spec: ExperimentSpec) -> Summary:
    """First-passage sample counts across accuracy, skew, length and size.

    Four sweeps: accuracy targets on the two-terminal fan, sampling skew on
    the diamond (custom trajectory distributions of increasing worst-case
    target/sample ratio), chain length, and lattice size.  Each cell reports
    the median and the conservative 0.9-quantile of N over seeds; capped runs
    mark the cell censored and drop it from fits.
    """
    cell_rows: list[tuple] = []
    checks: list[Check] = []
    censored = 0
    series = []

    def run_cells(tag, value, dag, rewards, make_cfg, stop_metric, stop_eps, seeds):
        nonlocal censored
        ns = [
            _stop_run(dag, rewards, make_cfg(seed), stop_metric, stop_eps)
            for seed in seeds
        ]
        capped = sum(1 for n in ns if n >= _CAP)
        censored += capped
        med = fits.median(ns)
        q90 = fits.quantile_upper(ns, 0.9)
        cell_rows.append((tag, value, stop_metric, stop_eps, med, q90, len(seeds), capped))
        return ns, med, capped

    # accuracy sweep: halving the target on the two-terminal fan
    fan_dag, fan_rewards = spec.resolve_env("fan", {"rewards": "1,3"})
    eps_grid = tuple(spec.eps) if spec.eps else (0.2, 0.1)
    eps_grid = tuple(sorted(eps_grid, reverse=True))
    eps_seeds = spec.seed_list(20)
    eps_meds: list[tuple[float, float, int]] = []
    for eps in eps_grid:
        def cfg(seed):
            return TrainConfig(objective="tb", schedule="constant", eta0=0.04,
                               steps=_CAP, sampling_mode="on_policy", seed=seed)
        _, med, capped = run_cells("eps", eps, fan_dag, fan_rewards, cfg,
                                   "terminal_tv", eps, eps_seeds)
        eps_meds.append((eps, med, capped))
    usable = [(e, m) for e, m, c in eps_meds if c == 0]
    if len(usable) >= 2:
        ratio = usable[-1][1] / usable[0][1]
        checks.append(Check("eps_halving_ratio", bool(2.0 <= ratio <= 8.0), ratio, 4.0, "==",
                            f"median N at eps={usable[-1][0]:g} over median N at "
                            f"eps={usable[0][0]:g}; accepted band [2, 8] around the "
                            "inverse-square prediction"))
    series.append(Series(
        "n_eps", "samples to reach terminal accuracy", "eps", "median N",
        (("fan", tuple(e for e, _, _ in eps_meds), tuple(m for _, m, _ in eps_meds)),),
        logx=True, logy=True))

    # sampling-skew sweep on the diamond
    dia_dag, dia_rewards = build_diamond(1.0)
    dia_table = oracle.enumerate_trajectories(dia_dag, dia_rewards)
    d_grid = tuple(spec.grid_values("D", (1.0, 2.0, 5.0)))
    d_seeds = spec.seed_list(20)
    d_meds = []
    for d in d_grid:
        q = (1.0 / (2.0 * d), 1.0 - 1.0 / (2.0 * d))
        measured_d = oracle.discrepancy(dia_table, q)
        def cfg(seed, _q=q):
            return TrainConfig(objective="tb", schedule="constant", eta0=0.1,
                               steps=_CAP, sampling_mode="custom", custom_probs=_q,
                               seed=seed, init="uniform", init_scale=1.0)
        _, med, capped = run_cells("D", measured_d, dia_dag, dia_rewards, cfg,
                                   "traj_tv", 0.05, d_seeds)
        d_meds.append((measured_d, med, capped))
    usable = [(d, m) for d, m, c in d_meds if c == 0]
    if len(usable) >= 2:
        checks.append(_at_least(
            "skew_monotone", usable[-1][1], usable[0][1],
            f"median N at worst-case ratio D={usable[-1][0]:g} vs D={usable[0][0]:g}"))
    if len(usable) >= 3:
        dfit = fits.fit_loglog([(d, m) for d, m in usable])
        checks.append(_info("n_vs_D_slope", dfit.slope, detail="reported exponent (no assertion)"))
    series.append(Series(
        "n_d", "samples vs sampling skew", "worst-case target/sample ratio D",
        "median N", (("diamond", tuple(d for d, _, _ in d_meds), tuple(m for _, m, _ in d_meds)),),
        logx=True, logy=True))

    # chain-length sweep
    l_grid = tuple(int(v) for v in spec.grid_values("L", (2.0, 4.0, 8.0, 16.0)))
    l_seeds = spec.seed_list(10)
    l_meds = []
    for length in l_grid:
        chain_dag, chain_rewards = build_chain(length, 2.0)
        def cfg(seed):
            return TrainConfig(objective="fm", schedule="constant", eta0=0.2,
                               steps=_CAP, sampling_mode="on_policy", seed=seed)
        _, med, capped = run_cells("L", length, chain_dag, chain_rewards, cfg,
                                   "flow_tv", 0.05, l_seeds)
        l_meds.append((length, med, capped))
    usable = [(float(l), m) for l, m, c in l_meds if c == 0]
    if len(usable) >= 3:
        lfit = fits.fit_loglog(usable)
        checks.append(_at_least("n_vs_L_slope", lfit.slope, 0.5,
                                "one-sided growth of sample count with chain length"))
    series.append(Series(
        "n_l", "samples vs chain length", "length L", "median N",
        (("chain", tuple(float(l) for l, _, _ in l_meds), tuple(m for _, m, _ in l_meds)),),
        logx=True, logy=True))

    # state-count sweep over square lattices
    s_grid = tuple(int(v) for v in spec.grid_values("side", (2.0, 3.0)))
    s_seeds = spec.seed_list(10)
    s_meds = []
    for side in s_grid:
        grid_dag, grid_rewards = build_grid(2, side)
        def cfg(seed):
            return TrainConfig(objective="tb", schedule="constant", eta0=0.1,
                               steps=_CAP, sampling_mode="on_policy", seed=seed)
        _, med, capped = run_cells("S", grid_dag.n_states, grid_dag, grid_rewards, cfg,
                                   "traj_tv", 0.05, s_seeds)
        s_meds.append((grid_dag.n_states, med, capped))
    usable = [(float(s), m) for s, m, c in s_meds if c == 0]
    if len(usable) >= 3:
        sfit = fits.fit_loglog(usable)
        checks.append(_info("n_vs_S_slope", sfit.slope, detail="reported exponent (no assertion)"))
    elif len(usable) >= 2:
        checks.append(_info("n_vs_S_growth", usable[-1][1] / usable[0][1],
                            detail="median N growth from smallest to largest state count"))
    series.append(Series(
        "n_s", "samples vs state count", "|S|", "median N",
        (("grid", tuple(float(s) for s, _, _ in s_meds), tuple(m for _, m, _ in s_meds)),),
        logx=True, logy=True))

    return Summary(
        experiment="sample_complexity",
        tables=(Table("ncells",
                      ("sweep", "value", "stop_metric", "eps", "median_n", "q90_n",
                       "seeds", "censored_runs"),
                      tuple(cell_rows)),),
        checks=tuple(checks),
        series=tuple(series),
        censored=censored,
    )


# --------------------------------------------------------------------- order


def _mixture_weights(etas: Sequence[float], kappa: float) -> np.ndarray:
    """Mixture weights (omega_0..omega_n) induced by per-step factors
    beta_i = eta_i * kappa: omega_0 = prod(1 - beta), omega_i =
    beta_{i-1} * prod_{j > i}(1 - beta_{j-1})."""
    beta = np.clip(np.asarray(etas, dtype=np.float64) * kappa, 0.0, 1.0)
    n = len(beta)
    omega = np.empty(n + 1)
    tail = np.concatenate((np.cumprod((1.0 - beta)[::-1])[::-1], [1.0]))
    omega[0] = tail[0]
    omega[1:] = beta * tail[1:]
    return omega


def run_order(spec: ExperimentSpec) -> Summary:
    """Path dependence of replayed training on the presentation order.

    A fixed trajectory multiset on the diamond is replayed in several
    permutations with a decaying step size.  The final flows differ across
    distinct orders (the path-dependence witness) and are expressed as a
    weighted mixture of the per-trajectory indicator flows: the mixture
    weights come from the run's actual step sizes through a single fitted
    scalar per run, and the weighted-sum upper bound is calibrated by the
    largest observed left/right ratio.
    """
    dag, rewards = spec.resolve_env("diamond", {})
    table = oracle.enumerate_trajectories(dag, rewards)
    reps = int(spec.grid_values("reps", (6.0,))[0])
    base_list = [t for t in table.trajectories for _ in range(reps)]
    n = len(base_list)
    perms = {
        "interleaved": [base_list[i % table.count * reps + i // table.count] for i in range(n)],
        "sorted": sorted(base_list, key=lambda t: t.edges),
        "reversed": sorted(base_list, key=lambda t: t.edges, reverse=True),
    }

    cfg = TrainConfig(objective="fm", schedule="inv_sqrt", eta0=0.1,
                      steps=n, sampling_mode="on_policy", seed=spec.seed)
    system = oracle.build_incidence(dag, rewards)
    f_star = oracle.max_entropy_flow(system, dag).edge_flows
    etas = [lr(cfg.schedule, cfg.eta0, t) for t in range(1, n + 1)]

    f0 = np.exp(np.zeros(dag.n_edges))
    finals: dict[str, np.ndarray] = {}
    alpha_rows: list[tuple] = []
    checks: list[Check] = []
    ratios = []
    records = []
    for name, traj_list in sorted(perms.items()):
        rec = replay_order(dag, rewards, traj_list, cfg, checkpoint_every=n)
        records.append((f"replay_{name}", rec))
        f_final = np.exp(rec.final_params.w)
        finals[name] = f_final
        traj_flows = [
            rewards.reward(t.states[-1]) * np.isin(np.arange(dag.n_edges), t.edges)
            for t in traj_list
        ]

        def mix_err(kappa, _tf=traj_flows, _ff=f_final):
            om = _mixture_weights(etas, kappa)
            mix = om[0] * f0 + sum(o * tf for o, tf in zip(om[1:], _tf))
            return float(np.abs(mix - _ff).sum())

        kappa = fits.golden_section_min(mix_err, 0.0, 1.0 / max(etas))
        omega = _mixture_weights(etas, kappa)
        alpha = omega[1:] / (1.0 - omega[0]) if omega[0] < 1.0 else omega[1:]
        lhs = float(np.abs(f_final - f_star).sum())
        rhs = float(sum(a * np.abs(tf - f_star).sum() for a, tf in zip(alpha, traj_flows)))
        ratio = lhs / rhs if rhs > 0 else math.inf
        ratios.append(ratio)
        alpha_rows.append((name, kappa, float(alpha.sum()), mix_err(kappa), lhs, rhs, ratio))
        checks.append(
            Check(f"alpha_normalized_{name}", bool(abs(alpha.sum() - 1.0) <= 1e-9),
                  float(alpha.sum()), 1.0, "==",
                  "mixture weights over replayed trajectories sum to one"))

    rec_again = replay_order(dag, rewards, perms["sorted"], cfg, checkpoint_every=n)
    repeat_diff = float(np.abs(np.exp(rec_again.final_params.w) - finals["sorted"]).sum())
    checks.append(_exactly("identical_order_diff", repeat_diff, 0.0,
                           "same permutation twice is bitwise deterministic"))

    names = sorted(finals)
    diff_rows = []
    max_diff = 0.0
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            d = float(np.abs(finals[a] - finals[b]).sum())
            diff_rows.append((a, b, d))
            max_diff = max(max_diff, d)
    checks.append(Check("distinct_orders_differ", bool(max_diff > 0.0), max_diff, 0.0, ">=",
                        "strict positivity witnesses path dependence"))
    c_fit = max(ratios)
    checks.append(_info("fitted_C", c_fit,
                        detail="largest final-error over weighted-trajectory-error ratio"))

    return Summary(
        experiment="order",
        tables=(
            Table("orderdiffs", ("perm_a", "perm_b", "l1_diff"), tuple(diff_rows)),
            Table("alpha", ("perm", "kappa", "alpha_sum", "mix_residual", "lhs", "rhs", "ratio"),
                  tuple(alpha_rows)),
        ),
        checks=tuple(checks),
        records=tuple(records),
    )


# -------------------------------------------------------------- error accum


def run_error_accum(spec: ExperimentSpec) -> Summary:
    """Growth of trajectory-flow error with length under per-edge noise.

    Oracle-exact chain parameters are perturbed by iid noise of scale delta
    on the log flows; the squared trajectory-flow error is compared to the
    summed per-edge squared errors.  A geometric growth factor and envelope
    constant are fitted on the lower half of the length grid and the bound
    is then validated on the held-out upper half.  Common random numbers
    nest the length cells (length L uses the first L noise columns), so the
    per-length ratios vary smoothly.
    """
    l_grid = sorted(int(v) for v in spec.grid_values("L", (2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0)))
    delta = float(spec.grid_values("delta", (0.01,))[0])
    draws = int(spec.grid_values("draws", (1000.0,))[0])
    l_max = max(l_grid + [1])
    rng = _mc_rng(spec.seed, 0xACC)
    xi = rng.standard_normal((draws, l_max))

    def traj_sq_err(cols: np.ndarray) -> np.ndarray:
        return (np.exp(delta * cols.sum(axis=1)) - 1.0) ** 2

    def edge_sq_err_sum(cols: np.ndarray) -> float:
        return float(((np.exp(delta * cols) - 1.0) ** 2).mean(axis=0).sum())

    # exact identities at the degenerate corners
    y1 = traj_sq_err(xi[:, :1]).mean()
    x1 = edge_sq_err_sum(xi[:, :1])
    checks = [
        _exactly("delta_zero_both_sides", 0.0 if delta == 0.0 else float(
            abs((np.exp(0.0 * xi[:, :2].sum(axis=1)) - 1.0) ** 2).sum()), 0.0,
            "zero perturbation leaves both error measures identically zero"),
        _exactly("length_one_equality", float(y1 - x1), 0.0,
                 "a one-edge trajectory's error is the edge error itself"),
    ]

    ys, xs_ = [], []
    for length in l_grid:
        cols = xi[:, :length]
        ys.append(float(traj_sq_err(cols).mean()))
        xs_.append(edge_sq_err_sum(cols))
    ratios = [y / x for y, x in zip(ys, xs_)]

    n_fit = (len(l_grid) + 1) // 2
    fit_ls, held_ls = l_grid[:n_fit], l_grid[n_fit:]
    if delta > 0:
        gfit = fits.fit_linlog([float(l) for l in fit_ls], ratios[:n_fit])
        gamma = max(math.exp(gfit.slope) - 1.0, 0.0)
        # conservative envelope: worst fitted-half ratio inflated by 3x the
        # relative Monte-Carlo standard error of the trajectory estimate
        rel_se = max(
            float(traj_sq_err(xi[:, :l]).std() / math.sqrt(draws) /
                  traj_sq_err(xi[:, :l]).mean())
            for l in fit_ls
        )
        c_env = max(
            r / (1.0 + gamma) ** l for r, l in zip(ratios[:n_fit], fit_ls)
        ) * (1.0 + 3.0 * rel_se)
    else:
        gamma, c_env, rel_se = 0.0, 1.0, 0.0

    rows = []
    for length, y, x in zip(l_grid, ys, xs_):
        rhs = c_env * (1.0 + gamma) ** length * x
        held = length in held_ls
        rows.append((length, y, x, y / x if x else math.nan, rhs, int(held)))
        if held and delta > 0:
            checks.append(_bounded(f"held_out_L{length}", y, rhs,
                                   "trajectory error within the calibrated envelope"))
    checks.append(_info("fitted_gamma", gamma, detail="geometric growth factor"))
    checks.append(_info("fitted_C", c_env, detail=f"envelope constant (rel SE {rel_se:.3g})"))

    return Summary(
        experiment="error_accum",
        tables=(Table("accum",
                      ("L", "traj_sq_err", "edge_sq_err_sum", "ratio", "bound_rhs", "held_out"),
                      tuple(rows)),),
        checks=tuple(checks),
        series=(
            Series("accum", "trajectory error vs accumulation bound", "length L",
                   "mean squared error",
                   (("measured", tuple(map(float, l_grid)), tuple(ys)),
                    ("bound", tuple(map(float, l_grid)),
                     tuple(c_env * (1.0 + gamma) ** l * x for l, x in zip(l_grid, xs_)))),
                   logy=True),
        ),
        notes=(f"delta={delta:g}, draws={draws}, fit lengths {fit_ls}, held out {held_ls}",),
    )


# ---------------------------------------------------------- noise: objective


_NOISE_ENVS: tuple[tuple[str, str, Mapping[str, str]], ...] = (
    ("fan", "fan", {"rewards": "1,3"}),
    ("grid22", "grid", {"dim": "2", "side": "2"}),
)


def _pretrained_tb(dag: Dag, rewards: RewardTable, seed: int) -> LogFlowParams:
    cfg = TrainConfig(objective="tb", schedule="inv_sqrt", eta0=0.5,
                      steps=20_000, sampling_mode="on_policy", seed=seed)
    rec = train(dag, rewards, cfg, checkpoint_every=20_000, track_exact=False)
    return rec.final_params


def _noisy_rewards(
    dag: Dag, rewards: RewardTable, sigma2: float, xi: np.ndarray
) -> tuple[np.ndarray, int]:
    """Reward draws R + sigma*xi clamped at the noise floor; returns the
    (draws, n_terminals) matrix aligned with ``dag.terminals`` and the
    clamp count."""
    base = rewards.values(dag)
    floor = rewards.r_min / 10.0
    r = base[None, :] + math.sqrt(sigma2) * xi
    clamps = int((r < floor).sum())
    return np.maximum(r, floor), clamps


def run_noise_objective(spec: ExperimentSpec) -> Summary:
    """Expected increase of the trajectory-ratio loss under reward noise.

    Parameters are pretrained to convergence on the true rewards; the loss
    increase E[L(theta, R_noisy) - L(theta, R)] is then estimated over iid
    noise draws (exhaustive trajectory evaluation, forward-policy weights)
    and compared against Z^2 sigma^2 / R_min^4 with the configured slack.
    The same standard-normal draws are scaled across the sigma^2 grid, so
    the linearity check is not washed out by Monte-Carlo noise.
    """
    sigma2_grid = tuple(spec.sigma2) if spec.sigma2 else (1e-4, 1e-3, 1e-2)
    draws = int(spec.grid_values("draws", (1000.0,))[0])
    env_menu = _NOISE_ENVS if spec.env is None else (("env", spec.env, dict(spec.env_params)),)

    rows: list[tuple] = []
    checks: list[Check] = []
    series_lines = []
    for label, env_name, env_params in env_menu:
        dag, rewards = build_env(env_name, dict(env_params))
        params = _pretrained_tb(dag, rewards, spec.seed)
        table = oracle.enumerate_trajectories(dag, rewards)
        probs = table.forward_probs(params, dag)
        ratio_num = probs * math.exp(params.zeta)  # P_F(tau) e^zeta per trajectory
        term_idx = np.array([dag.terminal_index(t.states[-1]) for t in table.trajectories])

        xi = _mc_rng(spec.seed, 0x0B1).standard_normal((draws, len(dag.terminals)))
        # the clean reference is the same Monte-Carlo functional evaluated at
        # zero noise, so the sigma^2 = 0 increase is zero by the arithmetic
        # itself, not by a tolerance
        r_zero, _ = _noisy_rewards(dag, rewards, 0.0, xi)
        zero_losses = ((ratio_num[None, :] / r_zero[:, term_idx] - 1.0) ** 2) @ probs
        base_loss = float(zero_losses.mean())
        checks.append(_exactly(f"{label}_zero_noise_increase",
                               float(zero_losses.mean() - base_loss), 0.0,
                               "the zero-noise draw path reproduces the clean loss exactly"))
        per_sigma = []
        z, rmin = rewards.z_r, rewards.r_min
        for s2 in sigma2_grid:
            r_mat, clamps = _noisy_rewards(dag, rewards, s2, xi)
            r_traj = r_mat[:, term_idx]
            losses = ((ratio_num[None, :] / r_traj - 1.0) ** 2) @ probs
            estimate = float(losses.mean() - base_loss)
            bound = z * z * s2 / rmin**4
            clamp_rate = clamps / r_mat.size
            flagged = clamp_rate > 0.01
            rows.append((label, s2, estimate, bound, estimate / bound, clamp_rate, int(flagged)))
            per_sigma.append((s2, estimate, flagged))
            if not flagged:
                checks.append(_bounded(
                    f"{label}_s2={s2:g}", estimate, bound * (1.0 + spec.slack),
                    f"loss increase vs bound with {spec.slack:.0%} slack"))
            sigma = math.sqrt(s2)
            if sigma > rmin / 10.0:
                checks.append(_info(f"{label}_s2={s2:g}_regime", sigma, rmin / 10.0,
                                    "outside the small-noise regime; bound recorded only"))
        good = [(s2, est) for s2, est, flagged in per_sigma if not flagged and est > 0]
        if len(good) >= 2:
            scaled = [est / s2 for s2, est in good]
            spread = max(scaled) / min(scaled)
            checks.append(_bounded(
                f"{label}_linearity", spread, 1.0 + spec.slack,
                "estimate/sigma^2 constant within the slack tolerance; "
                "second-order corrections reach ~12% at the regime edge"))
        series_lines.append((f"{label} estimate",
                             tuple(s2 for s2, _, _ in per_sigma),
                             tuple(e for _, e, _ in per_sigma)))
        series_lines.append((f"{label} bound",
                             tuple(sigma2_grid),
                             tuple(z * z * s2 / rmin**4 for s2 in sigma2_grid)))
        if label == "fan":
            checks.append(_exactly("fan_bound_formula",
                                   z * z * 1e-2 / rmin**4, 0.16,
                                   "bound value at sigma^2 = 0.01 with Z = 4, R_min = 1"))

    return Summary(
        experiment="noise_objective",
        tables=(Table("noiseobj",
                      ("env", "sigma2", "estimate", "bound", "estimate_over_bound",
                       "clamp_rate", "flagged"),
                      tuple(rows)),),
        checks=tuple(checks),
        series=(Series("noiseobj", "loss increase under reward noise", "sigma^2",
                       "E[loss increase]", tuple(series_lines), logx=True, logy=True),),
        notes=(f"draws={draws}; pretraining: tb inv_sqrt eta0=0.5 T=20000",),
    )


# -------------------------------------------------------------- noise: drift


def run_noise_drift(spec: ExperimentSpec) -> Summary:
    """Divergence between terminal laws trained on noisy vs true rewards.

    Uses the closed-form converged law (rewards normalized by their sum) per
    noise realization, so the measurement isolates the reward corruption from
    optimization error.  The expected divergence is compared to
    (sigma^2/2)(1/R_min^2 + |S_T|/Z_R^2) with slack; rescaling all rewards
    by 2 shrinks the bound fourfold and the measured divergence with it.

    With ``spec.retrain`` a conservation-objective run is trained per noise
    realization instead (the literal premise), with fewer draws by default;
    the bound comparison is then recorded rather than asserted because the
    Monte-Carlo error at that draw count no longer supports a sharp verdict.
    """
    sigma2_grid = tuple(spec.sigma2) if spec.sigma2 else (1e-4, 1e-3, 1e-2)
    draws = int(spec.grid_values("draws", (32.0,) if spec.retrain else (1000.0,))[0])
    env_menu = _NOISE_ENVS if spec.env is None else (("env", spec.env, dict(spec.env_params)),)

    rows: list[tuple] = []
    checks: list[Check] = []
    series_lines = []

    def retrained_law(dag: Dag, rewards: RewardTable) -> np.ndarray:
        cfg = TrainConfig(objective="fm", schedule="constant", eta0=0.2,
                          steps=5000, sampling_mode="exhaustive", seed=spec.seed)
        rec = train(dag, rewards, cfg, checkpoint_every=cfg.steps, track_exact=False)
        return oracle.terminal_distribution_of_params(rec.final_params, dag)

    def mean_kl(dag: Dag, rewards: RewardTable, s2: float, xi: np.ndarray) -> tuple[float, float]:
        r_mat, clamps = _noisy_rewards(dag, rewards, s2, xi)
        if spec.retrain:
            # train on each corrupted reward; the clean reference goes through
            # the same trained map so residual optimization error cancels.
            # Both sides are rescaled by one clean-derived constant: the
            # converged law is invariant under uniform reward scaling, and the
            # normalization keeps the constant-step dynamics in the stable
            # regime whatever the reward magnitude
            scale = rewards.z_r / 4.0
            p = retrained_law(dag, rewards.replace(
                {t: r / scale for t, r in rewards.rewards.items()}))
            kls = []
            for row in r_mat:
                noisy = rewards.replace(
                    {t: float(row[dag.terminal_index(t)]) / scale for t in dag.terminals})
                kls.append(oracle.kl_divergence(retrained_law(dag, noisy), p))
            return float(np.mean(kls)), clamps / r_mat.size
        # the clean law is normalized exactly as the noisy rows are, so the
        # zero-noise divergence vanishes by the arithmetic itself
        base = rewards.values(dag)
        p = base / base.sum()
        p_noisy = r_mat / r_mat.sum(axis=1, keepdims=True)
        kls = (p_noisy * (np.log(p_noisy) - np.log(p)[None, :])).sum(axis=1)
        return float(np.maximum(kls, 0.0).mean()), clamps / r_mat.size

    def bound(rewards: RewardTable, s2: float) -> float:
        n_t = len(rewards.rewards)
        return (s2 / 2.0) * (1.0 / rewards.r_min**2 + n_t / rewards.z_r**2)

    for label, env_name, env_params in env_menu:
        dag, rewards = build_env(env_name, dict(env_params))
        xi = _mc_rng(spec.seed, 0xD41F).standard_normal((draws, len(dag.terminals)))
        checks.append(_exactly(f"{label}_zero_noise_kl", mean_kl(dag, rewards, 0.0, xi)[0], 0.0,
                               "no noise leaves the terminal law untouched"))
        kls = []
        for s2 in sigma2_grid:
            est, clamp_rate = mean_kl(dag, rewards, s2, xi)
            b = bound(rewards, s2)
            flagged = clamp_rate > 0.01
            rows.append((label, s2, est, b, est / b, clamp_rate, int(flagged)))
            kls.append((s2, est))
            if spec.retrain:
                checks.append(_info(f"{label}_s2={s2:g}", est, b * (1.0 + spec.slack),
                                    "retrained divergence vs slackened bound (recorded only)"))
            elif not flagged:
                checks.append(_bounded(f"{label}_s2={s2:g}", est, b * (1.0 + spec.slack),
                                       f"expected divergence vs bound with {spec.slack:.0%} slack"))
        series_lines.append((f"{label} estimate", tuple(s for s, _ in kls), tuple(k for _, k in kls)))
        series_lines.append((f"{label} bound", tuple(sigma2_grid),
                             tuple(bound(rewards, s2) for s2 in sigma2_grid)))
        if label == "fan":
            checks.append(_exactly("fan_bound_formula", bound(rewards, 1e-2), 0.005625,
                                   "bound value at sigma^2 = 0.01 with R_min = 1, "
                                   "|S_T| = 2, Z_R = 4"))
            doubled = rewards.replace({t: 2.0 * r for t, r in rewards.rewards.items()})
            s2_top = sigma2_grid[-1]
            checks.append(_exactly("fan_doubling_bound_factor",
                                   bound(doubled, s2_top) / bound(rewards, s2_top), 0.25,
                                   "uniform reward doubling shrinks the bound fourfold"))
            kl_doubled, _ = mean_kl(dag, doubled, s2_top, xi)
            kl_orig = dict(kls)[s2_top]
            checks.append(_info("fan_doubling_kl_shrink",
                                kl_orig / kl_doubled if kl_doubled > 0 else math.inf,
                                detail="measured divergence shrink under doubled rewards "
                                       "(recorded monotonicity)"))

    return Summary(
        experiment="noise_drift",
        tables=(Table("noisedrift",
                      ("env", "sigma2", "mean_kl", "bound", "kl_over_bound",
                       "clamp_rate", "flagged"),
                      tuple(rows)),),
        checks=tuple(checks),
        series=(Series("noisedrift", "terminal-law divergence under reward noise",
                       "sigma^2", "E[KL]", tuple(series_lines), logx=True, logy=True),),
        notes=(f"draws={draws}; "
               + ("retrained per realization (conservation objective, exhaustive)"
                  if spec.retrain else "closed-form converged law per realization"),),
    )


# ------------------------------------------------------ noise: sample ratio


def run_noise_sample_ratio(spec: ExperimentSpec) -> Summary:
    """Extra samples needed when training against a corrupted reward.

    Each seed trains twice per accuracy target: once on the true rewards and
    once per noise scale on a single fixed noisy realization (the corrupted
    function the learner actually optimizes).  The per-seed sample-count
    ratios are summarized by their median (isotonic and unit-at-zero
    assertions) and by the conservative 0.9 quantile, the probably-
    approximately-correct quantity whose fitted noise term shows the
    inverse-square accuracy dependence.
    """
    dag, rewards = spec.resolve_env("fan", {"rewards": "1,3"})
    sigma2_grid = tuple(spec.sigma2) if spec.sigma2 else (0.0, 1e-4, 1e-3, 1e-2)
    if sigma2_grid[0] != 0.0:
        sigma2_grid = (0.0,) + tuple(s for s in sigma2_grid if s > 0.0)
    eps_grid = tuple(spec.eps) if spec.eps else (0.026, 0.052)
    eps_grid = tuple(sorted(eps_grid))
    seeds = spec.seed_list(100)
    z, rmin = rewards.z_r, rewards.r_min

    rows: list[tuple] = []
    checks: list[Check] = []
    censored = 0
    series_lines = []
    terms: dict[float, float] = {}
    for eps in eps_grid:
        # the baseline bypasses the noise machinery entirely; the sigma^2 = 0
        # cell goes through it, so a unit ratio certifies the noise path is
        # inert at zero noise rather than restating a tautology
        base = [
            _stop_run(
                dag, rewards,
                TrainConfig(objective="tb", schedule="constant", eta0=0.04,
                            steps=_CAP, sampling_mode="on_policy", seed=seed),
                "terminal_tv", eps,
            )
            for seed in seeds
        ]
        ns: dict[float, list[int]] = {}
        for s2 in sigma2_grid:
            noise = NoiseConfig(kind="gaussian", sigma2=s2, resample="fixed_realization")
            ns[s2] = [
                _stop_run(
                    dag, rewards,
                    TrainConfig(objective="tb", schedule="constant", eta0=0.04,
                                steps=_CAP, sampling_mode="on_policy", seed=seed),
                    "terminal_tv", eps, noise=noise,
                )
                for seed in seeds
            ]
        med_curve, q_curve = [], []
        for s2 in sigma2_grid:
            capped = sum(1 for n in ns[s2] if n >= _CAP)
            censored += capped
            ratio = [b / a for a, b in zip(base, ns[s2])]
            med_curve.append(fits.median(ratio))
            q_curve.append(fits.quantile_upper(ratio, 0.9))
            rows.append((eps, s2, fits.median(ns[s2]), med_curve[-1], q_curve[-1], capped))
        checks.append(_exactly(f"eps={eps:g}_zero_ratio", med_curve[0], 1.0,
                               "same procedure and seeds at zero noise"))
        checks.append(Check(
            f"eps={eps:g}_isotonic", fits.is_nondecreasing(med_curve, tol=0.0),
            float(min(np.diff(med_curve), default=0.0)), 0.0, ">=",
            "median ratio nondecreasing across the noise grid"))
        xs = [z * z * s2 / (eps * eps * rmin**4) for s2 in sigma2_grid[1:]]
        _, r2_med = fits.fit_through_origin(xs, [m - 1.0 for m in med_curve[1:]])
        checks.append(_at_least(f"eps={eps:g}_median_fit_r2", r2_med, 0.5,
                                "through-origin noise-term model explains the medians"))
        c_q, r2_q = fits.fit_through_origin(xs, [m - 1.0 for m in q_curve[1:]])
        terms[eps] = c_q * xs[-1]
        checks.append(_info(f"eps={eps:g}_q90_fit_r2", r2_q,
                            detail="same model on the 0.9-quantile ratios"))
        series_lines.append((f"eps={eps:g} median", tuple(sigma2_grid[1:]),
                             tuple(med_curve[1:])))
        series_lines.append((f"eps={eps:g} q90", tuple(sigma2_grid[1:]),
                             tuple(q_curve[1:])))
    if len(eps_grid) >= 2:
        lo, hi = eps_grid[0], eps_grid[-1]
        if hi != 2 * lo:
            checks.append(_info("eps_pair_not_doubling", hi / lo,
                                detail="accuracy pair is not a doubling; shrink not asserted"))
        else:
            shrink = terms[lo] / terms[hi] if terms[hi] > 0 else math.inf
            checks.append(Check("noise_term_shrink", bool(2.0 <= shrink <= 8.0), shrink, 4.0,
                                "==", "fitted quantile noise term shrink when the accuracy "
                                "target doubles; band [2, 8] around the inverse-square "
                                "prediction"))

    return Summary(
        experiment="noise_sample_ratio",
        tables=(Table("ratio",
                      ("eps", "sigma2", "median_n", "median_ratio", "q90_ratio",
                       "censored_runs"),
                      tuple(rows)),),
        checks=tuple(checks),
        series=(Series("ratio", "sample-count inflation under reward corruption",
                       "sigma^2", "N ratio vs zero noise", tuple(series_lines),
                       logx=True),),
        censored=censored,
        notes=("fixed noisy realization per seed; gaussian reward noise "
               "with floor R_min/10",),
    )


# ------------------------------------------------------------ regularization


def _conservation_null_direction(system: oracle.IncidenceSystem) -> np.ndarray:
    """A sup-normalized direction along which flows stay feasible."""
    _, s, vt = np.linalg.svd(system.a)
    null = vt[len(s[s > 1e-12]):]
    if null.size == 0:
        raise ValueError("environment has no flow degree of freedom")
    v = null[0]
    # canonical sign and scale for determinism
    lead = v[np.argmax(np.abs(v) > 1e-12)]
    v = v * (1.0 if lead > 0 else -1.0)
    return v / np.abs(v).max()


def _joint_distributions(
    dag: Dag, flow: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Forward and backward joint transition laws of a feasible flow.

    The forward joint puts mass F(e)/S on each transition; the backward
    joint splits each state's inflow uniformly over its parents.  Both
    normalize to one for any feasible flow because every edge enters exactly
    one non-source state.
    """
    s_total = flow.sum()
    j_f = flow / s_total
    j_b = np.empty_like(flow)
    for e, (_, head) in enumerate(dag.edges):
        inflow = sum(flow[x] for x in dag.in_adjacency[head])
        j_b[e] = inflow / (len(dag.in_adjacency[head]) * s_total)
    return j_f, j_b


def run_regularization(spec: ExperimentSpec) -> Summary:
    """Entropy selection of flow training and the balance-loss/KL match.

    Part one trains the conservation objective from several inits and
    reports the entropy gap to the maximum-entropy feasible flow; from the
    symmetric zero init the trained flows must match the max-entropy flows.
    Part two perturbs a balanced flow along a conservation-preserving
    direction and verifies that the balance loss (weighted by the backward
    joint) agrees with twice the forward/backward joint divergence beyond
    second order: the quadratic-normalized gap shrinks superquadratically.
    """
    dag, rewards = spec.resolve_env("diamond", {})
    system = oracle.build_incidence(dag, rewards)
    maxent = oracle.max_entropy_flow(system, dag)
    z = rewards.z_r

    entropy_rows: list[tuple] = []
    checks: list[Check] = []
    records = []
    n_inits = int(spec.grid_values("inits", (4.0,))[0])
    inits: list[tuple[str, TrainConfig]] = [("zero", TrainConfig(
        objective="fm", schedule="constant", eta0=0.2, steps=10_000,
        sampling_mode="exhaustive", seed=spec.seed))]
    for i in range(n_inits):
        inits.append((f"uniform{i}", TrainConfig(
            objective="fm", schedule="constant", eta0=0.2, steps=10_000,
            sampling_mode="exhaustive", seed=spec.seed + i,
            init="uniform", init_scale=0.5)))
    for name, cfg in inits:
        rec = train(dag, rewards, cfg, checkpoint_every=cfg.steps, track_exact=True)
        if name == "zero":
            records.append(("fm_zero_init", rec))
        f = np.exp(rec.final_params.w)
        residual = oracle.feasibility_residual(system, f)
        gap = maxent.entropy - oracle.flow_entropy(f, z)
        l1 = float(np.abs(f - maxent.edge_flows).sum())
        entropy_rows.append((name, oracle.flow_entropy(f, z), gap, residual, l1))
        if name == "zero":
            checks.append(_bounded("zero_init_matches_maxent", l1, 1e-3,
                                   "symmetric dynamics select the max-entropy flow"))

    base_flow = oracle.uniform_backward_flow(dag, rewards)
    direction = _conservation_null_direction(system)
    delta_grid = tuple(spec.grid_values("delta", (0.1, 0.05, 0.025)))
    edges = list(range(dag.n_edges))
    db_rows: list[tuple] = []
    ratio_by_delta: dict[float, float] = {}
    for delta in (0.0,) + delta_grid:
        flow = base_flow + delta * direction
        if np.any(flow <= 0):
            raise ValueError(f"perturbation {delta} leaves the positive cone")
        j_f, j_b = _joint_distributions(dag, flow)
        params = LogFlowParams(np.log(flow), 0.0)
        l_db = objectives.db_loss_grad(params, dag, rewards, edges, weights=j_b).loss
        kl = oracle.kl_divergence(j_f, j_b)
        diff = abs(l_db - 2.0 * kl)
        ratio = diff / delta**2 if delta > 0 else 0.0
        ratio_by_delta[delta] = ratio
        db_rows.append((delta, l_db, 2.0 * kl, diff, ratio))
        if delta == 0.0:
            checks.append(_exactly("balanced_loss_zero", l_db, 0.0,
                                   "exact balance gives zero loss"))
            checks.append(_exactly("balanced_kl_zero", kl, 0.0,
                                   "identical joints give zero divergence"))
    ordered = sorted(delta_grid, reverse=True)
    for big, small in zip(ordered, ordered[1:]):
        if not math.isclose(big, 2.0 * small):
            checks.append(_info(f"delta_pair_{big:g}_{small:g}", big / small,
                                detail="not a halving pair; ratio test skipped"))
            continue
        checks.append(_bounded(
            f"superquadratic_{big:g}_to_{small:g}",
            ratio_by_delta[small], 0.6 * ratio_by_delta[big],
            "quadratic-normalized gap at least nearly halves when the "
            "perturbation halves"))

    return Summary(
        experiment="regularization",
        tables=(
            Table("entropy", ("init", "entropy", "gap_to_maxent", "residual", "l1_to_maxent"),
                  tuple(entropy_rows)),
            Table("dbkl", ("delta", "db_loss", "two_kl", "abs_diff", "ratio_over_delta_sq"),
                  tuple(db_rows)),
        ),
        checks=tuple(checks),
        series=(
            Series("dbkl", "balance loss vs twice the joint divergence",
                   "perturbation scale delta", "value",
                   (("db_loss", delta_grid, tuple(r[1] for r in db_rows if r[0] > 0)),
                    ("two_kl", delta_grid, tuple(r[2] for r in db_rows if r[0] > 0))),
                   logx=True, logy=True),
        ),
        records=tuple(records),
    )


# --------------------------------------------------------------------- audit


def run_audit(spec: ExperimentSpec) -> Summary:
    """Structural audit and empirical constants of the bundled environments.

    Checks state coverage, per-trajectory constraint rank and error
    correlations under a parameter probe, and tabulates the gradient and
    flow constants."""
    probe = float(spec.grid_values("probe", (0.01,))[0])
    if spec.env is not None:
        env_menu = [("env", spec.env, dict(spec.env_params))]
    else:
        env_menu = [("chain4", "chain", {"length": "4", "reward": "2.0"}),
                    ("diamond", "diamond", {})]

    audit_rows: list[tuple] = []
    const_rows: list[tuple] = []
    checks: list[Check] = []
    for label, env_name, env_params in env_menu:
        dag, rewards = build_env(env_name, dict(env_params))
        table = oracle.enumerate_trajectories(dag, rewards)
        params = LogFlowParams(np.zeros(dag.n_edges), 0.0)
        report = oracle.audit_assumptions(dag, table, params, probe, seed=spec.seed)
        zero_report = oracle.audit_assumptions(dag, table, params, 0.0, seed=spec.seed)
        consts = oracle.estimate_constants(params, dag, rewards, table)
        audit_rows.append((label, report["min_visit_scaled"], report["rank_ratio_min"],
                           report["rank_ratio_mean"], report["rho"],
                           report["traj_err_slope"]))
        const_rows.append((label, consts["g_fm"], consts["g_db"], consts["g_tb"],
                           consts["k"], consts["m"], consts["M"],
                           consts["min_transition"]))
        checks.append(_exactly(
            f"{label}_zero_probe_silent",
            max(abs(v) for v in zero_report["err_corr"].values()) + abs(
                zero_report["traj_err_slope"]),
            0.0, "an unperturbed model shows no error correlation"))
        if env_name == "chain":
            checks.append(_exactly(f"{label}_full_coverage",
                                   report["min_visit_scaled"], float(dag.n_states),
                                   "every chain state is visited with probability one"))
            checks.append(_exactly(f"{label}_rank_ratio", report["rank_ratio_min"], 1.0,
                                   "a path's incidence submatrix has full column rank"))
        checks.append(_info(f"{label}_rho", report["rho"],
                            detail="fitted geometric decay of error correlations"))

    return Summary(
        experiment="audit",
        tables=(
            Table("audit", ("env", "min_visit_scaled", "rank_ratio_min", "rank_ratio_mean",
                            "rho", "traj_err_slope"), tuple(audit_rows)),
            Table("constants", ("env", "g_fm", "g_db", "g_tb", "k", "m", "M",
                                "min_transition"), tuple(const_rows)),
        ),
        checks=tuple(checks),
        notes=(f"probe scale {probe:g}; policy: uniform (zero parameters)",),
    )


EXPERIMENTS: dict[str, Callable[[ExperimentSpec], Summary]] = {
    "convergence": run_convergence,
    "sample_complexity": run_sample_complexity,
    "order": run_order,
    "error_accum": run_error_accum,
    "noise_objective": run_noise_objective,
    "noise_drift": run_noise_drift,
    "noise_sample_ratio": run_noise_sample_ratio,
    "regularization": run_regularization,
    "audit": run_audit,
}


def run_experiment(spec: ExperimentSpec) -> Summary:
    return EXPERIMENTS[spec.experiment](spec)
