"""Coupled fine/coarse level pairs and the multilevel estimator.

Level l pairs a fine system (step h_l = T N^-l) with a coarse system
(step h_{l-1} = T N^-(l-1)) driven by the same Gaussian increments: over
each coarse interval the fine system takes N sub-steps with fresh blocks
xi_0..xi_{N-1}, and the coarse system takes one step whose noise term is
``epsilon * sqrt(h_l) * g * sum_k xi_k``, coefficients frozen at the start
of the interval. Each system keeps its own empirical measure.

The sampling unit everywhere is one independent particle system of M
particles; the observable is averaged within a system, and systems are
i.i.d. across the per-level sample index. Cost is counted as the number of
scalar Gaussian draws: the coarse path reuses the fine draws, so one level-l
sample costs M * d_bar * N^l (one step of size T at level 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ShapeError
from .measure import ParticleCloud, sorted_mean
from .model import ModelSpec, TestFunction, builtin_test_function
from .em_engine import em_step, SimulationGrid, strong_error_curve, _run_path
from .parallel import ordered_map
from .rng import (
    DOMAIN_CHAOS,
    DOMAIN_LEVEL_PAIR,
    DOMAIN_LEVEL_ZERO,
    DOMAIN_PSI_VARIANCE,
    stream,
)
from . import stats

#: default depth cap for the adaptive estimator
DEFAULT_MAX_LEVEL = 8
#: default number of pilot systems per level
DEFAULT_PILOT_SAMPLES = 32


@dataclass(frozen=True)
class LevelConfig:
    """Geometry of one level pair; step counts are integers by construction."""

    refinement_n: int
    level: int
    horizon: float

    def __post_init__(self):
        if self.refinement_n < 2:
            raise ConfigurationError(f"refinement_n must be >= 2, got {self.refinement_n}")
        if self.level < 0:
            raise ConfigurationError(f"level must be >= 0, got {self.level}")
        if not self.horizon > 0:
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")

    @property
    def fine_steps(self) -> int:
        return self.refinement_n**self.level

    @property
    def coarse_steps(self) -> int:
        return self.refinement_n ** (self.level - 1)

    @property
    def h_fine(self) -> float:
        return self.horizon / self.fine_steps

    @property
    def h_coarse(self) -> float:
        return self.horizon / self.coarse_steps


@dataclass
class CoupledLevelState:
    """Fine and coarse clouds advancing in lockstep over the coarse grid."""

    fine: ParticleCloud
    coarse: ParticleCloud
    coarse_time_index: int = 0

    @classmethod
    def initial(cls, model: ModelSpec, m_particles: int) -> "CoupledLevelState":
        start = ParticleCloud.at(model.x0, m_particles)
        return cls(fine=start, coarse=start, coarse_time_index=0)


@dataclass
class LevelStatistics:
    level: int
    samples: int
    mean_diff: float
    var_diff: float
    rng_cost: int


@dataclass
class MlmcReport:
    estimate: float
    per_level: list[LevelStatistics]
    total_cost: int
    target_delta: float
    allocation: list[int]
    flags: list[str] = field(default_factory=list)


def cost_per_sample(cfg: LevelConfig, m_particles: int, d_bar: int) -> int:
    """Scalar Gaussian draws one sample consumes: M * d_bar * N^level."""
    return m_particles * d_bar * cfg.refinement_n**cfg.level


def coupled_coarse_interval(model: ModelSpec, state: CoupledLevelState, cfg: LevelConfig,
                            gaussians: np.ndarray) -> CoupledLevelState:
    """Advance both systems across one coarse interval.

    ``gaussians`` holds the N standard-normal sub-step blocks, shape
    (N, M, d_bar). The fine system consumes them one by one; the coarse
    system consumes their sum, scaled by sqrt(h_fine), in a single step
    with drift and diffusion frozen at the interval start.
    """
    n_ref = cfg.refinement_n
    xi = np.asarray(gaussians, dtype=float)
    m = state.fine.m
    if xi.shape != (n_ref, m, model.d_bar):
        raise ShapeError(
            f"gaussians have shape {xi.shape}, expected {(n_ref, m, model.d_bar)}"
        )
    fine = state.fine
    for k in range(n_ref):
        fine = em_step(model, fine, cfg.h_fine, xi[k])

    coarse = state.coarse
    x = coarse.positions
    f = np.asarray(model.drift(x, coarse), dtype=float)
    g = np.asarray(model.diffusion(x, coarse), dtype=float)
    summed = xi.sum(axis=0)
    noise = np.einsum("mij,mj->mi", g, summed)
    new = x + f * cfg.h_coarse + model.epsilon * math.sqrt(cfg.h_fine) * noise
    coarse = ParticleCloud(new)

    return CoupledLevelState(fine=fine, coarse=coarse,
                             coarse_time_index=state.coarse_time_index + 1)


def _run_level_pair(model: ModelSpec, cfg: LevelConfig, m_particles: int,
                    gen: np.random.Generator) -> CoupledLevelState:
    state = CoupledLevelState.initial(model, m_particles)
    for _ in range(cfg.coarse_steps):
        xi = gen.standard_normal((cfg.refinement_n, m_particles, model.d_bar))
        state = coupled_coarse_interval(model, state, cfg, xi)
    return state


def simulate_level_pair(model: ModelSpec, cfg: LevelConfig, m_particles: int,
                        test_fn: TestFunction, seed: int,
                        sample_index: int = 0) -> tuple[float, float, int]:
    """One independent level-l >= 1 sample.

    Returns the system average of Psi(fine) - Psi(coarse) at the horizon,
    the fine-only system average, and the exact draw count M * d_bar * N^l.
    """
    if cfg.level < 1:
        raise ConfigurationError("simulate_level_pair requires level >= 1; use level0_sample")
    gen = stream(seed, DOMAIN_LEVEL_PAIR, cfg.level, sample_index)
    state = _run_level_pair(model, cfg, m_particles, gen)
    psi_f = test_fn.psi(state.fine.positions)
    psi_c = test_fn.psi(state.coarse.positions)
    diff = float(sorted_mean(psi_f - psi_c))
    fine = float(sorted_mean(psi_f))
    return diff, fine, cost_per_sample(cfg, m_particles, model.d_bar)


def level0_sample(model: ModelSpec, cfg: LevelConfig, m_particles: int,
                  test_fn: TestFunction, seed: int, sample_index: int = 0) -> tuple[float, int]:
    """One base-level sample: a single explicit step of size T."""
    if cfg.level != 0:
        raise ConfigurationError("level0_sample requires level == 0")
    gen = stream(seed, DOMAIN_LEVEL_ZERO, 0, sample_index)
    cloud = ParticleCloud.at(model.x0, m_particles)
    xi = gen.standard_normal((m_particles, model.d_bar))
    cloud = em_step(model, cloud, cfg.horizon, xi)
    return float(sorted_mean(test_fn.psi(cloud.positions))), m_particles * model.d_bar


def _level_samples(model: ModelSpec, level: int, refinement_n: int, m_particles: int,
                   test_fn: TestFunction, seed: int, first: int, count: int,
                   threads: int = 1) -> np.ndarray:
    """Per-system observable samples ``first .. first+count-1`` at one level.

    Level 0 yields plain system averages, levels >= 1 fine-coarse
    differences. Stream keys depend only on (seed, level, sample index), so
    extending a sample set never reshuffles earlier samples.
    """
    cfg = LevelConfig(refinement_n=refinement_n, level=level, horizon=model.horizon)

    if level == 0:
        def one(idx: int) -> float:
            return level0_sample(model, cfg, m_particles, test_fn, seed, idx)[0]
    else:
        def one(idx: int) -> float:
            return simulate_level_pair(model, cfg, m_particles, test_fn, seed, idx)[0]

    return np.array(ordered_map(one, range(first, first + count), threads=threads))


@dataclass
class LevelVarianceRow:
    level: int
    h_coarse: float
    var_diff: float
    ci_halfwidth: float
    mean_diff: float
    samples: int
    rng_cost: int


def coupled_variance_study(model: ModelSpec, levels: list[int], refinement_n: int,
                           m_particles: int, replications: int, test_fn: TestFunction,
                           seed: int, threads: int = 1) -> list[LevelVarianceRow]:
    """Sample variance of the coupled observable difference per level.

    The half-width is the normal approximation for a sample variance,
    z_0.95 * sqrt((m4 - s^4) / n) with m4 the fourth central moment.
    """
    if any(l < 1 for l in levels):
        raise ConfigurationError("coupled_variance_study requires levels >= 1")
    rows = []
    for level in levels:
        cfg = LevelConfig(refinement_n=refinement_n, level=level, horizon=model.horizon)
        xs = _level_samples(model, level, refinement_n, m_particles, test_fn, seed,
                            0, replications, threads)
        var = float(xs.var(ddof=1)) if replications > 1 else 0.0
        centered = xs - xs.mean()
        m4 = float(np.mean(centered**4))
        hw = 1.959963984540054 * math.sqrt(max(m4 - var**2, 0.0) / replications)
        rows.append(LevelVarianceRow(
            level=level,
            h_coarse=cfg.h_coarse,
            var_diff=var,
            ci_halfwidth=hw,
            mean_diff=float(xs.mean()),
            samples=replications,
            rng_cost=replications * cost_per_sample(cfg, m_particles, model.d_bar),
        ))
    return rows


@dataclass
class SecondMomentRow:
    level: int
    h_coarse: float
    second_moment: float
    samples: int
    rng_cost: int


def second_moment_study(model: ModelSpec, levels: list[int], refinement_n: int,
                        m_particles: int, replications: int, seed: int,
                        threads: int = 1) -> list[SecondMomentRow]:
    """Mean squared fine-coarse state gap |Y_fine(T) - Y_coarse(T)|^2 per level."""
    if any(l < 1 for l in levels):
        raise ConfigurationError("second_moment_study requires levels >= 1")
    rows = []
    for level in levels:
        cfg = LevelConfig(refinement_n=refinement_n, level=level, horizon=model.horizon)

        def one(idx: int) -> float:
            gen = stream(seed, DOMAIN_LEVEL_PAIR, level, idx)
            state = _run_level_pair(model, cfg, m_particles, gen)
            gap = np.sum((state.fine.positions - state.coarse.positions) ** 2, axis=1)
            return float(sorted_mean(gap))

        vals = np.array(ordered_map(one, range(replications), threads=threads))
        rows.append(SecondMomentRow(
            level=level,
            h_coarse=cfg.h_coarse,
            second_moment=float(vals.mean()),
            samples=replications,
            rng_cost=replications * cost_per_sample(cfg, m_particles, model.d_bar),
        ))
    return rows


def mlmc_estimate(model: ModelSpec, test_fn: TestFunction, target_delta: float,
                  refinement_n: int, m_particles: int,
                  pilot_samples: int = DEFAULT_PILOT_SAMPLES,
                  max_level: int = DEFAULT_MAX_LEVEL, seed: int = 0,
                  threads: int = 1) -> MlmcReport:
    """Adaptive multilevel estimate of E[Psi at the horizon].

    Pilot systems estimate the per-level variance V_l; the hierarchy deepens
    until the bias proxy |mean_diff_L| / (N - 1) falls below delta / sqrt(2)
    (the deepest difference stands in for the truncated tail under
    first-order weak decay) or ``max_level`` is reached, in which case the
    report is flagged ``bias_unconverged``. Samples are then topped up to

        K_l = ceil(delta^-2 sqrt(V_l / C_l) * sum_m sqrt(V_m C_m))

    with C_l the per-sample draw count; when every pilot variance is zero
    the allocation degenerates to the pilot sizes. The estimate is the plain
    telescoped sum of per-level means with no reweighting.
    """
    if target_delta <= 0:
        raise ConfigurationError("target_delta must be positive")
    if pilot_samples < 2:
        raise ConfigurationError("pilot_samples must be >= 2")
    if max_level < 1:
        raise ConfigurationError("max_level must be >= 1")

    samples: dict[int, np.ndarray] = {}

    def pilot(level: int):
        samples[level] = _level_samples(model, level, refinement_n, m_particles,
                                        test_fn, seed, 0, pilot_samples, threads)

    pilot(0)
    pilot(1)
    top = 1
    flags: list[str] = []
    bias_budget = target_delta / math.sqrt(2.0)
    while abs(float(samples[top].mean())) / (refinement_n - 1) > bias_budget:
        if top == max_level:
            flags.append("bias_unconverged")
            break
        top += 1
        pilot(top)

    levels = list(range(top + 1))
    costs = {l: cost_per_sample(LevelConfig(refinement_n=refinement_n, level=l,
                                            horizon=model.horizon),
                                m_particles, model.d_bar)
             for l in levels}
    variances = {l: float(samples[l].var(ddof=1)) for l in levels}

    if all(v <= 0.0 for v in variances.values()):
        allocation = {l: pilot_samples for l in levels}
    else:
        weight = sum(math.sqrt(variances[l] * costs[l]) for l in levels)
        allocation = {}
        for l in levels:
            k = math.ceil(target_delta**-2 * math.sqrt(variances[l] / costs[l]) * weight)
            allocation[l] = max(k, pilot_samples)

    for l in levels:
        extra = allocation[l] - len(samples[l])
        if extra > 0:
            more = _level_samples(model, l, refinement_n, m_particles, test_fn, seed,
                                  len(samples[l]), extra, threads)
            samples[l] = np.concatenate([samples[l], more])

    per_level = []
    for l in levels:
        xs = samples[l]
        per_level.append(LevelStatistics(
            level=l,
            samples=len(xs),
            mean_diff=float(xs.mean()),
            var_diff=float(xs.var(ddof=1)),
            rng_cost=len(xs) * costs[l],
        ))
    estimate = float(sum(row.mean_diff for row in per_level))
    total_cost = int(sum(row.rng_cost for row in per_level))
    return MlmcReport(
        estimate=estimate,
        per_level=per_level,
        total_cost=total_cost,
        target_delta=target_delta,
        allocation=[allocation[l] for l in levels],
        flags=flags,
    )


@dataclass
class CostCompareRow:
    delta: float
    epsilon: float
    mc_cost: int
    mlmc_cost: int
    mc_steps: int
    mlmc_levels: int


def _psi_system_variance(model: ModelSpec, steps: int, m_particles: int,
                         test_fn: TestFunction, seed: int, replications: int) -> float:
    """Variance of the system-averaged observable for plain fixed-step runs."""
    grid = SimulationGrid.from_steps(model.horizon, steps)
    vals = []
    for rep in range(replications):
        gen = stream(seed, DOMAIN_PSI_VARIANCE, rep)
        rec = _run_path(model, grid, m_particles, gen, store="terminal")
        vals.append(float(sorted_mean(test_fn.psi(rec.clouds[-1].positions))))
    return float(np.var(np.array(vals), ddof=1))


def cost_compare(model: ModelSpec, test_fn: TestFunction, delta_list: list[float],
                 epsilon_list: list[float], refinement_n: int, m_particles: int,
                 pilot_samples: int = DEFAULT_PILOT_SAMPLES,
                 max_level: int = DEFAULT_MAX_LEVEL, seed: int = 0,
                 threads: int = 1) -> list[CostCompareRow]:
    """Draw-count comparison of single-level MC against the multilevel estimator.

    The multilevel cost is the total recorded by ``mlmc_estimate``. The MC
    comparator is the closed-form count samples * M * d_bar * steps for a
    single-level run whose step keeps the root mean-square discretization
    error under delta / sqrt(2) (constant calibrated from a small coupled
    pilot sweep against a fine reference, fitted to C (h^2 + h eps^2)) and
    whose sample count is ceil(Var(Psi) / delta^2). Nothing beyond the
    calibration pilots is simulated for the comparator.
    """
    rows = []
    for eps in epsilon_list:
        m_eps = model.with_epsilon(eps)
        h_cal = model.horizon / refinement_n**3
        mse_cal = strong_error_curve(m_eps, [h_cal], m_particles, pilot_samples, seed,
                                     test_fn=test_fn)[0][1]
        c_fit = mse_cal / (h_cal**2 + h_cal * eps**2) if mse_cal > 0 else 0.0
        var_psi = _psi_system_variance(m_eps, refinement_n**4, m_particles, test_fn,
                                       seed, max(pilot_samples, 8))
        for delta in delta_list:
            if c_fit > 0:
                # solve C h^2 + C eps^2 h = delta^2 / 2 for the largest usable h
                h_star = (-(eps**2) + math.sqrt(eps**4 + 2.0 * delta**2 / c_fit)) / 2.0
                h_star = min(h_star, model.horizon)
                mc_steps = max(1, math.ceil(model.horizon / h_star))
            else:
                mc_steps = 1
            mc_samples = max(1, math.ceil(var_psi / delta**2)) if var_psi > 0 else 1
            mc_cost = mc_samples * m_particles * model.d_bar * mc_steps
            report = mlmc_estimate(m_eps, test_fn, delta, refinement_n, m_particles,
                                   pilot_samples, max_level, seed, threads)
            rows.append(CostCompareRow(
                delta=delta,
                epsilon=eps,
                mc_cost=int(mc_cost),
                mlmc_cost=report.total_cost,
                mc_steps=mc_steps,
                mlmc_levels=len(report.per_level) - 1,
            ))
    return rows


@dataclass
class ChaosRow:
    m_particles: int
    mse_vs_reference: float
    replications: int


def chaos_study(model: ModelSpec, m_list: list[int], reference_m: int, replications: int,
                seed: int, test_fn: TestFunction | None = None, steps: int = 64,
                pathwise: bool = False, threads: int = 1) -> list[ChaosRow]:
    """Convergence of the M-particle system toward a large reference system.

    Default mode compares system-averaged observables of an M-particle
    system and an independent reference system with ``reference_m``
    particles, reporting the mean squared gap per M. ``pathwise`` instead
    couples the first M particle streams of both systems and reports the
    per-particle supremum gap along the grid (no rate is asserted for it).
    """
    if reference_m <= max(m_list):
        raise ConfigurationError("reference_m must exceed every entry of m_list")
    test_fn = test_fn or builtin_test_function("identity")
    grid = SimulationGrid.from_steps(model.horizon, steps)
    rows = []
    for m in m_list:
        def one(rep: int, _m=m) -> float:
            gen_ref = stream(seed, DOMAIN_CHAOS, rep, 0)
            xi_ref = gen_ref.standard_normal((grid.steps, reference_m, model.d_bar))
            if pathwise:
                # shared leading streams couple particle i across both systems
                xi_small = xi_ref[:, :_m, :]
            else:
                gen_small = stream(seed, DOMAIN_CHAOS, rep, 1)
                xi_small = gen_small.standard_normal((grid.steps, _m, model.d_bar))
            ref = ParticleCloud.at(model.x0, reference_m)
            small = ParticleCloud.at(model.x0, _m)
            sup = np.zeros(_m)
            for n in range(grid.steps):
                ref = em_step(model, ref, grid.h, xi_ref[n])
                small = em_step(model, small, grid.h, xi_small[n])
                if pathwise:
                    gap = np.sum((small.positions - ref.positions[:_m]) ** 2, axis=1)
                    np.maximum(sup, gap, out=sup)
            if pathwise:
                return float(sorted_mean(sup))
            a = float(sorted_mean(test_fn.psi(small.positions)))
            b = float(sorted_mean(test_fn.psi(ref.positions)))
            return (a - b) ** 2

        vals = ordered_map(one, range(replications), threads=threads)
        rows.append(ChaosRow(m_particles=m,
                             mse_vs_reference=float(np.mean(vals)),
                             replications=replications))
    return rows
