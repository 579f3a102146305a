"""Single-level particle-system simulation and its deterministic limit.

One explicit step advances every particle against the empirical measure of
the *input* cloud (the measure is frozen before any particle moves), adding
``drift * h + epsilon * diffusion @ (sqrt(h) * xi)`` per particle. Driving
noise is always supplied by the caller as standard-normal arrays so that
fine and coarse discretizations of the same path can share increments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DivergenceError, NumericError, ShapeError
from .measure import ParticleCloud, sorted_mean
from .model import ModelSpec, TestFunction, drift_eval, diffusion_eval
from .rng import DOMAIN_PATH, DOMAIN_SMALL_NOISE, DOMAIN_STRONG_ERROR, stream

#: any state beyond this magnitude aborts the run instead of propagating infs
DIVERGENCE_LIMIT = 1e12

#: reference grid is finer than the smallest requested step by this factor
DEFAULT_REF_FACTOR = 8


@dataclass(frozen=True)
class SimulationGrid:
    """Uniform grid with step h = horizon / steps, divisibility enforced."""

    h: float
    steps: int
    horizon: float

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {self.steps}")
        if not self.horizon > 0:
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")
        if abs(self.h * self.steps - self.horizon) > 1e-12 * self.horizon:
            raise ConfigurationError(
                f"step size {self.h} times {self.steps} steps misses horizon {self.horizon}"
            )

    @classmethod
    def from_steps(cls, horizon: float, steps: int) -> "SimulationGrid":
        return cls(h=horizon / steps, steps=steps, horizon=horizon)

    @classmethod
    def from_step_size(cls, horizon: float, h: float) -> "SimulationGrid":
        steps = round(horizon / h)
        if steps < 1 or abs(h * steps - horizon) > 1e-12 * horizon:
            raise ConfigurationError(f"step size {h} does not divide horizon {horizon}")
        return cls(h=h, steps=steps, horizon=horizon)

    def times(self) -> np.ndarray:
        return self.h * np.arange(self.steps + 1)


@dataclass
class PathRecord:
    """Grid times, stored clouds, and the exact count of scalar draws."""

    times: np.ndarray
    clouds: list[ParticleCloud]
    rng_draws: int


def em_step(model: ModelSpec, cloud: ParticleCloud, h: float, gaussians: np.ndarray) -> ParticleCloud:
    """One synchronous explicit step of size h driven by the given variates.

    ``gaussians`` holds the i.i.d. standard normal block, one row of
    ``d_bar`` components per particle; the Brownian increment over the step
    is ``sqrt(h) * gaussians``.
    """
    xi = np.asarray(gaussians, dtype=float)
    if xi.ndim == 1:
        xi = xi[:, None]
    if xi.shape != (cloud.m, model.d_bar):
        raise ShapeError(
            f"gaussians have shape {xi.shape}, expected ({cloud.m}, {model.d_bar})"
        )
    if cloud.d != model.d:
        raise ShapeError(f"cloud dimension {cloud.d} does not match model d={model.d}")
    x = cloud.positions
    if model.vectorized:
        f = np.asarray(model.drift(x, cloud), dtype=float)
        if f.shape != x.shape:
            raise ShapeError(f"drift returned shape {f.shape}, expected {x.shape}")
        g = np.asarray(model.diffusion(x, cloud), dtype=float)
        if g.shape != (cloud.m, model.d, model.d_bar):
            raise ShapeError(
                f"diffusion returned shape {g.shape}, expected {(cloud.m, model.d, model.d_bar)}"
            )
        if not np.all(np.isfinite(f)):
            bad = np.argwhere(~np.isfinite(f))[0]
            raise NumericError(f"drift produced a non-finite value at component {tuple(bad)}")
        if not np.all(np.isfinite(g)):
            bad = np.argwhere(~np.isfinite(g))[0]
            raise NumericError(f"diffusion produced a non-finite value at component {tuple(bad)}")
    else:
        f = np.stack([drift_eval(model, x[i], cloud) for i in range(cloud.m)])
        g = np.stack([diffusion_eval(model, x[i], cloud) for i in range(cloud.m)])
    noise = np.einsum("mij,mj->mi", g, xi)
    new = x + f * h + model.epsilon * np.sqrt(h) * noise
    if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > DIVERGENCE_LIMIT:
        raise DivergenceError("particle state left the finite trust region")
    return ParticleCloud(new)


def _run_path(model: ModelSpec, grid: SimulationGrid, m_particles: int,
              gen: np.random.Generator, store: str) -> PathRecord:
    cloud = ParticleCloud.at(model.x0, m_particles)
    clouds = [cloud]
    for n in range(grid.steps):
        xi = gen.standard_normal((m_particles, model.d_bar))
        try:
            cloud = em_step(model, cloud, grid.h, xi)
        except DivergenceError as err:
            raise DivergenceError(str(err), step_index=n) from None
        if store == "all":
            clouds.append(cloud)
    if store != "all":
        clouds = [clouds[0], cloud]
    draws = m_particles * model.d_bar * grid.steps
    times = grid.times() if store == "all" else np.array([0.0, grid.horizon])
    return PathRecord(times=times, clouds=clouds, rng_draws=draws)


def simulate_path(model: ModelSpec, grid: SimulationGrid, m_particles: int, seed: int,
                  store: str = "all") -> PathRecord:
    """Simulate one particle system from the all-x0 cloud.

    Deterministic in (model, grid, m_particles, seed). ``store`` is "all"
    for the full grid or "terminal" to keep only the endpoints.
    """
    if m_particles < 1:
        raise ConfigurationError("m_particles must be >= 1")
    if store not in ("all", "terminal"):
        raise ConfigurationError(f"store must be 'all' or 'terminal', got {store!r}")
    gen = stream(seed, DOMAIN_PATH, 0)
    return _run_path(model, grid, m_particles, gen, store)


def ode_limit(model: ModelSpec, grid: SimulationGrid) -> np.ndarray:
    """Explicit Euler iterates of the zero-noise flow, on the same grid.

    Each step evaluates the drift at the current iterate against the point
    mass sitting there; no randomness is consumed. Returns an array of
    shape (steps + 1, d).
    """
    z = np.array(model.x0, dtype=float)
    out = np.empty((grid.steps + 1, model.d))
    out[0] = z
    for n in range(grid.steps):
        f = drift_eval(model, z, ParticleCloud.at(z, 1))
        z = z + grid.h * f
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > DIVERGENCE_LIMIT:
            raise DivergenceError("deterministic iterate left the finite trust region",
                                  step_index=n)
        out[n + 1] = z
    return out


def check_nested_steps(h_list: list[float]):
    """Require the step family to be nested: each step an integer multiple
    of every finer one (that is what lets them share increments)."""
    ordered = sorted(set(h_list), reverse=True)
    for coarse, fine in zip(ordered, ordered[1:]):
        ratio = coarse / fine
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigurationError(
                f"h list not nested: steps {coarse} and {fine} are not integer multiples"
            )


def _coupled_run(model: ModelSpec, xi_ref: np.ndarray, h: float, h_ref: float,
                 m_particles: int) -> ParticleCloud:
    """Advance a path at step h by aggregating reference-grid increments."""
    r = round(h / h_ref)
    steps = xi_ref.shape[0] // r
    scale = 1.0 / np.sqrt(r)
    cloud = ParticleCloud.at(model.x0, m_particles)
    for n in range(steps):
        block = xi_ref[n * r:(n + 1) * r].sum(axis=0) * scale
        cloud = em_step(model, cloud, h, block)
    return cloud


def strong_error_curve(model: ModelSpec, h_list: list[float], m_particles: int,
                       replications: int, seed: int, ref_factor: int = DEFAULT_REF_FACTOR,
                       test_fn: TestFunction | None = None) -> list[tuple[float, float]]:
    """Terminal mean-square gap between each step size and a fine reference.

    All paths share Brownian increments: the step-h path consumes sums of
    the reference increments over its sub-intervals, so the reference run
    stands in for the exact solution. Returns (h, mse) pairs in the input
    order, with the squared observable gap averaged over particles and
    replications.
    """
    if replications < 2:
        raise ConfigurationError("strong_error_curve needs replications >= 2")
    if ref_factor < 2:
        raise ConfigurationError("ref_factor must be >= 2")
    psi = (test_fn.psi if test_fn is not None
           else lambda x: np.asarray(x, dtype=float)[..., 0])
    check_nested_steps(h_list)
    h_ref = min(h_list) / ref_factor
    grid_ref = SimulationGrid.from_step_size(model.horizon, h_ref)
    for h in h_list:
        SimulationGrid.from_step_size(model.horizon, h)
        ratio = h / h_ref
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigurationError(
                f"step {h} is not nested in the reference step {h_ref}"
            )
    acc = {h: 0.0 for h in h_list}
    for rep in range(replications):
        gen = stream(seed, DOMAIN_STRONG_ERROR, rep)
        xi_ref = gen.standard_normal((grid_ref.steps, m_particles, model.d_bar))
        ref_cloud = ParticleCloud.at(model.x0, m_particles)
        for n in range(grid_ref.steps):
            ref_cloud = em_step(model, ref_cloud, h_ref, xi_ref[n])
        psi_ref = psi(ref_cloud.positions)
        for h in h_list:
            cloud = _coupled_run(model, xi_ref, h, h_ref, m_particles)
            gap = psi(cloud.positions) - psi_ref
            acc[h] += float(sorted_mean(gap**2))
    return [(h, acc[h] / replications) for h in h_list]


def small_noise_curve(model: ModelSpec, epsilon_list: list[float], grid: SimulationGrid,
                      m_particles: int, replications: int, seed: int) -> list[tuple[float, float]]:
    """Pathwise mean-square deviation from the zero-noise Euler flow per epsilon.

    For each noise scale the statistic is E[max_n |Y_i(t_n) - z(t_n)|^2],
    averaged over particles, then over replications. The same increments
    drive every epsilon (common random numbers), so for models whose
    deviation is linear in the noise the fitted slope is exact.
    """
    z_path = ode_limit(model, grid)
    out = []
    for eps in epsilon_list:
        model_eps = model.with_epsilon(eps)
        total = 0.0
        for rep in range(replications):
            gen = stream(seed, DOMAIN_SMALL_NOISE, rep)
            cloud = ParticleCloud.at(model.x0, m_particles)
            sup = np.zeros(m_particles)
            for n in range(grid.steps):
                xi = gen.standard_normal((m_particles, model.d_bar))
                cloud = em_step(model_eps, cloud, grid.h, xi)
                dev = np.sum((cloud.positions - z_path[n + 1]) ** 2, axis=1)
                np.maximum(sup, dev, out=sup)
            total += float(sorted_mean(sup))
        out.append((eps, total / replications))
    return out
