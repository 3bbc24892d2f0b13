"""
Mandelbrot cascades and the fixed point of Z = sum_{i<=N} A_i Z_i.

Y_n is computed by recursion over the random labelled tree, vectorized over
independent replicas. The law of Z is approximated by population dynamics:
every generation rebuilds each particle from N fresh atoms applied to
uniformly resampled particles of the previous generation.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from logzero import logger

from cone import ConeVector
from config import Config
from ensemble import (Ensemble, PerronData, is_calibrated, mean_and_perron,
                      sample_indices)
from errors import NotCalibrated, PoolTooSmall, WorkCapExceeded
from spectral import solve_spectral
from streams import stream

REPLICA_CHUNK = 1024


# ----------------------------------------------------------------------
# Cascade martingale
# ----------------------------------------------------------------------

@dataclass
class CascadeConfig:
    """
    Parameters of a cascade run.

    `strict` requires r(m) E[N] = 1; it is switched off only to study
    miscalibrated ensembles on purpose.
    """

    ensemble: Ensemble
    depth: int
    replicas: int = 1
    seed: int = Config.SEED
    strict: bool = True
    perron: Optional[PerronData] = None

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError(f"depth must be >= 0, got {self.depth}")
        if self.replicas < 1:
            raise ValueError(f"replicas must be >= 1, got {self.replicas}")
        if self.perron is None:
            self.perron = mean_and_perron(self.ensemble)
        if self.strict and not is_calibrated(self.ensemble):
            raise NotCalibrated(f"'{self.ensemble.name}' is not calibrated (r(m)E[N] = "
                                f"{self.perron.radius * self.ensemble.branching.mean:.12g})")
        # children are masked, not skipped, so the work follows N_max
        log_work = self.depth * math.log(self.ensemble.branching.max_value)
        if log_work > Config.max_log_work() + 1e-12:
            raise WorkCapExceeded(
                f"depth {self.depth} with N_max = {self.ensemble.branching.max_value} needs "
                f"{math.exp(log_work):.3g} leaves per tree; the cap is {math.exp(Config.max_log_work()):.3g}")

    @property
    def v(self) -> np.ndarray:
        return self.perron.v


def _subtree(ensemble: Ensemble, v, level, depth, rng, count):
    """Values of `count` independent subtrees rooted at `level`."""
    if level == depth:
        return np.tile(v, (count, 1))
    children = ensemble.branching.sample(rng, count)
    total = np.zeros((count, ensemble.dimension))
    for i in range(ensemble.branching.max_value):
        below = _subtree(ensemble, v, level + 1, depth, rng, count)
        picks = sample_indices(ensemble, rng, count)
        image = np.einsum('rij,rj->ri', ensemble.matrices[picks], below)
        total += image * (i < children)[:, None]
    return total


def _replica_chunk(config: CascadeConfig, chunk: int, count: int):
    rng = stream(config.seed, 'cascade', config.depth, chunk)
    return _subtree(config.ensemble, config.v, 0, config.depth, rng, count)


def simulate_replicas(config: CascadeConfig, workers: Optional[int] = None) -> np.ndarray:
    """
    R independent realizations of Y_n as an (R, d) array.

    Replicas are drawn in fixed chunks with one stream per chunk, so the
    result does not depend on the worker count.
    """
    starts = list(range(0, config.replicas, REPLICA_CHUNK))
    sizes = [min(REPLICA_CHUNK, config.replicas - s) for s in starts]
    workers = workers or Config.WORKERS
    with ThreadPoolExecutor(max_workers=workers) as executor:
        parts = list(executor.map(lambda args: _replica_chunk(config, *args),
                                  zip(range(len(starts)), sizes)))
    return np.concatenate(parts, axis=0)


def simulate_Yn(config: CascadeConfig) -> ConeVector:
    """One realization of Y_n = sum over the depth-n vertices of P_gamma v."""
    return ConeVector(_replica_chunk(config, 0, 1)[0])


@dataclass
class MartingaleReport:
    depth: int
    replicas: int
    extensions: int
    z_scores: np.ndarray
    mean_ratio: float
    passed: bool

    @property
    def max_z(self) -> float:
        return float(np.max(np.abs(self.z_scores)))

    def to_dict(self) -> Dict:
        return {
            'depth': self.depth,
            'replicas': self.replicas,
            'extensions': self.extensions,
            'z_scores': self.z_scores.tolist(),
            'max_z': self.max_z,
            'mean_ratio': self.mean_ratio,
            'passed': self.passed,
        }


def _leaf_products(ensemble: Ensemble, depth: int, rng) -> np.ndarray:
    """Products P_gamma over the alive depth-n vertices of one tree, shape (L, d, d)."""
    d = ensemble.dimension
    n_max = ensemble.branching.max_value
    products = np.eye(d)[None, :, :]
    for _ in range(depth):
        count = products.shape[0]
        children = ensemble.branching.sample(rng, count)
        picks = sample_indices(ensemble, rng, (count, n_max))
        grown = np.einsum('lcij,ljk->lcik', ensemble.matrices[picks], products)
        alive = np.arange(n_max)[None, :] < children[:, None]
        products = grown[alive]
    return products


def martingale_step_check(config: CascadeConfig, R: int, M: int = 128) -> MartingaleReport:
    """
    Compare E[Y_{n+1} | F_n] with Y_n.

    R trees are frozen at depth n and each is extended by one level M times.
    The pooled z-score per component is sum_r (mean_r - Y_n,r) divided by
    sqrt(sum_r stderr_r^2); the check passes when every |z| is at most
    Config.MARTINGALE_Z_MAX.
    """
    if M < 64:
        raise ValueError(f"martingale_step_check needs M >= 64 extensions, got {M}")
    ensemble = config.ensemble
    v = config.v
    n_max = ensemble.branching.max_value
    atom_images = ensemble.matrices @ v  # (K, d)

    diff_sum = np.zeros(ensemble.dimension)
    var_sum = np.zeros(ensemble.dimension)
    frozen_total = np.zeros(ensemble.dimension)
    extended_total = np.zeros(ensemble.dimension)
    for r in range(R):
        rng = stream(config.seed, 'martingale', config.depth, r)
        products = _leaf_products(ensemble, config.depth, rng)
        frozen = products.sum(axis=0) @ v
        leaves = products.shape[0]

        children = ensemble.branching.sample(rng, (M, leaves))
        picks = sample_indices(ensemble, rng, (M, leaves, n_max))
        alive = np.arange(n_max)[None, None, :] < children[:, :, None]
        weights = np.sum(atom_images[picks] * alive[..., None], axis=2)  # (M, L, d)
        extended = np.einsum('lij,mlj->mi', products, weights)

        diff_sum += extended.mean(axis=0) - frozen
        var_sum += extended.var(axis=0, ddof=1) / M
        frozen_total += frozen
        extended_total += extended.mean(axis=0)

    # deterministic extensions leave only rounding noise
    floor = 1e-12 * (np.abs(frozen_total) + 1e-300)
    degenerate = np.sqrt(var_sum) <= floor
    with np.errstate(divide='ignore', invalid='ignore'):
        z = np.where(degenerate, 0.0, diff_sum / np.sqrt(var_sum))
    z = np.where(degenerate & (np.abs(diff_sum) > floor), np.inf, z)
    ratio = float(np.linalg.norm(extended_total) / np.linalg.norm(frozen_total))
    report = MartingaleReport(depth=config.depth, replicas=R, extensions=M, z_scores=z,
                              mean_ratio=ratio, passed=bool(np.max(np.abs(z)) <= Config.MARTINGALE_Z_MAX))
    if not report.passed:
        logger.warning(f"martingale step check failed at depth {config.depth}: "
                       f"max |z| = {report.max_z:.3g}, mean ratio {ratio:.4f}")
    return report


# ----------------------------------------------------------------------
# Population dynamics
# ----------------------------------------------------------------------

@dataclass
class GenerationStats:
    generation: int
    mean: np.ndarray
    median_norm: float
    proxy_distance: Optional[float]

    def to_row(self) -> Dict:
        row = {'generation': self.generation}
        for i, value in enumerate(self.mean):
            row[f'mean_{i}'] = float(value)
        row['median_norm'] = self.median_norm
        row['proxy_distance'] = self.proxy_distance
        return row


@dataclass(eq=False)
class ParticlePool:
    """K particles approximating the law of Z."""

    samples: np.ndarray
    generation: int
    seed: int
    ensemble_hash: str
    history: List[GenerationStats] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def stderr(self) -> np.ndarray:
        return self.samples.std(axis=0, ddof=1) / math.sqrt(self.size)

    def median_norm(self) -> float:
        return float(np.median(np.linalg.norm(self.samples, axis=1)))

    def mean_z_scores(self, v) -> np.ndarray:
        """Componentwise (pool mean - v) / stderr; exact matches give 0."""
        diff = self.mean() - np.asarray(v)
        se = self.stderr()
        with np.errstate(divide='ignore', invalid='ignore'):
            z = np.where(se > 0, diff / se, 0.0)
        return np.where((se == 0) & (np.abs(diff) > 1e-12), np.inf, z)

    def projections(self, u) -> np.ndarray:
        return self.samples @ np.asarray(u, dtype=float)

    def scaled(self, factor: float) -> 'ParticlePool':
        return ParticlePool(self.samples * factor, self.generation, self.seed, self.ensemble_hash)


def _generation_chunk(ensemble: Ensemble, previous, seed, generation, chunk, start, stop):
    rng = stream(seed, 'fixpoint', generation, chunk)
    count = stop - start
    K = previous.shape[0]
    children = ensemble.branching.sample(rng, count)
    particles = np.zeros((count, ensemble.dimension))
    for i in range(ensemble.branching.max_value):
        picks = sample_indices(ensemble, rng, count)
        sigma = rng.integers(0, K, size=count)
        image = np.einsum('pij,pj->pi', ensemble.matrices[picks], previous[sigma])
        particles += image * (i < children)[:, None]
    return particles


def _proxy_distance(previous, current, u) -> float:
    """L1 distance between the sorted projections <Z, u> of two generations."""
    return float(np.mean(np.abs(np.sort(previous @ u) - np.sort(current @ u))))


def fixpoint_pool(ensemble: Ensemble, K: int, generations: int, seed: int,
                  workers: Optional[int] = None, perron: Optional[PerronData] = None,
                  kappa_slope: Optional[float] = None) -> ParticlePool:
    """
    Population-dynamics approximation of the fixed point.

    Args:
        ensemble: Calibrated ensemble
        K: Number of particles
        generations: Number of pool updates
        seed: Master seed
        workers: Thread count (results do not depend on it)
        perron: Precomputed Perron data
        kappa_slope: kappa'(1-) if known; a nonnegative value triggers a warning

    Returns:
        ParticlePool with the per-generation history

    Raises:
        WorkCapExceeded: if K exceeds Config.MAX_POOL_SIZE
    """
    if K > Config.MAX_POOL_SIZE:
        raise WorkCapExceeded(f"pool size {K} exceeds the cap {Config.MAX_POOL_SIZE}")
    if K < 1:
        raise ValueError(f"pool size must be positive, got {K}")
    if K < Config.MIN_MOMENT_POOL:
        logger.warning(f"pool size {K} is below {Config.MIN_MOMENT_POOL}; tail and moment "
                       "diagnostics will refuse it")
    perron = perron or mean_and_perron(ensemble)
    if not is_calibrated(ensemble):
        logger.warning(f"'{ensemble.name}' is not calibrated; the pool mean will drift geometrically")
    if kappa_slope is not None and kappa_slope >= 0:
        logger.warning(f"kappa'(1-) = {kappa_slope:.4g} >= 0: the fixed point is degenerate, "
                       "expect the pool to collapse")

    v = perron.v
    u = perron.v_star
    v_norm = float(np.linalg.norm(v))
    workers = workers or Config.WORKERS
    bounds = [(c, s, min(s + Config.PARTICLE_CHUNK, K))
              for c, s in enumerate(range(0, K, Config.PARTICLE_CHUNK))]

    current = np.tile(v, (K, 1))
    history = [GenerationStats(0, current.mean(axis=0), v_norm, None)]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        for generation in range(1, generations + 1):
            previous = current
            parts = executor.map(
                lambda b: _generation_chunk(ensemble, previous, seed, generation, *b), bounds)
            current = np.concatenate(list(parts), axis=0)
            stats = GenerationStats(
                generation=generation,
                mean=current.mean(axis=0),
                median_norm=float(np.median(np.linalg.norm(current, axis=1))),
                proxy_distance=_proxy_distance(previous, current, u),
            )
            history.append(stats)
            if generation % 10 == 0 or generation == generations:
                logger.info(f"generation {generation}: median |Z| = {stats.median_norm:.4g}, "
                            f"proxy distance = {stats.proxy_distance:.3g}")

    final_median = history[-1].median_norm
    if final_median < 0.01 * v_norm:
        logger.warning(f"pool collapsed toward 0: median |Z| = {final_median:.3g} "
                       f"after {generations} generations")
    return ParticlePool(samples=current, generation=generations, seed=seed,
                        ensemble_hash=ensemble.fingerprint(), history=history)


# ----------------------------------------------------------------------
# Moment and nondegeneracy diagnostics
# ----------------------------------------------------------------------

@dataclass
class MomentRow:
    s: float
    sizes: List[int]
    estimates: List[float]
    change: float
    verdict: str
    prediction: Optional[float] = None

    @property
    def agrees(self) -> Optional[bool]:
        """Whether the verdict matches the prediction: finite when s <= 1 or kappa(s)E[N] < 1."""
        if self.prediction is None or self.verdict == 'inconclusive':
            return None
        return (self.s <= 1.0 or self.prediction < 0) == (self.verdict == 'stable')

    def to_dict(self) -> Dict:
        return {
            's': self.s,
            'sizes': self.sizes,
            'estimates': self.estimates,
            'change': self.change,
            'verdict': self.verdict,
            'kappa_EN_minus_1': self.prediction,
            'agrees': self.agrees,
        }


def moment_probe(pool: ParticlePool, s_list: Sequence[float], ensemble: Optional[Ensemble] = None,
                 grid=None) -> List[MomentRow]:
    """
    Empirical E|Z|^s on nested prefixes of the pool.

    The verdict compares the last two prefix sizes: a change below 25% is
    'stable', at least 100% is 'diverging', anything else 'inconclusive'.
    With an ensemble and grid, each row carries kappa(s)E[N] - 1.

    Raises:
        PoolTooSmall: if the pool has fewer than Config.MIN_MOMENT_POOL particles
    """
    if pool.size < Config.MIN_MOMENT_POOL:
        raise PoolTooSmall(f"moment probe needs {Config.MIN_MOMENT_POOL} particles, got {pool.size}")
    sizes = [n for n in (1_000, 10_000, 100_000) if n < pool.size] + [pool.size]
    norms = np.linalg.norm(pool.samples, axis=1)

    rows = []
    for s in s_list:
        powered = norms ** s
        estimates = [float(powered[:n].mean()) for n in sizes]
        before, after = estimates[-2], estimates[-1]
        change = abs(after - before) / before if before > 0 else float('inf')
        if change < 0.25:
            verdict = 'stable'
        elif change >= 1.0:
            verdict = 'diverging'
        else:
            verdict = 'inconclusive'
        prediction = None
        if ensemble is not None and grid is not None:
            kappa = solve_spectral(ensemble, float(s), grid, check_pattern=False).kappa
            prediction = kappa * ensemble.branching.mean - 1.0
        rows.append(MomentRow(s=float(s), sizes=list(sizes), estimates=estimates,
                              change=change, verdict=verdict, prediction=prediction))
    return rows


@dataclass
class NondegeneracyReport:
    """The equivalent statements of the nondegeneracy theorem, side by side."""

    kappa_slope: float
    slope_negative: bool
    pool_mean: np.ndarray
    mean_matches_v: bool
    mean_nonzero: bool
    median_norm_ratio: float
    cascade_mean_matches_v: Optional[bool] = None

    @property
    def consistent(self) -> bool:
        statements = [self.slope_negative, self.mean_matches_v, self.mean_nonzero]
        if self.cascade_mean_matches_v is not None:
            statements.append(self.cascade_mean_matches_v)
        return all(statements) or not any(statements)

    def to_dict(self) -> Dict:
        return {
            'kappa_slope': self.kappa_slope,
            'slope_negative': self.slope_negative,
            'pool_mean': self.pool_mean.tolist(),
            'mean_matches_v': self.mean_matches_v,
            'mean_nonzero': self.mean_nonzero,
            'median_norm_ratio': self.median_norm_ratio,
            'cascade_mean_matches_v': self.cascade_mean_matches_v,
            'consistent': self.consistent,
        }


def nondegeneracy_report(ensemble: Ensemble, pool: ParticlePool, derivative,
                         perron: Optional[PerronData] = None,
                         cascade_samples: Optional[np.ndarray] = None) -> NondegeneracyReport:
    """
    Compare the sign of kappa'(1-) with the pool's behaviour.

    `derivative` is a DerivativeReport; its finite-difference value decides
    the sign. A pool is called nonzero when its median norm stays at or above
    a tenth of |v|.
    """
    perron = perron or mean_and_perron(ensemble)
    v = perron.v
    v_norm = float(np.linalg.norm(v))
    z = pool.mean_z_scores(v)
    ratio = pool.median_norm() / v_norm

    cascade_match = None
    if cascade_samples is not None and len(cascade_samples) > 1:
        diff = cascade_samples.mean(axis=0) - v
        se = cascade_samples.std(axis=0, ddof=1) / math.sqrt(len(cascade_samples))
        cascade_match = bool(np.all(np.abs(diff) <= 3 * se + 1e-12))

    return NondegeneracyReport(
        kappa_slope=float(derivative.fd_form),
        slope_negative=bool(derivative.fd_form < 0),
        pool_mean=pool.mean(),
        mean_matches_v=bool(np.all(np.abs(z) <= Config.MARTINGALE_Z_MAX)),
        mean_nonzero=bool(ratio >= 0.1),
        median_norm_ratio=ratio,
        cascade_mean_matches_v=cascade_match,
    )
