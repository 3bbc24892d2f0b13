"""
Heavy-tail diagnostics for a particle pool.

The tail index of <Z, u> is estimated with the Hill estimator at a plateau of
the Hill curve; the tail constant D(u) is the median of t^chi P[<Z,u> > t]
over one decade of t near the top of the sample. D should be chi-homogeneous,
harmonic for the transposed operator, and proportional to the dual
eigenfunction; each of these is checked here.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from logzero import logger
from scipy.stats import pearsonr

from cone import as_array, normalize
from config import Config
from ensemble import BranchingLaw, Ensemble, PerronData
from errors import (DegenerateTail, InsufficientDirections, InsufficientSamples,
                    NonConstantBranching, PoolTooSmall)
from streams import stream

MIN_HILL_K = 50
TAIL_TOP_COUNT = 200
TAIL_GRID_POINTS = 30
TIE_JITTER = 1e-12
PLATEAU_WINDOW = 5
PLATEAU_MIN_K = 400


# ----------------------------------------------------------------------
# Hill estimator
# ----------------------------------------------------------------------

def _top_descending(values, count):
    """The `count` largest values, largest first."""
    n = values.shape[0]
    top = np.partition(values, n - count)[n - count:]
    return np.sort(top)[::-1]


def _break_ties(top, k):
    """Spread repeated order statistics by a relative 1e-12 jitter."""
    if np.unique(top).size == top.size:
        return top
    rng = stream(0, 'hill-ties', k)
    jittered = top * (1.0 + TIE_JITTER * rng.random(top.size))
    return np.sort(jittered)[::-1]


def hill(samples, k: int) -> float:
    """
    Hill estimate [(1/k) sum_{i<=k} log(X_(i) / X_(k+1))]^(-1).

    Raises:
        ValueError: if k < 50 or k >= len(samples)
        DegenerateTail: if the top k + 1 order statistics are all equal
    """
    x = np.asarray(samples, dtype=float)
    if k < MIN_HILL_K:
        raise ValueError(f"Hill needs k >= {MIN_HILL_K}, got {k}")
    if k >= x.size:
        raise InsufficientSamples(f"Hill needs more than k = {k} samples, got {x.size}")
    top = _top_descending(x, k + 1)
    if not top[k] > 0:
        raise DegenerateTail(f"order statistic X_({k + 1}) = {top[k]} is not positive")
    if top[0] == top[k]:
        raise DegenerateTail(f"top {k + 1} samples are identical")
    top = _break_ties(top, k)
    return 1.0 / float(np.mean(np.log(top[:k] / top[k])))


def default_k_grid(n: int, points: int = 20) -> np.ndarray:
    """Log-spaced k values between 50 and 5% of the sample size."""
    upper = int(0.05 * n)
    if upper < MIN_HILL_K:
        raise InsufficientSamples(f"{n} samples leave no admissible k (need 5% of n >= {MIN_HILL_K})")
    return np.unique(np.geomspace(MIN_HILL_K, upper, points).astype(int))


def hill_curve(samples, k_grid) -> np.ndarray:
    """Hill estimates for every k in k_grid, from one sort of the top."""
    x = np.asarray(samples, dtype=float)
    k_grid = np.asarray(k_grid, dtype=int)
    top = _top_descending(x, int(k_grid.max()) + 1)
    if not top[-1] > 0 or top[0] == top[-1]:
        raise DegenerateTail("top order statistics are degenerate")
    curve = np.empty(k_grid.size)
    for i, k in enumerate(k_grid):
        head = _break_ties(top[:k + 1], k)
        curve[i] = 1.0 / float(np.mean(np.log(head[:k] / head[k])))
    return curve


@dataclass
class Plateau:
    k: int
    chi: float
    slope: float
    drift: float
    window: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    @property
    def heavy_tailed(self) -> bool:
        """A stable plateau: the fitted trend moves chi by less than 20% over the k range."""
        return self.drift < 0.2


def find_plateau(k_grid, curve, window: int = PLATEAU_WINDOW) -> Plateau:
    """
    Flattest run of `window` consecutive grid points of the Hill curve.

    Each run is scored by the least-squares slope of chi against log k.
    Runs starting below PLATEAU_MIN_K are skipped while any other run
    exists (relative standard error 1/sqrt(k) above 5%). chi is
    the mean of the curve over the chosen run and k its middle point.

    drift is the relative change of chi across the grid along the
    least-squares line of chi against log k.
    """
    k_grid = np.asarray(k_grid, dtype=float)
    curve = np.asarray(curve, dtype=float)
    if k_grid.size < 2:
        raise InsufficientSamples("plateau search needs at least two k values")
    log_k = np.log(k_grid)
    width = min(window, k_grid.size)
    starts = np.arange(k_grid.size - width + 1)
    admissible = starts[k_grid[starts] >= PLATEAU_MIN_K]
    if admissible.size:
        starts = admissible

    slopes = np.array([abs(np.polyfit(log_k[i:i + width], curve[i:i + width], 1)[0])
                       for i in starts])
    best = int(starts[int(np.argmin(slopes))])
    run = slice(best, best + width)
    trend = np.polyfit(log_k, curve, 1)[0]
    drift = abs(trend * (log_k[-1] - log_k[0])) / float(np.median(curve))
    return Plateau(k=int(k_grid[best + width // 2]), chi=float(np.mean(curve[run])),
                   slope=float(np.min(slopes)), drift=float(drift),
                   window=k_grid[run].astype(int))


# ----------------------------------------------------------------------
# Tail constant and scan
# ----------------------------------------------------------------------

def tail_constant(values, chi: float, top: int = TAIL_TOP_COUNT) -> float:
    """
    Median of t^chi P_hat[X > t] over a log-spaced grid covering one decade
    of t that ends at the `top`-th largest value.
    """
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    if n <= top:
        raise InsufficientSamples(f"tail constant needs more than {top} samples, got {n}")
    upper = x[n - top]
    if not upper > 0:
        raise DegenerateTail(f"the {top}-th largest value is {upper}")
    t = np.geomspace(upper / 10.0, upper, TAIL_GRID_POINTS)
    exceed = (n - np.searchsorted(x, t, side='right')) / n
    return float(np.median(t ** chi * exceed))


def rank_table(values) -> pd.DataFrame:
    """Sorted values with empirical tail probabilities rank / n, largest first."""
    x = np.sort(np.asarray(values, dtype=float))[::-1]
    n = x.size
    return pd.DataFrame({'rank': np.arange(1, n + 1), 'value': x,
                         'tail_probability': np.arange(1, n + 1) / n})


@dataclass
class TailReport:
    """Tail index and constant of <Z, u> for one direction."""

    direction: np.ndarray
    chi_hat: float
    k_used: int
    chi_spectral: Optional[float]
    D_hat: float
    ci: tuple
    pool_size: int
    k_grid: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    curve: np.ndarray = field(default_factory=lambda: np.array([]))
    plateau_slope: float = 0.0
    plateau_window: list = field(default_factory=list)
    heavy_tailed: bool = True
    harmonicity_ratio: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            'direction': np.asarray(self.direction).tolist(),
            'chi_hat': self.chi_hat,
            'k_used': self.k_used,
            'chi_spectral': self.chi_spectral,
            'D_hat': self.D_hat,
            'ci': list(self.ci),
            'pool_size': self.pool_size,
            'plateau_slope': self.plateau_slope,
            'plateau_window': [int(k) for k in self.plateau_window],
            'heavy_tailed': self.heavy_tailed,
            'harmonicity_ratio': self.harmonicity_ratio,
            'k_scan': [{'k': int(k), 'chi_hat': float(c)} for k, c in zip(self.k_grid, self.curve)],
        }


def _bootstrap(values, window, seed, resamples, workers):
    """90% percentile interval of the plateau estimate (mean Hill over the window)."""
    n = values.size
    window = np.asarray(window, dtype=int)

    def one(b):
        rng = stream(seed, 'bootstrap', int(window[0]), b)
        return float(np.mean(hill_curve(values[rng.integers(0, n, size=n)], window)))

    with ThreadPoolExecutor(max_workers=workers) as executor:
        estimates = np.array(list(executor.map(one, range(resamples))))
    return float(np.quantile(estimates, 0.05)), float(np.quantile(estimates, 0.95))


def tail_scan(pool, u, k_grid=None, chi_spectral: Optional[float] = None,
              branching: Optional[BranchingLaw] = None, seed: int = Config.SEED,
              resamples: int = Config.BOOTSTRAP_RESAMPLES,
              workers: Optional[int] = None) -> TailReport:
    """
    Hill plateau estimate, tail constant and bootstrap 90% interval for <Z, u>.

    chi_hat is the mean Hill estimate over the plateau window and k_used the
    window midpoint; the interval resamples that same windowed mean.

    The tail constant uses chi_spectral when given, otherwise chi_hat.

    Raises:
        PoolTooSmall: below Config.MIN_TAIL_POOL particles
        NonConstantBranching: if `branching` is given and not constant
    """
    if pool.size < Config.MIN_TAIL_POOL:
        raise PoolTooSmall(f"tail scan needs {Config.MIN_TAIL_POOL} particles, got {pool.size}")
    if branching is not None and not branching.is_constant:
        raise NonConstantBranching("tail scans need a constant number of children")

    u = as_array(u)
    values = pool.projections(u)
    n = values.size
    k_grid = default_k_grid(n) if k_grid is None else np.asarray(k_grid, dtype=int)
    k_grid = k_grid[(k_grid >= MIN_HILL_K) & (k_grid <= int(0.05 * n))]
    if k_grid.size < 2:
        raise InsufficientSamples("k grid has fewer than two admissible values")

    curve = hill_curve(values, k_grid)
    plateau = find_plateau(k_grid, curve)
    chi_hat = plateau.chi
    if not plateau.heavy_tailed:
        logger.warning(f"Hill curve along u = {np.round(u, 4)} drifts by {plateau.drift:.0%}: "
                       "no stable plateau")
    D_hat = tail_constant(values, chi_spectral if chi_spectral is not None else chi_hat)
    ci = _bootstrap(values, plateau.window, seed, resamples, workers or Config.WORKERS)

    logger.info(f"u = {np.round(u, 4)}: chi_hat = {chi_hat:.4f} (k = {plateau.k}), "
                f"90% CI [{ci[0]:.4f}, {ci[1]:.4f}], D_hat = {D_hat:.4g}")
    return TailReport(
        direction=u, chi_hat=chi_hat, k_used=plateau.k, chi_spectral=chi_spectral,
        D_hat=D_hat, ci=ci, pool_size=n, k_grid=k_grid, curve=curve,
        plateau_slope=plateau.slope, plateau_window=plateau.window.tolist(),
        heavy_tailed=plateau.heavy_tailed,
    )


# ----------------------------------------------------------------------
# Harmonicity and shape
# ----------------------------------------------------------------------

@dataclass
class HarmonicityRow:
    direction: np.ndarray
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs

    @property
    def passed(self) -> bool:
        low, high = Config.HARMONICITY_BAND
        return low <= self.ratio <= high

    def to_dict(self) -> Dict:
        return {'direction': np.asarray(self.direction).tolist(), 'lhs': self.lhs,
                'rhs': self.rhs, 'ratio': self.ratio, 'passed': self.passed}


def harmonicity_check(pool, ensemble: Ensemble, chi: float, directions: Sequence,
                      tail_function: Optional[Callable] = None) -> List[HarmonicityRow]:
    """
    E[N] sum_k p_k |a_k^T u|^chi D(a_k^T . u) against D(u) for each direction.

    D defaults to the tail constant of the pool at exponent chi; any positive
    function of a unit direction (for instance the dual eigenfunction) can
    be substituted through `tail_function`.
    """
    if tail_function is None:
        def tail_function(w):
            return tail_constant(pool.projections(w), chi)

    c = ensemble.branching.mean
    rows = []
    for u in directions:
        u = normalize(u).coords
        lhs = 0.0
        for p, a in zip(ensemble.weights, ensemble.matrices):
            image = a.T @ u
            norm = float(np.linalg.norm(image))
            if norm == 0:
                continue
            lhs += p * norm ** chi * tail_function(image / norm)
        rows.append(HarmonicityRow(direction=u, lhs=c * lhs, rhs=float(tail_function(u))))
    failed = [r for r in rows if not r.passed]
    if failed:
        logger.warning(f"{len(failed)} of {len(rows)} harmonicity ratios fall outside "
                       f"{Config.HARMONICITY_BAND}")
    return rows


def dual_tail_function(dual_spectral) -> Callable:
    """The dual eigenfunction e*^chi as a function of one direction."""
    def evaluate(w):
        return float(dual_spectral.evaluate(np.asarray(w)[None, :])[0])
    return evaluate


@dataclass
class ShapeComparison:
    correlation: float
    directions: int

    @property
    def passed(self) -> bool:
        return bool(self.correlation >= Config.SHAPE_CORRELATION_MIN)

    def to_dict(self) -> Dict:
        return {'correlation': self.correlation, 'directions': self.directions,
                'passed': self.passed}


def compare_shapes(tail_reports: Sequence[TailReport], dual_spectral) -> ShapeComparison:
    """
    Pearson correlation between D_hat(u) and e*^chi(u) across directions.

    Raises:
        InsufficientDirections: with fewer than 5 reports
    """
    if len(tail_reports) < 5:
        raise InsufficientDirections(f"shape comparison needs 5 directions, got {len(tail_reports)}")
    directions = np.stack([np.asarray(r.direction, dtype=float) for r in tail_reports])
    d_hat = np.array([r.D_hat for r in tail_reports])
    e_star = dual_spectral.evaluate(directions)
    if np.ptp(d_hat) == 0 or np.ptp(e_star) == 0:
        logger.warning("a constant series has no defined correlation")
        return ShapeComparison(correlation=float('nan'), directions=len(tail_reports))
    result = pearsonr(d_hat, e_star)
    return ShapeComparison(correlation=float(result[0]), directions=len(tail_reports))


def default_directions(perron: PerronData, count: int = 8) -> List[np.ndarray]:
    """
    v*, the first basis vector and the normalized all-ones vector, then
    interior directions to fill `count`.
    """
    d = perron.v_star.shape[0]
    base = [perron.v_star, np.eye(d)[0], np.ones(d) / math.sqrt(d)]
    extra = count - len(base)
    if extra > 0:
        if d == 2:
            angles = (np.arange(extra) + 0.5) * (math.pi / 2) / extra
            base.extend(np.stack([np.cos(angles), np.sin(angles)], axis=1))
        else:
            rng = stream(0, 'directions', d)
            for w in rng.dirichlet(np.ones(d), size=extra):
                base.append(w / np.linalg.norm(w))
    return [np.asarray(u, dtype=float) for u in base[:count]]
