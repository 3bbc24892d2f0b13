"""
Discretized transfer operators on the unit slice C1.

P^s psi(x) = sum_k p_k |a_k x|^s psi(a_k . x) is collocated on a direction
grid. Its leading eigen-triple gives kappa(s), the eigenfunction e^s and the
eigenmeasure nu^s; pi^s and the tilt weights q^s follow from them.

For d = 2 the grid is uniform in angle and psi is interpolated linearly in
angle. For d >= 3 the grid is the simplex lattice and the s-homogeneous
extension |y|^s psi(y/|y|) is interpolated barycentrically in simplex
coordinates, which makes the s = 1 eigenfunction <v*, x> exact on the grid.
"""
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
from logzero import logger
from scipy.optimize import bisect
from scipy.sparse import coo_matrix, csr_matrix, diags
from scipy.special import logsumexp

from config import Config
from ensemble import (Ensemble, PerronData, is_calibrated, mean_and_perron,
                      pattern_irreducible, primitive_word_length, sample_indices)
from errors import (DimensionUnsupported, NoConvergence, NonPositiveEigenfunction,
                    NoRoot, NotCalibrated, ZeroImage)

SNAP = 1e-12


# ----------------------------------------------------------------------
# Direction grid
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DirectionGrid:
    """G unit directions covering C1, with an interpolation rule."""

    dimension: int
    resolution: int
    points: np.ndarray
    lattice: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def angular_step(self) -> float:
        return (math.pi / 2) / self.resolution

    @cached_property
    def _lattice_lookup(self):
        radix = (self.resolution + 1) ** np.arange(self.dimension, dtype=np.int64)
        keys = self.lattice.astype(np.int64) @ radix
        order = np.argsort(keys)
        return radix, keys[order], order

    @cached_property
    def _lattice_norms(self):
        return np.linalg.norm(self.lattice, axis=1) / self.resolution

    def _lattice_index(self, z):
        radix, sorted_keys, order = self._lattice_lookup
        keys = z.astype(np.int64) @ radix
        pos = np.searchsorted(sorted_keys, keys)
        pos = np.minimum(pos, sorted_keys.size - 1)
        if not np.all(sorted_keys[pos] == keys):
            raise ArithmeticError("interpolation vertex is not a lattice point")
        return order[pos]

    def interpolate(self, directions) -> Tuple[np.ndarray, np.ndarray]:
        """
        Neighbor indices and convex weights for each direction.

        Args:
            directions: (n, d) array of nonzero cone vectors (need not be unit)

        Returns:
            (indices, weights), both (n, 2) for d = 2 and (n, d) for d >= 3
        """
        x = np.atleast_2d(np.asarray(directions, dtype=float))
        if self.dimension == 2:
            return self._interpolate_angle(x)
        return self._interpolate_simplex(x)[:2]

    def _interpolate_angle(self, x):
        theta = np.clip(np.arctan2(x[:, 1], x[:, 0]), 0.0, math.pi / 2)
        t = theta / self.angular_step
        base = np.clip(np.floor(t), 0, self.resolution - 1).astype(np.int64)
        frac = t - base
        frac = np.where(frac < SNAP, 0.0, frac)
        frac = np.where(frac > 1.0 - SNAP, 1.0, frac)
        indices = np.stack([base, base + 1], axis=1)
        weights = np.stack([1.0 - frac, frac], axis=1)
        return indices, weights

    def _interpolate_simplex(self, x):
        R = self.resolution
        d = self.dimension
        y = x / x.sum(axis=1, keepdims=True)
        z = R * y
        # u_k = z_k + ... + z_{d-1}, k = 1..d-1: nonincreasing, inside [0, R]
        u = np.cumsum(z[:, ::-1], axis=1)[:, ::-1][:, 1:]
        u = np.minimum.accumulate(np.clip(u, 0.0, R), axis=1)
        base = np.floor(u)
        frac = u - base
        up = frac > 1.0 - SNAP
        base = np.where(up, base + 1, base)
        frac = np.where(up | (frac < SNAP), 0.0, frac)
        base = np.clip(base, 0, R)

        order = np.argsort(-frac, axis=1, kind='stable')
        sorted_frac = np.take_along_axis(frac, order, axis=1)
        n = x.shape[0]
        weights = np.empty((n, d))
        weights[:, 0] = 1.0 - sorted_frac[:, 0]
        weights[:, 1:-1] = sorted_frac[:, :-1] - sorted_frac[:, 1:]
        weights[:, -1] = sorted_frac[:, -1]

        # Kuhn simplex vertices: add unit steps in decreasing-fraction order
        steps = np.zeros((n, d - 1, d - 1))
        rows = np.arange(n)[:, None]
        steps[rows, np.arange(d - 1)[None, :], order] = 1.0
        vertices_u = base[:, None, :] + np.concatenate(
            [np.zeros((n, 1, d - 1)), np.cumsum(steps, axis=1)], axis=1)
        vertices_u = np.minimum(vertices_u, R)

        vertices_z = np.empty((n, d, d))
        vertices_z[:, :, 0] = R - vertices_u[:, :, 0]
        vertices_z[:, :, 1:-1] = vertices_u[:, :, :-1] - vertices_u[:, :, 1:]
        vertices_z[:, :, -1] = vertices_u[:, :, -1]
        vertices_z = np.rint(vertices_z)

        indices = self._lattice_index(vertices_z.reshape(n * d, d)).reshape(n, d)
        return indices, weights, y

    def transfer_weights(self, directions, s):
        """
        Interpolation data used by the operator at exponent s.

        Returns:
            (indices, weights, log_ratio): weights are the convex weights
            multiplied by exp(s * log_ratio); log_ratio is zero for d = 2 and
            log(|y_j| / |y|) in simplex coordinates for d >= 3
        """
        x = np.atleast_2d(np.asarray(directions, dtype=float))
        if self.dimension == 2:
            indices, weights = self._interpolate_angle(x)
            return indices, weights, np.zeros_like(weights)
        indices, weights, y = self._interpolate_simplex(x)
        log_ratio = np.log(self._lattice_norms[indices]) - np.log(np.linalg.norm(y, axis=1))[:, None]
        return indices, weights * np.exp(s * log_ratio), log_ratio

    def interpolation_matrix(self, directions):
        """Sparse (n, G) matrix of convex interpolation weights."""
        indices, weights = self.interpolate(directions)
        n = indices.shape[0]
        rows = np.repeat(np.arange(n), indices.shape[1])
        return csr_matrix((weights.ravel(), (rows, indices.ravel())), shape=(n, self.size))

    @cached_property
    def mesh(self) -> float:
        """Covering radius measured against a fixed probe set of directions."""
        rng = np.random.default_rng(0)
        probes = rng.dirichlet(np.ones(self.dimension), size=2000)
        probes = probes / np.linalg.norm(probes, axis=1, keepdims=True)
        worst = 0.0
        for start in range(0, probes.shape[0], 250):
            block = probes[start:start + 250]
            dist = np.linalg.norm(block[:, None, :] - self.points[None, :, :], axis=2)
            worst = max(worst, float(dist.min(axis=1).max()))
        return worst


def build_grid(d: int, resolution: int) -> DirectionGrid:
    """
    Direction grid on C1.

    d = 2: angles j * (pi/2) / resolution, j = 0..resolution.
    d >= 3: the simplex lattice {z in N^d : sum z = resolution}, normalized;
    C(resolution + d - 1, d - 1) points.

    Raises:
        DimensionUnsupported: unless 2 <= d <= 6
    """
    if not isinstance(d, (int, np.integer)) or not 2 <= d <= 6:
        raise DimensionUnsupported(f"grids are built for d in 2..6, got {d}")
    if resolution < 1:
        raise ValueError(f"resolution must be positive, got {resolution}")
    if resolution < 8:
        logger.warning(f"grid resolution {resolution} is below 8; spectral estimates will be coarse")

    if d == 2:
        theta = np.arange(resolution + 1) * ((math.pi / 2) / resolution)
        points = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        points[0] = [1.0, 0.0]
        points[-1] = [0.0, 1.0]
        return DirectionGrid(dimension=2, resolution=resolution, points=points)

    lattice = []
    for bars in itertools.combinations(range(resolution + d - 1), d - 1):
        cuts = (-1,) + bars + (resolution + d - 1,)
        lattice.append([cuts[i + 1] - cuts[i] - 1 for i in range(d)])
    lattice = np.array(lattice, dtype=float)
    points = lattice / np.linalg.norm(lattice, axis=1, keepdims=True)
    return DirectionGrid(dimension=d, resolution=resolution, points=points, lattice=lattice)


# ----------------------------------------------------------------------
# Operator assembly
# ----------------------------------------------------------------------

def _assemble_parts(ensemble: Ensemble, s: float, grid: DirectionGrid):
    """
    Per-atom operators T_k and their s-derivatives D_k (without p_k).

    For d >= 3 the interpolation weights carry exp(s * log_ratio), so D_k
    differentiates them too; alpha = nu D e / (kappa nu e) is then the exact
    derivative of log kappa for the discrete operator. log_ratio is zero for
    d = 2, where D_k reduces to log|ax| times T_k.
    """
    G = grid.size
    parts, derivatives = [], []
    for k, a in enumerate(ensemble.matrices):
        images = grid.points @ a.T
        norms = np.linalg.norm(images, axis=1)
        if np.any(norms == 0):
            bad = int(np.flatnonzero(norms == 0)[0])
            raise ZeroImage(f"atom {k} maps grid direction {grid.points[bad]} to zero")
        indices, weights, log_ratio = grid.transfer_weights(images / norms[:, None], s)
        entries = (norms ** s)[:, None] * weights
        slopes = entries * (np.log(norms)[:, None] + log_ratio)
        rows = np.repeat(np.arange(G), indices.shape[1])
        cols = indices.ravel()
        parts.append(coo_matrix((entries.ravel(), (rows, cols)), shape=(G, G)).tocsr())
        derivatives.append(coo_matrix((slopes.ravel(), (rows, cols)), shape=(G, G)).tocsr())
    return parts, derivatives


def assemble_operator(ensemble: Ensemble, s: float, grid: DirectionGrid):
    """
    G x G nonnegative matrix realizing the discretized P^s.

    Raises:
        ZeroImage: if some atom sends a grid direction to 0
    """
    parts, _ = _assemble_parts(ensemble, s, grid)
    return sum(p * T for p, T in zip(ensemble.weights, parts))


# ----------------------------------------------------------------------
# Spectral solve
# ----------------------------------------------------------------------

@dataclass(eq=False)
class SpectralResult:
    """Leading eigen-data of the discretized P^s (or P*^s when dual)."""

    s: float
    kappa: float
    e_s: np.ndarray
    nu_s: np.ndarray
    pi_s: np.ndarray
    alpha: float
    residual: float
    tilt: np.ndarray
    grid: DirectionGrid
    iterations: int = 0
    dual: bool = False
    kernel: Optional[csr_matrix] = None
    kappa_gap: Optional[float] = None

    def tilt_row_sums(self, weights) -> np.ndarray:
        """sum_k p_k q^s(x, a_k) for every grid x."""
        return self.tilt @ np.asarray(weights)

    def tilt_matrix(self):
        """Row-stochastic kernel of the tilted Markov operator Q^s on the grid."""
        return self.kernel

    def evaluate(self, directions) -> np.ndarray:
        """e^s at arbitrary directions, with the operator's interpolation rule."""
        indices, weights, _ = self.grid.transfer_weights(directions, self.s)
        return np.sum(weights * self.e_s[indices], axis=1)

    def to_row(self) -> dict:
        return {
            's': self.s,
            'kappa': self.kappa,
            'alpha': self.alpha,
            'residual': self.residual,
            'grid_resolution': self.grid.resolution,
        }


def _power_iterate(op, start, cap, tol, window, label):
    """
    Max-norm power iteration.

    The eigenvalue is the mean growth over `window` consecutive steps taken
    after the iterate has settled (max change below tol); growth from the
    transient never enters it.
    """
    e = start / start.max()
    growth = deque(maxlen=window)
    delta = float('inf')
    for iteration in range(1, cap + 1):
        y = op @ e
        g = float(y.max())
        if not g > 0:
            raise NonPositiveEigenfunction(f"{label}: iterate vanished")
        y = y / g
        delta = float(np.max(np.abs(y - e)))
        e = y
        if delta >= tol:
            growth.clear()
            continue
        growth.append(g)
        if len(growth) == window:
            return float(np.mean(growth)), e, iteration
    raise NoConvergence(f"{label}: power iteration cap reached", residual=delta, iterations=cap)


def _warn_if_pattern_fails(ensemble: Ensemble):
    if not pattern_irreducible(ensemble) or primitive_word_length(ensemble) is None:
        logger.warning(f"'{ensemble.name}' fails the pattern checks of condition C; "
                       "the leading eigenfunction may not be unique or positive")


def solve_spectral(ensemble: Ensemble, s: float, grid: DirectionGrid,
                   cap: Optional[int] = None, check_pattern: bool = True) -> SpectralResult:
    """
    kappa(s), e^s, nu^s, pi^s, alpha(s) and q^s from the discretized P^s.

    Raises:
        NoConvergence: if either power iteration hits the cap
        NonPositiveEigenfunction: if min e^s < 1e-14
        ZeroImage: propagated from assembly
    """
    cap = cap or Config.POWER_ITERATION_CAP
    if check_pattern:
        _warn_if_pattern_fails(ensemble)

    parts, derivatives = _assemble_parts(ensemble, s, grid)
    weights = ensemble.weights
    T = sum(p * P for p, P in zip(weights, parts))
    D = sum(p * P for p, P in zip(weights, derivatives))

    G = grid.size
    kappa, e, it_right = _power_iterate(T, np.ones(G), cap, Config.OPERATOR_TOL,
                                        Config.GROWTH_WINDOW, f"P^{s:g} right")
    _, nu, it_left = _power_iterate(T.T.tocsr(), np.ones(G), cap, Config.OPERATOR_TOL,
                                    Config.GROWTH_WINDOW, f"P^{s:g} left")

    if float(e.min()) < Config.MIN_EIGENFUNCTION:
        raise NonPositiveEigenfunction(
            f"min e^s = {e.min():.3e} at s = {s:g}; the operator looks reducible")

    nu = nu / nu.sum()
    pi = e * nu
    pi = pi / pi.sum()
    residual = float(np.max(np.abs(T @ e - kappa * e)))

    tilt = np.column_stack([(P @ e) / (kappa * e) for P in parts])
    alpha = float(nu @ (D @ e)) / (kappa * float(nu @ e))
    kernel = diags(1.0 / (kappa * e)) @ T @ diags(e)

    return SpectralResult(
        s=float(s), kappa=kappa, e_s=e, nu_s=nu, pi_s=pi, alpha=alpha,
        residual=residual, tilt=tilt, grid=grid,
        iterations=max(it_right, it_left), kernel=csr_matrix(kernel),
    )


def solve_dual_spectral(ensemble: Ensemble, s: float, grid: DirectionGrid,
                        primal: Optional[SpectralResult] = None,
                        cap: Optional[int] = None) -> SpectralResult:
    """
    Same as solve_spectral for the transposed atoms (operator P*^s).

    The relative gap to the primal kappa is stored on the result and logged
    when it exceeds Config.DUAL_KAPPA_RTOL.
    """
    dual = solve_spectral(ensemble.transposed(), s, grid, cap=cap)
    dual.dual = True
    if primal is None:
        primal = solve_spectral(ensemble, s, grid, cap=cap, check_pattern=False)
    dual.kappa_gap = abs(dual.kappa - primal.kappa) / primal.kappa
    if dual.kappa_gap > Config.DUAL_KAPPA_RTOL:
        logger.warning(f"dual kappa({s:g}) differs from primal by {dual.kappa_gap:.2e} relative; "
                       "refine the grid")
    return dual


# ----------------------------------------------------------------------
# Monte Carlo cross-estimator
# ----------------------------------------------------------------------

@dataclass
class KappaEstimate:
    s: float
    n: int
    reps: int
    estimate: float
    stderr: float


def kappa_mc(ensemble: Ensemble, s: float, n: int, reps: int, rng) -> KappaEstimate:
    """
    (mean over reps of |A_n ... A_1|^s)^(1/n) with a jackknife stderr.

    Products are renormalized by their largest entry at every step and the
    log-scale is accumulated, so long products cannot overflow.
    """
    if n < 1 or reps < 2:
        raise ValueError("kappa_mc needs n >= 1 and reps >= 2")
    d = ensemble.dimension
    picks = sample_indices(ensemble, rng, (n, reps))
    product = np.broadcast_to(np.eye(d), (reps, d, d)).copy()
    log_scale = np.zeros(reps)
    for step in range(n):
        product = np.matmul(ensemble.matrices[picks[step]], product)
        top = product.max(axis=(1, 2))
        product /= top[:, None, None]
        log_scale += np.log(top)
    log_norm = log_scale + np.log(np.linalg.norm(product, 2, axis=(1, 2)))
    log_values = s * log_norm

    log_total = float(logsumexp(log_values))
    log_reps = float(np.log(reps))
    estimate = math.exp((log_total - log_reps) / n)

    with np.errstate(divide='ignore'):
        log_rest = log_total + np.log1p(-np.exp(log_values - log_total))
    leave_one_out = np.exp((log_rest - np.log(reps - 1)) / n)
    stderr = math.sqrt((reps - 1) / reps * float(np.sum((leave_one_out - leave_one_out.mean()) ** 2)))
    return KappaEstimate(s=float(s), n=n, reps=reps, estimate=estimate, stderr=stderr)


# ----------------------------------------------------------------------
# Derivative at 1 and the tail exponent
# ----------------------------------------------------------------------

@dataclass
class DerivativeReport:
    kappa_one: float
    alpha_form: float
    stationary_form: float
    fd_form: float
    step: float

    @property
    def deviation(self) -> float:
        """Stationary-formula value minus kappa(1) alpha(1)."""
        return self.stationary_form - self.alpha_form

    @property
    def consistent(self) -> bool:
        return abs(self.alpha_form - self.fd_form) <= 1e-3 * abs(self.kappa_one)

    def to_dict(self) -> dict:
        return {
            'kappa_one': self.kappa_one,
            'alpha_form': self.alpha_form,
            'stationary_form': self.stationary_form,
            'fd_form': self.fd_form,
            'deviation': self.deviation,
            'step': self.step,
            'consistent': self.consistent,
        }


def kappa_derivative_at_one(ensemble: Ensemble, grid: DirectionGrid,
                            perron: Optional[PerronData] = None) -> DerivativeReport:
    """
    Three values of kappa'(1):

    alpha_form: kappa(1) alpha(1)
    stationary_form: (1/r(m)) sum_x pi^1(x) sum_k p_k <v*,a_k x>/<v*,x> log <v*,a_k x>
    fd_form: central difference of kappa with step h = Config.FD_STEP
    """
    h = Config.FD_STEP
    perron = perron or mean_and_perron(ensemble)
    at_one = solve_spectral(ensemble, 1.0, grid)
    below = solve_spectral(ensemble, 1.0 - h, grid, check_pattern=False)
    above = solve_spectral(ensemble, 1.0 + h, grid, check_pattern=False)

    x = grid.points
    v_star = perron.v_star
    base = x @ v_star
    images = np.einsum('kij,gj->kgi', ensemble.matrices, x) @ v_star  # (K, G)
    integrand = (images / base[None, :]) * np.log(images)
    stationary_form = float(at_one.pi_s @ (ensemble.weights @ integrand)) / perron.radius

    return DerivativeReport(
        kappa_one=at_one.kappa,
        alpha_form=at_one.kappa * at_one.alpha,
        stationary_form=stationary_form,
        fd_form=(above.kappa - below.kappa) / (2 * h),
        step=h,
    )


@dataclass
class ChiSolution:
    chi: float
    kappa_at_chi: float
    bracket: Tuple[float, float]
    alpha_at_one: float
    branching_mean: float
    grid_resolution: int
    trace: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def derivative_sign_at_one(self) -> int:
        return -1 if self.alpha_at_one < 0 else (1 if self.alpha_at_one > 0 else 0)

    def to_dict(self) -> dict:
        return {
            'chi': self.chi,
            'kappa_at_chi': self.kappa_at_chi,
            'bracket': list(self.bracket),
            'alpha_at_one': self.alpha_at_one,
            'derivative_sign_at_one': self.derivative_sign_at_one,
            'branching_mean': self.branching_mean,
            'grid_resolution': self.grid_resolution,
            'trace': [list(t) for t in self.trace],
        }


def find_chi(ensemble: Ensemble, s_max: float, grid: DirectionGrid) -> ChiSolution:
    """
    Root chi > 1 of log kappa(s) + log E[N].

    The bracket (1 + delta, s_max] is scanned with geometrically growing
    offsets from 1, then bisected to Config.CHI_XTOL. log kappa is convex, so
    the first sign change is the only one.

    Raises:
        NotCalibrated: if r(m) E[N] != 1
        NoRoot: derivative_nonnegative or kappa_stays_below, with the scan trace
    """
    if not is_calibrated(ensemble, tol=1e-8):
        raise NotCalibrated(f"'{ensemble.name}' is not calibrated; run calibrate() first")

    log_mean = math.log(ensemble.branching.mean)
    cache = {}

    def excess(s):
        if s not in cache:
            cache[s] = solve_spectral(ensemble, s, grid, check_pattern=False)
        return math.log(cache[s].kappa) + log_mean

    at_one = solve_spectral(ensemble, 1.0, grid)
    cache[1.0] = at_one
    trace = [(1.0, math.log(at_one.kappa) + log_mean)]
    if at_one.alpha >= 0:
        raise NoRoot(NoRoot.DERIVATIVE_NONNEGATIVE, trace)

    offset = Config.CHI_OFFSET
    previous = None
    while True:
        s = min(1.0 + offset, s_max)
        value = excess(s)
        trace.append((s, value))
        if value > 0:
            if previous is None:
                raise NoRoot(NoRoot.DERIVATIVE_NONNEGATIVE, trace)
            break
        previous = s
        if s >= s_max:
            raise NoRoot(NoRoot.KAPPA_STAYS_BELOW, trace)
        offset *= 2.0

    chi = bisect(excess, previous, s, xtol=Config.CHI_XTOL)
    kappa_chi = solve_spectral(ensemble, chi, grid, check_pattern=False).kappa
    logger.info(f"chi = {chi:.8f} in bracket [{previous:.6g}, {s:.6g}]")
    return ChiSolution(
        chi=float(chi), kappa_at_chi=kappa_chi, bracket=(previous, s),
        alpha_at_one=at_one.alpha, branching_mean=ensemble.branching.mean,
        grid_resolution=grid.resolution, trace=trace,
    )
