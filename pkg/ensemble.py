"""
Finitely supported matrix laws, branching laws and their Perron data.

An Ensemble is a list of weighted atoms (nonnegative d x d matrices with no
zero column) together with the law of the number of children N. Every
integral over the matrix law is a finite weighted sum over the atoms.
"""
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np
from logzero import logger
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from cone import UnitDirection
from config import Config
from errors import ModelError, NoConvergence


@dataclass(frozen=True, eq=False)
class Atom:
    """One atom of the matrix law: a weight and a matrix in S+."""

    weight: float
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ModelError('matrix', f"must be square, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ModelError('matrix', "has non-finite entries")
        if np.any(matrix < 0):
            i, j = np.argwhere(matrix < 0)[0]
            raise ModelError('matrix', f"entry [{i}][{j}] is negative")
        zero_columns = np.flatnonzero(~np.any(matrix > 0, axis=0))
        if zero_columns.size:
            raise ModelError('matrix', f"column {zero_columns[0]} is zero")
        if not (0.0 < float(self.weight) <= 1.0):
            raise ModelError('weight', f"must lie in (0, 1], got {self.weight}")
        matrix.setflags(write=False)
        object.__setattr__(self, 'weight', float(self.weight))
        object.__setattr__(self, 'matrix', matrix)


@dataclass(frozen=True)
class BranchingLaw:
    """Law of N on {2, ..., N_max}; `values` and `probs` are aligned."""

    values: Tuple[int, ...]
    probs: Tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise ModelError('branching', "is empty")
        if min(self.values) < 2:
            raise ModelError('branching', f"support must start at 2 or above, got {min(self.values)}")
        if any(p < 0 for p in self.probs):
            raise ModelError('branching', "has a negative probability")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise ModelError('branching', f"probabilities sum to {sum(self.probs)}, not 1")

    @classmethod
    def constant(cls, c: int) -> 'BranchingLaw':
        return cls(values=(int(c),), probs=(1.0,))

    @classmethod
    def finite(cls, pmf: Dict[int, float]) -> 'BranchingLaw':
        items = sorted((int(k), float(p)) for k, p in pmf.items() if float(p) > 0)
        return cls(values=tuple(k for k, _ in items), probs=tuple(p for _, p in items))

    @property
    def is_constant(self) -> bool:
        return len(self.values) == 1

    @property
    def max_value(self) -> int:
        return max(self.values)

    @property
    def mean(self) -> float:
        return float(sum(k * p for k, p in zip(self.values, self.probs)))

    @property
    def second_moment(self) -> float:
        return float(sum(k * k * p for k, p in zip(self.values, self.probs)))

    def sample(self, rng, size):
        if self.is_constant:
            return np.full(size, self.values[0], dtype=np.int64)
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        picks = np.searchsorted(cdf, rng.random(size), side='right')
        return np.asarray(self.values, dtype=np.int64)[picks]

    def to_dict(self) -> Dict:
        if self.is_constant:
            return {'constant': self.values[0]}
        return {'pmf': {str(k): p for k, p in zip(self.values, self.probs)}}


@dataclass(frozen=True, eq=False)
class Ensemble:
    """A law mu on S+ with finitely many atoms, plus the branching law."""

    dimension: int
    atoms: Tuple[Atom, ...]
    branching: BranchingLaw
    name: str = 'model'

    def __post_init__(self):
        object.__setattr__(self, 'atoms', tuple(self.atoms))
        if int(self.dimension) < 2:
            raise ModelError('dimension', f"must be at least 2, got {self.dimension}")
        if not self.atoms:
            raise ModelError('atoms', "must not be empty")
        for idx, atom in enumerate(self.atoms):
            if atom.matrix.shape != (self.dimension, self.dimension):
                raise ModelError(f'atoms[{idx}].matrix',
                                 f"has shape {atom.matrix.shape}, expected ({self.dimension}, {self.dimension})")
        total = sum(atom.weight for atom in self.atoms)
        if abs(total - 1.0) > 1e-12:
            raise ModelError('atoms', f"weights sum to {total!r}, not 1")

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array([atom.weight for atom in self.atoms])

    @cached_property
    def matrices(self) -> np.ndarray:
        return np.stack([atom.matrix for atom in self.atoms])

    @property
    def size(self) -> int:
        return len(self.atoms)

    def scaled(self, t: float) -> 'Ensemble':
        atoms = [Atom(atom.weight, t * atom.matrix) for atom in self.atoms]
        return Ensemble(self.dimension, atoms, self.branching, self.name)

    def transposed(self) -> 'Ensemble':
        atoms = [Atom(atom.weight, atom.matrix.T) for atom in self.atoms]
        return Ensemble(self.dimension, atoms, self.branching, f"{self.name}*")

    def to_dict(self) -> Dict:
        return {
            'name': self.name,
            'dimension': self.dimension,
            'atoms': [{'weight': atom.weight, 'matrix': atom.matrix.tolist()} for atom in self.atoms],
            'branching': self.branching.to_dict(),
        }

    def fingerprint(self) -> str:
        """Stable hash of the model content."""
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class PerronData:
    """Mean matrix m, r(m), and the unit right/left Perron vectors."""

    mean_matrix: np.ndarray
    radius: float
    v: np.ndarray
    v_star: np.ndarray
    iterations: int = 0

    @property
    def right_vec(self):
        return UnitDirection(self.v)

    @property
    def left_vec(self):
        return UnitDirection(self.v_star)

    def right_residual(self) -> float:
        return float(np.max(np.abs(self.mean_matrix @ self.v - self.radius * self.v)))

    def left_residual(self) -> float:
        return float(np.max(np.abs(self.mean_matrix.T @ self.v_star - self.radius * self.v_star)))


# ----------------------------------------------------------------------
# Sampling
# ----------------------------------------------------------------------

def sample_indices(ensemble: Ensemble, rng, size=None):
    """Inverse-CDF draw of atom indices."""
    cdf = np.cumsum(ensemble.weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(size), side='right')


def sample(ensemble: Ensemble, rng) -> np.ndarray:
    """Draw one matrix with probability equal to its atom weight."""
    return ensemble.matrices[int(sample_indices(ensemble, rng))]


# ----------------------------------------------------------------------
# Perron data
# ----------------------------------------------------------------------

def _dominant_pair(matrix, cap, label):
    """Power iteration on matrix + eps*I from the all-ones direction."""
    d = matrix.shape[0]
    eps = Config.PERRON_SHIFT * float(np.trace(matrix))
    shifted = matrix + eps * np.eye(d)
    scale = max(float(np.max(np.abs(matrix))), 1e-300)

    x = np.ones(d) / math.sqrt(d)
    rq_prev = None
    residual = float('inf')
    for iteration in range(1, cap + 1):
        y = shifted @ x
        norm = np.linalg.norm(y)
        if norm == 0:
            raise NoConvergence(f"{label}: iterate vanished (nilpotent mean matrix)",
                                residual=residual, iterations=iteration)
        x = y / norm
        image = shifted @ x
        rq = float(x @ image)
        residual = float(np.max(np.abs(image - rq * x)))
        if (rq_prev is not None
                and abs(rq - rq_prev) < Config.PERRON_RAYLEIGH_TOL * max(1.0, abs(rq))
                and residual <= 1e-12 * max(abs(rq), scale)):
            return rq - eps, np.abs(x), iteration
        rq_prev = rq

    raise NoConvergence(f"{label}: power iteration cap reached", residual=residual, iterations=cap)


def mean_and_perron(ensemble: Ensemble, cap: Optional[int] = None) -> PerronData:
    """
    Mean matrix and its Perron data.

    Returns:
        PerronData with unit vectors v (right) and v_star (left)

    Raises:
        NoConvergence: if either power iteration reaches the cap
    """
    cap = cap or Config.POWER_ITERATION_CAP
    m = np.einsum('k,kij->ij', ensemble.weights, ensemble.matrices)
    r, v, it_right = _dominant_pair(m, cap, 'right Perron vector')
    _, v_star, it_left = _dominant_pair(m.T, cap, 'left Perron vector')
    v = v / np.linalg.norm(v)
    v_star = v_star / np.linalg.norm(v_star)
    m.setflags(write=False)
    return PerronData(mean_matrix=m, radius=r, v=v, v_star=v_star,
                      iterations=max(it_right, it_left))


def calibration_factor(ensemble: Ensemble, perron: Optional[PerronData] = None) -> float:
    """t = 1 / (E[N] r(m))."""
    perron = perron or mean_and_perron(ensemble)
    return 1.0 / (ensemble.branching.mean * perron.radius)


def calibration_error(ensemble: Ensemble, perron: Optional[PerronData] = None) -> float:
    """r(m) E[N] - 1."""
    perron = perron or mean_and_perron(ensemble)
    return perron.radius * ensemble.branching.mean - 1.0


def is_calibrated(ensemble: Ensemble, tol: float = 1e-10) -> bool:
    return abs(calibration_error(ensemble)) <= tol


def calibrate(ensemble: Ensemble) -> Ensemble:
    """
    Scale every atom so that r(m') E[N] = 1.

    Raises:
        NoConvergence: propagated from the Perron computation
        ArithmeticError: if the post-condition fails
    """
    t = calibration_factor(ensemble)
    if t == 1.0:
        return ensemble
    calibrated = ensemble.scaled(t)
    error = calibration_error(calibrated)
    if abs(error) > 1e-10:
        raise ArithmeticError(f"calibration post-condition failed: r(m')E[N] - 1 = {error:.3e}")
    logger.info(f"calibrated '{ensemble.name}' with t = {t:.12g}")
    return calibrated


# ----------------------------------------------------------------------
# Condition C heuristics
# ----------------------------------------------------------------------

@dataclass
class ConditionCReport:
    pattern_irreducible: bool
    primitive: bool
    limit_set_spans: bool
    verdict: bool
    primitive_word_length: Optional[int] = None
    limit_set_rank: int = 0
    products_used: int = 0
    failures: List[str] = field(default_factory=list)
    note: str = ("pattern irreducibility and limit-set spanning are heuristic necessary "
                 "evidence for condition C, not a proof")

    def to_dict(self) -> Dict:
        return {
            'pattern_irreducible': self.pattern_irreducible,
            'primitive': self.primitive,
            'primitive_word_length': self.primitive_word_length,
            'limit_set_spans': self.limit_set_spans,
            'limit_set_rank': self.limit_set_rank,
            'products_used': self.products_used,
            'verdict': 'pass' if self.verdict else 'fail',
            'failures': list(self.failures),
            'note': self.note,
        }


def wielandt_bound(d: int) -> int:
    return d * d - 2 * d + 2


def support_digraph(ensemble: Ensemble) -> np.ndarray:
    """Union of the atom sign patterns: entry (i, j) means e_j reaches e_i."""
    return np.any(ensemble.matrices > 0, axis=0)


def pattern_irreducible(ensemble: Ensemble) -> bool:
    graph = csr_matrix(support_digraph(ensemble).astype(np.int8))
    n_components, _ = connected_components(graph, directed=True, connection='strong')
    return n_components == 1


def primitive_word_length(ensemble: Ensemble, max_patterns: int = 4096) -> Optional[int]:
    """Shortest word (up to the Wielandt bound) whose Boolean product is all-positive."""
    atom_patterns = []
    seen = set()
    for a in ensemble.matrices:
        p = (a > 0).astype(np.int64)
        key = p.tobytes()
        if key not in seen:
            seen.add(key)
            atom_patterns.append(p)

    frontier = {p.tobytes(): p for p in atom_patterns}
    for length in range(1, wielandt_bound(ensemble.dimension) + 1):
        for p in frontier.values():
            if p.all():
                return length
        grown = {}
        for p in frontier.values():
            for q in atom_patterns:
                product = ((q @ p) > 0).astype(np.int64)
                grown.setdefault(product.tobytes(), product)
        if len(grown) > max_patterns:
            keys = sorted(grown)[:max_patterns]
            grown = {k: grown[k] for k in keys}
        frontier = grown
    return None


def sample_positive_products(ensemble: Ensemble, count: int, rng, max_length: Optional[int] = None):
    """
    Random products with all entries positive.

    Each product is renormalized by its largest entry while it is built; the
    removed log-scale is returned alongside so spectral radii can be restored.

    Returns:
        (products, log_scales) as lists
    """
    max_length = max_length or 2 * wielandt_bound(ensemble.dimension)
    matrices = ensemble.matrices
    products, log_scales = [], []
    attempts = 0
    while len(products) < count and attempts < 50 * count:
        attempts += 1
        length = int(rng.integers(1, max_length + 1))
        picks = sample_indices(ensemble, rng, length)
        product = np.eye(ensemble.dimension)
        log_scale = 0.0
        for k in picks:
            product = matrices[k] @ product
            top = float(product.max())
            product = product / top
            log_scale += math.log(top)
        if np.all(product > 0):
            products.append(product)
            log_scales.append(log_scale)
    return products, log_scales


def dominant_eigen(matrix):
    """Spectral radius and unit nonnegative Perron vector of a positive matrix."""
    values, vectors = np.linalg.eig(matrix)
    idx = int(np.argmax(np.abs(values)))
    vec = np.abs(np.real(vectors[:, idx]))
    return float(np.abs(values[idx])), vec / np.linalg.norm(vec)


def check_condition_C(ensemble: Ensemble, product_samples: int, rng) -> ConditionCReport:
    """Three-part heuristic check of condition C; always returns a report."""
    irreducible = pattern_irreducible(ensemble)
    word_length = primitive_word_length(ensemble)
    primitive = word_length is not None

    rank = 0
    used = 0
    if primitive:
        products, _ = sample_positive_products(ensemble, product_samples, rng)
        used = len(products)
        if products:
            directions = np.stack([dominant_eigen(p)[1] for p in products])
            rank = int(np.linalg.matrix_rank(directions, tol=Config.RANK_TOL))
    spans = rank == ensemble.dimension

    failures = []
    if not irreducible:
        failures.append("support digraph not strongly connected")
    if not primitive:
        failures.append("no strictly positive pattern product within the Wielandt bound")
    if not spans:
        failures.append(f"dominant directions of sampled products span rank {rank} < {ensemble.dimension}")

    report = ConditionCReport(
        pattern_irreducible=irreducible,
        primitive=primitive,
        limit_set_spans=spans,
        verdict=irreducible and primitive and spans,
        primitive_word_length=word_length,
        limit_set_rank=rank,
        products_used=used,
        failures=failures,
    )
    if not report.verdict:
        logger.warning(f"condition C heuristics failed for '{ensemble.name}': {'; '.join(failures)}")
    return report


# ----------------------------------------------------------------------
# Hypotheses of the limit theorems
# ----------------------------------------------------------------------

@dataclass
class MomentReport:
    s: float
    norm_moment: float
    norm_log_moment: float
    iota_log_moment: float
    all_invertible: bool
    finite: bool
    iota_approximate: bool = True
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            's': self.s,
            'E|A|^s': self.norm_moment,
            'E[|A|^s |log|A||]': self.norm_log_moment,
            'E[|A|^s |log iota(A)|]': self.iota_log_moment,
            'all_invertible': self.all_invertible,
            'finite': self.finite,
            'iota_approximate': self.iota_approximate,
            'warnings': list(self.warnings),
        }


def hypothesis_moments(ensemble: Ensemble, s: float, directions=None) -> MomentReport:
    """
    Moment integrals from the tail theorem's hypotheses, as finite sums.

    iota(a) = min |ax| over C1 is approximated on a direction grid.
    """
    if directions is None:
        from spectral import build_grid
        directions = build_grid(ensemble.dimension, 64 if ensemble.dimension == 2 else 10).points

    p = ensemble.weights
    norms = np.linalg.norm(ensemble.matrices, 2, axis=(1, 2))
    images = np.einsum('kij,gj->kgi', ensemble.matrices, directions)
    iotas = np.linalg.norm(images, axis=2).min(axis=1)

    with np.errstate(divide='ignore'):
        log_iota = np.abs(np.log(iotas))
    norm_s = norms ** s
    warnings = []

    zero_rows = [k for k, a in enumerate(ensemble.matrices) if np.any(~np.any(a > 0, axis=1))]
    for k in zero_rows:
        warnings.append(f"atom {k} has a zero row; iota estimate is approximate and the log term is large")

    dets = np.abs(np.linalg.det(ensemble.matrices))
    all_invertible = bool(np.all(dets > 1e-12))
    if not all_invertible:
        warnings.append("some atom is singular: the zero-mass-on-hyperplanes hypothesis of the "
                        "tail theorem is unverified")

    report = MomentReport(
        s=float(s),
        norm_moment=float(p @ norm_s),
        norm_log_moment=float(p @ (norm_s * np.abs(np.log(norms)))),
        iota_log_moment=float(p @ (norm_s * log_iota)),
        all_invertible=all_invertible,
        finite=False,
        warnings=warnings,
    )
    report.finite = all(math.isfinite(v) for v in
                        (report.norm_moment, report.norm_log_moment, report.iota_log_moment))
    for message in warnings:
        logger.warning(message)
    return report


@dataclass
class BranchingHypotheses:
    min_children: int
    mean: float
    second_moment: float
    calibration_product: float
    passed: bool

    def to_dict(self) -> Dict:
        return {
            'min_children': self.min_children,
            'E[N]': self.mean,
            'E[N^2]': self.second_moment,
            'r(m)E[N]': self.calibration_product,
            'passed': self.passed,
        }


def branching_hypotheses(ensemble: Ensemble, perron: Optional[PerronData] = None) -> BranchingHypotheses:
    """N >= 2 a.s., E[N^2] finite, and the calibration E[N] r(m) = 1."""
    perron = perron or mean_and_perron(ensemble)
    law = ensemble.branching
    product = law.mean * perron.radius
    return BranchingHypotheses(
        min_children=min(law.values),
        mean=law.mean,
        second_moment=law.second_moment,
        calibration_product=product,
        passed=min(law.values) >= 2 and math.isfinite(law.second_moment) and abs(product - 1.0) <= 1e-10,
    )


# ----------------------------------------------------------------------
# Lattice diagnostic
# ----------------------------------------------------------------------

@dataclass
class LatticeReport:
    status: str
    sample_count: int
    residual: Optional[float] = None
    spacing: Optional[float] = None
    warning: bool = False

    def to_dict(self) -> Dict:
        return {
            'status': self.status,
            'sample_count': self.sample_count,
            'residual': self.residual,
            'spacing': self.spacing,
            'warning': self.warning,
        }


def lattice_fit(log_values, threshold: float = 1e-6) -> LatticeReport:
    """
    Best lattice g*Z through the values, over candidate spacings taken from
    the values and their pairwise differences (at least 1e-3 * max|value|).
    """
    ell = np.asarray(log_values, dtype=float)
    if ell.size < 2:
        return LatticeReport(status='insufficient samples', sample_count=int(ell.size))

    diffs = np.abs(ell[:, None] - ell[None, :])[np.triu_indices(ell.size, k=1)]
    candidates = np.unique(np.concatenate([np.abs(ell), diffs]))
    floor = max(1e-3 * float(np.max(np.abs(ell))), 1e-12)
    candidates = candidates[candidates >= floor]
    if candidates.size == 0:
        return LatticeReport(status='insufficient samples', sample_count=int(ell.size))

    best_residual, best_spacing = float('inf'), None
    for start in range(0, candidates.size, 2048):
        block = candidates[start:start + 2048]
        ratios = ell[None, :] / block[:, None]
        residuals = np.max(np.abs(ratios - np.round(ratios)), axis=1)
        idx = int(np.argmin(residuals))
        if residuals[idx] < best_residual:
            best_residual, best_spacing = float(residuals[idx]), float(block[idx])

    arithmetic = best_residual < threshold
    return LatticeReport(
        status='arithmetic-like' if arithmetic else 'consistent-with-dense',
        sample_count=int(ell.size),
        residual=best_residual,
        spacing=best_spacing,
        warning=arithmetic,
    )


def lattice_diagnostic(ensemble: Ensemble, product_samples: int, rng) -> LatticeReport:
    """Lattice fit of log spectral radii of sampled strictly positive products."""
    products, log_scales = sample_positive_products(ensemble, product_samples, rng)
    logs = [math.log(dominant_eigen(p)[0]) + scale for p, scale in zip(products, log_scales)]
    report = lattice_fit(logs)
    if report.warning:
        logger.warning(f"log spectral radii of '{ensemble.name}' fit a lattice "
                       f"(spacing {report.spacing:.6g}, residual {report.residual:.2e})")
    return report


# ----------------------------------------------------------------------
# Model files
# ----------------------------------------------------------------------

def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def model_from_dict(data: Dict, name: str = 'model') -> Ensemble:
    """
    Build an Ensemble from the model-file structure.

    Raises:
        ModelError: naming the JSON path of the first violation
    """
    if not isinstance(data, dict):
        raise ModelError('', "model must be a JSON object")

    d = data.get('dimension')
    if not isinstance(d, int) or isinstance(d, bool) or d < 2:
        raise ModelError('dimension', f"must be an integer >= 2, got {d!r}")

    raw_atoms = data.get('atoms')
    if not isinstance(raw_atoms, list) or not raw_atoms:
        raise ModelError('atoms', "must be a non-empty list")

    atoms = []
    for idx, raw in enumerate(raw_atoms):
        path = f'atoms[{idx}]'
        if not isinstance(raw, dict):
            raise ModelError(path, "must be an object")
        weight = raw.get('weight')
        if not _is_number(weight):
            raise ModelError(f'{path}.weight', f"must be a number, got {weight!r}")
        matrix = raw.get('matrix')
        if (not isinstance(matrix, list) or len(matrix) != d
                or not all(isinstance(row, list) and len(row) == d for row in matrix)):
            raise ModelError(f'{path}.matrix', f"must be a {d}x{d} row-major array")
        for i, row in enumerate(matrix):
            for j, entry in enumerate(row):
                if not _is_number(entry):
                    raise ModelError(f'{path}.matrix[{i}][{j}]', f"must be a number, got {entry!r}")
        try:
            atoms.append(Atom(weight, matrix))
        except ModelError as e:
            raise ModelError(f'{path}.{e.path}', e.detail) from None

    raw_branching = data.get('branching')
    if not isinstance(raw_branching, dict):
        raise ModelError('branching', "must be an object with 'constant' or 'pmf'")
    if 'constant' in raw_branching:
        c = raw_branching['constant']
        if not isinstance(c, int) or isinstance(c, bool) or c < 2:
            raise ModelError('branching.constant', f"must be an integer >= 2, got {c!r}")
        branching = BranchingLaw.constant(c)
    elif 'pmf' in raw_branching:
        pmf = raw_branching['pmf']
        if not isinstance(pmf, dict) or not pmf:
            raise ModelError('branching.pmf', "must be a non-empty object")
        parsed = {}
        for key, p in pmf.items():
            try:
                k = int(key)
            except (TypeError, ValueError):
                raise ModelError(f'branching.pmf.{key}', "key must be an integer") from None
            if k < 2:
                raise ModelError(f'branching.pmf.{key}', "support must be >= 2")
            if not _is_number(p) or p < 0:
                raise ModelError(f'branching.pmf.{key}', f"must be a probability, got {p!r}")
            parsed[k] = float(p)
        try:
            branching = BranchingLaw.finite(parsed)
        except ModelError as e:
            raise ModelError('branching.pmf', e.detail) from None
    else:
        raise ModelError('branching', "must contain 'constant' or 'pmf'")

    return Ensemble(dimension=d, atoms=atoms, branching=branching, name=data.get('name', name))


def load_model(filepath: str) -> Ensemble:
    """
    Load and validate a model file.

    Raises:
        FileNotFoundError: if the file is missing
        ModelError: on malformed JSON or any invariant violation
    """
    with open(filepath, 'r') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelError('', f"invalid JSON: {e}") from None
    ensemble = model_from_dict(data, name=os.path.splitext(os.path.basename(filepath))[0])
    logger.info(f"loaded model '{ensemble.name}': d={ensemble.dimension}, "
                f"{ensemble.size} atoms, E[N]={ensemble.branching.mean:g}")
    return ensemble
