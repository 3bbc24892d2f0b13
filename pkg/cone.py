"""
Geometry of the nonnegative orthant C = R_+^d.

Vectors are Euclidean-normalized onto the slice C1 = {x in C : |x| = 1}.
The orthant is self-dual, so dual directions reuse the same types.
"""
from dataclasses import dataclass

import numpy as np

from errors import InteriorRequired, ZeroVector


@dataclass(frozen=True, eq=False)
class ConeVector:
    """A point of C."""

    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        if coords.ndim != 1:
            raise ValueError(f"ConeVector needs a flat coordinate array, got shape {coords.shape}")
        if np.any(coords < 0) or not np.all(np.isfinite(coords)):
            raise ValueError(f"ConeVector coordinates must be finite and >= 0: {coords}")
        coords.setflags(write=False)
        object.__setattr__(self, 'coords', coords)

    @property
    def nonzero(self) -> bool:
        return bool(np.any(self.coords > 0))

    @property
    def dimension(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True, eq=False)
class UnitDirection(ConeVector):
    """A point of C1 (unit Euclidean norm)."""

    def __post_init__(self):
        super().__post_init__()
        if abs(float(self.coords @ self.coords) - 1.0) > 1e-12:
            raise ValueError(f"UnitDirection must have norm 1, got {np.linalg.norm(self.coords)}")


def as_array(x):
    """Coordinates of a ConeVector, UnitDirection or array-like."""
    if isinstance(x, ConeVector):
        return x.coords
    return np.asarray(x, dtype=float)


def normalize(x) -> UnitDirection:
    """
    Project a nonzero cone vector onto C1.

    Raises:
        ZeroVector: if every coordinate is 0
    """
    coords = as_array(x)
    norm = np.linalg.norm(coords)
    if norm == 0:
        raise ZeroVector("cannot normalize the zero vector")
    unit = coords / norm
    # repeated normalization must be a fixed point
    if abs(float(unit @ unit) - 1.0) > 1e-12:
        unit = unit / np.linalg.norm(unit)
    return UnitDirection(unit)


def normalize_rows(points):
    """Row-wise Euclidean normalization of a (n, d) array; rows must be nonzero."""
    points = np.asarray(points, dtype=float)
    norms = np.linalg.norm(points, axis=1)
    if np.any(norms == 0):
        raise ZeroVector("cannot normalize a zero row")
    return points / norms[:, None], norms


def birkhoff_distance(x, y) -> float:
    """
    Hilbert projective distance log(max_i x_i/y_i * max_j y_j/x_j).

    Returns +inf when the supports of x and y differ.
    """
    x = as_array(x)
    y = as_array(y)
    support_x = x > 0
    support_y = y > 0
    if not np.array_equal(support_x, support_y):
        return float('inf')
    if not support_x.any():
        return 0.0
    ratio = x[support_x] / y[support_x]
    dist = float(np.log(ratio.max()) - np.log(ratio.min()))
    return max(dist, 0.0)


def in_interior(x) -> bool:
    """True iff every coordinate is strictly positive (no epsilon)."""
    return bool(np.all(as_array(x) > 0))


def projective_action(matrix, x):
    """a·x = ax/|ax|."""
    image = np.asarray(matrix, dtype=float) @ as_array(x)
    return normalize(image)


def tau_lower_bound(x, ensemble, samples, rng, max_length=8) -> float:
    """
    Monte Carlo estimate of tau(x) = inf |ax|/|a| over the semigroup.

    Products of 1..max_length random atoms are drawn; the operator 2-norm is
    used for |a|. The value is the minimum over the sampled products, the
    empirical counterpart of the lower bound tau(x) on |ax|/|a|. Unsampled
    products can only push the true infimum lower, so the estimate is never
    below tau(x) and is reported as a diagnostic, not a certified bound.

    Raises:
        InteriorRequired: if x has a zero coordinate
    """
    coords = as_array(x)
    if not in_interior(coords):
        raise InteriorRequired(f"tau(x) needs an interior direction, got {coords}")
    x_unit = normalize(coords).coords

    matrices = ensemble.matrices
    weights = ensemble.weights
    best = float('inf')
    # single atoms are always part of the estimate
    for a in matrices:
        best = min(best, np.linalg.norm(a @ x_unit) / np.linalg.norm(a, 2))

    lengths = rng.integers(1, max_length + 1, size=samples)
    for length in lengths:
        picks = rng.choice(len(matrices), size=int(length), p=weights)
        product = np.eye(ensemble.dimension)
        for k in picks:
            product = matrices[k] @ product
            product = product / np.linalg.norm(product, 2)
        best = min(best, np.linalg.norm(product @ x_unit) / np.linalg.norm(product, 2))
    return float(best)
