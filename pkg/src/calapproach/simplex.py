"""Simplex geometry: grids, distances, projections onto convex targets.

Probability vectors are plain 1-d float arrays; :func:`as_simplex` validates
them. Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import GridBudgetExceeded, ProjectionDidNotConverge

DEFAULT_GRID_BUDGET = 10**6
SIMPLEX_ATOL = 1e-12


def as_simplex(x, atol=SIMPLEX_ATOL):
    """Return ``x`` as a float array after checking it is a probability vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ValueError(f"expected a non-empty 1-d vector, got shape {x.shape}")
    if np.any(x < -atol) or abs(x.sum() - 1.0) > max(atol, 1e-12 * x.size):
        raise ValueError(f"not a probability vector: {x}")
    return x


def uniform(d):
    return np.full(d, 1.0 / d)


def vertex(d, i):
    e = np.zeros(d)
    e[i] = 1.0
    return e


@dataclass(frozen=True)
class FiniteGrid:
    """Finite set of points with a covering radius.

    ``mesh`` is the radius within which every point of the covered set has a
    grid point (Euclidean).
    """

    points: np.ndarray
    mesh: float
    resolution: int = 0
    _sq_norms: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("grid must hold at least one point")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_sq_norms", np.einsum("ij,ij->i", pts, pts))

    def __len__(self):
        return self.points.shape[0]

    @property
    def dimension(self):
        return self.points.shape[1]

    def nearest(self, z):
        """Index of the grid point closest to ``z``."""
        z = np.asarray(z, dtype=float)
        return int(np.argmin(self._sq_norms - 2.0 * self.points @ z))

    def distance(self, z):
        z = np.asarray(z, dtype=float)
        return float(np.linalg.norm(self.points[self.nearest(z)] - z))


def _compositions(m, d):
    # all nonnegative integer vectors of length d summing to m, lexicographic
    if d == 1:
        return np.array([[m]], dtype=np.int64)
    blocks = []
    for k in range(m + 1):
        rest = _compositions(m - k, d - 1)
        blocks.append(np.hstack([np.full((rest.shape[0], 1), k, dtype=np.int64), rest]))
    return np.vstack(blocks)


def simplex_covering_radius(dimension, m):
    """Exact Euclidean covering radius of the grid {k/m : sum k = m} of the simplex."""
    a = dimension // 2
    return math.sqrt(a * (dimension - a) / dimension) / m


def simplex_grid(dimension, mesh, budget=DEFAULT_GRID_BUDGET):
    """Rational grid of the probability simplex in R^dimension.

    Uses denominator ``m = ceil(sqrt(dimension) / mesh)``, which bounds the
    covering radius by ``mesh``. The returned grid records the exact covering
    radius achieved, which is usually smaller.

    >>> simplex_grid(2, 0.8).points.tolist()
    [[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]]
    """
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    if not mesh > 0:
        raise ValueError("mesh must be > 0")
    if dimension == 1:
        return FiniteGrid(np.ones((1, 1)), 0.0, 1)
    m = math.ceil(math.sqrt(dimension) / mesh)
    count = math.comb(m + dimension - 1, dimension - 1)
    if count > budget:
        raise GridBudgetExceeded(count, budget)
    points = _compositions(m, dimension) / m
    return FiniteGrid(points, simplex_covering_radius(dimension, m), m)


def product_grid(factors, budget=DEFAULT_GRID_BUDGET):
    """Cartesian product of grids, points concatenated in factor order.

    The covering radius of the product is the root-sum-square of the factor radii.
    """
    count = math.prod(len(g) for g in factors)
    if count > budget:
        raise GridBudgetExceeded(count, budget)
    pts = factors[0].points
    for g in factors[1:]:
        a = np.repeat(pts, len(g), axis=0)
        b = np.tile(g.points, (pts.shape[0], 1))
        pts = np.hstack([a, b])
    mesh = math.sqrt(sum(g.mesh**2 for g in factors))
    return FiniteGrid(pts, mesh)


def project_orthant(A):
    """Split ``A`` into its projection on the nonpositive orthant and the rest.

    Returns ``(negative_part, positive_part)`` with ``A = negative + positive``;
    the two parts have disjoint supports, so their inner product is exactly 0.
    """
    A = np.asarray(A, dtype=float)
    return np.minimum(A, 0.0), np.maximum(A, 0.0)


# --------------------------------------------------------------------------
# convex targets


class ConvexTarget:
    """Closed convex subset of R^d that can project points onto itself."""

    dimension: int
    radius: float = math.inf

    def project(self, z):
        raise NotImplementedError

    def distance(self, z):
        z = np.asarray(z, dtype=float)
        return float(np.linalg.norm(z - self.project(z)))


class Halfspaces(ConvexTarget):
    """Intersection of halfspaces ``<w, normal_l> <= offset_l``."""

    def __init__(self, normals, offsets, radius=math.inf):
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
        if normals.shape[0] != offsets.shape[0] or normals.shape[0] == 0:
            raise ValueError("need one offset per normal and at least one halfspace")
        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms == 0):
            raise ValueError("zero normal vector")
        self.normals = normals
        self.offsets = offsets
        self.dimension = normals.shape[1]
        self.radius = radius
        self._sq = norms**2

    def __len__(self):
        return self.normals.shape[0]

    def violation(self, z):
        """Largest amount by which ``z`` breaks a constraint (<= 0 inside)."""
        return float(np.max(self.normals @ z - self.offsets))

    def project(self, z, tol=1e-10, max_cycles=10**5):
        return project_convex(z, self, tol=tol, max_cycles=max_cycles)


class OracleTarget(ConvexTarget):
    """Convex set given by its projection map."""

    def __init__(self, projector: Callable[[np.ndarray], np.ndarray], dimension, radius=math.inf):
        self._projector = projector
        self.dimension = dimension
        self.radius = radius

    def project(self, z):
        return np.asarray(self._projector(np.asarray(z, dtype=float)), dtype=float)


def point_target(p):
    p = np.atleast_1d(np.asarray(p, dtype=float))
    return OracleTarget(lambda z: p.copy(), p.size, radius=float(np.linalg.norm(p)))


def ball_target(center, r):
    center = np.atleast_1d(np.asarray(center, dtype=float))

    def proj(z):
        v = z - center
        n = np.linalg.norm(v)
        return z.copy() if n <= r else center + v * (r / n)

    return OracleTarget(proj, center.size, radius=float(np.linalg.norm(center)) + r)


def box_target(lower, upper):
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    return OracleTarget(lambda z: np.clip(z, lower, upper), lower.size,
                        radius=float(np.linalg.norm(np.maximum(abs(lower), abs(upper)))))


def negative_orthant(d):
    return OracleTarget(lambda z: np.minimum(z, 0.0), d)


def whole_space(d):
    return OracleTarget(lambda z: z.copy(), d)


def project_convex(z, target, tol=1e-10, max_cycles=10**5):
    """Euclidean projection of ``z`` onto a convex target.

    Halfspace intersections are handled by Dykstra's cyclic projections,
    stopping once a full cycle moves the iterate less than ``tol``.
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("z must be finite")
    if not isinstance(target, Halfspaces):
        return target.project(z)

    C, b, sq = target.normals, target.offsets, target._sq
    if np.all(C @ z <= b):
        return z.copy()
    x = z.copy()
    incr = np.zeros_like(C)
    move = math.inf
    for cycle in range(1, max_cycles + 1):
        start = x.copy()
        for l in range(C.shape[0]):
            y = x + incr[l]
            excess = C[l] @ y - b[l]
            x = y - (excess / sq[l]) * C[l] if excess > 0 else y
            incr[l] = y - x
        move = float(np.linalg.norm(x - start))
        if move < tol:
            return x
    raise ProjectionDidNotConverge(move, max_cycles)


# --------------------------------------------------------------------------
# Frank-Wolfe over the simplex


class FWResult(NamedTuple):
    coeffs: np.ndarray
    gap: float
    iterations: int


def frank_wolfe_quadratic(A, b, c=None, weight=1.0, y0=None, tol=1e-8, max_iter=10**4):
    """Minimise ``weight/2 * ||A y - b||^2 + c.y`` over the probability simplex.

    Away-step Frank-Wolfe with exact line search. The linear subproblem is a
    vertex pick; the loop stops when the Frank-Wolfe duality gap drops below
    ``tol`` or after ``max_iter`` iterations, whichever comes first.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    k = A.shape[1]
    c = np.zeros(k) if c is None else np.asarray(c, dtype=float)
    if y0 is None:
        Ab = A.T @ b
        y = np.zeros(k)
        # start from the vertex with the best objective
        obj = 0.5 * weight * (np.einsum("ij,ij->j", A, A) - 2 * Ab) + c
        y[int(np.argmin(obj))] = 1.0
    else:
        y = np.array(y0, dtype=float)
    Ay = A @ y
    gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = weight * (A.T @ (Ay - b)) + c
        gy = g @ y
        s = int(np.argmin(g))
        gap = gy - g[s]
        if gap < tol:
            break
        support = np.flatnonzero(y > 0)
        a = int(support[np.argmax(g[support])])
        if gap >= g[a] - gy or y[a] >= 1.0:
            Ad = A[:, s] - Ay
            slope = g[s] - gy
            gmax = 1.0
            toward = True
        else:
            Ad = Ay - A[:, a]
            slope = gy - g[a]
            gmax = y[a] / (1.0 - y[a])
            toward = False
        curv = weight * (Ad @ Ad)
        step = gmax if curv <= 0 else min(gmax, -slope / curv)
        if step <= 0:
            break
        if toward:
            y *= 1.0 - step
            y[s] += step
        else:
            y *= 1.0 + step
            y[a] -= step
            if step == gmax:
                y[a] = 0.0
        np.maximum(y, 0.0, out=y)
        Ay = Ay + step * Ad
    y /= y.sum()
    return FWResult(y, float(max(gap, 0.0)), it)


class LinearImageProjection(NamedTuple):
    coeffs: np.ndarray
    image: np.ndarray
    gap: float


def project_linear_image(target, map_vertices, tol=1e-8, max_iter=10**4):
    """Nearest point to ``target`` in the convex hull of ``map_vertices``.

    ``map_vertices`` holds the images of the simplex vertices under a linear
    map (one per row). Returns the simplex coefficients, the achieved image
    and the final Frank-Wolfe gap. Never raises on slow convergence: the best
    iterate is returned with its gap.
    """
    V = np.atleast_2d(np.asarray(map_vertices, dtype=float))
    if V.shape[0] == 0:
        raise ValueError("map_vertices must be non-empty")
    t = np.atleast_1d(np.asarray(target, dtype=float))
    res = frank_wolfe_quadratic(V.T, t, weight=2.0, tol=tol, max_iter=max_iter)
    return LinearImageProjection(res.coeffs, res.coeffs @ V, res.gap)
