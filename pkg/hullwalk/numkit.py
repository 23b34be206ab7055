"""
Dense numerical primitives.

Positive/negative part splitting, hull membership of the origin through the
minimum-norm point of a convex hull (Wolfe's algorithm), an LP feasibility
oracle for cross-checks, active-set nonnegative least squares and
power-iteration estimates of operator norms and condition numbers.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from hullwalk.errors import NonConvergence, Singular

logger = logging.getLogger('hullwalk.numkit')

DEFAULT_TOL = 1e-9
NNLS_TOL = 1e-7
CONDITION_TOL = 1e-9
POWER_MAX_ITER = 100000

INSIDE = "Inside"
OUTSIDE = "Outside"
DEGENERATE = "Degenerate"

# weights at or below this are treated as zero inside Wolfe's minor cycle
_WEIGHT_FLOOR = 1e-14


def as_vector(x):
    """Return x as a finite 1-d float64 array."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a nonempty 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def as_matrix(m):
    """Return m as a finite 2-d float64 array."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def as_point_array(points, dim=None):
    """Stack a list of vectors (or accept an m x d array) into an m x d array."""
    if isinstance(points, np.ndarray) and points.ndim == 2:
        arr = np.asarray(points, dtype=np.float64)
    elif len(points) == 0:
        if dim is None:
            raise ValueError("an empty point set needs an explicit dimension")
        arr = np.zeros((0, dim))
    else:
        arr = np.vstack([as_vector(p) for p in points])
    if not np.all(np.isfinite(arr)):
        raise ValueError("points have non-finite entries")
    return arr


def positive_part(x):
    x = as_vector(x)
    return np.maximum(x, 0.0)


def negative_part(x):
    """
    Negative part of a vector.

    Args:
        x: Vector

    Returns:
        numpy.ndarray: max(0, -x) entrywise, so x = positive_part(x) - negative_part(x)
    """
    x = as_vector(x)
    return np.maximum(-x, 0.0)


def negative_part_gap(x, y):
    """Slack in ||x_-|| >= ||y_-|| - ||x - y||; never negative."""
    x = as_vector(x)
    y = as_vector(y)
    return float(np.linalg.norm(negative_part(x)) - np.linalg.norm(negative_part(y))
                 + np.linalg.norm(x - y))


@dataclass(frozen=True)
class HullVerdict:
    """Outcome of an origin-in-hull test, with its certificate."""

    tag: str
    min_norm_value: float
    coefficients: np.ndarray = None
    direction: np.ndarray = None
    margin: float = None

    @property
    def inside(self):
        return self.tag == INSIDE

    @property
    def outside(self):
        return self.tag == OUTSIDE

    @property
    def degenerate(self):
        return self.tag == DEGENERATE

    def to_dict(self):
        out = {"tag": self.tag, "min_norm_value": self.min_norm_value}
        if self.coefficients is not None:
            out["coefficients"] = self.coefficients.tolist()
        if self.direction is not None:
            out["direction"] = self.direction.tolist()
        if self.margin is not None:
            out["margin"] = self.margin
        return out


def _affine_minimizer(Y):
    """Minimum-norm point of the affine hull of the rows of Y, as weights summing to 1."""
    k = Y.shape[0]
    if k == 1:
        return np.ones(1)
    G = Y @ Y.T
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = G
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    mu = sol[:k]
    total = mu.sum()
    if total != 0.0:
        mu = mu / total
    return mu


def min_norm_point(points, tol=DEFAULT_TOL, max_major=None, warm_start=None):
    """
    Minimum-norm point of conv(points) by Wolfe's algorithm.

    Args:
        points: List of vectors, or an m x d array
        tol (float): Optimality tolerance, relative to max(1, max ||x_i||^2)
        max_major (int, optional): Major cycle cap, default 10 * number of points
        warm_start (array, optional): Convex weights from a previous call on a
            prefix of the same point list

    Returns:
        tuple: (p, weights) with p = weights @ points

    Raises:
        NonConvergence: If the major cycle cap is hit
    """
    X = as_point_array(points)
    m = X.shape[0]
    if m == 0:
        raise ValueError("min_norm_point needs at least one point")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_major is None:
        max_major = max(10 * m, 20)

    sq_norms = np.einsum("ij,ij->i", X, X)
    scale = max(1.0, float(sq_norms.max()))

    support, weights = None, None
    if warm_start is not None:
        ws = np.zeros(m)
        given = np.asarray(warm_start, dtype=np.float64)[:m]
        ws[:given.size] = np.clip(given, 0.0, None)
        if ws.sum() > 0:
            support = list(np.flatnonzero(ws > _WEIGHT_FLOOR))
            weights = ws[support] / ws[support].sum()
    if support is None:
        support = [int(np.argmin(sq_norms))]
        weights = np.ones(1)

    p = weights @ X[support]
    for _ in range(max_major):
        p_sq = float(p @ p)
        scores = X @ p
        j = int(np.argmin(scores))
        if scores[j] >= p_sq - tol * scale:
            break

        if j not in support:
            support.append(j)
            weights = np.append(weights, 0.0)
        while True:
            mu = _affine_minimizer(X[support])
            if np.all(mu > _WEIGHT_FLOOR):
                weights = mu
                break
            falling = mu <= _WEIGHT_FLOOR
            gap = weights[falling] - mu[falling]
            ratios = np.zeros(gap.size)
            np.divide(weights[falling], gap, out=ratios, where=gap > 0.0)
            theta = float(np.clip(ratios.min(), 0.0, 1.0))
            weights = (1.0 - theta) * weights + theta * mu
            keep = weights > _WEIGHT_FLOOR
            if np.all(keep):
                keep[np.flatnonzero(falling)[0]] = False
            support = [s for s, k in zip(support, keep) if k]
            weights = weights[keep]
            weights = weights / weights.sum()

        p_next = weights @ X[support]
        if float(p_next @ p_next) >= p_sq * (1.0 - 1e-14):
            # no strict decrease left at double precision
            p = p_next
            break
        p = p_next
    else:
        raise NonConvergence("wolfe", max_major, f"{m} points")

    full = np.zeros(m)
    full[support] = weights
    return full @ X, full


def combination_residual(weights, points):
    """
    ||sum_i weights_i x_i|| recomputed from the points with exactly rounded sums.

    Computed from the points, not from the running point kept by
    min_norm_point.
    """
    weights = np.asarray(weights, dtype=np.float64)
    X = np.asarray(points, dtype=np.float64)
    coords = [math.fsum(column) for column in (weights[:, None] * X).T]
    return math.sqrt(math.fsum(c * c for c in coords))


def contains_origin(points, tol=DEFAULT_TOL, strict=False, warm_start=None, dim=None):
    """
    Decide whether the origin lies in conv(points).

    The threshold on ||p|| is tol * max(1, max ||x_i||). An empty point set is
    reported Outside with direction e_1 and infinite margin.

    Args:
        points: List of vectors, or an m x d array
        tol (float): Certificate tolerance
        strict (bool): Report ||p|| within 10x the threshold as Degenerate
        warm_start (array, optional): Weights from an earlier call
        dim (int, optional): Ambient dimension, needed only for an empty list

    Returns:
        HullVerdict: Verdict with a re-validated certificate
    """
    X = as_point_array(points, dim=dim)
    m, d = X.shape
    if m == 0:
        direction = np.zeros(d)
        direction[0] = 1.0
        return HullVerdict(OUTSIDE, float("inf"), direction=direction, margin=float("inf"))

    p, weights = min_norm_point(X, tol=tol, warm_start=warm_start)
    norm_p = float(np.linalg.norm(p))
    threshold = tol * max(1.0, float(np.sqrt(np.einsum("ij,ij->i", X, X).max())))

    if norm_p <= threshold:
        residual = combination_residual(weights, X)
        if (residual <= threshold and np.all(weights >= 0.0)
                and abs(math.fsum(weights) - 1.0) <= 1e-12 * m):
            return HullVerdict(INSIDE, norm_p, coefficients=weights)
        logger.debug(f"inside certificate failed revalidation (residual {residual:.3e})")
        return HullVerdict(DEGENERATE, norm_p, coefficients=weights)

    if strict and norm_p <= 10.0 * threshold:
        return HullVerdict(DEGENERATE, norm_p, coefficients=weights)

    direction = p / norm_p
    margin = float(np.min(X @ direction))
    if margin <= 0.0:
        logger.debug(f"separating direction failed revalidation (margin {margin:.3e})")
        return HullVerdict(DEGENERATE, norm_p, coefficients=weights, direction=direction,
                           margin=margin)
    return HullVerdict(OUTSIDE, norm_p, coefficients=weights, direction=direction, margin=margin)


def lp_contains_origin(points, dim=None):
    """
    LP feasibility oracle: is there lambda >= 0, sum lambda = 1, sum lambda x = 0?

    Independent of Wolfe's algorithm; used for cross-validation.
    """
    X = as_point_array(points, dim=dim)
    m, d = X.shape
    if m == 0:
        return False
    A_eq = np.vstack([X.T, np.ones((1, m))])
    b_eq = np.zeros(d + 1)
    b_eq[d] = 1.0
    result = optimize.linprog(np.zeros(m), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if result.status == 0:
        return True
    if result.status == 2:
        return False
    raise NonConvergence("linprog", getattr(result, "nit", 0), result.message)


def nnls(M, y, tol=NNLS_TOL, max_iter=None):
    """
    Nonnegative least squares by the Lawson-Hanson active set method.

    Args:
        M: m x k matrix
        y: Vector of length m
        tol (float): KKT tolerance on the gradient
        max_iter (int, optional): Outer iteration cap, default 30 * k

    Returns:
        numpy.ndarray: z >= 0 minimizing ||y - M z||

    Raises:
        NonConvergence: If the iteration cap is hit
    """
    M = as_matrix(M)
    y = as_vector(y)
    if M.shape[0] != y.size:
        raise ValueError(f"shape mismatch: M is {M.shape}, y has {y.size} entries")
    if tol <= 0:
        raise ValueError("tol must be positive")
    k = M.shape[1]
    if max_iter is None:
        max_iter = 30 * max(k, 1)

    z = np.zeros(k)
    passive = np.zeros(k, dtype=bool)
    w = M.T @ (y - M @ z)

    iterations = 0
    while np.any(~passive & (w > tol)):
        iterations += 1
        if iterations > max_iter:
            raise NonConvergence("nnls", max_iter)
        candidates = np.where(passive, -np.inf, w)
        passive[int(np.argmax(candidates))] = True

        while True:
            s = np.zeros(k)
            s[passive] = np.linalg.lstsq(M[:, passive], y, rcond=None)[0]
            falling = passive & (s <= 0.0)
            if not np.any(falling):
                break
            idx = np.flatnonzero(falling)
            gap = z[idx] - s[idx]
            ratios = np.zeros(idx.size)
            np.divide(z[idx], gap, out=ratios, where=gap > 0.0)
            blocking = idx[int(np.argmin(ratios))]
            z = z + ratios.min() * (s - z)
            z[blocking] = 0.0
            passive &= z > 0.0
            z[~passive] = 0.0
        z = s
        w = M.T @ (y - M @ z)

    z[~passive] = 0.0
    return z


def nnls_kkt_residual(M, y, z):
    """Largest KKT violation of a candidate NNLS solution."""
    M = as_matrix(M)
    g = M.T @ (M @ z - as_vector(y))
    positive = z > 0.0
    violation = 0.0
    if np.any(positive):
        violation = max(violation, float(np.max(np.abs(g[positive]))))
    if np.any(~positive):
        violation = max(violation, float(np.max(-g[~positive])))
    if np.any(z < 0.0):
        violation = max(violation, float(np.max(-z)))
    return violation


def _start_vector(shape):
    # fixed per matrix shape so repeated calls agree bit for bit
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(list(shape))))
    v = rng.standard_normal(shape[1])
    return v / np.linalg.norm(v)


def _power_iteration(apply, shape, tol, max_iter, method):
    v = _start_vector(shape)
    estimate = None
    for _ in range(max_iter):
        w = apply(v)
        value = float(v @ w)
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        if estimate is not None and abs(value - estimate) <= tol * abs(value):
            return value
        estimate = value
    raise NonConvergence(method, max_iter)


def operator_norm(M, tol=CONDITION_TOL, max_iter=POWER_MAX_ITER):
    """Largest singular value of M by power iteration on M^T M."""
    M = as_matrix(M)
    if not np.any(M):
        return 0.0
    eig = _power_iteration(lambda v: M.T @ (M @ v), M.shape, tol, max_iter,
                           "power iteration")
    return float(np.sqrt(max(eig, 0.0)))


def _inverse_gram_operator(F):
    """Return v -> (F^T F)^{-1} v using triangular solves where possible."""
    n = F.shape[0]
    lower = not np.any(np.triu(F, 1))
    upper = not np.any(np.tril(F, -1))
    if lower or upper:
        if np.any(np.diag(F) == 0.0):
            raise Singular("triangular matrix has a zero pivot")

        def apply(v):
            a = linalg.solve_triangular(F, v, trans='T', lower=lower)
            return linalg.solve_triangular(F, a, lower=lower)
        return apply

    lu, piv = linalg.lu_factor(F, check_finite=False)
    if np.any(np.diag(lu) == 0.0):
        raise Singular(f"LU factorization of the {n}x{n} matrix has a zero pivot")

    def apply(v):
        a = linalg.lu_solve((lu, piv), v, trans=1)
        return linalg.lu_solve((lu, piv), a)
    return apply


def singular_value_extremes(F, tol=CONDITION_TOL, max_iter=POWER_MAX_ITER):
    """
    Largest and smallest singular values of a square invertible matrix.

    Returns:
        tuple: (s_max, s_min)

    Raises:
        Singular: If a solve hits a zero pivot
        NonConvergence: If either iteration hits its cap
    """
    F = as_matrix(F)
    if F.shape[0] != F.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {F.shape}")
    solve = _inverse_gram_operator(F)
    s_max = operator_norm(F, tol=tol, max_iter=max_iter)
    inv_eig = _power_iteration(solve, F.shape, tol, max_iter, "inverse iteration")
    if inv_eig <= 0.0:
        raise Singular("inverse iteration produced a nonpositive eigenvalue")
    return s_max, float(1.0 / np.sqrt(inv_eig))


def condition_number(F, tol=CONDITION_TOL, max_iter=POWER_MAX_ITER):
    """
    Spectral condition number s_max(F) / s_min(F).

    Args:
        F: Square invertible matrix (triangular matrices use triangular solves)
        tol (float): Relative stopping tolerance on the Rayleigh quotients

    Returns:
        float: The condition number
    """
    s_max, s_min = singular_value_extremes(F, tol=tol, max_iter=max_iter)
    return s_max / s_min
