"""
Cones, projections and Gaussian widths.

A cone is given by an invertible lower-triangular F as C = {x : F x >= 0};
its polar is C* = {F^t u : u <= 0}. Projections onto both reduce to
nonnegative least squares, and every y splits as y = P_C y + P_C* y with
orthogonal parts.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, spatial, special

from hullwalk import numkit
from hullwalk.conelab import PrefixMatrix
from hullwalk.errors import NonConvergence
from hullwalk.randwalk import sample_uniform_ball

logger = logging.getLogger('hullwalk.widthlab')

MOREAU_TOL = 1e-8
POLAR_SIGN_TOL = 1e-10


class ConeSpec:
    """
    The cone C = F^{-1}(R_+^N).

    ConeSpec.full_space(N) stands for C = R^N (so C* = {0}); it is the only
    case where no invertible F is involved.
    """

    def __init__(self, F, N=None, full_space=False):
        self.full_space = bool(full_space)
        if self.full_space:
            if N is None or N < 1:
                raise ValueError("full space cone needs a dimension")
            self.F = None
            self.N = int(N)
            self._inverse = None
            return
        if not isinstance(F, PrefixMatrix):
            F = PrefixMatrix(F)
        if np.any(np.diag(F.entries) == 0.0):
            raise ValueError("cone matrix must be invertible")
        if N is not None and N != F.N:
            raise ValueError(f"dimension mismatch: N={N}, F is {F.N}x{F.N}")
        self.F = F
        self.N = F.N
        self._inverse = linalg.solve_triangular(F.entries, np.eye(self.N), lower=True)

    @classmethod
    def full(cls, N):
        return cls(None, N=N, full_space=True)

    @property
    def inverse(self):
        """F^{-1}; its columns generate C."""
        return self._inverse

    def contains(self, x, tol=POLAR_SIGN_TOL):
        if self.full_space:
            return True
        return bool(np.all(self.F.entries @ x >= -tol))

    def __repr__(self):
        kind = "full" if self.full_space else self.F.kind
        return f"ConeSpec(N={self.N}, kind={kind})"


@dataclass(frozen=True)
class WidthEstimate:
    """Monte Carlo mean with its standard error."""

    mean: float
    std_error: float
    trials: int

    @classmethod
    def from_samples(cls, samples):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.size < 2:
            raise ValueError("a width estimate needs at least two samples")
        return cls(mean=float(samples.mean()),
                   std_error=float(samples.std(ddof=1) / math.sqrt(samples.size)),
                   trials=int(samples.size))

    def to_dict(self):
        return {"mean": self.mean, "std_error": self.std_error, "trials": self.trials}


def _check_dim(spec, y):
    y = numkit.as_vector(y)
    if y.size != spec.N:
        raise ValueError(f"vector has {y.size} entries, cone lives in R^{spec.N}")
    return y


def project_onto_cone(spec, y, tol=MOREAU_TOL):
    """
    Euclidean projection of y onto C.

    Computed as x = F^{-1} z with z = nnls(F^{-1}, y). The result is checked
    against the optimality condition <x, y - x> <= tol * ||y||**2.

    Raises:
        NonConvergence: If nnls fails or the optimality check does not hold
    """
    y = _check_dim(spec, y)
    if spec.full_space:
        return y.copy()
    z = numkit.nnls(spec.inverse, y)
    x = spec.inverse @ z
    scale = float(y @ y)
    if float(x @ (y - x)) > tol * max(scale, 1e-300):
        raise NonConvergence("cone projection", 1, "optimality check failed")
    return x


def project_onto_polar(spec, y):
    """Euclidean projection of y onto C* = F^t(R_-^N)."""
    y = _check_dim(spec, y)
    if spec.full_space:
        return np.zeros_like(y)
    generators = -spec.F.entries.T
    v = numkit.nnls(generators, y)
    return generators @ v


def moreau_decompose(spec, y, tol=MOREAU_TOL):
    """
    Split y into its projections onto C and C*.

    Args:
        spec (ConeSpec): The cone
        y: Vector in R^N
        tol (float): Relative tolerance for the reconstruction and orthogonality checks

    Returns:
        tuple: (p, q) with p = P_C y and q = P_C* y

    Raises:
        NonConvergence: If y - p - q or <p, q> exceed the tolerance
    """
    y = _check_dim(spec, y)
    p = project_onto_cone(spec, y, tol=tol)
    q = project_onto_polar(spec, y)
    norm_y = float(np.linalg.norm(y))
    if norm_y == 0.0:
        return p, q
    residual = float(np.linalg.norm(y - p - q))
    cross = abs(float(p @ q))
    if residual > tol * norm_y or cross > tol * norm_y ** 2:
        logger.warning(f"Moreau check failed: residual {residual:.3e}, cross term {cross:.3e}")
        raise NonConvergence("moreau decomposition", 1,
                             f"residual {residual:.3e}, cross term {cross:.3e}")
    return p, q


def gaussian_width_cone(spec, trials, rng):
    """
    Monte Carlo Gaussian width of C intersected with the unit ball.

    For a closed convex cone the supremum of <Y, x> over C and the unit ball
    is ||P_C Y||, so the estimate averages projection norms.
    """
    if trials < 2:
        raise ValueError("trials must be at least 2")
    Y = rng.normal((trials, spec.N))
    norms = [np.linalg.norm(project_onto_cone(spec, y)) for y in Y]
    return WidthEstimate.from_samples(norms)


def width_budget_check(spec, trials, rng):
    """
    Check w(C)**2 + w(C*)**2 <= N on shared Gaussian samples.

    The allowance is three standard errors of the sum of squared means,
    propagated to first order.

    Returns:
        tuple: (wC, wCstar, budget_ok)
    """
    if trials < 100:
        raise ValueError("trials must be at least 100")
    Y = rng.normal((trials, spec.N))
    cone_norms = np.empty(trials)
    polar_norms = np.empty(trials)
    for k, y in enumerate(Y):
        p, q = moreau_decompose(spec, y)
        cone_norms[k] = np.linalg.norm(p)
        polar_norms[k] = np.linalg.norm(q)
    wC = WidthEstimate.from_samples(cone_norms)
    wCstar = WidthEstimate.from_samples(polar_norms)
    slack = 3.0 * 2.0 * (wC.mean * wC.std_error + wCstar.mean * wCstar.std_error)
    budget_ok = wC.mean ** 2 + wCstar.mean ** 2 <= spec.N + slack
    logger.debug(f"width budget: {wC.mean:.4f}^2 + {wCstar.mean:.4f}^2 vs N={spec.N}")
    return wC, wCstar, bool(budget_ok)


def orthant_width_exact(N):
    """
    E||Y_+|| for standard Gaussian Y in R^N, the width of the positive orthant.

    Given k positive coordinates ||Y_+|| is chi with k degrees of freedom,
    so the value is sum_k C(N, k) 2**-N sqrt(2) Gamma((k+1)/2) / Gamma(k/2).
    """
    k = np.arange(1, N + 1)
    log_terms = (special.gammaln(N + 1) - special.gammaln(k + 1) - special.gammaln(N - k + 1)
                 - N * math.log(2.0) + 0.5 * math.log(2.0)
                 + special.gammaln((k + 1) / 2.0) - special.gammaln(k / 2.0))
    return float(np.exp(log_terms).sum())


def chi_mean(N):
    """E||Y|| for standard Gaussian Y in R^N."""
    return float(math.sqrt(2.0) * math.exp(special.gammaln((N + 1) / 2.0) - special.gammaln(N / 2.0)))


def polar_contains(spec, x, tol=POLAR_SIGN_TOL):
    """Is x in C*? Solves F^t u = x and checks u <= tol."""
    x = _check_dim(spec, x)
    if spec.full_space:
        return bool(np.all(np.abs(x) <= tol))
    u = linalg.solve_triangular(spec.F.entries, x, trans='T', lower=True)
    return bool(np.all(u <= tol))


def polar_volume_ratio(spec, trials, rng):
    """
    Fraction of the unit ball's volume inside C*, by rejection sampling.

    Returns:
        float: Vol(C* and B) / Vol(B)
    """
    if spec.N > 25:
        raise ValueError(f"rejection sampling is limited to N <= 25, got {spec.N}")
    if trials < 1000:
        raise ValueError("trials must be at least 1000")
    X = sample_uniform_ball(spec.N, rng, trials)
    if spec.full_space:
        return 0.0
    U = linalg.solve_triangular(spec.F.entries, X.T, trans='T', lower=True)
    return float(np.mean(np.all(U <= POLAR_SIGN_TOL, axis=0)))


def volume_ratio_width_bound(N, ratio):
    """N - (N - 1) * ratio**(2/N), an upper bound on w(C and B)**2."""
    return N - (N - 1) * ratio ** (2.0 / N)


def cone_width_bound(gamma, N):
    """sqrt((1 - gamma**2/8) N): width bound for a cone whose F has condition number 1/gamma."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    return math.sqrt((1.0 - gamma * gamma / 8.0) * N)


def sample_cone_rays(spec, count, rng):
    """Unit vectors F^{-1} z / ||F^{-1} z|| with z >= 0 random."""
    Z = np.abs(rng.normal((count, spec.N)))
    # sparse supports reach the faces of the cone
    Z *= rng.uniform((count, spec.N)) < 0.5
    Z[np.all(Z == 0.0, axis=1), 0] = 1.0
    rays = Z @ spec.inverse.T
    return rays / np.linalg.norm(rays, axis=1, keepdims=True)


def ray_width_crosscheck(spec, y, rays):
    """
    Compare the best sampled ray with the projection norm.

    Returns:
        tuple: (max over rays of <y, x>, ||P_C y||); the first never exceeds
            the second beyond roundoff
    """
    y = _check_dim(spec, y)
    best = float(np.max(np.asarray(rays) @ y))
    return max(best, 0.0), float(np.linalg.norm(project_onto_cone(spec, y)))


def ball_volume(N):
    """Volume of the unit ball in R^N."""
    return math.exp(0.5 * N * math.log(math.pi) - special.gammaln(N / 2.0 + 1.0))


def urysohn_sides(point_cloud, trials, rng):
    """
    Both sides of sqrt(N - 1) (Vol(S)/Vol(B))**(1/N) <= w(S), S = conv(point_cloud).

    The volume comes from rejection sampling in the bounding box, the width
    from the maximum of <Y, x_i> over the points.

    Returns:
        tuple: (lhs, rhs, slack) where slack is three combined standard errors
    """
    cloud = numkit.as_point_array(point_cloud)
    m, N = cloud.shape
    if N > 10:
        raise ValueError(f"urysohn check is limited to N <= 10, got {N}")

    Y = rng.normal((trials, N))
    support = np.max(Y @ cloud.T, axis=1)
    width = WidthEstimate.from_samples(support)

    spread = cloud - cloud[0]
    if m <= N or np.linalg.matrix_rank(spread) < N:
        return 0.0, width.mean, 3.0 * width.std_error

    low, high = cloud.min(axis=0), cloud.max(axis=0)
    samples = low + (high - low) * rng.uniform((trials, N))
    inside = spatial.Delaunay(cloud).find_simplex(samples) >= 0
    fraction = float(inside.mean())
    box_volume = float(np.prod(high - low))
    ratio = fraction * box_volume / ball_volume(N)
    lhs = math.sqrt(N - 1) * ratio ** (1.0 / N)

    fraction_se = math.sqrt(max(fraction * (1.0 - fraction), 1.0 / trials) / trials)
    ratio_se = fraction_se * box_volume / ball_volume(N)
    lhs_se = math.sqrt(N - 1) / N * max(ratio, 1e-300) ** (1.0 / N - 1.0) * ratio_se if ratio > 0 else 0.0
    return lhs, width.mean, 3.0 * (width.std_error + lhs_se)


def urysohn_check(point_cloud, trials, rng):
    """True when the volume-width inequality holds within Monte Carlo error."""
    lhs, rhs, slack = urysohn_sides(point_cloud, trials, rng)
    logger.debug(f"urysohn: lhs={lhs:.4f}, rhs={rhs:.4f}, slack={slack:.4f}")
    return lhs <= rhs + slack
