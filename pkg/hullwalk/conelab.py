"""
Prefix matrices and escape events.

A walk's positions are a lower-triangular transform F of its normalized
independent increments. The origin lies outside the hull of the positions
exactly when it lies outside the hull of the rows of F A, which is the escape
event: some unit y makes every row's inner product nonnegative.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from hullwalk import numkit
from hullwalk.errors import InvalidRegime
from hullwalk.randwalk import TimeGrid, grid_zn_checkpoints, sample_uniform_sphere

logger = logging.getLogger('hullwalk.conelab')

BM_PREFIX = "BM_PREFIX"
SPHERE_IDEAL = "SPHERE_IDEAL"
ZN_PREFIX = "ZN_PREFIX"
CUSTOM = "CUSTOM"
KINDS = (BM_PREFIX, SPHERE_IDEAL, ZN_PREFIX, CUSTOM)


@dataclass(frozen=True)
class PrefixMatrix:
    """Lower-triangular N x N matrix mapping scaled increments to scaled positions."""

    entries: np.ndarray
    kind: str = CUSTOM

    def __post_init__(self):
        entries = numkit.as_matrix(self.entries)
        if entries.shape[0] != entries.shape[1]:
            raise ValueError(f"prefix matrix must be square, got {entries.shape}")
        if np.any(np.triu(entries, 1)):
            raise ValueError("prefix matrix must be lower triangular")
        if self.kind not in KINDS:
            raise ValueError(f"unknown prefix matrix kind {self.kind!r}")
        if self.kind in (BM_PREFIX, SPHERE_IDEAL) and np.any(np.diag(entries) == 0.0):
            raise ValueError(f"{self.kind} prefix matrix needs a nonzero diagonal")
        object.__setattr__(self, "entries", entries)

    @property
    def N(self):
        return self.entries.shape[0]

    def apply(self, rows):
        """F @ rows."""
        return self.entries @ rows


@dataclass(frozen=True)
class PropertyPEstimate:
    """Smallest empirical P{<X, y> < -tau} over the tested directions."""

    tau: float
    delta_hat: float
    worst_direction: np.ndarray
    trials: int
    directions: int

    def to_dict(self):
        return {
            "tau": self.tau,
            "delta_hat": self.delta_hat,
            "worst_direction": self.worst_direction.tolist(),
            "trials": self.trials,
            "directions": self.directions,
        }


def _ratio_prefix(deltas, kind):
    # f_ii = 1 and f_ij = deltas[j] / deltas[i] below the diagonal
    return PrefixMatrix(np.tril(np.outer(1.0 / deltas, deltas)), kind)


def build_prefix_matrix_bm(grid):
    """
    Prefix matrix of Brownian motion on a grid.

    With delta_i = sqrt(t_i - t_{i-1}), f_ij = delta_j / delta_i for j <= i, so
    F applied to the rows (BM(t_i) - BM(t_{i-1})) / delta_i gives BM(t_i) / delta_i.
    """
    if len(grid) == 0:
        raise ValueError("prefix matrix needs a nonempty grid")
    return _ratio_prefix(np.sqrt(grid.increments), BM_PREFIX)


def build_prefix_matrix_zn(checkpoints):
    """
    Prefix matrix of the lattice walk at integer checkpoints.

    f_ij = sqrt((t_j - t_{j-1}) / (t_i - t_{i-1})); applied to the rows
    sqrt(n / (t_i - t_{i-1})) (W(t_i) - W(t_{i-1})) it gives
    sqrt(n / (t_i - t_{i-1})) W(t_i).
    """
    grid = checkpoints if isinstance(checkpoints, TimeGrid) else TimeGrid(np.asarray(checkpoints, dtype=np.float64))
    if len(grid) == 0:
        raise ValueError("prefix matrix needs at least one checkpoint")
    return _ratio_prefix(np.sqrt(grid.increments), ZN_PREFIX)


def zn_prefix_deviation(eta, N, t1=1):
    """
    Distance of the lattice prefix matrix from the identity.

    Returns:
        tuple: (||F - I||, (eta/2) / (1 - eta/2)) on the checkpoint ladder
            with ratio ceil(4/eta**2 + 1)
    """
    F = build_prefix_matrix_zn(grid_zn_checkpoints(t1, eta, N))
    deviation = numkit.operator_norm(F.entries - np.eye(N))
    return deviation, (eta / 2.0) / (1.0 - eta / 2.0)


def build_ftilde_sphere(theta, N, n):
    """
    Idealized prefix matrix of the sphere walk.

    First column cos(theta)**(i-1) / sqrt(n); for 2 <= j <= i the entry is
    sin(theta) * cos(theta)**(i-j) / sqrt(n).
    """
    if not 0.0 < theta < math.pi / 2:
        raise ValueError(f"theta must lie in (0, pi/2), got {theta}")
    if N < 1 or n < 1:
        raise ValueError("N and n must be at least 1")
    i = np.arange(N)[:, None]
    j = np.arange(N)[None, :]
    lag = np.where(i >= j, i - j, 0)
    powers = np.where(i >= j, np.cos(theta) ** lag, 0.0)
    entries = math.sin(theta) * powers
    entries[:, 0] = powers[:, 0]
    return PrefixMatrix(entries / math.sqrt(n), SPHERE_IDEAL)


def ftilde_norm_bounds(theta, n):
    """(sin(theta)/sqrt(n), 1/((1 - cos(theta)) sqrt(n))), the bracket on ||F~||."""
    root = math.sqrt(n)
    return math.sin(theta) / root, 1.0 / ((1.0 - math.cos(theta)) * root)


def sphere_condition_bound(theta):
    """(1 + cos(theta)) / (sin(theta) (1 - cos(theta))), a bound on cond(F~)."""
    return (1.0 + math.cos(theta)) / (math.sin(theta) * (1.0 - math.cos(theta)))


def bm_prefix_constants(K):
    """
    Constants for a geometric grid with ratio K.

    Returns:
        tuple: (c_K, gamma_K) with c_K = 1 + (K-1)**-0.5 * sum_j K**(-j/2) and
            gamma_K = 1 / (c_K * (1 + (K-1)**-0.5)); 1/gamma_K bounds cond(F)
    """
    if K <= 1:
        raise ValueError(f"K must exceed 1, got {K}")
    root = 1.0 / math.sqrt(K - 1.0)
    c_K = 1.0 + root / (1.0 - 1.0 / math.sqrt(K))
    return c_K, 1.0 / (c_K * (1.0 + root))


def build_prefix_matrix_sphere(alphas, betas):
    """
    Exact prefix matrix of a realized sphere walk.

    f_ii = 1/beta_i and f_ij = prod_{k=j+1..i} alpha_k / prod_{k=j..i} beta_k,
    so F applied to the Gaussian rows Y_1..Y_N gives the walk's positions.
    """
    alphas = numkit.as_vector(alphas)
    betas = numkit.as_vector(betas)
    if alphas.size != betas.size:
        raise ValueError("alphas and betas must have the same length")
    N = betas.size
    entries = np.zeros((N, N))
    for j in range(N):
        value = 1.0 / betas[j]
        entries[j, j] = value
        for i in range(j + 1, N):
            value = value * alphas[i] / betas[i]
            entries[i, j] = value
    return PrefixMatrix(entries, CUSTOM)


def sphere_prefix_deviation(F, F_tilde):
    """||F - F~|| / ||F~||."""
    return numkit.operator_norm(F.entries - F_tilde.entries) / numkit.operator_norm(F_tilde.entries)


def escape_event(rows, tol=numkit.DEFAULT_TOL):
    """
    Does some unit y give <R_i, y> >= 0 for every row?

    Decided through the hull verdict: the event holds exactly when the origin
    is not in conv(rows).

    Returns:
        tuple: (escaped, verdict); verdict.direction certifies an escape
    """
    verdict = numkit.contains_origin(rows, tol=tol, dim=np.asarray(rows).shape[-1])
    escaped = not verdict.inside
    return escaped, verdict


def random_witness_search(rows, directions, rng, batch=10000):
    """
    One-sided escape oracle: sample unit directions looking for a nonnegative image.

    Returns:
        bool: True if some sampled y had every <R_i, y> >= 0
    """
    rows = numkit.as_matrix(rows)
    remaining = int(directions)
    while remaining > 0:
        size = min(batch, remaining)
        ys = sample_uniform_sphere(rows.shape[1], rng, size)
        if np.any(np.all(rows @ ys.T >= 0.0, axis=0)):
            return True
        remaining -= size
    return False


def estimate_property_p(sampler, tau, n, directions, trials, rng):
    """
    Empirical check of the small-ball-from-below property.

    For each direction y (the 2n signed coordinate axes plus `directions`
    random unit vectors) the frequency of <X, y> < -tau is measured on the
    same `trials` samples of X; the minimum frequency and its direction are
    returned.

    Args:
        sampler: Callable (count, rng) -> count x n array of rows
        tau (float): Threshold in (0, 1]
        n (int): Dimension
        directions (int): Number of random directions
        trials (int): Number of samples of X
        rng (RngStream): Random stream

    Returns:
        PropertyPEstimate: The worst direction and its frequency
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if directions < 1 or trials < 1:
        raise ValueError("directions and trials must be at least 1")

    axes = np.vstack([np.eye(n), -np.eye(n)])
    random_dirs = sample_uniform_sphere(n, rng.substream(0), directions)
    all_dirs = np.vstack([axes, random_dirs])

    X = np.asarray(sampler(trials, rng.substream(1)), dtype=np.float64).reshape(trials, n)
    frequencies = np.mean(X @ all_dirs.T < -tau, axis=0)
    worst = int(np.argmin(frequencies))
    logger.debug(f"property P: tau={tau}, worst frequency {frequencies[worst]:.4f}")
    return PropertyPEstimate(tau=float(tau), delta_hat=float(frequencies[worst]),
                             worst_direction=all_dirs[worst].copy(), trials=int(trials),
                             directions=int(all_dirs.shape[0]))


def zn_increment_sampler(n, m):
    """Sampler of X = sqrt(n/m) W(m) for the lattice walk, usable by estimate_property_p."""
    def sample(count, rng):
        uniform_axes = np.full(n, 1.0 / n)
        rows = np.empty((count, n))
        for k in range(count):
            counts = rng.multinomial(m, uniform_axes)
            rows[k] = 2 * rng.binomial(counts, 0.5) - counts
        return rows * math.sqrt(n / m)
    return sample


def gaussian_sampler(n):
    """Sampler of standard Gaussian rows."""
    return lambda count, rng: rng.normal((count, n))


def zn_moment_check(n, m, trials, rng, directions=50):
    """
    Largest empirical E|<X, y>|**3 over sampled directions, X = sqrt(n/m) W(m).

    The 2n signed axes are always among the directions.
    """
    if m < n ** 4:
        raise ValueError(f"m must be at least n**4 = {n ** 4}, got {m}")
    X = zn_increment_sampler(n, m)(trials, rng.substream(1))
    dirs = np.vstack([np.eye(n), sample_uniform_sphere(n, rng.substream(0), directions)])
    moments = np.mean(np.abs(X @ dirs.T) ** 3, axis=0)
    return float(moments.max())


def zn_third_moment_exact(n, m, y):
    """
    E|<X, y>|**3 for X = sqrt(n/m) W(m) by enumerating all (2n)**m step sequences.

    Only for tiny m; the enumeration runs over sign/axis multisets.
    """
    y = numkit.as_vector(y)
    steps = np.vstack([np.eye(n), -np.eye(n)]) @ y
    # distribution of <W(m), y> as a dictionary built by convolution
    dist = {0.0: 1.0}
    for _ in range(m):
        nxt = {}
        for value, prob in dist.items():
            for s in steps:
                key = round(value + s, 12)
                nxt[key] = nxt.get(key, 0.0) + prob / (2 * n)
        dist = nxt
    scale = math.sqrt(n / m)
    return float(sum(prob * abs(value * scale) ** 3 for value, prob in dist.items()))


def gordon_escape_bound(N, n, w):
    """
    Probability lower bound for a random subspace to miss a set of width w.

    1 - 3.5 exp(-((N - n) / sqrt(N - n + 1) - w)**2 / 18), clamped to [0, 1].

    Raises:
        InvalidRegime: If w >= sqrt(N - n)
    """
    if N <= n:
        raise InvalidRegime(f"need N > n, got N={N}, n={n}")
    if w < 0:
        raise ValueError(f"width must be nonnegative, got {w}")
    if w >= math.sqrt(N - n):
        raise InvalidRegime(f"width {w} is not below sqrt(N - n) = {math.sqrt(N - n):.6g}")
    gap = (N - n) / math.sqrt(N - n + 1) - w
    if gap <= 0.0:
        return 0.0
    return min(1.0, max(0.0, 1.0 - 3.5 * math.exp(-gap * gap / 18.0)))
