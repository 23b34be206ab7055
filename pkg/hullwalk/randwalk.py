"""
Time grids and walk simulators.

Three walk models are supported: Brownian motion sampled on a time grid, the
simple random walk on the integer lattice, and the fixed-angle walk on the
unit sphere. All randomness flows through RngStream, a counter-based Philox
generator keyed by (root_seed, stream_id), so a path is reproduced bit for
bit from its key on any platform.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from hullwalk.errors import DegenerateDraw, GridOverflow

logger = logging.getLogger('hullwalk.randwalk')

BM = "BM"
ZN = "ZN"
SPHERE = "SPHERE"
MODELS = (BM, ZN, SPHERE)

SEED_MASK = (1 << 64) - 1
UNIT_TOL = 1e-12


class RngStream:
    """
    Deterministic random stream keyed by (root_seed, stream_id).

    Normals come from numpy's ziggurat sampler on a Philox bit generator
    seeded with SeedSequence([root_seed, stream_id, *path]); both are fixed
    algorithms, so outputs do not depend on the platform.
    """

    def __init__(self, root_seed, stream_id=0, path=()):
        self.root_seed = int(root_seed) & SEED_MASK
        self.stream_id = int(stream_id) & SEED_MASK
        self.path = tuple(int(p) for p in path)
        entropy = [self.root_seed, self.stream_id, *self.path]
        self._generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def __repr__(self):
        return f"RngStream(root_seed={self.root_seed}, stream_id={self.stream_id}, path={self.path})"

    @property
    def generator(self):
        return self._generator

    def substream(self, index):
        """Independent child stream; the parent's state is untouched."""
        return RngStream(self.root_seed, self.stream_id, self.path + (index,))

    def normal(self, size=None):
        return self._generator.standard_normal(size)

    def uniform(self, size=None):
        return self._generator.random(size)

    def poisson(self, lam, size=None):
        return self._generator.poisson(lam, size)

    def integers(self, low, high=None, size=None):
        return self._generator.integers(low, high, size)

    def multinomial(self, n, pvals):
        return self._generator.multinomial(n, pvals)

    def binomial(self, n, p):
        return self._generator.binomial(n, p)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing positive sample times; t_0 = 0 is implicit."""

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        if times.size:
            if not np.all(np.isfinite(times)):
                raise GridOverflow("time grid has non-finite entries")
            if times[0] <= 0.0:
                raise ValueError(f"first time must be positive, got {times[0]}")
            if np.any(np.diff(times) <= 0.0):
                raise ValueError("time grid must be strictly increasing")
        object.__setattr__(self, "times", times)

    def __len__(self):
        return int(self.times.size)

    @property
    def increments(self):
        """t_i - t_{i-1} with t_0 = 0."""
        return np.diff(self.times, prepend=0.0)

    def index_of(self, t, rtol=1e-12):
        """Position of time t in the grid, or None."""
        i = int(np.searchsorted(self.times, t))
        for k in (i - 1, i):
            if 0 <= k < self.times.size and math.isclose(self.times[k], t, rel_tol=rtol, abs_tol=0.0):
                return k
        return None


@dataclass(frozen=True)
class WalkPath:
    """
    One realized walk.

    Row i of points is the position at grid time i. For sphere walks the grid
    holds step indices 1..N and, when recorded, coefficients holds the
    (alphas, betas, gaussians) of the construction.
    """

    model: str
    grid: TimeGrid
    points: np.ndarray
    n: int
    seed: int = 0
    stream_id: int = 0
    coefficients: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown walk model {self.model!r}")
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != self.n:
            raise ValueError(f"points must be N x {self.n}, got shape {points.shape}")
        if points.shape[0] != len(self.grid):
            raise ValueError("one row per grid time is required")
        if self.model == SPHERE and points.size:
            norms = np.linalg.norm(points, axis=1)
            if np.max(np.abs(norms - 1.0)) > UNIT_TOL:
                raise ValueError("sphere walk rows must be unit vectors")
        if self.model == ZN and not np.array_equal(points, np.round(points)):
            raise ValueError("lattice walk rows must be integer valued")
        object.__setattr__(self, "points", points)

    def __len__(self):
        return int(self.points.shape[0])

    def position(self, t):
        """Row at grid time t; None when t is not on the grid."""
        k = self.grid.index_of(t)
        return None if k is None else self.points[k]


def grid_uniform(N):
    """Times 1/N, 2/N, ..., 1."""
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    return TimeGrid(np.arange(1, N + 1, dtype=np.float64) / N)


def grid_geometric(t1, K, N):
    """
    Geometric grid t_i = t1 * K**(i-1).

    Raises:
        GridOverflow: If t_N is not representable
    """
    if t1 <= 0:
        raise ValueError(f"t1 must be positive, got {t1}")
    if K <= 1:
        raise ValueError(f"K must exceed 1, got {K}")
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    if math.log(t1) + (N - 1) * math.log(K) >= math.log(np.finfo(np.float64).max):
        raise GridOverflow(f"t_N = {t1} * {K}**{N - 1} overflows a double")
    return TimeGrid(t1 * np.power(float(K), np.arange(N, dtype=np.float64)))


def grid_poisson(intensity, rng):
    """
    Points of a homogeneous Poisson process on (0, 1].

    The grid is empty when the Poisson count is zero. Exact repeated times
    are dropped.
    """
    if intensity <= 0:
        raise ValueError(f"intensity must be positive, got {intensity}")
    count = int(rng.poisson(intensity))
    times = np.unique(1.0 - rng.uniform(count))
    return TimeGrid(times)


def grid_dyadic(lo_exp, hi_exp, density):
    """Times 2**(j/density) for j = density*lo_exp .. density*hi_exp."""
    if density < 1:
        raise ValueError(f"density must be at least 1, got {density}")
    lo, hi = int(round(density * lo_exp)), int(round(density * hi_exp))
    if hi < lo:
        raise ValueError("hi_exp must not be below lo_exp")
    if hi / density >= 1023:
        raise GridOverflow(f"2**{hi / density} overflows a double")
    return TimeGrid(np.exp2(np.arange(lo, hi + 1, dtype=np.float64) / density))


def zn_checkpoint_ratio(eta):
    """Ratio ceil(4/eta**2 + 1) between consecutive lattice checkpoints."""
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    return math.ceil(4.0 / eta ** 2 + 1.0)


def grid_zn_checkpoints(t1, eta, N):
    """
    Integer checkpoint ladder t_i = t1 * r**(i-1) with r = ceil(4/eta**2 + 1).

    Raises:
        GridOverflow: If the last checkpoint exceeds 2**53
    """
    if t1 < 1 or int(t1) != t1:
        raise ValueError(f"t1 must be a positive integer, got {t1}")
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    r = zn_checkpoint_ratio(eta)
    checkpoints = [int(t1) * r ** i for i in range(N)]
    if checkpoints[-1] > 2 ** 53:
        raise GridOverflow(f"checkpoint {checkpoints[-1]} is not exactly representable")
    return TimeGrid(np.array(checkpoints, dtype=np.float64))


def sample_uniform_sphere(n, rng, size=None):
    """Uniform point(s) on the unit sphere in R^n."""
    shape = (n,) if size is None else (size, n)
    y = rng.normal(shape)
    norms = np.linalg.norm(y, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateDraw("zero Gaussian vector")
    return y / norms


def sample_uniform_ball(n, rng, size=None):
    """Uniform point(s) in the unit ball: Gaussian direction times U**(1/n)."""
    direction = sample_uniform_sphere(n, rng, size)
    radius = rng.uniform(None if size is None else (size, 1)) ** (1.0 / n)
    return direction * radius


def simulate_bm(grid, n, rng):
    """
    Brownian motion in R^n sampled on a grid.

    Row i = row i-1 + sqrt(t_i - t_{i-1}) * Y_i with Y_i standard Gaussian and
    the implicit starting point 0 at t_0 = 0.

    Args:
        grid (TimeGrid): Nonempty sample times
        n (int): Dimension
        rng (RngStream): Random stream

    Returns:
        WalkPath: The sampled path
    """
    if n < 1:
        raise ValueError(f"dimension must be at least 1, got {n}")
    if len(grid) == 0:
        raise ValueError("simulate_bm needs a nonempty grid")
    steps = rng.normal((len(grid), n)) * np.sqrt(grid.increments)[:, None]
    return WalkPath(BM, grid, np.cumsum(steps, axis=0), n,
                    seed=rng.root_seed, stream_id=rng.stream_id)


def simulate_zn(R, checkpoints, n, rng):
    """
    Simple random walk on Z^n observed at checkpoint step indices.

    Each segment between checkpoints is drawn exactly: the step counts per
    axis are multinomial and the number of positive steps per axis is
    binomial, so cost does not grow with the segment length.

    Args:
        R (int): Total number of steps
        checkpoints: Increasing step indices in 1..R, or None for every step
        n (int): Dimension
        rng (RngStream): Random stream

    Returns:
        WalkPath: Integer-valued positions at the checkpoints
    """
    if n < 1:
        raise ValueError(f"dimension must be at least 1, got {n}")
    if R < 1:
        raise ValueError(f"R must be at least 1, got {R}")

    if checkpoints is None:
        axes = rng.integers(0, n, size=R)
        signs = 2.0 * rng.integers(0, 2, size=R) - 1.0
        steps = np.zeros((R, n))
        steps[np.arange(R), axes] = signs
        grid = TimeGrid(np.arange(1, R + 1, dtype=np.float64))
        return WalkPath(ZN, grid, np.cumsum(steps, axis=0), n,
                        seed=rng.root_seed, stream_id=rng.stream_id)

    marks = [int(c) for c in (checkpoints.times if isinstance(checkpoints, TimeGrid) else checkpoints)]
    if not marks or marks[0] < 1 or marks[-1] > R or any(b <= a for a, b in zip(marks, marks[1:])):
        raise ValueError("checkpoints must be strictly increasing step indices in 1..R")

    uniform_axes = np.full(n, 1.0 / n)
    position = np.zeros(n, dtype=np.int64)
    rows = np.empty((len(marks), n))
    previous = 0
    for i, mark in enumerate(marks):
        counts = rng.multinomial(mark - previous, uniform_axes)
        plus = rng.binomial(counts, 0.5)
        position = position + 2 * plus - counts
        rows[i] = position
        previous = mark
    return WalkPath(ZN, TimeGrid(np.array(marks, dtype=np.float64)), rows, n,
                    seed=rng.root_seed, stream_id=rng.stream_id)


def sphere_step(u, theta, rng, verify=False):
    """
    One step of the fixed-angle sphere walk.

    With Y standard Gaussian and P the projection onto the complement of u,
    alpha = cot(theta) * ||P Y|| - <Y, u>, beta = ||P Y|| / sin(theta) and
    v = (alpha * u + Y) / beta, which equals cos(theta) u + sin(theta) P Y / ||P Y||.
    The second form is returned.

    Args:
        u: Unit vector
        theta (float): Angle in (0, pi/2)
        rng (RngStream): Random stream
        verify (bool): Also evaluate the (alpha, beta) recursion and assert
            that both forms agree

    Returns:
        tuple: (v, alpha, beta)

    Raises:
        DegenerateDraw: If ||P Y|| underflows
    """
    u = np.asarray(u, dtype=np.float64)
    if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
        raise ValueError("sphere_step needs a unit vector")
    if not 0.0 < theta < math.pi / 2:
        raise ValueError(f"theta must lie in (0, pi/2), got {theta}")

    y = rng.normal(u.size)
    along = float(y @ u)
    tangent = y - along * u
    tangent_norm = float(np.linalg.norm(tangent))
    if tangent_norm < 1e-300:
        raise DegenerateDraw("Gaussian draw is parallel to the current point")

    sin_t, cos_t = math.sin(theta), math.cos(theta)
    alpha = cos_t / sin_t * tangent_norm - along
    beta = tangent_norm / sin_t
    v = cos_t * u + sin_t * (tangent / tangent_norm)

    if verify:
        recursion = alpha * u + y
        assert abs(np.linalg.norm(recursion) - beta) <= 1e-10 * max(1.0, beta), "beta mismatch"
        assert np.allclose(recursion / beta, v, rtol=0.0, atol=1e-10), "step forms disagree"
    return v, alpha, beta


def simulate_sphere_walk(theta, N, n, rng, record_coefficients=False, verify=False):
    """
    Fixed-angle walk on the sphere: a uniform start followed by N-1 sphere steps.

    With record_coefficients the path carries (alphas, betas, gaussians); the
    first step is recorded as alpha = 0, beta = ||Y_1||.
    """
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    if n < 1:
        raise ValueError(f"dimension must be at least 1, got {n}")
    if not 0.0 < theta < math.pi / 2:
        raise ValueError(f"theta must lie in (0, pi/2), got {theta}")

    points = np.empty((N, n))
    alphas = np.zeros(N)
    betas = np.zeros(N)
    gaussians = np.empty((N, n)) if record_coefficients else None

    y = rng.normal(n)
    first_norm = float(np.linalg.norm(y))
    if first_norm == 0.0:
        raise DegenerateDraw("zero Gaussian vector")
    points[0] = y / first_norm
    betas[0] = first_norm
    if record_coefficients:
        gaussians[0] = y

    for i in range(1, N):
        u = points[i - 1]
        try:
            v, alphas[i], betas[i] = sphere_step(u, theta, rng, verify=verify)
        except DegenerateDraw:
            logger.warning(f"degenerate sphere step at index {i + 1}")
            raise
        if record_coefficients:
            gaussians[i] = betas[i] * v - alphas[i] * u
        # renormalize so the unit-norm invariant survives long walks
        points[i] = v / np.linalg.norm(v)

    coefficients = (alphas, betas, gaussians) if record_coefficients else None
    grid = TimeGrid(np.arange(1, N + 1, dtype=np.float64))
    return WalkPath(SPHERE, grid, points, n, seed=rng.root_seed, stream_id=rng.stream_id,
                    coefficients=coefficients)


def sphere_walk_coefficients(path):
    """(alphas, betas, gaussians) of a sphere walk simulated with record_coefficients."""
    if path.model != SPHERE or path.coefficients is None:
        raise ValueError("path carries no recorded sphere coefficients")
    return path.coefficients


def increment_rows(path):
    """Row differences of a path, with the implicit origin before row 0."""
    return np.diff(path.points, axis=0, prepend=np.zeros((1, path.n)))


def scaled_increments(path):
    """
    Increments divided by sqrt(t_i - t_{i-1}).

    For Brownian motion the rows are i.i.d. standard Gaussian. Lattice walks
    are additionally multiplied by sqrt(n) so the rows are isotropic.
    """
    if path.model == SPHERE:
        raise ValueError("sphere walks have no time increments")
    rows = increment_rows(path) / np.sqrt(path.grid.increments)[:, None]
    if path.model == ZN:
        rows = rows * math.sqrt(path.n)
    return rows
