"""
Constructive minimax direction for Brownian motion.

The pipeline builds a unit vector v with <v, BM(t)> > 0 on a dyadic grid of
[1, 2**(N_blocks - 1)]. It starts from a direction with equal inner products
against the normalized anchor increments, then repeatedly measures per-block
violations ("block statistics") on finer grids and, where blocks are bad,
adds a small perturbation built from fresh coordinates that the earlier
steps never read.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from hullwalk.errors import (CapacityExceeded, DegenerateInput, MissingGridPoint,
                             NotOrthogonal, NumericalFailure)
from hullwalk.randwalk import grid_dyadic, simulate_bm

logger = logging.getLogger('hullwalk.witness')

GRAM_TOL = 1e-10
ORTHOGONALITY_TOL = 1e-10

_R = 2.0 ** -0.25
# sum over l >= 1 of 2**(-l/4)
_TAIL = _R / (1.0 - _R)


def _partial(k, ell):
    """sum_{l'=1..ell} 2**(-(k + l')/4)."""
    return 2.0 ** (-k / 4.0) * _R * (1.0 - _R ** ell) / (1.0 - _R)


def _levels_before(k):
    """Total step weight of levels 1..k-1 carried to their limits."""
    return _TAIL * _R * (1.0 - _R ** (k - 1)) / (1.0 - _R)


@dataclass(frozen=True)
class Schedule:
    """
    Thresholds, step sizes and coordinate partition of the pipeline.

    f(1, 0) = C_f (1 + 2**-0.5 (1 - 2**-0.25)**-2) and h(1, 0) = 0. Within a
    level, f drops by C_f 2**(-(k+l)/4) per substep and h grows by
    C_h 2**(-(k+l)/4); f(k, 0) and h(k, 0) are the limits of level k-1, so f
    decreases to C_f and h increases to C_h 2**-0.5 (1 - 2**-0.25)**-2.
    Perturbation sizes are alpha(k, l) = alpha_base**(-k-l).

    The defaults are a desk-scale operating point for n around 64 (see
    harness.witness_sweep). alpha_base = 16 gives steps of 16**-2 and below,
    far smaller than a typical block deficit. With j0_fraction = 0.45 every
    level-2 cell holds the four increments of one bad block. With guard set,
    a refinement step is kept only if it does not raise the final-level
    block statistic.
    """

    C_f: float = 0.02
    C_h: float = None
    M: int = 2
    M_inner: int = 2
    alpha_base: float = 1.25
    j0_fraction: float = 0.45
    guard: bool = True

    def __post_init__(self):
        if self.C_h is None:
            object.__setattr__(self, "C_h", self.coupled_C_h(self.C_f))
        if self.C_f <= 0 or self.C_h <= 0:
            raise ValueError("C_f and C_h must be positive")
        if self.M < 1 or self.M_inner < 1:
            raise ValueError("M and M_inner must be at least 1")
        if self.alpha_base <= 1:
            raise ValueError("alpha_base must exceed 1")
        if not 0.0 < self.j0_fraction < 1.0:
            raise ValueError("j0_fraction must lie in (0, 1)")

    @staticmethod
    def coupled_C_h(C_f):
        """C_h = 2**-0.5 (1 - 2**-0.25)**2 C_f, which makes the limit of h equal C_f / 2."""
        return 2.0 ** -0.5 * (1.0 - _R) ** 2 * C_f

    @classmethod
    def coupled(cls, C_f, **kwargs):
        """Schedule with C_h tied to C_f."""
        return cls(C_f=C_f, C_h=cls.coupled_C_h(C_f), **kwargs)

    def f(self, k, ell):
        if k < 1 or ell < 0:
            raise ValueError(f"level ({k}, {ell}) out of range")
        f10 = self.C_f * (1.0 + 2.0 ** -0.5 / (1.0 - _R) ** 2)
        return f10 - self.C_f * (_levels_before(k) + _partial(k, ell))

    def h(self, k, ell):
        if k < 1 or ell < 0:
            raise ValueError(f"level ({k}, {ell}) out of range")
        return self.C_h * (_levels_before(k) + _partial(k, ell))

    def alpha(self, k, ell):
        return self.alpha_base ** (-k - ell)

    def f_limit(self):
        return self.C_f

    def h_limit(self):
        return self.C_h * _TAIL ** 2

    def truncated_start(self, k, L_max=200):
        """
        (f(k, 0), h(k, 0)) approximated by stepping level k-1 to L_max.

        Agrees with the closed form up to the neglected geometric tail.
        """
        if k < 2:
            return self.f(1, 0), self.h(1, 0)
        f_value, h_value = self.truncated_start(k - 1, L_max)
        for ell in range(1, L_max + 1):
            step = 2.0 ** (-(k - 1 + ell) / 4.0)
            f_value -= self.C_f * step
            h_value += self.C_h * step
        return f_value, h_value

    def partition(self, n):
        """
        Split coordinates 0..n-1 into J0 and cells J(k, l), k <= M, l <= M_inner.

        J0 takes floor(j0_fraction * n) coordinates; the rest are shared out in
        proportion to 2**(-(k+l)/8), rounded down, with the remainder going to
        the last cell.

        Returns:
            tuple: (J0 index array, dict mapping (k, l) to index arrays)
        """
        d0 = int(math.floor(self.j0_fraction * n))
        levels = [(k, ell) for k in range(1, self.M + 1) for ell in range(1, self.M_inner + 1)]
        rest = n - d0
        weights = np.array([2.0 ** (-(k + ell) / 8.0) for k, ell in levels])
        sizes = np.floor(rest * weights / weights.sum()).astype(int)
        sizes[-1] += rest - sizes.sum()
        if d0 < 1 or np.any(sizes < 1):
            raise ValueError(f"n={n} is too small for {len(levels)} cells plus J0")
        cells = {}
        start = d0
        for level, size in zip(levels, sizes):
            cells[level] = np.arange(start, start + size)
            start += size
        return np.arange(d0), cells

    def to_dict(self):
        return {
            "C_f": self.C_f,
            "C_h": self.C_h,
            "M": self.M,
            "M_inner": self.M_inner,
            "alpha_base": self.alpha_base,
            "j0_fraction": self.j0_fraction,
            "guard": self.guard,
        }


@dataclass(frozen=True)
class BlockGrid:
    """
    Block anchors a_0 = 0, a_i = 2**(i-1) for i = 1..N_blocks, refined to level k.

    Block i spans [a_i, a_{i+1}]. Its interior points at level k are
    2**(p/2**k) a_i for p = 1..2**k - 1 (none for block 0 or k = 0).
    """

    N_blocks: int
    k: int

    def __post_init__(self):
        if self.N_blocks < 1:
            raise ValueError("N_blocks must be at least 1")
        if self.k < 0:
            raise ValueError("k must be nonnegative")

    @property
    def anchors(self):
        return np.concatenate([[0.0], np.exp2(np.arange(self.N_blocks, dtype=np.float64))])

    def anchor(self, i):
        return 0.0 if i == 0 else 2.0 ** (i - 1)

    def interior(self, i, level=None):
        level = self.k if level is None else level
        if i == 0 or level == 0:
            return np.zeros(0)
        p = np.arange(1, 2 ** level)
        return self.anchor(i) * np.exp2(p / 2.0 ** level)

    def level_points(self, i, level):
        """t_{i,p} for p = 0..2**level, the level grid of block i including both ends."""
        if i == 0:
            return np.array([0.0, 1.0])
        p = np.arange(0, 2 ** level + 1)
        return self.anchor(i) * np.exp2(p / 2.0 ** level)

    def construction_grid(self):
        """Anchors plus every level-k interior point, t = 2**(j/2**k) for j up to (N_blocks-1) 2**k."""
        return grid_dyadic(0, self.N_blocks - 1, 2 ** self.k)


@dataclass(frozen=True)
class BlockStatistics:
    """Per-block violation values at one level (k, l)."""

    values: np.ndarray
    level: tuple

    @property
    def bad_blocks(self):
        return [int(i) for i in np.flatnonzero(self.values > 0.0)]

    def to_dict(self):
        return {"level": list(self.level), "values": self.values.tolist(),
                "bad_blocks": self.bad_blocks}


@dataclass
class LevelRecord:
    """
    What the pipeline did at one level.

    action is one of none, perturbed, partial (some bad blocks left out
    for capacity), skipped (no bad block fits the cell), rejected (the
    guard refused the step) or failed. rows counts the increments the
    perturbation was built from and zero_rows those build_ubar dropped for
    a zero coefficient, so together they cover every increment of the
    chosen blocks; dropped_blocks lists the bad blocks left out.
    """

    level: tuple
    stats: BlockStatistics = None
    action: str = "none"
    error: str = None
    rows: int = 0
    zero_rows: int = 0
    dropped_blocks: list = field(default_factory=list)

    def to_dict(self):
        out = {"level": list(self.level), "action": self.action,
               "bad_blocks": self.stats.bad_blocks if self.stats is not None else None,
               "rows": self.rows, "zero_rows": self.zero_rows,
               "dropped_blocks": list(self.dropped_blocks)}
        if self.error:
            out["error"] = self.error
        return out


@dataclass
class WitnessResult:
    """Outcome of one pipeline run."""

    direction: np.ndarray
    trace: list = field(default_factory=list)
    success: bool = False
    start_bad: bool = False
    min_positivity: float = None
    argmin_time: float = None

    @property
    def rescued(self):
        """Did refinement turn a failing starting direction into a success?"""
        return self.start_bad and self.success

    def to_dict(self):
        return {
            "success": self.success,
            "start_bad": self.start_bad,
            "rescued": self.rescued,
            "min_positivity": self.min_positivity,
            "argmin_time": self.argmin_time,
            "trace": [record.to_dict() for record in self.trace],
        }


def build_ubar(X, b, tol=GRAM_TOL, full_output=False):
    """
    Unit vector with prescribed proportional inner products.

    With Z_i = X_i / |b_i|, solves G c = 1 for the Gram matrix G = Z Z^t and
    sets u = sum_j c_j Z_j. Then <u, Z_i> = 1 for every i, dist = 1/||u|| is
    the distance from 0 to the affine hull of the Z_i, and u_bar = u/||u||
    satisfies <u_bar, X_i> = dist |b_i|. Rows with b_i = 0 are dropped; the
    constraint is trivially satisfied for them.

    Args:
        X: m x d array of vectors
        b: Coefficient vector of length m (only the ratios matter)
        tol (float): Relative eigenvalue floor for the Gram matrix
        full_output (bool): Also return a dict with the number of rows used
            and the number dropped for a zero coefficient

    Returns:
        tuple: (u_bar, dist), or (u_bar, dist, info) with full_output

    Raises:
        DegenerateInput: If the vectors are linearly dependent beyond tol
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    m, d = X.shape
    if b.size != m:
        raise ValueError(f"need one coefficient per vector, got {b.size} for {m}")
    if 2 * m > d and m > 1:
        raise ValueError(f"m={m} vectors exceed half the dimension d={d}")

    keep = b != 0.0
    if not np.any(keep):
        raise DegenerateInput("all coefficients are zero")
    if not np.all(keep):
        logger.debug(f"build_ubar: dropped {m - int(keep.sum())} of {m} rows with zero coefficient")
    Z = X[keep] / np.abs(b[keep])[:, None]
    G = Z @ Z.T
    eigenvalues = np.linalg.eigvalsh(G)
    if eigenvalues[0] <= tol * max(eigenvalues[-1], 0.0) or eigenvalues[-1] <= 0.0:
        raise DegenerateInput(f"Gram matrix is singular (eigenvalues {eigenvalues[0]:.3e}..{eigenvalues[-1]:.3e})")
    c = linalg.cho_solve(linalg.cho_factor(G), np.ones(G.shape[0]))
    u = c @ Z
    norm_u = float(np.linalg.norm(u))
    if full_output:
        used = int(keep.sum())
        return u / norm_u, 1.0 / norm_u, {"used": used, "dropped": m - used}
    return u / norm_u, 1.0 / norm_u


def initial_direction(increments, d, m=None):
    """
    Starting direction from the normalized anchor increments.

    build_ubar with uniform coefficients, restricted to the first d
    coordinates (the block J0) and embedded back into R^n.

    Args:
        increments: m x n array, row i = (BM(a_{i+1}) - BM(a_i)) / sqrt(a_{i+1} - a_i)
        d (int): Size of J0
        m (int, optional): Expected number of increments

    Returns:
        numpy.ndarray: Unit vector supported on J0
    """
    increments = np.atleast_2d(np.asarray(increments, dtype=np.float64))
    rows, n = increments.shape
    if m is not None and m != rows:
        raise ValueError(f"expected {m} increments, got {rows}")
    if d > n or d < 1:
        raise ValueError(f"J0 size {d} does not fit in dimension {n}")
    u_bar, _ = build_ubar(increments[:, :d], np.full(rows, 1.0 / math.sqrt(rows)))
    v = np.zeros(n)
    v[:d] = u_bar
    return v


def _position(path, t):
    if t == 0.0:
        return np.zeros(path.n)
    row = path.position(t)
    if row is None:
        raise MissingGridPoint(t)
    return row


def block_statistic(v, path, grid, level, sched):
    """
    Block statistics of direction v at level (k, l).

    For block i >= 1 the value is
    max(0, max_{t in I_i} <v, BM(a_i) - BM(t)>/sqrt(a_i) - h(k, l),
           <v, BM(a_i) - BM(a_{i+1})>/sqrt(a_{i+1}) + f(k, l));
    block 0 uses max(0, -<v, BM(a_1)> + f(k, l)).

    Raises:
        MissingGridPoint: If the path lacks a needed time
    """
    k, ell = level
    f_value = sched.f(k, ell)
    h_value = sched.h(k, ell)
    values = np.zeros(grid.N_blocks)

    values[0] = max(0.0, -float(v @ _position(path, 1.0)) + f_value)
    for i in range(1, grid.N_blocks):
        a_i, a_next = grid.anchor(i), grid.anchor(i + 1)
        at_anchor = float(v @ _position(path, a_i))
        clauses = [0.0, (at_anchor - float(v @ _position(path, a_next))) / math.sqrt(a_next) + f_value]
        interior = grid.interior(i, k)
        if interior.size:
            drops = [(at_anchor - float(v @ _position(path, t))) / math.sqrt(a_i) for t in interior]
            clauses.append(max(drops) - h_value)
        values[i] = max(clauses)
    return BlockStatistics(values=values, level=(k, ell))


def refine_direction(v, delta, alpha):
    """
    (v + alpha * delta) / sqrt(1 + alpha**2) for orthogonal unit v, delta.

    Raises:
        NotOrthogonal: If |<v, delta>| > 1e-10
    """
    v = np.asarray(v, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    overlap = float(v @ delta)
    if abs(overlap) > ORTHOGONALITY_TOL:
        raise NotOrthogonal(f"<v, delta> = {overlap:.3e}")
    return (v + alpha * delta) / math.sqrt(1.0 + alpha * alpha)


def perturbation_system(stats, path, grid, cell, k):
    """
    Rows and coefficients for the perturbation at level k.

    For each bad block i >= 1 and p = 0..2**k - 1 the row is the increment
    BM(t_{i,p+1}) - BM(t_{i,p}) restricted to the cell and divided by
    sqrt(t_{i,p+1} - t_{i,p}), with coefficient 2**(-k/2) BStat_i / ||BStat||.
    A bad block 0 contributes the single increment over [0, 1] with
    coefficient BStat_0 / ||BStat||.

    Returns:
        tuple: (rows, coefficients)
    """
    norm = float(np.linalg.norm(stats.values))
    rows, coefficients = [], []
    for i in stats.bad_blocks:
        points = grid.level_points(i, k)
        weight = stats.values[i] / norm
        if i > 0:
            weight *= 2.0 ** (-k / 2.0)
        for start, end in zip(points[:-1], points[1:]):
            step = _position(path, end) - _position(path, start)
            rows.append(step[cell] / math.sqrt(end - start))
            coefficients.append(weight)
    return np.array(rows), np.array(coefficients)


def _increments_needed(block, k):
    return 1 if block == 0 else 2 ** k


def fit_to_cell(stats, cell_size, k):
    """
    Keep the worst bad blocks whose level-k increments fit in a cell.

    Blocks are taken in decreasing order of their statistic while twice
    the number of increments stays within cell_size; the others are zeroed.

    Returns:
        tuple: (BlockStatistics restricted to the kept blocks, dropped block indices)
    """
    values = np.zeros_like(stats.values)
    used = 0
    dropped = []
    for i in sorted(stats.bad_blocks, key=lambda block: (-stats.values[block], block)):
        need = _increments_needed(i, k)
        if 2 * (used + need) <= cell_size:
            values[i] = stats.values[i]
            used += need
        else:
            dropped.append(i)
    return BlockStatistics(values=values, level=stats.level), sorted(dropped)


def build_perturbation(stats, path, grid, cell, k, full_output=False):
    """
    Perturbation direction supported on a fresh coordinate cell.

    Args:
        stats (BlockStatistics): Statistics with at least one bad block
        path (WalkPath): Path on a grid containing every level-k point
        grid (BlockGrid): Block layout
        cell: Coordinate indices of J(k, l)
        k (int): Level
        full_output (bool): Also return build_ubar's row counts

    Returns:
        numpy.ndarray: Unit vector in R^n supported on the cell, or
            (delta, info) with full_output

    Raises:
        CapacityExceeded: If the bad blocks need more than |cell|/2 increments
        DegenerateInput: If the increments are linearly dependent
    """
    cell = np.asarray(cell)
    if not stats.bad_blocks:
        raise ValueError("no bad blocks to perturb")
    needed = sum(_increments_needed(i, k) for i in stats.bad_blocks)
    if 2 * needed > cell.size:
        raise CapacityExceeded(f"{needed} increments do not fit in a cell of {cell.size} coordinates")
    rows, coefficients = perturbation_system(stats, path, grid, cell, k)
    u_bar, _, info = build_ubar(rows, coefficients, full_output=True)
    delta = np.zeros(path.n)
    delta[cell] = u_bar
    return (delta, info) if full_output else delta


def verify_positivity(v, path):
    """
    min over the path's grid of <v, BM(t)> / sqrt(t).

    Returns:
        tuple: (min_value, argmin_time)
    """
    if len(path) == 0:
        raise ValueError("path is empty")
    values = (path.points @ np.asarray(v, dtype=np.float64)) / np.sqrt(path.grid.times)
    k = int(np.argmin(values))
    return float(values[k]), float(path.grid.times[k])


def bridge_split(a, b, s, value_a, value_b):
    """
    Linear interpolation at s and the Brownian bridge variance there.

    Returns:
        tuple: (w(s), (b - s)(s - a)/(b - a))
    """
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    if not a <= s <= b:
        raise ValueError(f"s={s} lies outside [{a}, {b}]")
    share = (s - a) / (b - a)
    w = (1.0 - share) * np.asarray(value_a, dtype=np.float64) + share * np.asarray(value_b, dtype=np.float64)
    return w, (b - s) * (s - a) / (b - a)


def geometric_excess_series(q, eps, terms=1000):
    """sum_{k=0..terms} ((1+eps)**(2k+1) - 1) q**k."""
    k = np.arange(terms + 1, dtype=np.float64)
    return float(np.sum(((1.0 + eps) ** (2 * k + 1) - 1.0) * q ** k))


def geometric_excess_closed_form(q, eps):
    """(1+eps)/(1 - q(1+eps)**2) - 1/(1-q); requires q(1+eps)**2 < 1."""
    ratio = q * (1.0 + eps) ** 2
    if not 0.0 <= ratio < 1.0:
        raise ValueError("series diverges for q (1+eps)**2 >= 1")
    return (1.0 + eps) / (1.0 - ratio) - 1.0 / (1.0 - q)


def geometric_excess_bound(q, eps):
    """4 eps / (1 - q)**2, valid for eps <= (1 - q)/8."""
    return 4.0 * eps / (1.0 - q) ** 2


def truncated_gaussian_norm_event(q, r, rng):
    """Does b = max(0, g - r), g standard Gaussian in R^q, satisfy ||b|| <= 4 sqrt(q) exp(-r**2/8)?"""
    g = rng.normal(q)
    b = np.maximum(g - r, 0.0)
    return bool(np.linalg.norm(b) <= 4.0 * math.sqrt(q) * math.exp(-r * r / 8.0))


def anchor_increments(path, grid):
    """Rows (BM(a_{i+1}) - BM(a_i)) / sqrt(a_{i+1} - a_i) for i = 0..N_blocks-1."""
    rows = []
    for i in range(grid.N_blocks):
        a_i, a_next = grid.anchor(i), grid.anchor(i + 1)
        rows.append((_position(path, a_next) - _position(path, a_i)) / math.sqrt(a_next - a_i))
    return np.array(rows)


def run_witness_pipeline(n, N_blocks, sched, rng, path=None):
    """
    Build a direction positive along one Brownian path.

    Samples BM in R^n on the level-M construction grid, builds the starting
    direction on J0, then for k = 1..M and l = 1..M_inner measures block
    statistics with the current direction and perturbs on cell J(k, l) when
    some block is bad. A level with no bad blocks leaves the direction as is,
    so a run that starts clean (always the case when N_blocks = 1 and the
    start is good) returns the starting direction. Success means no bad
    block at (M, M_inner + 1).

    When the bad blocks need more increments than the cell can hold, the
    perturbation is built from the worst blocks that fit (fit_to_cell). With
    sched.guard a step that would raise the norm of the final-level block
    statistic is rejected, so a run that starts clean stays clean.
    Numerical failures are recorded in the trace and end the run without
    success.

    Args:
        n (int): Dimension
        N_blocks (int): Number of blocks
        sched (Schedule): Thresholds and partition
        rng (RngStream): Random stream for the path
        path (WalkPath, optional): Use this path instead of sampling one; it
            must contain every point of the construction grid

    Returns:
        WitnessResult: Direction, per-level trace, success flag and the
            minimum of <v, BM(t)>/sqrt(t) over the construction grid
    """
    j0, cells = sched.partition(n)
    grid = BlockGrid(N_blocks, sched.M)
    if path is None:
        path = simulate_bm(grid.construction_grid(), n, rng)
    elif path.n != n:
        raise ValueError(f"path has dimension {path.n}, expected {n}")
    result = WitnessResult(direction=None)
    final_level = (sched.M, sched.M_inner + 1)

    try:
        v = initial_direction(anchor_increments(path, grid), j0.size)
    except NumericalFailure as e:
        logger.warning(f"initial direction failed: {e}")
        result.trace.append(LevelRecord(level=(0, 0), action="failed", error=str(e)))
        return result
    start = block_statistic(v, path, grid, final_level, sched)
    result.start_bad = bool(start.bad_blocks)
    current = float(np.linalg.norm(start.values))

    for k in range(1, sched.M + 1):
        for ell in range(1, sched.M_inner + 1):
            record = LevelRecord(level=(k, ell))
            result.trace.append(record)
            try:
                record.stats = block_statistic(v, path, grid, (k, ell), sched)
                if not record.stats.bad_blocks:
                    continue
                cell = cells[(k, ell)]
                chosen, record.dropped_blocks = fit_to_cell(record.stats, cell.size, k)
                if not chosen.bad_blocks:
                    record.action = "skipped"
                    record.error = f"no bad block fits a cell of {cell.size} coordinates"
                    continue
                delta, info = build_perturbation(chosen, path, grid, cell, k, full_output=True)
                record.rows, record.zero_rows = info["used"], info["dropped"]
                candidate = refine_direction(v, delta, sched.alpha(k, ell))
                if sched.guard:
                    after = float(np.linalg.norm(block_statistic(candidate, path, grid, final_level, sched).values))
                    if after > current:
                        record.action = "rejected"
                        continue
                    current = after
                v = candidate
                record.action = "partial" if record.dropped_blocks else "perturbed"
            except NumericalFailure as e:
                logger.warning(f"witness level ({k}, {ell}) failed: {e}")
                record.action = "failed"
                record.error = str(e)
                result.direction = v
                return result

    final = LevelRecord(level=final_level)
    final.stats = block_statistic(v, path, grid, final_level, sched)
    result.trace.append(final)
    result.direction = v
    result.success = not final.stats.bad_blocks
    result.min_positivity, result.argmin_time = verify_positivity(v, path)
    logger.debug(f"witness run: start_bad={result.start_bad}, success={result.success}, "
                 f"min={result.min_positivity:.4f}")
    return result
