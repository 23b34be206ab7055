"""
Monte Carlo experiment drivers.

Every driver takes a root RngStream and gives trial t the substream
rng.substream(t), so results do not depend on how many worker threads run
the trials. Per-trial numerical failures are logged, counted and skipped.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from hullwalk import __version__, numkit
from hullwalk.conelab import escape_event, gordon_escape_bound
from hullwalk.errors import InvalidRegime, NumericalFailure, Unresolved
from hullwalk.randwalk import (grid_dyadic, grid_geometric, grid_poisson, grid_uniform,
                               simulate_bm, simulate_sphere_walk, simulate_zn, sphere_step)
from hullwalk.witness import BlockGrid, Schedule, run_witness_pipeline
from hullwalk.widthlab import orthant_width_exact

logger = logging.getLogger('hullwalk.harness')

DEFAULT_CONFIDENCE = 0.95
BRIDGE_BATCH = 1000


def clopper_pearson(successes, trials, confidence=DEFAULT_CONFIDENCE):
    """
    Exact binomial confidence interval.

    Args:
        successes (int): Number of successes
        trials (int): Number of trials
        confidence (float): Coverage level

    Returns:
        tuple: (low, high)
    """
    if trials < 0 or not 0 <= successes <= trials:
        raise ValueError(f"need 0 <= successes <= trials, got {successes}/{trials}")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    if trials == 0:
        return 0.0, 1.0
    alpha = 1.0 - confidence
    low = 0.0 if successes == 0 else float(stats.beta.ppf(alpha / 2.0, successes, trials - successes + 1))
    high = 1.0 if successes == trials else float(stats.beta.ppf(1.0 - alpha / 2.0, successes + 1, trials - successes))
    return low, high


@dataclass(frozen=True)
class BernoulliEstimate:
    """Success count with an exact Clopper-Pearson interval."""

    successes: int
    trials: int
    p_hat: float
    ci_low: float
    ci_high: float
    confidence: float = DEFAULT_CONFIDENCE
    errors: int = 0

    @classmethod
    def from_counts(cls, successes, trials, confidence=DEFAULT_CONFIDENCE, errors=0):
        low, high = clopper_pearson(successes, trials, confidence)
        p_hat = successes / trials if trials else 0.0
        return cls(successes=int(successes), trials=int(trials), p_hat=float(p_hat),
                   ci_low=min(low, p_hat), ci_high=max(high, p_hat),
                   confidence=float(confidence), errors=int(errors))

    @property
    def std_error(self):
        if self.trials == 0:
            return 0.0
        return math.sqrt(self.p_hat * (1.0 - self.p_hat) / self.trials)

    def to_dict(self):
        return {
            "successes": self.successes,
            "trials": self.trials,
            "p_hat": self.p_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "confidence": self.confidence,
            "errors": self.errors,
        }


@dataclass
class ExperimentReport:
    """Parameters and results of one experiment run."""

    experiment: str
    parameters: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    wall_time: float = 0.0
    version: str = __version__

    def to_dict(self, timing=False):
        out = {
            "experiment": self.experiment,
            "parameters": self.parameters,
            "results": self.results,
            "version": self.version,
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(experiment=data["experiment"], parameters=dict(data.get("parameters", {})),
                   results=dict(data.get("results", {})), wall_time=float(data.get("wall_time", 0.0)),
                   version=data.get("version", __version__))


def run_trials(fn, trials, rng, jobs=1):
    """
    Run fn(trial_index, trial_rng) for every trial.

    Trial t always receives rng.substream(t) and results come back in trial
    order, so the output is the same for any number of jobs. A
    NumericalFailure is returned in place of the result for that trial.

    Returns:
        list: One entry per trial, either fn's result or the exception
    """
    def one(t):
        try:
            return fn(t, rng.substream(t))
        except NumericalFailure as e:
            logger.warning(f"trial {t} failed: {e}")
            return e

    if jobs <= 1 or trials <= 1:
        return [one(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(one, range(trials)))


def _split(outcomes):
    good = [o for o in outcomes if not isinstance(o, NumericalFailure)]
    return good, len(outcomes) - len(good)


@dataclass(frozen=True)
class WalkModel:
    """
    A walk model and grid choice for absorption experiments.

    kind is "bm", "zn" or "sphere". For bm the grid is "uniform" (t_i = i/N),
    "geometric" (t_i = t1 ratio**(i-1)) or "poisson" (intensity, N ignored).
    For zn, "uniform" observes every step and "geometric" observes integer
    checkpoints ceil(t1 ratio**(i-1)). Sphere walks use theta.
    """

    kind: str = "bm"
    grid: str = "uniform"
    t1: float = 1.0
    ratio: float = 2.0
    intensity: float = 100.0
    theta: float = math.pi / 3

    def __post_init__(self):
        if self.kind not in ("bm", "zn", "sphere"):
            raise ValueError(f"unknown model {self.kind!r}")
        if self.grid not in ("uniform", "geometric", "poisson"):
            raise ValueError(f"unknown grid {self.grid!r}")
        if self.kind == "zn" and self.grid == "poisson":
            raise ValueError("lattice walks have no poisson grid")

    def simulate(self, n, N, rng):
        """Simulate one walk and return its WalkPath."""
        if self.kind == "sphere":
            return simulate_sphere_walk(self.theta, N, n, rng)
        if self.kind == "zn":
            if self.grid == "uniform":
                return simulate_zn(N, None, n, rng)
            marks = np.unique(np.ceil(self.t1 * self.ratio ** np.arange(N)).astype(np.int64))
            return simulate_zn(int(marks[-1]), marks, n, rng)
        if self.grid == "uniform":
            grid = grid_uniform(N)
        elif self.grid == "geometric":
            grid = grid_geometric(self.t1, self.ratio, N)
        else:
            grid = grid_poisson(self.intensity, rng)
            if len(grid) == 0:
                return None
        return simulate_bm(grid, n, rng)

    def to_dict(self):
        out = {"kind": self.kind, "grid": self.grid}
        if self.kind == "sphere":
            out["theta"] = self.theta
        elif self.grid == "geometric":
            out.update(t1=self.t1, ratio=self.ratio)
        elif self.grid == "poisson":
            out["intensity"] = self.intensity
        return out


def absorption_probability(model, n, N, trials, rng, jobs=1, confidence=DEFAULT_CONFIDENCE):
    """
    Estimate P{0 in conv of the walk's points}.

    An empty Poisson grid counts as not absorbed.

    Args:
        model (WalkModel): Walk model and grid
        n (int): Dimension
        N (int): Number of points (ignored for Poisson grids)
        trials (int): Number of trials
        rng (RngStream): Root stream

    Returns:
        BernoulliEstimate: Absorption frequency; failed trials are in errors
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")

    def trial(t, trial_rng):
        path = model.simulate(n, N, trial_rng)
        if path is None:
            return False
        return numkit.contains_origin(path.points).inside

    good, errors = _split(run_trials(trial, trials, rng, jobs))
    estimate = BernoulliEstimate.from_counts(sum(good), len(good), confidence, errors)
    logger.info(f"absorption {model.kind}/{model.grid} n={n} N={N}: "
                f"{estimate.successes}/{estimate.trials} (errors {errors})")
    return estimate


@dataclass
class ThresholdResult:
    """Smallest passing N and every rung tried on the way."""

    N_star: int
    target_p: float
    ladder: list = field(default_factory=list)

    def to_dict(self):
        return {
            "N_star": self.N_star,
            "target_p": self.target_p,
            "ladder": [{"N": N, **estimate.to_dict()} for N, estimate in self.ladder],
        }


def absorption_threshold(model, n, target_p, trials_per_rung, rng, max_N=1 << 16, start_N=None,
                         jobs=1, confidence=DEFAULT_CONFIDENCE):
    """
    Smallest N whose absorption CI lies at or above target_p.

    Doubles N from start_N (default n + 1) until a rung passes (CI lower
    bound >= target_p), then bisects between the last non-passing and the
    first passing N. Every rung reuses the same trial streams.

    Raises:
        Unresolved: If no rung up to max_N passes; the ladder is attached
    """
    if not 0.0 < target_p < 1.0:
        raise ValueError(f"target_p must lie in (0, 1), got {target_p}")
    ladder = []
    cache = {}

    def passes(N):
        if N not in cache:
            cache[N] = absorption_probability(model, n, N, trials_per_rung, rng, jobs, confidence)
            ladder.append((N, cache[N]))
        return cache[N].ci_low >= target_p

    low = 0
    high = max(start_N or (n + 1), 1)
    while not passes(high):
        low = high
        if high >= max_N:
            raise Unresolved(f"no N up to {max_N} reaches p={target_p} for n={n}", ladder)
        high = min(2 * high, max_N)

    while high - low > 1:
        mid = (low + high) // 2
        if passes(mid):
            high = mid
        else:
            low = mid

    logger.info(f"threshold {model.kind}/{model.grid} n={n}: N*={high} after {len(ladder)} rungs")
    return ThresholdResult(N_star=high, target_p=float(target_p), ladder=ladder)


def growth_fit(ns, thresholds):
    """Least-squares line through (n, log2 N*); returns (slope, intercept)."""
    slope, intercept = np.polyfit(np.asarray(ns, dtype=np.float64),
                                  np.log2(np.asarray(thresholds, dtype=np.float64)), 1)
    return float(slope), float(intercept)


@dataclass
class CoveringSummary:
    """Distribution of first absorption times of sphere walks."""

    times: list
    censored: int
    trials: int
    errors: int = 0

    @property
    def completed(self):
        return len(self.times)

    def to_dict(self):
        out = {"trials": self.trials, "completed": self.completed, "censored": self.censored,
               "errors": self.errors, "times": list(self.times)}
        if self.times:
            values = np.asarray(self.times, dtype=np.float64)
            out.update(mean=float(values.mean()), median=float(np.median(values)),
                       quantiles={str(q): float(np.quantile(values, q)) for q in (0.1, 0.25, 0.75, 0.9)})
        return out

    @property
    def median(self):
        return float(np.median(self.times)) if self.times else None


def first_covering_time(theta, n, N_cap, rng):
    """
    Steps until the sphere walk's points contain the origin in their hull, or None.

    A set of unit vectors is a pi/2-covering exactly when the origin is in
    its hull, so this is the covering time. Hull tests start at n + 1
    points and warm-start from the previous weights.
    """
    y = rng.normal(n)
    points = [y / np.linalg.norm(y)]
    weights = None
    for count in range(2, N_cap + 1):
        v, _, _ = sphere_step(points[-1], theta, rng)
        points.append(v / np.linalg.norm(v))
        if count <= n:
            continue
        verdict = numkit.contains_origin(np.array(points), warm_start=weights)
        if verdict.inside:
            return count
        weights = verdict.coefficients
    return None


def covering_time(theta, n, trials, N_cap, rng, jobs=1):
    """
    Covering time distribution of the sphere walk.

    Returns:
        CoveringSummary: Completed times plus censored count (censored +
            completed + errors = trials)
    """
    if not 0.0 < theta < math.pi / 2:
        raise ValueError(f"theta must lie in (0, pi/2), got {theta}")
    outcomes = run_trials(lambda t, r: first_covering_time(theta, n, N_cap, r), trials, rng, jobs)
    good, errors = _split(outcomes)
    times = [int(T) for T in good if T is not None]
    summary = CoveringSummary(times=times, censored=len(good) - len(times), trials=trials, errors=errors)
    logger.info(f"covering theta={theta:.4f} n={n}: median {summary.median}, censored {summary.censored}")
    return summary


def minimax_grid(n, c_exp, grid_density):
    """Dyadic grid of [1, 2**(c_exp n)] with grid_density points per doubling."""
    return grid_dyadic(0, c_exp * n, grid_density)


def minimax_negative_check(n, c_exp, grid_density, trials, rng, jobs=1):
    """
    Estimate P{0 in conv{BM(t) : t in a dyadic grid of [1, 2**(c_exp n)]}}.
    """
    grid = minimax_grid(n, c_exp, grid_density)

    def trial(t, trial_rng):
        return numkit.contains_origin(simulate_bm(grid, n, trial_rng).points).inside

    good, errors = _split(run_trials(trial, trials, rng, jobs))
    return BernoulliEstimate.from_counts(sum(good), len(good), errors=errors)


def minimax_two_sided(n, N_blocks, sched, trials, rng, jobs=1):
    """
    Absorption and witness success on the same paths.

    The paths live on the witness construction grid, a dyadic grid of
    [1, 2**(N_blocks - 1)] with 2**M points per doubling. A successful
    witness with positive minimum certifies that the path is not absorbed,
    so the two events never occur together.

    Returns:
        dict: absorbed and witnessed estimates plus the count of trials
            where both occurred
    """
    def trial(t, trial_rng):
        grid = BlockGrid(N_blocks, sched.M).construction_grid()
        path = simulate_bm(grid, n, trial_rng)
        absorbed = numkit.contains_origin(path.points).inside
        result = run_witness_pipeline(n, N_blocks, sched, trial_rng, path=path)
        witnessed = result.success and result.min_positivity is not None and result.min_positivity > 0.0
        return absorbed, witnessed

    good, errors = _split(run_trials(trial, trials, rng, jobs))
    absorbed = sum(1 for a, _ in good if a)
    witnessed = sum(1 for _, w in good if w)
    both = sum(1 for a, w in good if a and w)
    return {
        "absorbed": BernoulliEstimate.from_counts(absorbed, len(good), errors=errors),
        "witnessed": BernoulliEstimate.from_counts(witnessed, len(good), errors=errors),
        "both": both,
    }


def bridge_maxima(grid_points, trials, rng, jobs=1):
    """
    Maxima of standard Brownian bridges on a uniform grid of [0, 1].

    Trials are drawn in batches of BRIDGE_BATCH; batch b uses rng.substream(b).
    """
    if grid_points < 1:
        raise ValueError("grid_points must be at least 1")
    batches = (trials + BRIDGE_BATCH - 1) // BRIDGE_BATCH
    s = np.arange(1, grid_points + 1, dtype=np.float64) / grid_points

    def batch(b, batch_rng):
        size = min(BRIDGE_BATCH, trials - b * BRIDGE_BATCH)
        walk = np.cumsum(batch_rng.normal((size, grid_points)) / math.sqrt(grid_points), axis=1)
        bridge = walk - s[None, :] * walk[:, -1:]
        return np.maximum(bridge.max(axis=1), 0.0)

    return np.concatenate(run_trials(batch, batches, rng, jobs))


def bridge_max_sweep(taus, grid_points, trials, rng, jobs=1):
    """P{max bridge >= tau} for every tau, all from the same bridges."""
    maxima = bridge_maxima(grid_points, trials, rng, jobs)
    return [BernoulliEstimate.from_counts(int(np.sum(maxima >= tau)), trials) for tau in taus]


def bridge_max_check(tau, grid_points, trials, rng, jobs=1):
    """
    Estimate P{max of a Brownian bridge >= tau}; the continuous value is exp(-2 tau**2).
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return bridge_max_sweep([tau], grid_points, trials, rng, jobs)[0]


def witness_experiment(n, N_blocks, sched, trials, rng, jobs=1):
    """
    Run the witness pipeline on independent paths.

    Returns:
        dict: Success estimate, how many runs started bad and how many of
            those refinement rescued, bad-block counts per level, action
            counts, increments used or dropped for a zero coefficient,
            blocks dropped for capacity, and the positivity of successful
            directions
    """
    outcomes = run_trials(lambda t, r: run_witness_pipeline(n, N_blocks, sched, r), trials, rng, jobs)
    good, errors = _split(outcomes)
    successes = [r for r in good if r.success]
    bad_counts = {}
    actions = {}
    rows = 0
    zero_rows = 0
    dropped = 0
    for result in good:
        for record in result.trace:
            if record.stats is not None:
                key = f"{record.level[0]},{record.level[1]}"
                bad_counts.setdefault(key, []).append(len(record.stats.bad_blocks))
            actions[record.action] = actions.get(record.action, 0) + 1
            rows += record.rows
            zero_rows += record.zero_rows
            dropped += len(record.dropped_blocks)
    positivity = [r.min_positivity for r in successes]
    return {
        "success": BernoulliEstimate.from_counts(len(successes), len(good), errors=errors).to_dict(),
        "start_bad": sum(1 for r in good if r.start_bad),
        "rescued": sum(1 for r in good if r.rescued),
        "mean_bad_blocks": {key: float(np.mean(v)) for key, v in sorted(bad_counts.items())},
        "actions": dict(sorted(actions.items())),
        "rows": rows,
        "zero_rows": zero_rows,
        "dropped_blocks": dropped,
        "failed_runs": actions.get("failed", 0),
        "positivity_violations": sum(1 for value in positivity if not value > 0.0),
        "min_positivity": float(min(positivity)) if positivity else None,
        "schedule": sched.to_dict(),
    }


def witness_sweep(n, N_blocks, trials, rng, C_f_values=(0.01, 0.02, 0.04), C_h_values=(None,),
                  j0_fractions=(0.4, 0.45, 0.5), alpha_bases=(1.25, 2.0, 16.0), base=None, jobs=1):
    """
    Witness success over a grid of schedules.

    Every schedule sees the same paths (the same rng), so rows differ only
    through the schedule. C_h = None couples C_h to C_f. A schedule whose
    partition does not fit n is reported with its error.

    Returns:
        dict: One row per schedule and the schedule with the highest success
            rate (ties broken by rescued runs, then by order)
    """
    base = Schedule() if base is None else base
    rows = []
    for C_f in C_f_values:
        for C_h in C_h_values:
            for j0_fraction in j0_fractions:
                for alpha_base in alpha_bases:
                    sched = replace(base, C_f=C_f, C_h=C_h, j0_fraction=j0_fraction, alpha_base=alpha_base)
                    try:
                        sched.partition(n)
                        out = witness_experiment(n, N_blocks, sched, trials, rng, jobs)
                    except ValueError as e:
                        rows.append({"schedule": sched.to_dict(), "error": str(e)})
                        continue
                    rows.append({key: out[key] for key in ("schedule", "success", "start_bad", "rescued", "actions")})
                    logger.info(f"sweep C_f={C_f} C_h={sched.C_h:.3g} j0={j0_fraction} alpha_base={alpha_base}: "
                                f"{out['success']['successes']}/{out['success']['trials']}")
    scored = [row for row in rows if "error" not in row]
    best = max(scored, key=lambda row: (row["success"]["p_hat"], row["rescued"]), default=None)
    return {"rows": rows, "best": best["schedule"] if best else None}


def escape_experiment(N, n, trials, rng, jobs=1):
    """
    Escape frequency of N x n Gaussian matrices against the subspace bound.

    The escape event (some unit y with G y >= 0) is the column span of G
    meeting the positive orthant. The span is a uniform random n-dimensional
    subspace, and the orthant's spherical part has width E||Y_+||, so the
    probability of no escape is at least gordon_escape_bound(N, n, width)
    whenever that width is below sqrt(N - n).

    Returns:
        dict: escape estimate, width, bound (None outside its regime) and
            whether the observed no-escape frequency is consistent with it
    """
    def trial(t, trial_rng):
        escaped, _ = escape_event(trial_rng.normal((N, n)))
        return escaped

    good, errors = _split(run_trials(trial, trials, rng, jobs))
    estimate = BernoulliEstimate.from_counts(sum(good), len(good), errors=errors)
    width = orthant_width_exact(N)
    try:
        bound = gordon_escape_bound(N, n, width)
    except InvalidRegime as e:
        logger.info(f"no subspace bound for N={N}, n={n}: {e}")
        bound = None
    return {
        "escape": estimate.to_dict(),
        "width": width,
        "no_escape_bound": bound,
        "consistent": bound is None or 1.0 - estimate.ci_low >= bound,
    }


def timed(experiment, parameters, fn):
    """Run fn() and wrap its result dict in an ExperimentReport."""
    start = time.perf_counter()
    results = fn()
    report = ExperimentReport(experiment=experiment, parameters=parameters, results=results,
                              wall_time=time.perf_counter() - start)
    logger.info(f"{experiment} finished in {report.wall_time:.2f}s")
    return report

