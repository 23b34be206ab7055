"""
Invariant suites run by `hullwalk check`.

Each suite takes (n, trials, rng) and returns a list of CheckResult. Suites
cap their own work so the defaults finish in seconds; the acceptance tests
run the same checks at full scale.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from hullwalk import conelab, numkit, widthlab, witness
from hullwalk.errors import NumericalFailure
from hullwalk.harness import BernoulliEstimate, bridge_max_check
from hullwalk.randwalk import (grid_geometric, grid_zn_checkpoints, scaled_increments,
                               simulate_bm, simulate_sphere_walk, simulate_zn)

logger = logging.getLogger('hullwalk.checks')

PREFIX_TOL = 1e-9
BRIDGE_BAND = (0.10, 0.14)
BRIDGE_MIN_TRIALS = 10000


@dataclass
class CheckResult:
    """One invariant and whether it held."""

    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


def random_lower_triangular(N, rng):
    """Well-conditioned random lower-triangular matrix with positive diagonal."""
    entries = np.tril(rng.normal((N, N)), -1) * (0.3 / math.sqrt(N))
    entries[np.diag_indices(N)] = 1.0 + np.abs(rng.normal(N))
    return entries


def check_hull(n, trials, rng):
    """Wolfe verdicts against the LP oracle on shifted Gaussian point sets."""
    instances = min(trials, 200)
    disagreements = 0
    degenerate = 0
    bad_certificates = 0
    inside_count = 0
    for t in range(instances):
        r = rng.substream(t)
        m = int(r.integers(1, 3 * n + 4))
        shift = np.zeros(n)
        shift[0] = 1.5 * r.uniform()
        points = r.normal((m, n)) + shift
        verdict = numkit.contains_origin(points)
        if verdict.degenerate:
            degenerate += 1
            continue
        if verdict.inside != numkit.lp_contains_origin(points):
            disagreements += 1
        if verdict.inside:
            inside_count += 1
            weights = verdict.coefficients
            if weights.min() < 0.0 or abs(weights.sum() - 1.0) > 1e-9:
                bad_certificates += 1
        elif not np.all(points @ verdict.direction > 0.0):
            bad_certificates += 1
    return [
        CheckResult("wolfe_matches_lp", disagreements == 0,
                    {"instances": instances, "disagreements": disagreements,
                     "degenerate": degenerate, "inside": inside_count}),
        CheckResult("certificates_valid", bad_certificates == 0, {"bad": bad_certificates}),
    ]


def check_moreau(n, trials, rng):
    """Reconstruction, orthogonality and Pythagoras for random triangular cones."""
    spec = widthlab.ConeSpec(random_lower_triangular(n, rng.substream(0)))
    failures = 0
    worst = 0.0
    ys = rng.substream(1).normal((min(trials, 50), n))
    for y in ys:
        try:
            p, q = widthlab.moreau_decompose(spec, y)
        except NumericalFailure:
            failures += 1
            continue
        gap = abs(float(y @ y) - float(p @ p) - float(q @ q)) / max(float(y @ y), 1e-300)
        worst = max(worst, gap)
    return [CheckResult("moreau_decomposition", failures == 0 and worst <= widthlab.MOREAU_TOL,
                        {"vectors": int(ys.shape[0]), "failures": failures, "worst_pythagoras": worst})]


def check_width(n, trials, rng):
    """Width budget for the orthant and the two walk cones, and the orthant's exact width."""
    trials = max(trials, 100)
    N = max(n, 2)
    cones = {
        "orthant": widthlab.ConeSpec(np.eye(N)),
        "bm_geometric": widthlab.ConeSpec(conelab.build_prefix_matrix_bm(grid_geometric(1.0, 4.0, N))),
        "sphere_ideal": widthlab.ConeSpec(conelab.build_ftilde_sphere(math.pi / 3, N, N)),
    }
    results = []
    for index, (name, spec) in enumerate(cones.items()):
        wC, wCstar, ok = widthlab.width_budget_check(spec, trials, rng.substream(index))
        results.append(CheckResult(f"width_budget_{name}", ok,
                                   {"wC": wC.to_dict(), "wCstar": wCstar.to_dict(), "N": N}))
        if name == "orthant":
            exact = widthlab.orthant_width_exact(N)
            results.append(CheckResult("orthant_width_exact",
                                       abs(wC.mean - exact) <= 4.0 * wC.std_error + 1e-12,
                                       {"estimate": wC.mean, "exact": exact}))
    return results


def check_condition(n, trials, rng):
    """Condition numbers of the geometric-grid and idealized sphere matrices against their bounds."""
    N = max(n, 2)
    K = 4.0
    c_K, gamma_K = conelab.bm_prefix_constants(K)
    F_bm = conelab.build_prefix_matrix_bm(grid_geometric(1.0, K, N))
    cond_bm = numkit.condition_number(F_bm.entries)

    theta = math.pi / 3
    F_sphere = conelab.build_ftilde_sphere(theta, N, N)
    cond_sphere = numkit.condition_number(F_sphere.entries)
    norm_sphere = numkit.operator_norm(F_sphere.entries)
    low, high = conelab.ftilde_norm_bounds(theta, N)
    return [
        CheckResult("bm_geometric_condition", cond_bm <= 1.0 / gamma_K + 1e-9,
                    {"condition": cond_bm, "bound": 1.0 / gamma_K, "c_K": c_K}),
        CheckResult("sphere_condition", cond_sphere <= conelab.sphere_condition_bound(theta) + 1e-9,
                    {"condition": cond_sphere, "bound": conelab.sphere_condition_bound(theta)}),
        CheckResult("sphere_norm_bracket", low - 1e-12 <= norm_sphere <= high + 1e-12,
                    {"norm": norm_sphere, "low": low, "high": high}),
    ]


def check_sphere(n, trials, rng):
    """Unit norms and fixed step angle of the sphere walk, plus concentration of alpha at n = 1000."""
    theta = math.pi / 4
    steps = max(2, min(trials, 200))
    path = simulate_sphere_walk(theta, steps, max(n, 2), rng.substream(0), verify=True)
    norms = np.linalg.norm(path.points, axis=1)
    angles = np.einsum("ij,ij->i", path.points[:-1], path.points[1:])

    dim = 1000
    draws = max(2, min(trials, 1000))
    big = simulate_sphere_walk(theta, draws + 1, dim, rng.substream(1), record_coefficients=True)
    alphas = big.coefficients[0][1:]
    ratio = alphas / (math.sqrt(dim) / math.tan(theta))
    within = float(np.mean((ratio >= 0.8) & (ratio <= 1.2)))
    return [
        CheckResult("unit_norm", float(np.max(np.abs(norms - 1.0))) <= 1e-12,
                    {"worst": float(np.max(np.abs(norms - 1.0)))}),
        CheckResult("step_angle", float(np.max(np.abs(angles - math.cos(theta)))) <= 1e-10,
                    {"worst": float(np.max(np.abs(angles - math.cos(theta))))}),
        CheckResult("alpha_concentration", within >= 0.99, {"fraction_within": within, "draws": draws}),
    ]


def check_zn(n, trials, rng):
    """Third moments of normalized lattice increments and the checkpoint prefix deviation."""
    dim = max(1, min(n, 10))
    moment = conelab.zn_moment_check(dim, dim ** 4, max(min(trials, 2000), 10), rng)
    deviation, bound = conelab.zn_prefix_deviation(0.5, 6)
    return [
        CheckResult("third_moment", moment <= 100.0, {"n": dim, "max_moment": moment}),
        CheckResult("prefix_deviation", deviation <= bound + 1e-12,
                    {"deviation": deviation, "bound": bound}),
    ]


def check_bridge(n, trials, rng):
    """
    Frequency of a bridge maximum above 1 on a 1000-point grid.

    Passes when the frequency itself lies in BRIDGE_BAND, which brackets
    exp(-2) less the downward bias of a discrete maximum. At least
    BRIDGE_MIN_TRIALS bridges are drawn so that the frequency has a
    standard error near 0.003.
    """
    estimate = bridge_max_check(1.0, 1000, max(trials, BRIDGE_MIN_TRIALS), rng)
    low, high = BRIDGE_BAND
    return [CheckResult("bridge_max_tail", low <= estimate.p_hat <= high,
                        {**estimate.to_dict(), "band": list(BRIDGE_BAND), "continuous": math.exp(-2.0)})]


def check_series(n, trials, rng):
    """Geometric excess series against its closed form and its bound."""
    results = []
    for q in (0.1, 0.5, 0.9):
        eps = (1.0 - q) / 8.0
        series = witness.geometric_excess_series(q, eps)
        closed = witness.geometric_excess_closed_form(q, eps)
        bound = witness.geometric_excess_bound(q, eps)
        results.append(CheckResult(f"geometric_excess_q{q}",
                                   series <= bound and abs(series - closed) <= 1e-9 * max(abs(closed), 1.0),
                                   {"series": series, "closed_form": closed, "bound": bound}))
    return results


def check_truncation(n, trials, rng):
    """Frequency of the truncated Gaussian norm event for q = 10**4, r = 3."""
    q, r = 10 ** 4, 3.0
    draws = max(min(trials, 1000), 10)
    hits = sum(witness.truncated_gaussian_norm_event(q, r, rng.substream(t)) for t in range(draws))
    estimate = BernoulliEstimate.from_counts(hits, draws)
    floor = 1.0 - math.exp(-2.0 * math.sqrt(q))
    return [CheckResult("truncated_norm_event", estimate.ci_high >= floor,
                        {**estimate.to_dict(), "floor": floor})]


def check_negpart(n, trials, rng):
    """||x_-|| >= ||y_-|| - ||x - y|| and x = x_+ - x_- on random pairs."""
    dim = max(n, 1)
    X = rng.normal((min(trials, 1000), 2, dim))
    worst_gap = min(numkit.negative_part_gap(x, y) for x, y in X)
    worst_split = max(float(np.max(np.abs(numkit.positive_part(x) - numkit.negative_part(x) - x)))
                      for x, _ in X)
    return [
        CheckResult("negative_part_inequality", worst_gap >= -1e-12, {"worst_gap": worst_gap}),
        CheckResult("positive_negative_split", worst_split == 0.0, {"worst": worst_split}),
    ]


def check_prefix(n, trials, rng):
    """Prefix matrices reproduce the simulated positions for all three walk models."""
    dim = max(n, 1)
    N = max(2, min(n, 30))

    grid = grid_geometric(1.0, 4.0, N)
    bm = simulate_bm(grid, dim, rng.substream(0))
    F = conelab.build_prefix_matrix_bm(grid)
    target = bm.points / np.sqrt(grid.increments)[:, None]
    bm_error = float(np.max(np.abs(F.apply(scaled_increments(bm)) - target))) / max(1.0, float(np.max(np.abs(target))))

    marks = grid_zn_checkpoints(1, 0.5, 5)
    zn = simulate_zn(int(marks.times[-1]), marks, dim, rng.substream(1))
    F_zn = conelab.build_prefix_matrix_zn(marks)
    zn_target = zn.points * np.sqrt(dim / marks.increments)[:, None]
    zn_error = float(np.max(np.abs(F_zn.apply(scaled_increments(zn)) - zn_target))) / max(1.0, float(np.max(np.abs(zn_target))))

    theta = math.pi / 3
    sphere = simulate_sphere_walk(theta, N, max(dim, 2), rng.substream(2), record_coefficients=True)
    alphas, betas, gaussians = sphere.coefficients
    F_exact = conelab.build_prefix_matrix_sphere(alphas, betas)
    sphere_error = float(np.max(np.abs(F_exact.apply(gaussians) - sphere.points)))
    deviation = conelab.sphere_prefix_deviation(F_exact, conelab.build_ftilde_sphere(theta, N, max(dim, 2)))

    return [
        CheckResult("bm_prefix", bm_error <= PREFIX_TOL, {"relative_error": bm_error}),
        CheckResult("zn_prefix", zn_error <= PREFIX_TOL, {"relative_error": zn_error}),
        CheckResult("sphere_prefix", sphere_error <= 1e-8,
                    {"error": sphere_error, "relative_deviation_from_ideal": deviation}),
    ]


SUITES = {
    "hull": check_hull,
    "moreau": check_moreau,
    "width": check_width,
    "condition": check_condition,
    "sphere": check_sphere,
    "zn": check_zn,
    "bridge": check_bridge,
    "series": check_series,
    "truncation": check_truncation,
    "negpart": check_negpart,
    "prefix": check_prefix,
}


def run_suite(name, n, trials, rng):
    """
    Run one suite, or every suite for "all".

    A NumericalFailure inside a suite is reported as a failed check rather
    than aborting the remaining suites.

    Returns:
        dict: suite name -> list of CheckResult
    """
    if name == "all":
        names = list(SUITES)
    elif name in SUITES:
        names = [name]
    else:
        raise ValueError(f"unknown check suite {name!r}")

    outcome = {}
    for index, suite in enumerate(names):
        try:
            outcome[suite] = SUITES[suite](n, trials, rng.substream(index))
        except NumericalFailure as e:
            logger.warning(f"suite {suite} failed: {e}")
            outcome[suite] = [CheckResult("numerical_failure", False, {"error": str(e)})]
        passed = sum(1 for check in outcome[suite] if check.passed)
        logger.info(f"check {suite}: {passed}/{len(outcome[suite])} passed")
    return outcome
