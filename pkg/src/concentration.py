"""Monte-Carlo verification of the deviation inequalities and test calibration.

Each check simulates a deviation event many times and reports how often it
occurred. The inequalities are one-sided upper bounds, so a check passes when
the empirical rate does not exceed the stated bound by more than three
Monte-Carlo standard errors.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .estimators import ShrinkageMode, apply_weights, stb_weights
from .exceptions import InvalidParameterError, UnsupportedCheckError
from .random_streams import CALIBRATION_STREAM, CHECK_STREAM, stream
from .similarity_tests import (
    NeighborGraph,
    build_neighbor_graph_gaussian,
    gaussian_threshold,
    pairwise_sq_distances,
)
from .theory_bounds import BoundMode, mse_factor_single, q_radii

logger = logging.getLogger(__name__)

# Replicates drawn from one indexed stream; fixed so results do not depend on threads
REPLICATES_PER_STREAM = 1000
MIN_MEANINGFUL_REPS = 1000
GRAM_TOLERANCE = 1e-12


class CheckKind(str, Enum):
    """Deviation events that can be simulated."""

    GAUSS_NORM_UPPER = "gauss_norm_upper"
    GAUSS_NORM_LOWER = "gauss_norm_lower"
    GAUSS_DOT = "gauss_dot"
    BOUNDED_NORM_UPPER = "bounded_norm_upper"
    BOUNDED_NORM_LOWER = "bounded_norm_lower"
    USTAT_UPPER = "ustat_upper"
    USTAT_LOWER = "ustat_lower"
    GRAM_FROBENIUS = "gram_frobenius"
    BOUNDED_DOT = "bounded_dot"


NEEDS_T_AT_LEAST_ONE = {
    CheckKind.BOUNDED_NORM_LOWER,
    CheckKind.USTAT_UPPER,
    CheckKind.USTAT_LOWER,
}


@dataclass(frozen=True)
class ConcentrationCheck:
    """One deviation event with the distribution it is simulated under.

    Gaussian kinds draw N(mu, sigma^2 I_d) with ||mu|| = ``mu_norm``. Bounded
    kinds draw ``mu + r U`` with U uniform on the unit sphere of R^d and
    r = L - ||mu||, so every sample has norm at most L and Sigma = (r^2/d) I.
    The bounded inner-product kind pairs two independent centred families of
    radius L.
    U-statistic kinds put the two means ``delta_norm`` apart. The Gram
    inequality draws ``B`` tasks of ``N`` bounded samples per replicate.
    """

    kind: CheckKind
    t: float = 1.0
    reps: int = 10_000
    seed: Optional[int] = 0
    d: int = 50
    sigma: float = 1.0
    mu_norm: float = 0.0
    N: int = 20
    L: float = 1.0
    delta_norm: float = 0.0
    B: int = 10

    def __post_init__(self) -> None:
        """Validate the distribution parameters."""
        object.__setattr__(self, "kind", CheckKind(self.kind))
        if self.reps < 1:
            raise InvalidParameterError(f"Invalid reps: {self.reps}. Must be >= 1")
        if self.reps < MIN_MEANINGFUL_REPS and self.kind != CheckKind.GRAM_FROBENIUS:
            logger.warning(f"{self.reps} replicates give a coarse violation rate")
        if self.t < 0:
            raise InvalidParameterError(f"Invalid t: {self.t}. Must be >= 0")
        if self.kind in NEEDS_T_AT_LEAST_ONE and self.t < 1:
            raise UnsupportedCheckError(f"{self.kind.value} is only stated for t >= 1")
        if self.d < 1 or self.N < 2 or self.B < 1:
            raise UnsupportedCheckError("Need d >= 1, N >= 2 and B >= 1")
        if self.kind in (CheckKind.BOUNDED_NORM_UPPER, CheckKind.BOUNDED_NORM_LOWER):
            if not 0 <= self.mu_norm < self.L:
                raise UnsupportedCheckError(f"Bounded checks need 0 <= ||mu|| < L={self.L}")
        if self.kind in (CheckKind.USTAT_UPPER, CheckKind.USTAT_LOWER):
            if not 0 <= self.delta_norm / 2 < self.L:
                raise UnsupportedCheckError("U-statistic checks need ||mu_X - mu_Y|| < 2L")
        if not self.sigma > 0 or not self.L > 0:
            raise UnsupportedCheckError("sigma and L must be positive")

    @property
    def bounded_radius(self) -> float:
        if self.kind in (CheckKind.USTAT_UPPER, CheckKind.USTAT_LOWER):
            return self.L - self.delta_norm / 2
        if self.kind == CheckKind.BOUNDED_DOT:
            return self.L
        return self.L - self.mu_norm


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one check, as written to the verify-bounds CSV."""

    kind: CheckKind
    t: float
    reps: int
    bound: float
    rate: float

    @property
    def tolerance(self) -> float:
        """Three Monte-Carlo standard errors at the bound."""
        p = min(max(self.bound, 0.0), 1.0)
        return 3.0 * math.sqrt(p * (1.0 - p) / self.reps)

    @property
    def passed(self) -> bool:
        if self.kind == CheckKind.GRAM_FROBENIUS:
            return self.rate == 0.0
        return self.rate <= self.bound + self.tolerance

    def to_row(self) -> Dict[str, object]:
        return {
            "kind": self.kind.value,
            "t": self.t,
            "reps": self.reps,
            "bound": self.bound,
            "rate": self.rate,
            "pass": self.passed,
        }


def stated_bound(check: ConcentrationCheck) -> float:
    """Probability bound of the check's deviation event."""
    tail = math.exp(-check.t)
    if check.kind in (CheckKind.GAUSS_NORM_UPPER, CheckKind.GAUSS_NORM_LOWER, CheckKind.GAUSS_DOT):
        return tail
    if check.kind in (CheckKind.BOUNDED_NORM_UPPER, CheckKind.BOUNDED_NORM_LOWER):
        return 2.0 * tail
    if check.kind in (CheckKind.USTAT_UPPER, CheckKind.USTAT_LOWER):
        return 8.0 * tail
    if check.kind == CheckKind.BOUNDED_DOT:
        return 6.0 * tail
    return 0.0


def _first_axis(norm: float, d: int) -> np.ndarray:
    mean = np.zeros(d)
    mean[0] = norm
    return mean


def _sphere(rng: np.random.Generator, shape: tuple, d: int) -> np.ndarray:
    directions = rng.standard_normal(shape + (d,))
    return directions / np.linalg.norm(directions, axis=-1, keepdims=True)


def _gauss_norm_events(check: ConcentrationCheck, rng: np.random.Generator, reps: int):
    mean = _first_axis(check.mu_norm, check.d)
    Z = mean + check.sigma * rng.standard_normal((reps, check.d))
    norms = np.linalg.norm(Z, axis=1)
    centre = math.sqrt(check.mu_norm**2 + check.sigma**2 * check.d)
    if check.kind == CheckKind.GAUSS_NORM_UPPER:
        return norms >= centre + check.sigma * math.sqrt(2.0 * check.t)
    return norms <= centre - 2.0 * check.sigma * math.sqrt(2.0 * check.t)


def _gauss_dot_events(check: ConcentrationCheck, rng: np.random.Generator, reps: int):
    X1 = check.sigma * rng.standard_normal((reps, check.d))
    X2 = check.sigma * rng.standard_normal((reps, check.d))
    dots = np.einsum("ij,ij->i", X1, X2)
    return dots >= check.sigma**2 * (math.sqrt(2.0 * check.d * check.t) + check.t)


def _bounded_norm_events(check: ConcentrationCheck, rng: np.random.Generator, reps: int):
    r = check.bounded_radius
    mean = _first_axis(check.mu_norm, check.d)
    samples = mean + r * _sphere(rng, (reps, check.N), check.d)
    V2 = np.sum(samples.mean(axis=1) ** 2, axis=1)
    trace = r**2
    q_sigma, _ = q_radii(check.t, trace, trace / check.d, check.N, check.L)
    spread = math.sqrt(trace / check.N)
    mu = check.mu_norm
    if check.kind == CheckKind.BOUNDED_NORM_UPPER:
        return V2 >= mu**2 + (spread + q_sigma) ** 2 + 2.0 * mu * q_sigma
    return V2 <= mu**2 + max(spread - 4.0 * q_sigma, 0.0) ** 2 - 2.0 * mu * q_sigma


def _bounded_dot_events(check: ConcentrationCheck, rng: np.random.Generator, reps: int):
    r = check.bounded_radius
    X_bar = (r * _sphere(rng, (reps, check.N), check.d)).mean(axis=1)
    Y_bar = (r * _sphere(rng, (reps, check.N), check.d)).mean(axis=1)
    dots = np.einsum("ij,ij->i", X_bar, Y_bar)
    trace = r**2
    sigma_bar = math.sqrt(trace / check.N)
    _, q = q_radii(check.t, trace, trace / check.d, check.N, check.L)
    return dots >= 20.0 * q * max(sigma_bar, q)


def _ustat_events(check: ConcentrationCheck, rng: np.random.Generator, reps: int):
    r = check.bounded_radius
    N, d = check.N, check.d
    shift = _first_axis(check.delta_norm / 2.0, d)
    X = shift + r * _sphere(rng, (reps, N), d)
    Y = -shift + r * _sphere(rng, (reps, N), d)
    sum_X, sum_Y = X.sum(axis=1), Y.sum(axis=1)
    own_X = np.sum(X**2, axis=(1, 2))
    own_Y = np.sum(Y**2, axis=(1, 2))
    U = (
        (np.sum(sum_X**2, axis=1) - own_X) / (N * (N - 1))
        + (np.sum(sum_Y**2, axis=1) - own_Y) / (N * (N - 1))
        - 2.0 * np.einsum("ij,ij->i", sum_X, sum_Y) / N**2
    )
    trace = r**2
    sigma_bar2 = trace / N
    _, q = q_radii(check.t, trace, trace / d, N, check.L)
    delta = check.delta_norm
    root = math.sqrt(2.0 * sigma_bar2)
    if check.kind == CheckKind.USTAT_UPPER:
        return U >= delta**2 + 2.0 * delta * q + 2.0 * root * q + 11.0 * q**2
    return U <= delta**2 - 2.0 * delta * q - 8.0 * root * q - 32.0 * q**2


def gram_frobenius_gap(means: np.ndarray, estimates: np.ndarray, L: float) -> float:
    """Right side minus left side of the inter-task Gram Frobenius inequality.

    ``||(K - K_hat)/B||_F^2 <= (4 L^2 / B) sum_i ||mu_i - mu_hat_i||^2`` for the
    linear-kernel Gram matrices of ``means`` and ``estimates``.
    """
    B = means.shape[0]
    K = means @ means.T
    K_hat = estimates @ estimates.T
    lhs = float(np.sum(((K - K_hat) / B) ** 2))
    rhs = 4.0 * L**2 / B * float(np.sum((means - estimates) ** 2))
    return rhs - lhs


def _gram_events(check: ConcentrationCheck, rng: np.random.Generator, reps: int):
    half = check.L / 2.0
    events = np.zeros(reps, dtype=bool)
    for rep in range(reps):
        radii = half * rng.uniform(0.0, 1.0, size=(check.B, 1))
        means = radii * _sphere(rng, (check.B,), check.d)
        samples = means[:, None, :] + half * _sphere(rng, (check.B, check.N), check.d)
        estimates = samples.mean(axis=1)
        gap = gram_frobenius_gap(means, estimates, check.L)
        events[rep] = gap < -GRAM_TOLERANCE
    return events


_SIMULATORS: Dict[CheckKind, Callable] = {
    CheckKind.GAUSS_NORM_UPPER: _gauss_norm_events,
    CheckKind.GAUSS_NORM_LOWER: _gauss_norm_events,
    CheckKind.GAUSS_DOT: _gauss_dot_events,
    CheckKind.BOUNDED_NORM_UPPER: _bounded_norm_events,
    CheckKind.BOUNDED_NORM_LOWER: _bounded_norm_events,
    CheckKind.USTAT_UPPER: _ustat_events,
    CheckKind.USTAT_LOWER: _ustat_events,
    CheckKind.GRAM_FROBENIUS: _gram_events,
    CheckKind.BOUNDED_DOT: _bounded_dot_events,
}


def _count_block(check: ConcentrationCheck, block: int) -> int:
    kind_index = list(CheckKind).index(check.kind)
    start = block * REPLICATES_PER_STREAM
    reps = min(REPLICATES_PER_STREAM, check.reps - start)
    rng = stream(check.seed, CHECK_STREAM, kind_index, block)
    return int(np.count_nonzero(_SIMULATORS[check.kind](check, rng, reps)))


def run_check(check: ConcentrationCheck, threads: int = 1) -> float:
    """Fraction of replicates in which the check's deviation event occurred.

    Args:
        check: Event and distribution to simulate
        threads: Worker threads; the result does not depend on it

    Returns:
        Empirical violation rate in [0, 1]
    """
    if check.kind not in _SIMULATORS:
        raise UnsupportedCheckError(f"No simulator for {check.kind}")
    blocks = range(math.ceil(check.reps / REPLICATES_PER_STREAM))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        counts = list(pool.map(lambda block: _count_block(check, block), blocks))
    rate = sum(counts) / check.reps
    logger.debug(f"{check.kind.value} t={check.t}: {sum(counts)}/{check.reps} violations")
    return rate


def verify_bounds(
    kinds: Sequence[CheckKind] = tuple(CheckKind),
    ts: Sequence[float] = (1.0, 2.0, 3.0),
    reps: int = 100_000,
    seed: Optional[int] = 0,
    threads: int = 1,
    gram_instances: int = 100,
    **params: float,
) -> List[CheckResult]:
    """Run every (kind, t) combination and collect the results."""
    results = []
    for kind in kinds:
        kind = CheckKind(kind)
        for t in ts:
            if kind in NEEDS_T_AT_LEAST_ONE and t < 1:
                logger.warning(f"Skipping {kind.value} at t={t}: only stated for t >= 1")
                continue
            count = gram_instances if kind == CheckKind.GRAM_FROBENIUS else reps
            check = ConcentrationCheck(kind=kind, t=t, reps=count, seed=seed, **params)
            result = CheckResult(kind, t, count, stated_bound(check), run_check(check, threads))
            level = logging.INFO if result.passed else logging.WARNING
            logger.log(
                level,
                f"{kind.value} t={t}: rate={result.rate:.5f} bound={result.bound:.5f} "
                f"pass={result.passed}",
            )
            results.append(result)
    return results


# ============================================================================
# Test calibration and the empirical shrinkage bound
# ============================================================================


@dataclass(frozen=True)
class CalibrationResult:
    """Family-wise error rates of the Gaussian tests."""

    zeta: float
    false_positive_rate: float
    false_negative_rate: float
    runs: int

    def tolerance(self, alpha: float) -> float:
        return 3.0 * math.sqrt(alpha * (1.0 - alpha) / self.runs)


def _calibration_run(
    run: int, separated: np.ndarray, close: np.ndarray, zeta: float, seed: Optional[int]
):
    rng = stream(seed, CALIBRATION_STREAM, 0, run)
    off_diagonal = ~np.eye(separated.shape[0], dtype=bool)
    far_graph = build_neighbor_graph_gaussian(
        separated + rng.standard_normal(separated.shape), zeta, 1
    )
    near_graph = build_neighbor_graph_gaussian(close + rng.standard_normal(close.shape), zeta, 1)
    false_positive = bool(np.any(far_graph.adjacency[off_diagonal]))
    false_negative = bool(np.any(~near_graph.adjacency[off_diagonal]))
    return false_positive, false_negative


def fwer_calibration(
    B: int = 50,
    d: int = 1000,
    alpha: float = 0.05,
    tau: float = 1.0,
    runs: int = 2000,
    seed: Optional[int] = 0,
    threads: int = 1,
) -> CalibrationResult:
    """Empirical family-wise error rates of the Gaussian tests at the theory threshold.

    One observation per task (N = 1, sigma_bar^2 = d). False positives are
    measured with every pair exactly at squared distance tau * d, false
    negatives with every pair at tau * d / 3.
    """
    if B > d:
        raise InvalidParameterError(f"Calibration layout needs B <= d, got B={B}, d={d}")
    zeta = gaussian_threshold(tau, B, alpha, d)
    axes = np.eye(B, d)
    separated = math.sqrt(tau * d / 2.0) * axes
    close = math.sqrt(tau * d / 6.0) * axes
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        outcomes = list(
            pool.map(lambda run: _calibration_run(run, separated, close, zeta, seed), range(runs))
        )
    false_positives = sum(fp for fp, _ in outcomes)
    false_negatives = sum(fn for _, fn in outcomes)
    return CalibrationResult(zeta, false_positives / runs, false_negatives / runs, runs)


@dataclass(frozen=True)
class ShrinkageCheckResult:
    """Per-task mean squared error of the theory-gamma estimator next to its bound."""

    mean_error: np.ndarray
    mean_bound: np.ndarray
    kept_trials: int

    def passes(self, slack: float = 1.05) -> bool:
        return bool(self.kept_trials > 0 and np.all(self.mean_error <= slack * self.mean_bound))


def shrinkage_check_means(tau: float, n_neighbors: int, d: int, n_far: int) -> np.ndarray:
    """Means for the shrinkage check.

    Task 0 sits at the origin, its ``n_neighbors`` neighbors share one point at
    squared distance tau * d / 2, and ``n_far`` isolated tasks lie on separate
    axes far beyond tau * d.
    """
    if n_far + 2 > d:
        raise InvalidParameterError(f"Need d >= n_far + 2, got d={d}, n_far={n_far}")
    B = 1 + n_neighbors + n_far
    means = np.zeros((B, d))
    means[1 : 1 + n_neighbors, 0] = math.sqrt(tau * d / 2.0)
    far = math.sqrt(max(9.0, 4.0 * tau) * d)
    for k in range(n_far):
        means[1 + n_neighbors + k, 2 + k] = far
    return means


def oracle_shrinkage_check(
    tau: float,
    n_neighbors: int,
    d: int = 100,
    n_far: int = 5,
    trials: int = 400,
    seed: Optional[int] = 0,
    tests: str = "oracle",
    zeta: Optional[float] = None,
    alpha: float = 0.05,
) -> ShrinkageCheckResult:
    """Compare the per-task error of the theory-gamma shrinkage estimator with its bound.

    ``tests="oracle"`` builds the graph from the true distances (T_ij = 1 iff
    Delta_ij^2 < tau d). ``tests="split"`` runs the Gaussian tests on an
    independent second observation and keeps only trials without a false
    positive. One observation per task, so sigma_bar^2 = d.
    """
    if tests not in ("oracle", "split"):
        raise InvalidParameterError(f"Unknown test source: {tests!r}")
    means = shrinkage_check_means(tau, n_neighbors, d, n_far)
    B = means.shape[0]
    sigma_bar2 = float(d)
    true_distances = pairwise_sq_distances(means)
    far_pairs = true_distances >= tau * sigma_bar2
    np.fill_diagonal(far_pairs, False)
    if zeta is None:
        zeta = gaussian_threshold(tau, B, alpha, d)
    mode = ShrinkageMode.theory(c=1.0, zeta=tau)

    error_sum = np.zeros(B)
    bound_sum = np.zeros(B)
    kept = 0
    for trial in range(trials):
        rng = stream(seed, CALIBRATION_STREAM, 1, trial)
        observations = means + rng.standard_normal(means.shape)
        if tests == "oracle":
            graph = NeighborGraph(true_distances < tau * sigma_bar2)
        else:
            graph = build_neighbor_graph_gaussian(
                means + rng.standard_normal(means.shape), zeta, 1
            )
            if np.any(graph.adjacency[far_pairs]):
                continue
        estimates = apply_weights(stb_weights(graph, mode), observations)
        error_sum += np.sum((estimates - means) ** 2, axis=1)
        bound_sum += sigma_bar2 * np.array(
            [mse_factor_single(tau, int(n) - 1, BoundMode.INDEP) for n in graph.neighbor_counts]
        )
        kept += 1
    if kept == 0:
        logger.warning("Every trial had a false positive; no conditional error available")
        return ShrinkageCheckResult(np.full(B, np.nan), np.full(B, np.nan), 0)
    return ShrinkageCheckResult(error_sum / kept, bound_sum / kept, kept)
