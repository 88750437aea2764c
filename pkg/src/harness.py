"""Parameter tuning and benchmarking of the estimators.

A trial is one dataset: generated means and observations (gaussian
setting), generated toy bags with independent reference bags, or a random
split of loaded bags (kme setting). Tuning evaluates every grid point on
``trials_tune`` trials and keeps the one with the smallest mean loss;
benchmarking evaluates fixed parameters on ``trials_eval`` fresh trials.
Tuning and evaluation trials come from disjoint random streams.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg, sparse

from .bag_io import load_bags_csv, standardize, write_records_csv
from .config import ExperimentConfig
from .datagen import (
    GaussianModel,
    ToySetup,
    gen_gaussian,
    gen_toy,
    sample_reference_bags,
    subsample,
)
from .estimators import (
    Method,
    ShrinkageMode,
    WeightMatrix,
    james_stein_weights,
    laplacian,
    mta_gamma,
    mta_similarity,
    mta_weights,
    mta_weights_from_statistics,
    naive_weights,
    pp_james_stein,
    rkmse_weights,
    stb_weights,
    theory_gamma,
)
from .exceptions import ConfigurationError
from .gram_cache import GramCache, cross_mean_products, reference_self_products
from .kernel_core import Bag, KernelSpec, pooled_width
from .random_streams import EVAL_STREAM, SPLIT_STREAM, TUNE_STREAM, stream
from .similarity_tests import NeighborGraph, graph_from_statistics, pairwise_sq_distances

logger = logging.getLogger(__name__)

Params = Dict[str, float]

STB_METHODS = {Method.STB_ZERO, Method.STB_WEIGHT, Method.STB_THEORY}
MTA_METHODS = {Method.MTA_CONST, Method.MTA_STB}
# Parameters whose grids only bracket the optimum; gamma is bounded by [0, 1]
OPEN_ENDED_PARAMS = ("zeta", "c", "strength")
# Methods that reuse the STB-0 threshold when share_zeta is on
SHARED_ZETA_METHODS = {Method.STB_WEIGHT, Method.STB_THEORY, Method.MTA_STB}
# Above this edge density the neighbor averages use a dense product
DENSE_GRAPH_FRACTION = 0.05


def shrinkage_mode(method: Method, params: Params) -> ShrinkageMode:
    if method == Method.STB_ZERO:
        return ShrinkageMode.zero()
    if method == Method.STB_WEIGHT:
        return ShrinkageMode.weight(params["gamma"])
    if method == Method.STB_THEORY:
        return ShrinkageMode.theory(params["c"], params["zeta"])
    raise ConfigurationError(f"{method.value} is not a local shrinkage method")


def shrinkage_gammas(mode: ShrinkageMode, counts: np.ndarray) -> np.ndarray:
    """gamma_i of every task for a shrinkage mode and the |V_i| counts."""
    counts = np.asarray(counts, dtype=float)
    if mode.method == Method.STB_ZERO:
        return np.zeros_like(counts)
    if mode.method == Method.STB_WEIGHT:
        return np.full_like(counts, mode.gamma)
    return theory_gamma(mode.c * mode.zeta, counts - 1.0)


@dataclass(frozen=True)
class ShrinkageStatistics:
    """Per-task terms that make the local shrinkage loss a quadratic in gamma.

    With e_i the error of the naive estimate and m_i the error of the
    neighbor average, the loss of ``gamma_i x_i + (1 - gamma_i) avg_i`` is
    gamma^2 <e, e> + 2 gamma (1 - gamma) <e, m> + (1 - gamma)^2 <m, m>.
    """

    own: np.ndarray
    cross: np.ndarray
    neighbor: np.ndarray
    counts: np.ndarray

    def task_losses(self, gammas: np.ndarray) -> np.ndarray:
        g = np.broadcast_to(np.asarray(gammas, dtype=float), self.own.shape)
        return (
            g**2 * self.own
            + 2.0 * g * (1.0 - g) * self.cross
            + (1.0 - g) ** 2 * self.neighbor
        )


class Trial:
    """One dataset on which every method can be scored."""

    def __init__(self, size: int):
        self.B = size
        self._graphs: Dict[float, NeighborGraph] = {}
        self._statistics: Dict[float, ShrinkageStatistics] = {}

    # -- per-setting hooks ---------------------------------------------------

    def _build_graph(self, zeta: float) -> NeighborGraph:
        raise NotImplementedError

    def _shrinkage_statistics(self, graph: NeighborGraph) -> ShrinkageStatistics:
        raise NotImplementedError

    def _mta(self, strength: float, graph: Optional[NeighborGraph]) -> WeightMatrix:
        raise NotImplementedError

    def _special_weights(self, method: Method) -> WeightMatrix:
        raise ConfigurationError(f"{method.value} is not available in this setting")

    def naive_losses(self) -> np.ndarray:
        raise NotImplementedError

    def weight_losses(self, weights: WeightMatrix) -> np.ndarray:
        """Per-task loss of an arbitrary weight matrix."""
        raise NotImplementedError

    # -- shared -------------------------------------------------------------

    def graph(self, zeta: float) -> NeighborGraph:
        if zeta not in self._graphs:
            self._graphs[zeta] = self._build_graph(zeta)
        return self._graphs[zeta]

    def shrinkage_statistics(self, zeta: float) -> ShrinkageStatistics:
        if zeta not in self._statistics:
            self._statistics[zeta] = self._shrinkage_statistics(self.graph(zeta))
        return self._statistics[zeta]

    def weights(self, method: Method, params: Params) -> WeightMatrix:
        """Explicit weight matrix of ``method`` on this trial."""
        method = Method(method)
        if method == Method.NE:
            return naive_weights(self.B)
        if method in STB_METHODS:
            return stb_weights(self.graph(params["zeta"]), shrinkage_mode(method, params))
        if method == Method.MTA_CONST:
            return self._mta(params["strength"], None)
        if method == Method.MTA_STB:
            return self._mta(params["strength"], self.graph(params["zeta"]))
        return self._special_weights(method)

    def task_losses(self, method: Method, params: Params) -> np.ndarray:
        method = Method(method)
        if method == Method.NE:
            return self.naive_losses()
        if method in STB_METHODS:
            statistics = self.shrinkage_statistics(params["zeta"])
            gammas = shrinkage_gammas(shrinkage_mode(method, params), statistics.counts)
            return statistics.task_losses(gammas)
        return self.weight_losses(self.weights(method, params))

    def loss(self, method: Method, params: Params) -> float:
        """Loss averaged over tasks."""
        return float(np.mean(self.task_losses(method, params)))

    def grid_losses(self, method: Method, candidates: Sequence[Params]) -> np.ndarray:
        """Task-averaged loss of every candidate parameter set."""
        return np.array([self.loss(method, params) for params in candidates])


class GaussianTrial(Trial):
    """Known means with one naive estimate per task; losses are exact squared errors."""

    def __init__(self, means: np.ndarray, observations: np.ndarray, N: int = 1):
        super().__init__(means.shape[0])
        self.means = means
        self.observations = observations
        self.N = N
        self.d = means.shape[1]
        self.sigma_bar2 = self.d / N
        self.distances = pairwise_sq_distances(observations)

    def _build_graph(self, zeta: float) -> NeighborGraph:
        return graph_from_statistics(self.distances, zeta * self.d / self.N, strict=False)

    def neighbor_averages(self, graph: NeighborGraph) -> np.ndarray:
        """Row i is the average of the naive estimates over V_i."""
        adjacency = graph.adjacency
        if adjacency.mean() > DENSE_GRAPH_FRACTION:
            sums = adjacency.astype(float) @ self.observations
        else:
            sums = sparse.csr_matrix(adjacency, dtype=float) @ self.observations
        return sums / graph.neighbor_counts[:, None]

    def _shrinkage_statistics(self, graph: NeighborGraph) -> ShrinkageStatistics:
        own = self.observations - self.means
        neighbor = self.neighbor_averages(graph) - self.means
        return ShrinkageStatistics(
            own=np.einsum("ij,ij->i", own, own),
            cross=np.einsum("ij,ij->i", own, neighbor),
            neighbor=np.einsum("ij,ij->i", neighbor, neighbor),
            counts=graph.neighbor_counts,
        )

    def _mta(self, strength: float, graph: Optional[NeighborGraph]) -> WeightMatrix:
        mse = np.full(self.B, self.sigma_bar2)
        return mta_weights_from_statistics(self.distances, mse, graph=graph, strength=strength)

    def _special_weights(self, method: Method) -> WeightMatrix:
        if method == Method.PP_JAMES_STEIN:
            return james_stein_weights(self.observations, 1.0 / self.N)
        return super()._special_weights(method)

    def naive_losses(self) -> np.ndarray:
        errors = self.observations - self.means
        return np.einsum("ij,ij->i", errors, errors)

    def weight_losses(self, weights: WeightMatrix) -> np.ndarray:
        errors = weights.values @ self.observations - self.means
        return np.einsum("ij,ij->i", errors, errors)

    def task_losses(self, method: Method, params: Params) -> np.ndarray:
        if Method(method) == Method.PP_JAMES_STEIN:
            errors = pp_james_stein(self.observations, 1.0 / self.N) - self.means
            return np.einsum("ij,ij->i", errors, errors)
        return super().task_losses(method, params)

    def similarity(self, graph: Optional[NeighborGraph]) -> np.ndarray:
        return mta_similarity(self.distances, graph)[0]

    def mta_grid_losses(
        self, strengths: Sequence[float], graph: Optional[NeighborGraph]
    ) -> np.ndarray:
        """MTA losses for many strengths from one eigendecomposition of the Laplacian.

        D = sigma_bar^2 I here, so W = Q diag(1 / (1 + gamma sigma_bar^2 lambda / B)) Q^T
        and the Frobenius error can be computed in the eigenbasis.
        """
        similarity = self.similarity(graph)
        mse = np.full(self.B, self.sigma_bar2)
        eigenvalues, Q = linalg.eigh(laplacian(similarity))
        projected = Q.T @ self.observations
        target = Q.T @ self.means
        losses = []
        for strength in strengths:
            gamma = mta_gamma(strength, similarity, mse)
            shrink = 1.0 / (1.0 + gamma * self.sigma_bar2 * eigenvalues / self.B)
            residual = shrink[:, None] * projected - target
            losses.append(float(np.sum(residual**2)) / self.B)
        return np.array(losses)

    def grid_losses(self, method: Method, candidates: Sequence[Params]) -> np.ndarray:
        method = Method(method)
        if method not in MTA_METHODS:
            return super().grid_losses(method, candidates)
        losses = np.empty(len(candidates))
        by_zeta: Dict[Optional[float], List[int]] = {}
        for k, params in enumerate(candidates):
            by_zeta.setdefault(params.get("zeta"), []).append(k)
        for zeta, positions in by_zeta.items():
            graph = None if zeta is None else self.graph(zeta)
            strengths = [candidates[k]["strength"] for k in positions]
            losses[positions] = self.mta_grid_losses(strengths, graph)
        return losses


class KernelTrial(Trial):
    """Training bags scored against independent reference bags of the same distributions."""

    def __init__(self, bags: Sequence[Bag], refs: Sequence[Bag], kernel: KernelSpec):
        if len(bags) != len(refs):
            raise ConfigurationError(f"{len(bags)} bags but {len(refs)} reference bags")
        super().__init__(len(bags))
        self.bags = list(bags)
        self.refs = list(refs)
        self.kernel = kernel
        self.cache = GramCache(kernel)
        self.products, _ = self.cache.mean_products(self.bags)
        self.statistics = self.cache.mmd_matrix(self.bags)
        self.mse = self.cache.naive_mse_vector(self.bags)
        self.cross = cross_mean_products(self.bags, self.refs, kernel)
        self.reference = reference_self_products(self.refs, kernel)

    def _build_graph(self, zeta: float) -> NeighborGraph:
        return graph_from_statistics(self.statistics, zeta * self.mse, strict=True)

    def _shrinkage_statistics(self, graph: NeighborGraph) -> ShrinkageStatistics:
        counts = graph.neighbor_counts
        averaging = graph.adjacency / counts[:, None].astype(float)
        S, C, R = self.products, self.cross, self.reference
        own_cross = np.diag(C)
        neighbor_cross = np.einsum("ij,ji->i", averaging, C)
        return ShrinkageStatistics(
            own=np.diag(S) - 2.0 * own_cross + R,
            cross=np.einsum("ij,ij->i", S, averaging) - own_cross - neighbor_cross + R,
            neighbor=np.einsum("ij,jk,ik->i", averaging, S, averaging)
            - 2.0 * neighbor_cross
            + R,
            counts=counts,
        )

    def _mta(self, strength: float, graph: Optional[NeighborGraph]) -> WeightMatrix:
        similarity = "const" if graph is None else graph
        return mta_weights(self.bags, self.kernel, None, similarity, self.cache, strength)

    def _special_weights(self, method: Method) -> WeightMatrix:
        if method == Method.RKMSE:
            return rkmse_weights(self.bags, self.kernel, self.cache)
        return super()._special_weights(method)

    def naive_losses(self) -> np.ndarray:
        return np.diag(self.products) - 2.0 * np.diag(self.cross) + self.reference

    def weight_losses(self, weights: WeightMatrix) -> np.ndarray:
        """w_i S w_i - 2 w_i . C[:, i] + ||mu(ref_i)||^2 for every task."""
        W = weights.values
        quadratic = np.einsum("ij,jk,ik->i", W, self.products, W)
        return quadratic - 2.0 * np.einsum("ij,ji->i", W, self.cross) + self.reference


# ============================================================================
# Trial construction
# ============================================================================


def kernel_for(config: ExperimentConfig, bags: Sequence[Bag]) -> KernelSpec:
    """Kernel of a trial; an unset RBF width is the pooled width of its bags."""
    if config.kernel == "linear":
        return KernelSpec.linear()
    width = config.kernel_width if config.kernel_width is not None else pooled_width(bags)
    return KernelSpec.rbf(width)


def load_experiment_data(config: ExperimentConfig) -> Optional[List[Bag]]:
    """Bags of ``input_path`` (standardized if configured), or None for generated data."""
    if config.input_path is None:
        return None
    bags = load_bags_csv(config.input_path)
    if config.standardize:
        bags = standardize(bags)
    if len(bags) < 4:
        raise ConfigurationError(f"Need at least 4 bags for a train/test split, got {len(bags)}")
    return bags


def split_bags(bags: Sequence[Bag], fraction: float, seed: Optional[int], index: int):
    """Random (train, test) partition of the bags for trial ``index``."""
    order = stream(seed, SPLIT_STREAM, index).permutation(len(bags))
    n_train = min(max(2, int(round(fraction * len(bags)))), len(bags) - 2)
    train = [bags[i] for i in np.sort(order[:n_train])]
    test = [bags[i] for i in np.sort(order[n_train:])]
    return train, test


def toy_setup(config: ExperimentConfig) -> ToySetup:
    return ToySetup(
        config.generator,
        B=config.B,
        N=config.N,
        n_range=config.n_range,
        radius=config.radius,
        test_size=config.test_size,
    )


def task_bag_sizes(config: ExperimentConfig, count: int) -> List[int]:
    """Bag size of each of the ``count`` tasks of a trial."""
    if config.setting == "gaussian":
        return [config.N] * count
    if config.real_data:
        return [config.subsample_size] * count
    return toy_setup(config).bag_sizes()


def build_trial(
    config: ExperimentConfig, phase: int, index: int, data: Optional[Sequence[Bag]] = None
) -> Trial:
    """Dataset ``index`` of a phase (TUNE_STREAM or EVAL_STREAM)."""
    if config.setting == "gaussian":
        model = GaussianModel(config.generator, B=config.B, d=config.d, N=config.N)
        means, observations = gen_gaussian(model, stream(config.seed, phase, index))
        return GaussianTrial(means, observations, config.N)

    if config.real_data:
        if data is None:
            raise ConfigurationError("Real-data trials need the loaded bags")
        train, test = split_bags(data, config.train_fraction, config.seed, index)
        # tuning scores on the training half, evaluation on the held-out half
        # complete bags are the references for their own subsamples
        refs = train if phase == TUNE_STREAM else test
        bags = [
            subsample(bag, config.subsample_size, config.seed, (phase, index, k))
            for k, bag in enumerate(refs)
        ]
    else:
        setup = toy_setup(config)
        bags, params = gen_toy(setup, config.seed, (phase, index, 0))
        refs = sample_reference_bags(params, setup.test_size, config.seed, (phase, index, 1))
    return KernelTrial(bags, refs, kernel_for(config, bags))


def _pool_map(config: ExperimentConfig, fn, count: int) -> List[Any]:
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        return list(pool.map(fn, range(count)))


# ============================================================================
# Tuning
# ============================================================================


def parameter_candidates(
    method: Method, config: ExperimentConfig, zeta: Optional[float] = None
) -> List[Params]:
    """Grid of ``method`` ordered by zeta, then gamma (or c), ascending.

    The first minimum of this order is selected, so ties go to the smaller
    zeta and then the smaller gamma.
    """
    zetas = [zeta] if zeta is not None else config.zeta_grid
    method = Method(method)
    if method == Method.STB_ZERO:
        return [{"zeta": z} for z in zetas]
    if method == Method.STB_WEIGHT:
        return [{"zeta": z, "gamma": g} for z in zetas for g in config.gamma_grid]
    if method == Method.STB_THEORY:
        return [{"zeta": z, "c": c} for z in zetas for c in config.c_grid]
    if method == Method.MTA_CONST:
        return [{"strength": s} for s in config.mta_strength_grid]
    if method == Method.MTA_STB:
        return [{"zeta": z, "strength": s} for z in zetas for s in config.mta_strength_grid]
    return [{}]


def grid_edges(candidates: Sequence[Params], positions: Sequence[int], choice: int) -> List[str]:
    """Open-ended parameters of ``candidates[choice]`` at the smallest or largest grid value."""
    edges = []
    for name in OPEN_ENDED_PARAMS:
        values = sorted({candidates[k][name] for k in positions if name in candidates[k]})
        if len(values) > 1 and candidates[choice][name] in (values[0], values[-1]):
            edges.append(name)
    return edges


def tune(config: ExperimentConfig, data: Optional[Sequence[Bag]] = None) -> Dict[Method, Params]:
    """Grid point with the smallest mean loss over the tuning trials, per method.

    With ``share_zeta`` the threshold selected for STB-0 is held fixed for
    STB-weight, STB-theory and MTA-stb, which then only tune their other
    parameter.
    """
    methods = config.method_list
    shared = bool(config.share_zeta) and bool(SHARED_ZETA_METHODS & set(methods))
    evaluated = list(methods)
    if shared and Method.STB_ZERO not in evaluated:
        evaluated.append(Method.STB_ZERO)
    grids = {method: parameter_candidates(method, config) for method in evaluated}

    def score(index: int) -> Dict[Method, np.ndarray]:
        trial = build_trial(config, TUNE_STREAM, index, data)
        logger.debug(f"Tuning trial {index}")
        return {method: trial.grid_losses(method, grids[method]) for method in evaluated}

    totals = {method: np.zeros(len(grids[method])) for method in evaluated}
    for losses in _pool_map(config, score, config.trials_tune):
        for method in evaluated:
            totals[method] += losses[method]

    shared_zeta = None
    if shared:
        shared_zeta = grids[Method.STB_ZERO][int(np.argmin(totals[Method.STB_ZERO]))]["zeta"]
        logger.info(f"Shared zeta from STB-0: {shared_zeta}")

    best: Dict[Method, Params] = {}
    for method in methods:
        candidates = grids[method]
        positions = list(range(len(candidates)))
        if shared_zeta is not None and method in SHARED_ZETA_METHODS:
            positions = [k for k in positions if candidates[k]["zeta"] == shared_zeta]
        scores = totals[method][positions] / config.trials_tune
        choice = positions[int(np.argmin(scores))]
        best[method] = dict(candidates[choice])
        for name in grid_edges(candidates, positions, choice):
            logger.warning(
                f"{method.value}: selected {name}={candidates[choice][name]} "
                "is an end of its grid; consider widening it"
            )
        logger.info(
            f"{method.value}: selected {json.dumps(best[method], sort_keys=True)} "
            f"(mean loss {totals[method][choice] / config.trials_tune:.6g})"
        )
    return best


# ============================================================================
# Benchmark
# ============================================================================


@dataclass(frozen=True)
class BenchRow:
    """Result of one method."""

    method: Method
    params: Params
    mean_loss: float
    stderr: float
    pct_decrease: float

    def to_row(self) -> Dict[str, Any]:
        return {
            "method": self.method.value,
            "param_json": json.dumps(self.params, sort_keys=True),
            "mean_loss": self.mean_loss,
            "stderr": self.stderr,
            "pct_decrease": self.pct_decrease,
        }


@dataclass
class BenchReport:
    """Per-method losses over the evaluation trials.

    ``trial_losses`` is trials x methods (task-averaged), ``task_losses`` is
    methods x tasks (averaged over trials).
    """

    rows: List[BenchRow]
    trial_losses: np.ndarray = field(repr=False)
    task_losses: np.ndarray = field(repr=False)

    def row(self, method: Method) -> BenchRow:
        for row in self.rows:
            if row.method == Method(method):
                return row
        raise KeyError(method)

    def to_records(self) -> List[Dict[str, Any]]:
        return [row.to_row() for row in self.rows]

    def to_csv(self, path: str) -> None:
        write_records_csv(self.to_records(), path)
        logger.info(f"Wrote report for {len(self.rows)} methods to {path}")


def percent_decrease(loss: float, naive_loss: float) -> float:
    """100 (1 - loss / loss_NE)."""
    if naive_loss == 0:
        return 0.0
    return 100.0 * (1.0 - loss / naive_loss)


def run_benchmark(
    config: ExperimentConfig,
    params: Optional[Dict[Method, Params]] = None,
    data: Optional[Sequence[Bag]] = None,
) -> BenchReport:
    """Evaluate every configured method (NE always included) on fresh trials.

    Args:
        config: Experiment configuration
        params: Parameters per method; tuned first when omitted
        data: Loaded bags in real-data mode

    Returns:
        BenchReport with mean loss, standard error and percent decrease vs NE
    """
    if data is None and config.real_data:
        data = load_experiment_data(config)
    if params is None:
        params = tune(config, data)
    methods = config.method_list
    if Method.NE not in methods:
        methods = [Method.NE] + methods
    missing = [
        method.value
        for method in methods
        if method not in params and parameter_candidates(method, config) != [{}]
    ]
    if missing:
        raise ConfigurationError(f"No parameters given for {missing}")
    settings = [params.get(method, {}) for method in methods]

    def evaluate(index: int) -> np.ndarray:
        trial = build_trial(config, EVAL_STREAM, index, data)
        logger.debug(f"Evaluation trial {index}")
        return np.vstack(
            [trial.task_losses(method, setting) for method, setting in zip(methods, settings)]
        )

    per_trial = np.stack(_pool_map(config, evaluate, config.trials_eval))
    trial_losses = per_trial.mean(axis=2)
    means = trial_losses.mean(axis=0)
    T = trial_losses.shape[0]
    stderrs = trial_losses.std(axis=0, ddof=1) / math.sqrt(T) if T > 1 else np.zeros(len(methods))
    naive = means[methods.index(Method.NE)]
    rows = [
        BenchRow(method, setting, float(mean), float(se), percent_decrease(mean, naive))
        for method, setting, mean, se in zip(methods, settings, means, stderrs)
    ]
    for row in rows:
        logger.info(
            f"{row.method.value}: loss {row.mean_loss:.6g} +/- {row.stderr:.2g} "
            f"({row.pct_decrease:.1f}% vs NE)"
        )
    return BenchReport(rows, trial_losses, per_trial.mean(axis=0))


def run_sweep(
    config: ExperimentConfig,
    variable: str,
    values: Sequence[Any],
    data: Optional[Sequence[Bag]] = None,
) -> List[Dict[str, Any]]:
    """Tune and benchmark once per value of one configuration field.

    Returns:
        Plot-data rows ``variable, value, method, mean_loss, stderr, pct_decrease``
    """
    if data is None and config.real_data:
        data = load_experiment_data(config)
    rows: List[Dict[str, Any]] = []
    for value in values:
        current = config.replace(**{variable: value})
        logger.info(f"Sweep {variable}={value}")
        report = run_benchmark(current, tune(current, data), data)
        for row in report.rows:
            rows.append(
                {
                    "variable": variable,
                    "value": value,
                    "method": row.method.value,
                    "mean_loss": row.mean_loss,
                    "stderr": row.stderr,
                    "pct_decrease": row.pct_decrease,
                }
            )
    return rows


def task_loss_records(report: BenchReport, sizes: Sequence[int]) -> List[Dict[str, Any]]:
    """Per-task mean losses with the task's bag size, for imbalanced-bag plots."""
    records = []
    for row, losses in zip(report.rows, report.task_losses):
        for task, (size, loss) in enumerate(zip(sizes, losses)):
            records.append(
                {"method": row.method.value, "task": task, "bag_size": size, "mean_loss": loss}
            )
    return records
