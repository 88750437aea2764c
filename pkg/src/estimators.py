"""Weight matrices for every estimator and their application.

Every method estimates ``mu_tilde_i = sum_j w_ij * mu_j`` from the naive
estimates ``mu_j``, so the Gaussian and KME settings share this module and
differ only in how losses are evaluated.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .exceptions import (
    DegenerateShrinkageError,
    DimensionMismatchError,
    InvalidParameterError,
    SingularSystemError,
)
from .gram_cache import GramCache
from .kernel_core import Bag, KernelSpec
from .similarity_tests import NeighborGraph

logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-10


class Method(str, Enum):
    """Estimator families."""

    NE = "NE"
    RKMSE = "R-KMSE"
    STB_ZERO = "STB-0"
    STB_THEORY = "STB-theory"
    STB_WEIGHT = "STB-weight"
    MTA_CONST = "MTA-const"
    MTA_STB = "MTA-stb"
    PP_JAMES_STEIN = "PP-James-Stein"


ROW_STOCHASTIC = {
    Method.NE,
    Method.STB_ZERO,
    Method.STB_THEORY,
    Method.STB_WEIGHT,
    Method.MTA_CONST,
    Method.MTA_STB,
}


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """B x B coefficients w_ij of one estimator."""

    values: np.ndarray
    method: Method

    def __post_init__(self) -> None:
        """Validate shape and finiteness."""
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionMismatchError(f"Weight matrix must be square, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise SingularSystemError(f"{Method(self.method).value} produced non-finite weights")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "method", Method(self.method))

    @property
    def size(self) -> int:
        return int(self.values.shape[0])

    def row_sums_ok(self, tolerance: float = ROW_SUM_TOLERANCE) -> bool:
        """True when every row sums to 1 within ``tolerance``."""
        return bool(np.all(np.abs(self.values.sum(axis=1) - 1.0) <= tolerance))


class ShrinkageKind(str, Enum):
    """How gamma_i is chosen in the local shrinkage estimator."""

    STB_ZERO = "stb_zero"
    STB_WEIGHT = "stb_weight"
    STB_THEORY = "stb_theory"


@dataclass(frozen=True)
class ShrinkageMode:
    """Shrinkage variant with its parameters."""

    kind: ShrinkageKind
    gamma: float = 0.0
    c: float = 1.0
    zeta: float = 0.0

    def __post_init__(self) -> None:
        """Validate the variant's parameters."""
        object.__setattr__(self, "kind", ShrinkageKind(self.kind))
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidParameterError(f"Invalid gamma: {self.gamma}. Must be in [0, 1]")
        if self.kind == ShrinkageKind.STB_THEORY:
            if not self.c > 0:
                raise InvalidParameterError(f"Invalid c: {self.c}. Must be > 0")
            if self.zeta < 0:
                raise InvalidParameterError(f"Invalid zeta: {self.zeta}. Must be >= 0")

    @classmethod
    def zero(cls) -> "ShrinkageMode":
        return cls(ShrinkageKind.STB_ZERO)

    @classmethod
    def weight(cls, gamma: float) -> "ShrinkageMode":
        return cls(ShrinkageKind.STB_WEIGHT, gamma=gamma)

    @classmethod
    def theory(cls, c: float, zeta: float) -> "ShrinkageMode":
        return cls(ShrinkageKind.STB_THEORY, c=c, zeta=zeta)

    @property
    def method(self) -> Method:
        return {
            ShrinkageKind.STB_ZERO: Method.STB_ZERO,
            ShrinkageKind.STB_WEIGHT: Method.STB_WEIGHT,
            ShrinkageKind.STB_THEORY: Method.STB_THEORY,
        }[self.kind]


def theory_gamma(tau: float, n_neighbors: np.ndarray) -> np.ndarray:
    """gamma_i = tau |V_i*| / ((1 + tau) |V_i*| + 1) for the independent-test bound."""
    n_neighbors = np.asarray(n_neighbors, dtype=float)
    return tau * n_neighbors / ((1.0 + tau) * n_neighbors + 1.0)


def shared_data_gamma(tau: float) -> float:
    """Constant gamma = tau / (1 + tau) used when tests and estimates share data."""
    if tau < 0:
        raise InvalidParameterError(f"Invalid tau: {tau}. Must be >= 0")
    return tau / (1.0 + tau)


def naive_weights(B: int) -> WeightMatrix:
    """The naive estimator: every task keeps its own estimate."""
    return WeightMatrix(np.eye(B), Method.NE)


def stb_weights(graph: NeighborGraph, mode: ShrinkageMode) -> WeightMatrix:
    """Local shrinkage towards the average of each task's detected neighbors.

    Row i: w_ii = gamma_i + (1 - gamma_i)/|V_i|, w_ij = (1 - gamma_i)/|V_i| for
    j in V_i minus i, and 0 elsewhere.
    """
    counts = graph.neighbor_counts.astype(float)
    if mode.kind == ShrinkageKind.STB_ZERO:
        gammas = np.zeros_like(counts)
    elif mode.kind == ShrinkageKind.STB_WEIGHT:
        gammas = np.full_like(counts, mode.gamma)
    else:
        gammas = theory_gamma(mode.c * mode.zeta, counts - 1.0)

    values = ((1.0 - gammas) / counts)[:, None] * graph.adjacency
    values[np.diag_indices_from(values)] += gammas
    return WeightMatrix(values, mode.method)


def rkmse_weights(
    bags: Sequence[Bag], kernel: KernelSpec, cache: Optional[GramCache] = None
) -> WeightMatrix:
    """Per-bag shrinkage of the naive embedding towards 0.

    lambda = (varrho - rho) / ((1/N - 1) varrho + (N - 1) rho) with varrho the
    mean diagonal kernel value and rho the mean of the full Gram block.

    Raises:
        DegenerateShrinkageError: If lambda is -1 or undefined for some bag
    """
    cache = cache if cache is not None else GramCache(kernel)
    products, traces = cache.mean_products(bags)
    diagonal = np.empty(len(bags))
    for a, bag in enumerate(bags):
        N = bag.size
        varrho = traces[a] / N
        rho = products[a, a]
        denominator = (1.0 / N - 1.0) * varrho + (N - 1.0) * rho
        numerator = varrho - rho
        if numerator == 0.0:
            diagonal[a] = 1.0
            continue
        if denominator == 0.0:
            raise DegenerateShrinkageError(f"Bag {bag.id!r}: shrinkage denominator is zero")
        lam = numerator / denominator
        if lam == -1.0:
            raise DegenerateShrinkageError(f"Bag {bag.id!r}: lambda = -1")
        diagonal[a] = 1.0 - lam / (1.0 + lam)
    return WeightMatrix(np.diag(diagonal), Method.RKMSE)


def laplacian(similarity: np.ndarray) -> np.ndarray:
    """Graph Laplacian L(A) = diag(A 1) - A."""
    return np.diag(similarity.sum(axis=1)) - similarity


def mta_similarity(
    sq_distances: np.ndarray, graph: Optional[NeighborGraph] = None
) -> Tuple[np.ndarray, Method]:
    """Task-similarity matrix A of MTA-const (no graph) or MTA-stb.

    MTA-const uses ``a 1 1^T`` with ``a`` the mean plug-in squared distance
    over ordered pairs i != j.
    """
    B = sq_distances.shape[0]
    if graph is None:
        off_diagonal = ~np.eye(B, dtype=bool)
        a = float(sq_distances[off_diagonal].mean()) if B > 1 else 0.0
        return np.full((B, B), a), Method.MTA_CONST
    if graph.size != B:
        raise DimensionMismatchError(f"Graph of size {graph.size} for {B} tasks")
    return graph.adjacency.astype(float), Method.MTA_STB


def mta_operator_scale(similarity: np.ndarray, mse: np.ndarray) -> float:
    """Typical size of ``(1/B) D L(A)``: mean(D) times the mean Laplacian degree over B.

    Zero when the graph has no edges between distinct tasks.
    """
    B = similarity.shape[0]
    degrees = similarity.sum(axis=1) - np.diag(similarity)
    return float(np.mean(mse)) * float(np.mean(degrees)) / B


def mta_gamma(strength: float, similarity: np.ndarray, mse: np.ndarray) -> float:
    """Gamma whose operator ``(gamma/B) D L(A)`` has typical size ``strength``.

    Raises:
        InvalidParameterError: If strength is negative
    """
    if strength < 0:
        raise InvalidParameterError(f"Invalid MTA strength: {strength}. Must be >= 0")
    scale = mta_operator_scale(similarity, mse)
    # without edges every gamma gives W = I
    return strength / scale if scale > 0 else strength


def mta_weights_from_statistics(
    sq_distances: np.ndarray,
    mse: np.ndarray,
    gamma: Optional[float] = None,
    graph: Optional[NeighborGraph] = None,
    strength: Optional[float] = None,
) -> WeightMatrix:
    """Multi-task averaging weights W = (I + (gamma/B) D L(A))^-1.

    Exactly one of ``gamma`` and ``strength`` is given; a strength is turned
    into gamma with :func:`mta_gamma` on this data.

    Args:
        sq_distances: B x B plug-in squared distances between naive estimates
        mse: Per-task MSE of the naive estimator (diagonal of D)
        gamma: Regularisation strength, >= 0
        graph: Similarity graph (MTA-stb); None uses the constant similarity
        strength: Unit-free alternative to gamma, >= 0

    Raises:
        InvalidParameterError: If gamma or strength is negative, or not exactly one is given
        SingularSystemError: If the linear system cannot be solved
    """
    if (gamma is None) == (strength is None):
        raise InvalidParameterError("MTA needs exactly one of gamma and strength")
    similarity, method = mta_similarity(sq_distances, graph)
    if strength is not None:
        gamma = mta_gamma(strength, similarity, mse)
        logger.debug(f"{method.value}: strength {strength:.6g} -> gamma {gamma:.6g}")
    assert gamma is not None
    if gamma < 0:
        raise InvalidParameterError(f"Invalid MTA gamma: {gamma}. Must be >= 0")
    B = sq_distances.shape[0]
    system = np.eye(B) + (gamma / B) * np.diag(mse) @ laplacian(similarity)
    try:
        values = linalg.solve(system, np.eye(B))
    except (linalg.LinAlgError, ValueError) as e:
        raise SingularSystemError(f"{method.value} system could not be solved: {e}")
    return WeightMatrix(values, method)


def mta_weights(
    bags: Sequence[Bag],
    kernel: KernelSpec,
    gamma: Optional[float] = None,
    similarity: Union[str, NeighborGraph] = "const",
    cache: Optional[GramCache] = None,
    strength: Optional[float] = None,
) -> WeightMatrix:
    """MTA weights in the KME setting, with D from the task-variance estimates.

    Args:
        bags: The B bags
        kernel: Kernel defining the embeddings
        gamma: Regularisation strength, >= 0
        similarity: ``"const"`` or a NeighborGraph (MTA-stb)
        cache: Optional shared Gram cache
        strength: Unit-free alternative to gamma (see :func:`mta_gamma`)
    """
    cache = cache if cache is not None else GramCache(kernel)
    products, _ = cache.mean_products(bags)
    norms = np.diag(products)
    sq_distances = norms[:, None] + norms[None, :] - 2.0 * products
    mse = cache.naive_mse_vector(bags)
    if isinstance(similarity, NeighborGraph):
        return mta_weights_from_statistics(sq_distances, mse, gamma, similarity, strength)
    if similarity != "const":
        raise InvalidParameterError(f"Unknown MTA similarity: {similarity!r}")
    return mta_weights_from_statistics(sq_distances, mse, gamma, None, strength)


def james_stein_factors(muhats: np.ndarray, sigma2: float, d: int) -> np.ndarray:
    """Positive-part factors (1 - (d-2) sigma^2 / ||mu||^2)_+ for each row (0 for zero rows)."""
    if d < 3:
        raise InvalidParameterError(f"James-Stein shrinkage needs d >= 3, got d={d}")
    if not sigma2 >= 0:
        raise InvalidParameterError(f"Invalid sigma2: {sigma2}. Must be >= 0")
    sq_norms = np.einsum("ij,ij->i", muhats, muhats)
    factors = np.zeros(len(sq_norms))
    nonzero = sq_norms > 0
    factors[nonzero] = np.maximum(0.0, 1.0 - (d - 2) * sigma2 / sq_norms[nonzero])
    return factors


def pp_james_stein(
    muhats: np.ndarray,
    sigma2: float,
    d: Optional[int] = None,
    target: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Positive-part James-Stein estimate of every task, shrunk towards ``target`` (default 0).

    Args:
        muhats: B x d naive estimates
        sigma2: Per-coordinate noise variance of each naive estimate
        d: Dimension (defaults to the number of columns)
        target: Shrinkage target vector

    Returns:
        B x d shrunk estimates
    """
    muhats = np.atleast_2d(np.asarray(muhats, dtype=float))
    d = muhats.shape[1] if d is None else d
    if muhats.shape[1] != d:
        raise DimensionMismatchError(f"Estimates have {muhats.shape[1]} columns, expected {d}")
    origin = np.zeros(d) if target is None else np.asarray(target, dtype=float)
    if origin.shape != (d,):
        raise DimensionMismatchError(f"Target of shape {origin.shape} for dimension {d}")
    centered = muhats - origin
    return origin + james_stein_factors(centered, sigma2, d)[:, None] * centered


def james_stein_weights(muhats: np.ndarray, sigma2: float) -> WeightMatrix:
    """PP James-Stein towards 0 written as a diagonal weight matrix."""
    muhats = np.atleast_2d(np.asarray(muhats, dtype=float))
    factors = james_stein_factors(muhats, sigma2, muhats.shape[1])
    return WeightMatrix(np.diag(factors), Method.PP_JAMES_STEIN)


def apply_weights(weights: WeightMatrix, muhats: np.ndarray) -> np.ndarray:
    """Explicit estimates ``mu_tilde = W @ mu_hat`` (Gaussian setting).

    Raises:
        DimensionMismatchError: If the weights and estimates disagree in B
    """
    muhats = np.atleast_2d(np.asarray(muhats, dtype=float))
    if weights.size != muhats.shape[0]:
        raise DimensionMismatchError(
            f"{weights.size} x {weights.size} weights for {muhats.shape[0]} estimates"
        )
    return weights.values @ muhats
