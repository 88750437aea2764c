"""Kernel evaluations, Gram blocks, MMD U-statistics and evaluation losses.

The RBF kernel uses the convention ``k(z, z') = exp(-||z - z'||^2 / (2 width^2))``.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import (
    BagTooSmallError,
    DimensionMismatchError,
    InvalidParameterError,
)

logger = logging.getLogger(__name__)


class KernelKind(str, Enum):
    """Supported kernels."""

    LINEAR = "linear"
    GAUSSIAN_RBF = "gaussian_rbf"


@dataclass(frozen=True, eq=False)
class Bag:
    """One task's sample matrix (rows are samples) plus its identifier."""

    id: str
    samples: np.ndarray

    def __post_init__(self) -> None:
        """Validate and freeze the sample matrix."""
        samples = np.array(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples.reshape(-1, 1)
        if samples.ndim != 2:
            raise DimensionMismatchError(
                f"Bag {self.id!r}: samples must be a 2-d matrix, got shape {samples.shape}"
            )
        if samples.shape[0] < 1:
            raise BagTooSmallError(f"Bag {self.id!r} has no samples")
        if not np.all(np.isfinite(samples)):
            raise InvalidParameterError(f"Bag {self.id!r} contains non-finite values")
        samples.setflags(write=False)
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "samples", samples)

    @property
    def size(self) -> int:
        """Number of samples N_i."""
        return int(self.samples.shape[0])

    @property
    def dim(self) -> int:
        """Feature dimension d."""
        return int(self.samples.shape[1])

    def mean(self) -> np.ndarray:
        """Naive (empirical mean) estimate in input space."""
        return self.samples.mean(axis=0)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice defining every inner product."""

    kind: KernelKind = KernelKind.LINEAR
    width: float = 1.0

    def __post_init__(self) -> None:
        """Validate kernel parameters."""
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.kind == KernelKind.GAUSSIAN_RBF and not self.width > 0:
            raise InvalidParameterError(f"Invalid RBF width: {self.width}. Must be > 0")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(KernelKind.LINEAR)

    @classmethod
    def rbf(cls, width: float) -> "KernelSpec":
        return cls(KernelKind.GAUSSIAN_RBF, float(width))

    def evaluate(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Evaluate the kernel matrix pairwise between the rows of X and Y."""
        if self.kind == KernelKind.LINEAR:
            return np.asarray(X @ Y.T, dtype=float)
        return np.exp(-cdist(X, Y, "sqeuclidean") / (2.0 * self.width**2))

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "width": self.width}


@dataclass(frozen=True, eq=False)
class GramBlock:
    """Kernel evaluations k(z_k^(i), z_l^(j)) between two bags."""

    values: np.ndarray

    @property
    def total(self) -> float:
        return float(self.values.sum())

    @property
    def trace(self) -> float:
        return float(np.trace(self.values))

    @property
    def off_diagonal(self) -> float:
        """Sum of all entries except the diagonal (square blocks only)."""
        return self.total - self.trace


def check_same_dimension(bags: Sequence[Bag]) -> int:
    """Return the common dimension of ``bags``.

    Raises:
        DimensionMismatchError: If the bags do not share one dimension
    """
    dims = {bag.dim for bag in bags}
    if len(dims) > 1:
        raise DimensionMismatchError(f"Bags have different dimensions: {sorted(dims)}")
    if not dims:
        raise DimensionMismatchError("No bags given")
    return dims.pop()


def _canonical_pair(bagA: Bag, bagB: Bag) -> Tuple[Bag, Bag]:
    # cross sums are always taken in one orientation so that swapping the
    # arguments gives bit-identical statistics
    if (bagA.id, bagA.samples.tobytes()) <= (bagB.id, bagB.samples.tobytes()):
        return bagA, bagB
    return bagB, bagA


def gram_block(bagA: Bag, bagB: Bag, kernel: KernelSpec) -> GramBlock:
    """Kernel evaluations between every sample of ``bagA`` and every sample of ``bagB``.

    Args:
        bagA: Row bag
        bagB: Column bag
        kernel: Kernel to evaluate

    Returns:
        GramBlock of shape N_A x N_B (exactly symmetric when bagA is bagB)

    Raises:
        DimensionMismatchError: If the bags have different dimensions
    """
    if bagA.dim != bagB.dim:
        raise DimensionMismatchError(
            f"Cannot pair bag {bagA.id!r} (d={bagA.dim}) with bag {bagB.id!r} (d={bagB.dim})"
        )
    values = kernel.evaluate(bagA.samples, bagB.samples)
    if bagA is bagB:
        upper = np.triu(values)
        values = upper + np.triu(values, 1).T
    return GramBlock(values)


def mmd_u(bagA: Bag, bagB: Bag, kernel: KernelSpec) -> float:
    """Unbiased squared MMD between two bags, allowing unequal bag sizes.

    Within-bag sums exclude the diagonal and are normalised by N(N-1); the
    cross term uses all N_A * N_B pairs. The value may be negative.

    Raises:
        BagTooSmallError: If either bag has fewer than 2 samples
    """
    for bag in (bagA, bagB):
        if bag.size < 2:
            raise BagTooSmallError(
                f"Bag {bag.id!r} has {bag.size} sample(s); the U-statistic needs at least 2"
            )
    first, second = _canonical_pair(bagA, bagB)
    within_first = gram_block(first, first, kernel)
    within_second = gram_block(second, second, kernel)
    cross = gram_block(first, second, kernel)

    n1, n2 = first.size, second.size
    return (
        within_first.off_diagonal / (n1 * (n1 - 1))
        + within_second.off_diagonal / (n2 * (n2 - 1))
        - 2.0 * cross.total / (n1 * n2)
    )


def naive_mse_from_sums(trace: float, total: float, size: int) -> float:
    """Task-variance estimate from a bag's Gram trace and full Gram sum.

    Equals ``1/(2 N^2 (N-1)) * sum_{k != l} (k_kk - 2 k_kl + k_ll)``.
    """
    off_diagonal = total - trace
    value = trace / size**2 - off_diagonal / (size**2 * (size - 1))
    # a sum of squared feature-space distances; rounding may dip below zero
    return max(value, 0.0)


def naive_mse_estimate(bag: Bag, kernel: KernelSpec) -> float:
    """Unbiased estimate of Tr(Sigma_i) / N_i, the MSE of the naive estimator.

    Raises:
        BagTooSmallError: If the bag has a single sample
    """
    if bag.size < 2:
        raise BagTooSmallError(f"Bag {bag.id!r} needs at least 2 samples to estimate its MSE")
    block = gram_block(bag, bag, kernel)
    return naive_mse_from_sums(block.trace, block.total, bag.size)


def _mean_product_matrix(bags: Sequence[Bag], kernel: KernelSpec) -> np.ndarray:
    B = len(bags)
    products = np.empty((B, B))
    for a in range(B):
        for b in range(a, B):
            if a == b:
                block = gram_block(bags[a], bags[a], kernel)
            else:
                first, second = _canonical_pair(bags[a], bags[b])
                block = gram_block(first, second, kernel)
            value = block.total / (bags[a].size * bags[b].size)
            products[a, b] = products[b, a] = value
    return products


def inter_task_gram(weights: Any, bags: Sequence[Bag], kernel: KernelSpec) -> np.ndarray:
    """Plug-in inter-task Gram matrix of the weighted estimators.

    Entry (i, j) is ``<sum_a w_ia mu_a, sum_b w_jb mu_b>`` where ``mu_a`` are the
    naive embeddings; Gram diagonals are included.

    Args:
        weights: WeightMatrix or B x B array
        bags: The B bags
        kernel: Kernel defining the feature space

    Returns:
        Symmetric B x B matrix

    Raises:
        DimensionMismatchError: If the weights are not B x B
    """
    W = np.asarray(getattr(weights, "values", weights), dtype=float)
    B = len(bags)
    if W.shape != (B, B):
        raise DimensionMismatchError(f"Weights of shape {W.shape} do not match {B} bags")
    check_same_dimension(bags)
    products = _mean_product_matrix(bags, kernel)
    gram = W @ products @ W.T
    return (gram + gram.T) / 2.0


def estimator_loss(
    weights_row: Any, bags: Sequence[Bag], ref_bag: Bag, kernel: KernelSpec
) -> float:
    """Unbiased estimate of ||mu_tilde - mu||^2 against an independent reference bag.

    ``mu_tilde = sum_j w_j mu_j`` is built from the naive embeddings of ``bags``
    with Gram diagonals included; the reference bag's self term excludes its
    diagonal (normaliser M(M-1)). The result is not clamped and may be slightly
    negative.

    Raises:
        InvalidParameterError: If the weights row is empty
        DimensionMismatchError: If the row length does not match the bags
        BagTooSmallError: If the reference bag has fewer than 2 samples
    """
    row = np.asarray(weights_row, dtype=float).ravel()
    if row.size == 0:
        raise InvalidParameterError("Empty weights row")
    if row.size != len(bags):
        raise DimensionMismatchError(f"Weights row of length {row.size} for {len(bags)} bags")
    if ref_bag.size < 2:
        raise BagTooSmallError(
            f"Reference bag {ref_bag.id!r} has {ref_bag.size} sample(s); at least 2 are needed"
        )
    check_same_dimension(list(bags) + [ref_bag])

    active = [j for j in range(len(bags)) if row[j] != 0.0]
    estimate_sq = 0.0
    cross = 0.0
    for a_pos, a in enumerate(active):
        for b in active[a_pos:]:
            block = gram_block(bags[a], bags[b], kernel)
            value = row[a] * row[b] * block.total / (bags[a].size * bags[b].size)
            estimate_sq += value if a == b else 2.0 * value
        cross += row[a] * gram_block(bags[a], ref_bag, kernel).total / (
            bags[a].size * ref_bag.size
        )

    ref_block = gram_block(ref_bag, ref_bag, kernel)
    M = ref_bag.size
    reference_sq = ref_block.off_diagonal / (M * (M - 1))
    return estimate_sq - 2.0 * cross + reference_sq


def pooled_width(bags: Sequence[Bag]) -> float:
    """RBF width as the mean over features of the pooled per-feature standard deviation.

    All bags are concatenated and the population (ddof=0) standard deviation is used.
    """
    check_same_dimension(bags)
    pooled = np.vstack([bag.samples for bag in bags])
    width = float(pooled.std(axis=0).mean())
    if not width > 0:
        raise InvalidParameterError("Pooled data has zero spread; cannot derive a kernel width")
    logger.debug(f"Pooled kernel width {width:.6g} from {pooled.shape[0]} samples")
    return width


def kernel_bound(kernel: KernelSpec, bags: Sequence[Bag]) -> float:
    """Bound L with k(z, z) <= L^2: 1 for RBF, largest sample norm for linear."""
    if kernel.kind == KernelKind.GAUSSIAN_RBF:
        return 1.0
    return float(max(np.linalg.norm(bag.samples, axis=1).max() for bag in bags))
