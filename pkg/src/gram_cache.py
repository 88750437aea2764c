"""Lazily computed, aggregate-only Gram statistics for a collection of bags."""

import logging
from threading import Lock
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .exceptions import BagTooSmallError, DimensionMismatchError
from .kernel_core import Bag, KernelSpec, check_same_dimension, gram_block, naive_mse_from_sums

logger = logging.getLogger(__name__)

# Upper bound on kernel entries materialised at once by the blocked products
MAX_BLOCK_ENTRIES = 4_000_000


def _pair_key(id_a: str, id_b: str) -> Tuple[str, str]:
    return (id_a, id_b) if id_a <= id_b else (id_b, id_a)


def _blocked_sums(rows: Sequence[Bag], cols: Sequence[Bag], kernel: KernelSpec, row: int):
    """Full Gram sums between ``rows[row]`` and every bag in ``cols``."""
    samples = rows[row].samples
    sizes = [bag.size for bag in cols]
    chunk_rows = max(1, MAX_BLOCK_ENTRIES // max(1, samples.shape[0]))
    sums = np.empty(len(cols))
    start = 0
    while start < len(cols):
        stop, count = start, 0
        while stop < len(cols) and (count == 0 or count + sizes[stop] <= chunk_rows):
            count += sizes[stop]
            stop += 1
        stacked = np.vstack([bag.samples for bag in cols[start:stop]])
        column_sums = kernel.evaluate(samples, stacked).sum(axis=0)
        offsets = np.cumsum([0] + sizes[start : stop - 1])
        sums[start:stop] = np.add.reduceat(column_sums, offsets)
        start = stop
    return sums


class GramCache:
    """Stores per-pair Gram sums keyed by bag ids.

    Only the full sum of every (i, j) block and the trace of every (i, i)
    block are retained, so memory is O(B^2) regardless of bag sizes. Bag ids
    must be unique for the lifetime of one cache.
    """

    def __init__(self, kernel: KernelSpec):
        """Initialize the cache.

        Args:
            kernel: Kernel used for every block
        """
        self.kernel = kernel
        self._totals: Dict[Tuple[str, str], float] = {}
        self._traces: Dict[str, float] = {}
        self._lock = Lock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._totals)

    def block_total(self, bagA: Bag, bagB: Bag) -> float:
        """Sum of the (A, B) Gram block, computed on first use."""
        key = _pair_key(bagA.id, bagB.id)
        with self._lock:
            if key in self._totals:
                return self._totals[key]
        block = gram_block(bagA, bagB, self.kernel)
        with self._lock:
            self._totals.setdefault(key, block.total)
            if bagA.id == bagB.id:
                self._traces.setdefault(bagA.id, block.trace)
            return self._totals[key]

    def trace(self, bag: Bag) -> float:
        """Trace of the bag's own Gram block."""
        with self._lock:
            if bag.id in self._traces:
                return self._traces[bag.id]
        self.block_total(bag, bag)
        with self._lock:
            return self._traces[bag.id]

    def _fill(self, bags: Sequence[Bag]) -> None:
        ids = [bag.id for bag in bags]
        if len(set(ids)) != len(ids):
            raise DimensionMismatchError("Bag ids must be unique within one Gram cache")
        check_same_dimension(bags)
        for a, bag in enumerate(bags):
            with self._lock:
                complete = bag.id in self._traces and all(
                    _pair_key(bag.id, other) in self._totals for other in ids
                )
            if complete:
                continue
            sums = _blocked_sums(bags, bags, self.kernel, a)
            own = gram_block(bag, bag, self.kernel)
            with self._lock:
                for b, other in enumerate(ids):
                    if b != a:
                        self._totals.setdefault(_pair_key(bag.id, other), float(sums[b]))
                self._totals.setdefault((bag.id, bag.id), own.total)
                self._traces.setdefault(bag.id, own.trace)
        logger.debug(f"Gram cache holds {len(self)} block sums for {len(bags)} bags")

    def mean_products(self, bags: Sequence[Bag]) -> Tuple[np.ndarray, np.ndarray]:
        """Plug-in products of the naive embeddings.

        Returns:
            (S, traces) where ``S[a, b] = <mu_a, mu_b>`` (diagonals included) and
            ``traces[a]`` is the trace of bag a's own Gram block
        """
        self._fill(bags)
        B = len(bags)
        sizes = np.array([bag.size for bag in bags], dtype=float)
        totals = np.empty((B, B))
        with self._lock:
            for a in range(B):
                for b in range(a, B):
                    totals[a, b] = totals[b, a] = self._totals[_pair_key(bags[a].id, bags[b].id)]
            traces = np.array([self._traces[bag.id] for bag in bags])
        return totals / np.outer(sizes, sizes), traces

    def naive_mse_vector(self, bags: Sequence[Bag]) -> np.ndarray:
        """Task-variance estimate of every bag."""
        small = [bag.id for bag in bags if bag.size < 2]
        if small:
            raise BagTooSmallError(f"Bags with a single sample cannot estimate MSE: {small}")
        products, traces = self.mean_products(bags)
        sizes = [bag.size for bag in bags]
        return np.array(
            [
                naive_mse_from_sums(traces[a], products[a, a] * sizes[a] ** 2, sizes[a])
                for a in range(len(bags))
            ]
        )

    def mmd_matrix(self, bags: Sequence[Bag]) -> np.ndarray:
        """Pairwise unbiased squared MMD U_ij (zero on the diagonal)."""
        small = [bag.id for bag in bags if bag.size < 2]
        if small:
            raise BagTooSmallError(f"Bags with fewer than 2 samples cannot be tested: {small}")
        products, traces = self.mean_products(bags)
        sizes = np.array([bag.size for bag in bags], dtype=float)
        within = (np.diag(products) * sizes**2 - traces) / (sizes * (sizes - 1))
        U = within[:, None] + within[None, :] - 2.0 * products
        np.fill_diagonal(U, 0.0)
        return U


def cross_mean_products(
    bags: Sequence[Bag], refs: Sequence[Bag], kernel: KernelSpec
) -> np.ndarray:
    """``C[a, i] = <mu_a, mu(ref_i)>`` between training and reference naive embeddings."""
    check_same_dimension(list(bags) + list(refs))
    ref_sizes = np.array([ref.size for ref in refs], dtype=float)
    rows: List[np.ndarray] = []
    for a, bag in enumerate(bags):
        rows.append(_blocked_sums(bags, refs, kernel, a) / (bag.size * ref_sizes))
    return np.vstack(rows)


def reference_self_products(refs: Sequence[Bag], kernel: KernelSpec) -> np.ndarray:
    """Unbiased ``||mu(ref_i)||^2`` estimates (Gram diagonal excluded)."""
    values = []
    for ref in refs:
        if ref.size < 2:
            raise BagTooSmallError(f"Reference bag {ref.id!r} needs at least 2 samples")
        block = gram_block(ref, ref, kernel)
        values.append(block.off_diagonal / (ref.size * (ref.size - 1)))
    return np.array(values)
