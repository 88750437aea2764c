"""Closed-form bound calculators, covering numbers and effective dimension.

These let experiments put an empirical error next to the value guaranteed by
the theory. Nothing here draws random numbers.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .exceptions import InvalidParameterError
from .kernel_core import Bag, KernelSpec, gram_block

logger = logging.getLogger(__name__)


class BoundMode(str, Enum):
    """Independent tests (split data) or tests computed on the estimation sample."""

    INDEP = "indep"
    ONESAMPLE = "onesample"


@dataclass(frozen=True)
class BoundInputs:
    """Quantities the bounds are expressed in.

    ``V_size`` counts the neighbors of the task other than itself (|V_i*|).
    """

    tau: float
    tau_prime: float
    V_size: int
    B: int
    covering_N: int
    sigma_bar2: float
    d_eff: float
    L: float
    N: int
    t: float = 1.0

    def __post_init__(self) -> None:
        """Validate positivity constraints."""
        for name in ("sigma_bar2", "d_eff", "L"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"Invalid {name}: {getattr(self, name)}. Must be > 0")
        if self.N < 1 or self.B < 1:
            raise InvalidParameterError("N and B must be >= 1")
        if not 1 <= self.covering_N <= self.B:
            raise InvalidParameterError(
                f"Invalid covering number {self.covering_N}. Must be in [1, B={self.B}]"
            )
        if self.tau < 0 or self.tau_prime < 0:
            raise InvalidParameterError("tau and tau_prime must be >= 0")
        if self.t < 0:
            raise InvalidParameterError(f"Invalid t: {self.t}. Must be >= 0")

    def radius(self) -> Tuple[float, float]:
        return theory_radius(self.t, self.d_eff, self.L, self.N, math.sqrt(self.sigma_bar2))

    def single_factor(self, mode: BoundMode = BoundMode.INDEP) -> float:
        if BoundMode(mode) == BoundMode.ONESAMPLE:
            return mse_factor_single(self.tau, self.V_size + 1, mode)
        return mse_factor_single(self.tau, self.V_size, mode)

    def average_factor(self, mode: BoundMode = BoundMode.INDEP) -> float:
        return mse_factor_avg(self.tau, self.covering_N, self.B, mode)

    def rough_factor(self) -> float:
        return rough_neighbor_bound(self.tau, self.V_size)


def gaussian_test_radius(B: int, alpha: float, d: int) -> float:
    """delta = (2 log B + log 1/alpha) / d."""
    if not 0 < alpha < 1:
        raise InvalidParameterError(f"Invalid alpha: {alpha}. Must be in (0, 1)")
    return (2.0 * math.log(B) + math.log(1.0 / alpha)) / d


def theory_radius(
    t: float, d_eff: float, L: float, N: int, sigma_bar: float
) -> Tuple[float, float]:
    """Radius r(t) of the KME tests and the smallest admissible tau_min(t).

    r(t) = 5 (sqrt((1/d_eff + L/(N sigma)) t) + L t / (N sigma))
    tau_min(t) = r(t) * max(sqrt(2), r(t))
    """
    if not (d_eff > 0 and L > 0 and N > 0 and sigma_bar > 0):
        raise InvalidParameterError("d_eff, L, N and sigma_bar must all be positive")
    if t < 0:
        raise InvalidParameterError(f"Invalid t: {t}. Must be >= 0")
    if t < 1:
        logger.warning(f"t={t} < 1: the test guarantees are only stated for t >= 1")
    ratio = L / (N * sigma_bar)
    r = 5.0 * (math.sqrt((1.0 / d_eff + ratio) * t) + ratio * t)
    return r, r * max(math.sqrt(2.0), r)


def mse_factor_single(tau: float, V_size: int, mode: BoundMode = BoundMode.INDEP) -> float:
    """Per-task MSE factor on sigma_bar^2.

    ``indep``: (tau v + 1) / ((1 + tau) v + 1) with v = |V_i*| (neighbors other than i).
    ``onesample``: 2 (tau + (tau + 1/|V_i|) / (1 + tau)) with V_size = |V_i| >= 1.
    """
    mode = BoundMode(mode)
    if mode == BoundMode.INDEP:
        if V_size < 0:
            raise InvalidParameterError(f"Invalid |V_i*|: {V_size}. Must be >= 0")
        return (tau * V_size + 1.0) / ((1.0 + tau) * V_size + 1.0)
    if V_size < 1:
        raise InvalidParameterError(f"Invalid |V_i|: {V_size}. Must be >= 1")
    return 2.0 * (tau + (tau + 1.0 / V_size) / (1.0 + tau))


def mse_factor_avg(
    tau: float, covering_N: int, B: int, mode: BoundMode = BoundMode.INDEP
) -> float:
    """Task-averaged MSE factor on sigma_bar^2 driven by the covering number."""
    if not 1 <= covering_N <= B:
        raise InvalidParameterError(f"Invalid covering number {covering_N}. Must be in [1, {B}]")
    mode = BoundMode(mode)
    ratio = covering_N / B
    if mode == BoundMode.INDEP:
        return tau / (tau + 1.0) + ratio / (tau + 1.0)
    return 2.0 * (tau + tau / (1.0 + tau) + ratio / (1.0 + tau))


def rough_neighbor_bound(tau: float, V: int) -> float:
    """(1 + V tau) / (V + 1): plain averaging over V neighbors known to lie within tau."""
    return (1.0 + V * tau) / (V + 1.0)


def covering_radius(tau_prime: float, sigma_bar2: float) -> float:
    """sqrt(tau') sigma_bar / 2, the scale at which the averaged bound covers the means."""
    if tau_prime < 0 or sigma_bar2 < 0:
        raise InvalidParameterError("tau_prime and sigma_bar2 must be >= 0")
    return math.sqrt(tau_prime * sigma_bar2) / 2.0


def covering_number(points: np.ndarray, radius: float) -> int:
    """Size of a greedy cover of ``points`` by balls of ``radius``.

    Points are visited in input order; a point farther than ``radius`` from all
    current centres opens a new centre. The result upper-bounds the true
    covering number.
    """
    if not radius > 0:
        raise InvalidParameterError(f"Invalid radius: {radius}. Must be > 0")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        return 0
    centres = [points[0]]
    limit = radius**2
    for point in points[1:]:
        offsets = np.asarray(centres) - point
        if np.min(np.einsum("ij,ij->i", offsets, offsets)) > limit:
            centres.append(point)
    return len(centres)


def effective_dimension(spectrum: np.ndarray) -> float:
    """Tr(Sigma) / ||Sigma||_op from the eigenvalues of Sigma."""
    spectrum = np.asarray(spectrum, dtype=float).ravel()
    if spectrum.size == 0:
        raise InvalidParameterError("Empty spectrum")
    if np.any(spectrum < 0):
        raise InvalidParameterError("Spectrum must be nonnegative")
    top = spectrum.max()
    if not top > 0:
        raise InvalidParameterError("All-zero spectrum has no effective dimension")
    return float(spectrum.sum() / top)


def bag_effective_dimension(bag: Bag, kernel: KernelSpec) -> float:
    """Effective dimension of a bag's empirical covariance operator.

    Uses the eigenvalues of the centred Gram matrix divided by N, which share
    the nonzero spectrum of the empirical covariance operator.
    """
    K = gram_block(bag, bag, kernel).values
    N = bag.size
    centring = np.eye(N) - np.full((N, N), 1.0 / N)
    eigenvalues = np.linalg.eigvalsh(centring @ K @ centring) / N
    return effective_dimension(np.clip(eigenvalues, 0.0, None))


def q_radii(
    t: float,
    trace_sigma: float,
    op_norm_sigma: float,
    N: int,
    L: float,
    sigma_bar2: Optional[float] = None,
    d_eff: Optional[float] = None,
) -> Tuple[float, float]:
    """Deviation radii (q_Sigma(t), q(t)) of the bounded-vector inequalities.

    q_Sigma(t) = 2 sqrt((2 ||Sigma||/N + 16 L sqrt(Tr Sigma) / N^1.5) t) + 2 L t / N
    q(t)       = 2 sqrt((4 sigma^2 / d_eff + 16 L sqrt(2 sigma^2) / N) t) + 2 L t / N

    ``sigma_bar2`` defaults to Tr(Sigma)/N and ``d_eff`` to Tr(Sigma)/||Sigma||.
    """
    if t < 0:
        raise InvalidParameterError(f"Invalid t: {t}. Must be >= 0")
    if not (trace_sigma > 0 and op_norm_sigma > 0 and N > 0 and L > 0):
        raise InvalidParameterError("trace, operator norm, N and L must be positive")
    sigma_bar2 = trace_sigma / N if sigma_bar2 is None else sigma_bar2
    d_eff = trace_sigma / op_norm_sigma if d_eff is None else d_eff
    linear = 2.0 * L * t / N
    q_sigma = 2.0 * math.sqrt(
        (2.0 * op_norm_sigma / N + 16.0 * L * math.sqrt(trace_sigma) / N**1.5) * t
    )
    q = 2.0 * math.sqrt(
        (4.0 * sigma_bar2 / d_eff + 16.0 * L * math.sqrt(2.0 * sigma_bar2) / N) * t
    )
    return q_sigma + linear, q + linear
