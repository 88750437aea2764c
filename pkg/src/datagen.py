"""Synthetic data: Gaussian mean models and the two-dimensional KME toy setups."""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import BagTooSmallError, InvalidParameterError
from .kernel_core import Bag
from .random_streams import stream

logger = logging.getLogger(__name__)

# Gaussian models
UNIF_ACTIVE_DIMS = 10
UNIF_HALF_WIDTH = 20.0
CLUSTER_COUNT = 20
# per-coordinate standard deviation of the means around their centre
CLUSTER_STD = 0.1
SPHERE_ACTIVE_DIMS = 6
SPHERE_RADIUS = 50.0
SPARSE_MAX = 20.0

# Toy setups
TOY_COVARIANCE = np.array([1.0, 10.0])
TOY_MAX_ANGLE = math.pi / 4
TOY_BAGS_PER_CLUSTER = 10
TOY_TEST_SIZE = 1000


class GaussianKind(str, Enum):
    """Arrangement of the task means."""

    UNIF = "UNIF"
    CLUSTER = "CLUSTER"
    SPHERE = "SPHERE"
    SPARSE = "SPARSE"


@dataclass(frozen=True)
class GaussianModel:
    """Gaussian-setting model: B means in dimension d, one noisy observation per task."""

    kind: GaussianKind
    B: int = 2000
    d: Optional[int] = None
    seed: Optional[int] = None
    N: int = 1

    def __post_init__(self) -> None:
        """Fill the dimension default and validate."""
        object.__setattr__(self, "kind", GaussianKind(self.kind))
        if self.d is None:
            object.__setattr__(self, "d", 50 if self.kind == GaussianKind.SPARSE else 1000)
        assert self.d is not None
        if self.B < 1:
            raise InvalidParameterError(f"Invalid B: {self.B}. Must be >= 1")
        if self.N < 1:
            raise InvalidParameterError(f"Invalid N: {self.N}. Must be >= 1")
        minimum = {
            GaussianKind.UNIF: UNIF_ACTIVE_DIMS,
            GaussianKind.SPHERE: SPHERE_ACTIVE_DIMS,
            GaussianKind.SPARSE: 2,
            GaussianKind.CLUSTER: 1,
        }[self.kind]
        if self.d < minimum:
            raise InvalidParameterError(f"{self.kind.value} needs d >= {minimum}, got {self.d}")

    @property
    def noise_variance(self) -> float:
        """Per-coordinate variance of each naive estimate (1/N)."""
        return 1.0 / self.N


def gen_means(model: GaussianModel, rng: np.random.Generator) -> np.ndarray:
    """Draw the B x d matrix of true means for ``model``."""
    B, d = model.B, model.d
    assert d is not None
    means = np.zeros((B, d))
    if model.kind == GaussianKind.UNIF:
        means[:, :UNIF_ACTIVE_DIMS] = rng.uniform(
            -UNIF_HALF_WIDTH, UNIF_HALF_WIDTH, size=(B, UNIF_ACTIVE_DIMS)
        )
    elif model.kind == GaussianKind.CLUSTER:
        centres = rng.standard_normal((CLUSTER_COUNT, d))
        # equal split: cluster of task i is i mod 20
        labels = np.arange(B) % CLUSTER_COUNT
        means = centres[labels] + CLUSTER_STD * rng.standard_normal((B, d))
    elif model.kind == GaussianKind.SPHERE:
        directions = rng.standard_normal((B, SPHERE_ACTIVE_DIMS))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        means[:, :SPHERE_ACTIVE_DIMS] = SPHERE_RADIUS * directions
    else:
        for i in range(B):
            coords = rng.choice(d, size=2, replace=False)
            means[i, coords] = rng.uniform(0.0, SPARSE_MAX, size=2)
    return means


def gen_gaussian(
    model: GaussianModel, rng: Optional[np.random.Generator] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Generate true means and naive observations ``x_i ~ N(mu_i, I_d / N)``.

    Args:
        model: Model description
        rng: Generator to use (defaults to the model's seed)

    Returns:
        (means, observations), both B x d
    """
    rng = rng if rng is not None else stream(model.seed)
    means = gen_means(model, rng)
    noise = rng.standard_normal(means.shape) * math.sqrt(model.noise_variance)
    logger.debug(f"Generated {model.kind.value} model with B={model.B}, d={model.d}")
    return means, means + noise


class ToyKind(str, Enum):
    """The four toy setups."""

    A_BAG_SIZES = "a_bag_sizes"
    B_NUM_BAGS = "b_num_bags"
    C_IMBALANCED = "c_imbalanced"
    D_CLUSTERED = "d_clustered"


@dataclass(frozen=True)
class ToySetup:
    """Toy KME setup: rotated two-dimensional Gaussians.

    ``N`` is the common bag size of setups (a), (b) and (d); setup (c) spaces
    bag sizes linearly over ``n_range``. ``radius`` places the B/10 cluster
    centres of setup (d) on a circle.
    """

    kind: ToyKind
    B: int = 50
    N: int = 50
    n_range: Tuple[int, int] = (10, 300)
    radius: float = 0.0
    test_size: int = TOY_TEST_SIZE

    def __post_init__(self) -> None:
        """Validate the setup."""
        object.__setattr__(self, "kind", ToyKind(self.kind))
        object.__setattr__(self, "n_range", tuple(int(n) for n in self.n_range))
        if self.B < 1 or self.N < 1:
            raise InvalidParameterError("B and N must be >= 1")
        low, high = self.n_range
        if not 1 <= low <= high:
            raise InvalidParameterError(f"Invalid bag size range: {self.n_range}")
        if self.kind == ToyKind.D_CLUSTERED:
            if self.B % TOY_BAGS_PER_CLUSTER:
                raise InvalidParameterError(
                    f"Clustered setup needs B divisible by {TOY_BAGS_PER_CLUSTER}, got {self.B}"
                )
            if self.radius < 0:
                raise InvalidParameterError(f"Invalid radius: {self.radius}. Must be >= 0")

    def bag_sizes(self) -> List[int]:
        if self.kind == ToyKind.C_IMBALANCED:
            low, high = self.n_range
            return [int(round(n)) for n in np.linspace(low, high, self.B)]
        return [self.N] * self.B

    def centres(self) -> np.ndarray:
        """Distribution centre of every bag (B x 2)."""
        if self.kind != ToyKind.D_CLUSTERED:
            return np.zeros((self.B, 2))
        n_clusters = self.B // TOY_BAGS_PER_CLUSTER
        angles = 2.0 * math.pi * np.arange(n_clusters) / n_clusters
        cluster_centres = self.radius * np.column_stack([np.cos(angles), np.sin(angles)])
        return np.repeat(cluster_centres, TOY_BAGS_PER_CLUSTER, axis=0)


class ToyParams(NamedTuple):
    """Distribution of one toy bag."""

    centre: np.ndarray
    angle: float


def sample_toy(params: ToyParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` points from N(centre, R(angle) diag(1, 10) R(angle)^T)."""
    white = rng.standard_normal((size, 2)) * np.sqrt(TOY_COVARIANCE)
    return params.centre + white @ rotation(params.angle).T


def rotation(theta: float) -> np.ndarray:
    """2-d rotation matrix R(theta)."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def toy_covariance(theta: float) -> np.ndarray:
    R = rotation(theta)
    return R @ np.diag(TOY_COVARIANCE) @ R.T


def gen_toy(
    setup: ToySetup, seed: Optional[int], stream_keys: Sequence[int] = ()
) -> Tuple[List[Bag], List[ToyParams]]:
    """Generate the training bags of a toy setup.

    Each bag uses its own indexed stream, so bag i is the same whatever B is
    and bags can be drawn in any order.

    Returns:
        (bags, params) with params[i] the centre and rotation angle of bag i
    """
    bags: List[Bag] = []
    params: List[ToyParams] = []
    for i, (centre, size) in enumerate(zip(setup.centres(), setup.bag_sizes())):
        rng = stream(seed, *stream_keys, i)
        angle = float(rng.uniform(-TOY_MAX_ANGLE, TOY_MAX_ANGLE))
        bag_params = ToyParams(centre, angle)
        bags.append(Bag(str(i), sample_toy(bag_params, size, rng)))
        params.append(bag_params)
    return bags, params


def sample_reference_bags(
    params: Sequence[ToyParams], size: int, seed: Optional[int], stream_keys: Sequence[int] = ()
) -> List[Bag]:
    """Independent test bags Y_i from the same distributions as the training bags."""
    return [
        Bag(str(i), sample_toy(p, size, stream(seed, *stream_keys, i)))
        for i, p in enumerate(params)
    ]


def subsample(bag: Bag, n: int, seed: Optional[int], stream_keys: Sequence[int] = ()) -> Bag:
    """``n`` rows of ``bag`` drawn without replacement, deterministic under ``seed``.

    Raises:
        BagTooSmallError: If n exceeds the bag size
    """
    if n > bag.size:
        raise BagTooSmallError(f"Cannot draw {n} samples from bag {bag.id!r} of size {bag.size}")
    if n < 1:
        raise InvalidParameterError(f"Invalid subsample size: {n}. Must be >= 1")
    rows = stream(seed, *stream_keys).choice(bag.size, size=n, replace=False)
    return Bag(bag.id, bag.samples[rows])
