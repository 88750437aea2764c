"""Experiment configuration for bagshrink."""

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml  # type: ignore[import-untyped]

from .datagen import GaussianKind, ToyKind
from .estimators import Method
from .exceptions import ConfigurationError

SETTINGS = ("gaussian", "kme")
KERNELS = ("linear", "rbf")

DEFAULT_ZETA_GRID = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0]
DEFAULT_GAMMA_GRID = [round(0.1 * k, 1) for k in range(11)]
DEFAULT_C_GRID = [2.0**k for k in range(-6, 3)]
# MTA strengths are turned into gamma per trial by estimators.mta_gamma
DEFAULT_MTA_STRENGTH_GRID = [2.0**k for k in range(-6, 9)]

GAUSSIAN_METHODS = [
    Method.NE,
    Method.PP_JAMES_STEIN,
    Method.MTA_CONST,
    Method.MTA_STB,
    Method.STB_ZERO,
    Method.STB_THEORY,
    Method.STB_WEIGHT,
]
KME_METHODS = [
    Method.NE,
    Method.RKMSE,
    Method.MTA_CONST,
    Method.MTA_STB,
    Method.STB_ZERO,
    Method.STB_THEORY,
    Method.STB_WEIGHT,
]

INT_FIELDS = (
    "B",
    "d",
    "N",
    "test_size",
    "subsample_size",
    "trials_tune",
    "trials_eval",
    "seed",
    "threads",
)
FLOAT_FIELDS = ("radius", "train_fraction", "kernel_width")
GRID_FIELDS = ("zeta_grid", "gamma_grid", "c_grid", "mta_strength_grid")


@dataclass
class ExperimentConfig:
    """Everything an experiment run needs.

    ``generator`` names a Gaussian model (gaussian setting) or a toy setup
    (kme setting). When ``input_path`` is set the kme setting runs on the bags
    of that CSV instead. ``generator``, ``B``, ``N``, ``methods`` and
    ``share_zeta`` default per setting (B = 0 and N = 0 mean "default").
    """

    setting: str = "kme"
    generator: Optional[str] = None
    input_path: Optional[str] = None
    B: int = 0
    d: Optional[int] = None
    N: int = 0
    n_range: Tuple[int, int] = (10, 300)
    radius: float = 0.0
    test_size: int = 1000
    subsample_size: int = 20
    train_fraction: float = 0.5
    standardize: bool = True
    kernel: str = "rbf"
    kernel_width: Optional[float] = None
    methods: Optional[List[str]] = None
    zeta_grid: List[float] = field(default_factory=lambda: list(DEFAULT_ZETA_GRID))
    gamma_grid: List[float] = field(default_factory=lambda: list(DEFAULT_GAMMA_GRID))
    c_grid: List[float] = field(default_factory=lambda: list(DEFAULT_C_GRID))
    mta_strength_grid: List[float] = field(default_factory=lambda: list(DEFAULT_MTA_STRENGTH_GRID))
    share_zeta: Optional[bool] = None
    trials_tune: int = 100
    trials_eval: int = 200
    seed: int = 0
    threads: int = 1
    output: str = "report.csv"

    def __post_init__(self) -> None:
        """Fill per-setting defaults and validate."""
        gaussian = self.setting == "gaussian"
        if self.generator is None and self.input_path is None:
            self.generator = GaussianKind.UNIF.value if gaussian else ToyKind.B_NUM_BAGS.value
        # 0 selects the setting default
        if not self.B:
            self.B = 2000 if gaussian else 50
        if not self.N:
            self.N = 1 if gaussian else 50
        if self.methods is None:
            defaults = GAUSSIAN_METHODS if gaussian else KME_METHODS
            self.methods = [method.value for method in defaults]
        if self.share_zeta is None:
            self.share_zeta = gaussian
        self.n_range = (int(self.n_range[0]), int(self.n_range[1]))
        for name in GRID_FIELDS:
            setattr(self, name, sorted(float(v) for v in getattr(self, name)))
        self._validate()

    @classmethod
    def from_yaml(cls, config_path: str = "config/bagshrink.yaml") -> "ExperimentConfig":
        """Load configuration from YAML file.

        Args:
            config_path: Path to the configuration YAML file

        Returns:
            ExperimentConfig instance

        Raises:
            ConfigurationError: If config file is not found or contains invalid YAML
        """
        path = Path(config_path)
        try:
            with open(path, "r") as f:
                loaded_config = yaml.safe_load(f)
                # Handle empty YAML files which return None
                if loaded_config is None:
                    raise ConfigurationError("Configuration file is empty")

                experiment = dict(loaded_config.get("experiment") or {})
                # Convert numeric strings if needed
                for name in INT_FIELDS:
                    if experiment.get(name) is not None:
                        experiment[name] = int(experiment[name])
                for name in FLOAT_FIELDS:
                    if experiment.get(name) is not None:
                        experiment[name] = float(experiment[name])
                return cls(**experiment)

        except FileNotFoundError:
            raise ConfigurationError(f"Configuration file not found: {path}")
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Invalid YAML in configuration file: {e}")
        except (TypeError, ValueError, AttributeError) as e:
            raise ConfigurationError(f"Invalid configuration structure: {e}")

    def replace(self, **changes: Any) -> "ExperimentConfig":
        """Validated copy with some fields changed."""
        unknown = set(changes) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigurationError(f"Unknown configuration fields: {sorted(unknown)}")
        try:
            return replace(self, **changes)
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"Invalid configuration change: {e}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def method_list(self) -> List[Method]:
        assert self.methods is not None
        return [Method(name) for name in self.methods]

    @property
    def real_data(self) -> bool:
        return self.input_path is not None

    def _validate(self) -> None:
        """Validate configuration values.

        Raises:
            ConfigurationError: If configuration values are invalid
        """
        if self.setting not in SETTINGS:
            raise ConfigurationError(f"Invalid setting: {self.setting}. Must be one of {SETTINGS}")

        # Data source
        if self.input_path is not None:
            if self.setting != "kme":
                raise ConfigurationError("input_path is only supported in the kme setting")
        elif self.setting == "gaussian":
            if self.generator not in [kind.value for kind in GaussianKind]:
                raise ConfigurationError(
                    f"Invalid Gaussian model: {self.generator}. "
                    f"Must be one of {[kind.value for kind in GaussianKind]}"
                )
        elif self.generator not in [kind.value for kind in ToyKind]:
            raise ConfigurationError(
                f"Invalid toy setup: {self.generator}. "
                f"Must be one of {[kind.value for kind in ToyKind]}"
            )

        # Sizes
        if self.B < 2:
            raise ConfigurationError(f"Invalid B: {self.B}. Must be >= 2")
        if self.d is not None and self.d < 1:
            raise ConfigurationError(f"Invalid d: {self.d}. Must be >= 1")
        minimum_N = 1 if self.setting == "gaussian" else 2
        if self.N < minimum_N:
            raise ConfigurationError(f"Invalid N: {self.N}. Must be >= {minimum_N}")
        if not 2 <= self.n_range[0] <= self.n_range[1]:
            raise ConfigurationError(f"Invalid n_range: {self.n_range}")
        if self.radius < 0:
            raise ConfigurationError(f"Invalid radius: {self.radius}. Must be >= 0")
        if self.test_size < 2 or self.subsample_size < 2:
            raise ConfigurationError("test_size and subsample_size must be >= 2")
        if not 0 < self.train_fraction < 1:
            raise ConfigurationError(
                f"Invalid train_fraction: {self.train_fraction}. Must be in (0, 1)"
            )

        # Kernel
        if self.kernel not in KERNELS:
            raise ConfigurationError(f"Invalid kernel: {self.kernel}. Must be one of {KERNELS}")
        if self.kernel_width is not None and not self.kernel_width > 0:
            raise ConfigurationError(f"Invalid kernel_width: {self.kernel_width}. Must be > 0")

        # Methods and grids
        try:
            methods = self.method_list
        except ValueError as e:
            raise ConfigurationError(f"Unknown method: {e}")
        if self.setting == "gaussian" and Method.RKMSE in methods:
            raise ConfigurationError("R-KMSE is only available in the kme setting")
        if self.setting == "kme" and Method.PP_JAMES_STEIN in methods:
            raise ConfigurationError("PP-James-Stein is only available in the gaussian setting")
        for name in GRID_FIELDS:
            grid = getattr(self, name)
            if any(not math.isfinite(v) or v < 0 for v in grid):
                raise ConfigurationError(f"Invalid {name}: values must be finite and >= 0")
        needs = {
            "zeta_grid": {Method.STB_ZERO, Method.STB_WEIGHT, Method.STB_THEORY, Method.MTA_STB},
            "gamma_grid": {Method.STB_WEIGHT},
            "c_grid": {Method.STB_THEORY},
            "mta_strength_grid": {Method.MTA_CONST, Method.MTA_STB},
        }
        for name, users in needs.items():
            if users & set(methods) and not getattr(self, name):
                raise ConfigurationError(f"{name} must be nonempty for the configured methods")
        if any(g > 1 for g in self.gamma_grid):
            raise ConfigurationError("gamma_grid values must lie in [0, 1]")
        if any(c == 0 for c in self.c_grid):
            raise ConfigurationError("c_grid values must be > 0")

        # Execution
        if self.trials_tune < 1 or self.trials_eval < 1:
            raise ConfigurationError("trials_tune and trials_eval must be >= 1")
        if self.threads < 1:
            raise ConfigurationError(f"Invalid threads: {self.threads}. Must be >= 1")
