"""Equivariant filtering on homogeneous spaces with baseline comparisons."""

from .errors import (
    AngleNearPi,
    AntipodePoint,
    ChartBreakdown,
    CovarianceNotPD,
    EqFilterError,
    OutsideChart,
    RankDeficient,
    UsageError,
    ZeroPosition,
)
from .filters import EquivariantFilter, LinearKF, SecondOrderEKF, SphereEKF
from .lie_core import SO3, Galilean, Polar
from .sim import ExperimentConfig, default_config, monte_carlo, run_experiment
from .systems import GalileanSystem, PolarSystem, SphereSystem

__version__ = "0.1.0"
