"""Equivariant filter and baseline filters."""

from .baselines import (
    EkfState,
    LinearKF,
    SecondOrderEKF,
    SphereEKF,
    ekf_secondorder_jacobian,
    ekf_secondorder_step,
    ekf_sphere_step,
    lkf_measurement_cov,
    lkf_step,
)
from .eqf import (
    EqFState,
    EquivariantFilter,
    LinearisationMatrices,
    eqf_estimate,
    eqf_step,
    equivariant_innovation,
    linearise_error_dynamics,
    linearise_output,
    origin_input,
)
