"""Classical dynamics: continuous flow, bounce map, standard map."""

from .flow import (
    DiffusionRecord,
    EnsembleRun,
    LyapunovResult,
    SurvivalResult,
    Trajectory,
    force,
    integrate_trajectory,
    lyapunov_exponent,
    max_stable_dt,
    propagate_ensemble,
    survival_probability,
    unperturbed_period,
)
from .maps import (
    K_CR,
    LAMBDA_L,
    AcceleratingWindow,
    BounceState,
    MapParams,
    accelerating_windows,
    bounce_map_energy,
    bounce_map_raw,
    bounce_map_step,
    flight_time,
    in_accelerating_window,
    iterate_standard_map,
    jacobian_determinant,
    map_lyapunov,
    standard_map_raw,
    standard_map_step,
)
