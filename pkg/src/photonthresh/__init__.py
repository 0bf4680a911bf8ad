"""Adaptive photon-threshold sensing toolkit.

Simulation and estimation for threshold photon counting: photon-number
statistics of classical light sources, Fisher-information-optimal
threshold selection, adaptive estimation loops, polarizer-free DoLP
imaging, coherent-vs-thermal discrimination, and a superconducting
nanowire model that physically realizes tunable thresholds.
"""

__version__ = "0.1.0"

from .photon_stats import (  # noqa: F401
    CoherentDist,
    DisplacedThermalDist,
    DolpJointDist,
    FockDist,
    ThermalDist,
    coherent_pmf,
    displaced_thermal_pmf,
    dolp_pmf,
    mandel_q,
    sample_photon_number,
    thermal_pmf,
)
from .detector_models import (  # noqa: F401
    ClickRecord,
    PnrdResponse,
    TabulatedResponse,
    ThresholdResponse,
    counting_rate,
    pnrd_outcome_distribution,
    reconstruct_pmf_from_rates,
    simulate_clicks,
)
from .fisher_info import (  # noqa: F401
    FisherReport,
    ParamSpec,
    efficiency_curve,
    fisher_report,
    optimal_threshold,
    pd_fisher,
    pnrd_fisher,
    shot_noise_fisher,
    threshold_equiv_noise,
)
from .adaptive_estimation import (  # noqa: F401
    AdaptiveConfig,
    AdaptiveTrace,
    adaptive_loop,
    crlb_std,
    forward_q12,
    invert_q12,
    likelihood_estimate,
)
