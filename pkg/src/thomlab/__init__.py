"""thomlab: a numerical laboratory for quantitative decay of gradient-like flows.

The package measures, from simulated trajectories, the quantities that
control slow (power-law) versus fast (exponential) decay toward a critical
point at the origin: the decay order and leading normalized value, the
convergence of secants (directions), finite arclength, characteristic
exponents of the potential near zero, and the mode-splitting trichotomy for
grouped amplitude series.  A small spectral solver for a semilinear heat
model on the circle and a finite-dimensional reduction onto its neutral
modes tie the trajectory diagnostics to an infinite-dimensional example.
"""

__version__ = "0.1.0"

from .potential import (  # noqa: F401
    Potential,
    bubble_sheet,
    bubble_sheet_symmetric,
    diagonal_powers,
    monomial,
    normalized_value,
    radial_derivative,
    radial_power,
    spherical_gradient,
)
from .sphere_critical import (  # noqa: F401
    AdamsSimonResult,
    CriticalPoint,
    adams_simon,
    ansatz_solution,
    critical_points,
)
from .flow import (  # noqa: F401
    ErrorModel,
    IntegrationControls,
    LinearizedSystem,
    Trajectory,
    integrate_gradient,
    integrate_heavy_ball,
    project_coefficients,
    read_trajectory_csv,
    vectorize,
    write_trajectory_csv,
)
from .asymptotics import (  # noqa: F401
    RateFit,
    RegionParams,
    characteristic_exponents,
    classify_decay,
    fit_rate,
    monitor_gstar,
    mz_trichotomy,
    region_membership,
    secant_analysis,
    verify_A1_A2,
)
from .pde_spectral import (  # noqa: F401
    CircleModel,
    ModeSeries,
    SpectralState,
    evolve,
    project_modes,
    run_series,
    slow_decay_report,
)
from .reduction import (  # noqa: F401
    PolynomialFit,
    ReducedModel,
    adams_simon_from_reduction,
    fit_reduced_polynomial,
)
