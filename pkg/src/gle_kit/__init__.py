"""gle-kit: stationary solutions of the generalized Langevin equation.

Numerical toolkit for the velocity equation with instantaneous drift,
memory friction, and a fluctuating force: differential-resolvent solving,
fluctuation-dissipation construction and verification via spectral
factorization, colored-noise synthesis, stochastic integration, and
closed-form vs. Monte Carlo correlation comparison.
"""

from .errors import (
    ConfigError,
    EstimationError,
    FactorizationError,
    GLEKitError,
    HorizonError,
    InfeasibilityError,
    TargetError,
)
from .kernels import (
    CovarianceSpec,
    MemoryKernel,
    PronyTerm,
    eval_kernel,
    gamma_sigma_fourier,
    gamma_sigma_values,
    is_positive_type,
    kernel_tail_time,
    laplace_transform,
)
from .resolvent import (
    Resolvent,
    check_transposed_identity,
    paley_wiener_check,
    solve_resolvent,
)
from .fdt import (
    ForceModel,
    KAPPA_INDEPENDENT,
    KAPPA_SAME,
    check_spectral_condition,
    chi_of,
    factorization_grid,
    fdr_residual,
    solve_lyapunov_G,
    spectral_factorize_phi,
)
from .noise import (
    ForceCorrelation,
    NoiseRealization,
    force_autocorrelation_theory,
    sample_force,
)
from .simulate import (
    TrajectoryEnsemble,
    convergence_to_stationary,
    integrate_ivp,
    integrate_stationary,
    pathwise_reconstruct,
    stationary_burn_in_steps,
)
from .stats import (
    CorrelationTable,
    cross_correlation_theory,
    cross_correlation_zero_limits,
    equipartition_check,
    estimate_autocorrelation,
    estimate_cross_correlation,
    kubo_cross_correlation,
    stationarity_window_test,
    stationary_autocorrelation,
    theoretical_cov_ivp,
    theoretical_cov_stationary,
    theoretical_cov_stationary_alt,
)
from .design import (
    TargetAutocorrelation,
    design_force_for_target,
    design_grid_identity_residual,
    verify_design,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
