"""Polynomial-diffusion spot price models on bounded state spaces."""

from .jacobi import (
    ConvergenceError,
    JacobiBasis,
    JacobiParams,
    JacobiTransitionKernel,
    TransitionDensityConfig,
    boundary_class,
    eigenvalue,
    jacobi_poly,
    simulate_path,
    simulate_paths,
    stationary_density,
    to_shape,
    transition_density,
)
from .polymap import IncreasingPolyMap, PriceRangeError, QuadFactor, beta_bar, map_from_c
from .generator import (
    BasisDescriptor,
    GeneratorMatrix,
    build_1f,
    build_2f_jacobi,
    build_regime,
    coeff_vector_1f,
    coeff_vector_blend,
    expect,
    propagate,
)
from .model import DoubleJacobiModel, ModelSpec, OneFactorModel, RegimeModel, build_generator, simulate_model, spot_coeff_vector
from .pricing import (
    CONSTANT_SEASONALITY,
    ForwardQuote,
    ResolventWarning,
    SeasonalMode,
    Seasonality,
    forward,
    option_polyapprox,
    spot,
)
from .calibrate import (
    CalibrationRow,
    OptimizerConfig,
    PriceSeries,
    bic,
    fit_ladder,
    log_likelihood,
    one_factor_loglik,
)
from .filters import (
    DegeneracyWarning,
    FilterResult,
    double_jacobi_filter_ll,
    fit_2f,
    particle_filter_ll,
    regime_filter_ll,
    regime_transition,
    xhat,
)

__version__ = "0.1.0"
