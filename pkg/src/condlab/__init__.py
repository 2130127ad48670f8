"""Proper-condensate detection and off-diagonal long-range-order
verification for sequences of quasifree bosonic states on bounded
regions."""

from .errors import (
    CondlabError,
    ConfigError,
    GridMismatchError,
    NotHomogeneousError,
    NumericalError,
    ParameterError,
    PreconditionError,
    SupportRangeError,
)
from .geometry import (
    Grid,
    Region,
    WaveFunction,
    bump_probe,
    discrete_volume,
    fourier_amplitude,
    inner,
    plane_wave_mode,
    project_out_mode,
    translate,
    zero_mean_project,
)
from .states import (
    ModeBasis,
    OnePDM,
    StateFamily,
    appendix_epsilon_n,
    appendix_family,
    appendix_occupations,
    appendix_tail_closed_form,
    ball_polynomial_modes,
    boosted_family,
    bose_einstein_occupations,
    build_family,
    custom_family,
    default_mode_basis,
    family_to_dict,
    fourier_modes,
    gamma,
    heated_family,
    kms_hamiltonian,
    region_from_dict,
    region_to_dict,
)
from .analysis import (
    CondensateReport,
    CriterionResult,
    MomentumFit,
    SingularMode,
    Thresholds,
    assemble_report,
    condensate_number,
    criterion_check,
    extract_singular_function,
    fit_momentum,
    growth_exponent,
    op_ratio,
    operator_norm,
    power_iteration,
    rank_one_distance,
    regular_bound,
)
from .odlro import (
    CorrelationScan,
    HomogeneityResult,
    MomentumSpectrum,
    PeakTailReport,
    ball_overlap_quadrature,
    closed_form_consistency,
    closed_form_peak,
    correlation_scan,
    homogeneity_test,
    line_k_grid,
    momentum_distribution,
    peak_tail_report,
)

__version__ = "0.1.0"
