"""Pseudo-spectral tools for the two-dimensional Kuramoto-Sivashinsky system on a torus."""

__version__ = "0.1.0"

from .spectral import (  # noqa: E402
    SpectralField,
    SymbolTable,
    TorusSpec,
    build_symbol_table,
    count_growing_modes,
    sigma_eval,
    wavenumbers,
)
from .linear import (  # noqa: E402
    OperatorNormReport,
    Trajectory,
    I_apply,
    I_norm_bound,
    semigroup_apply,
    smoothing_check,
)
from .analysis import (  # noqa: E402
    NormSeries,
    ThresholdReport,
    analyticity_radius_estimate,
    continuation_monitor,
    sobolev_norm,
    spacetime_alpha_norm,
    thresholds,
    wiener_norm,
)
from .dynamics import (  # noqa: E402
    BlowUpError,
    ComplexPair,
    PicardReport,
    StepperConfig,
    complex_shift_solve,
    integrate,
    nonlinearity,
    picard_mild_solve,
)
from .harness import RunManifest, ScenarioConfig, make_initial_data, run_scenario  # noqa: E402

__all__ = [
    "TorusSpec", "SpectralField", "SymbolTable", "build_symbol_table", "count_growing_modes",
    "sigma_eval", "wavenumbers",
    "Trajectory", "OperatorNormReport", "semigroup_apply", "I_apply", "I_norm_bound",
    "smoothing_check",
    "NormSeries", "ThresholdReport", "wiener_norm", "spacetime_alpha_norm", "sobolev_norm",
    "analyticity_radius_estimate", "thresholds", "continuation_monitor",
    "StepperConfig", "BlowUpError", "PicardReport", "ComplexPair", "nonlinearity", "integrate",
    "picard_mild_solve", "complex_shift_solve",
    "ScenarioConfig", "RunManifest", "make_initial_data", "run_scenario",
]
