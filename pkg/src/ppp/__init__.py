"""Spatial point process simulation, summary statistics, and neural
parameter estimation."""

from .geometry import (
    PointPattern,
    Window,
    count_r_close_pairs,
    distance_to_boundary,
    pairwise_distances,
    read_pattern_csv,
    write_pattern_csv,
)
from .simulate import (
    FieldGrid,
    GrfParams,
    LgcpStraussParams,
    StraussParams,
    papangelou_strauss,
    sample_grf,
    sample_lgcp,
    sample_lgcp_strauss,
    sample_poisson,
    sample_strauss,
    simulate_model,
)
from .sumstats import (
    SummaryCurve,
    default_r_grid,
    estimate_F,
    estimate_G,
    estimate_J,
    estimate_K,
    estimate_L_centered,
)
from .baselines import (
    minimum_contrast_lgcp,
    nelder_mead,
    profile_mple_strauss,
    pseudo_loglik_strauss,
)
from .envelopes import EnvelopeResult, global_envelope, validate_fit
from .pipeline import (
    RunConfig,
    TrainingSet,
    coverage_check,
    estimate,
    evaluate_on_test,
    generate_training_data,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
    size_study,
    train_model,
)

__version__ = "0.1.0"
