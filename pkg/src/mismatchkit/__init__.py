"""Rates, bounds and decoder experiments for mismatched decoding over DMCs."""

from .channel_core import (
    Boundedness,
    Composition,
    CondDist,
    Dmc,
    Metric,
    SimplexDist,
    metric_value,
    nearest_composition,
    product_channel,
    product_metric,
    read_channel,
    read_metric,
    write_channel,
    write_metric,
)
from .converse_bounds import (
    MetricLevelSet,
    eta_n,
    maxmin_upper_bound,
    rational_eta_lower_bound,
    soft_converse_threshold,
)
from .decoder_lab import (
    ERROR,
    Codebook,
    DecoderKind,
    DecoderSpec,
    ErrorEstimate,
    EstimateMethod,
    claim2_check,
    clt_margin_check,
    decode,
    exact_error_probability,
    margin_schedule_error,
    mc_error_probability,
    phi_identity_check,
    read_codebook,
    sample_constant_composition_codebook,
    write_codebook,
)
from .dual_rates import (
    DualVars,
    dual_ascent,
    dual_objective,
    dual_rate,
    gmi,
    lemma1_rhs,
    margin_error_event,
    mismatch_error_event,
)
from .errors import (
    CapExceeded,
    DegenerateLevels,
    DimensionMismatch,
    HypothesisViolated,
    InfeasibleMetric,
    LengthMismatch,
    MismatchKitError,
    NoConvergence,
    NotRational,
    ValidationError,
)
from .information import blahut_arimoto, mutual_information
from .lm_rates import (
    OuterSearchConfig,
    PrimalProblem,
    RateCertificate,
    inner_min,
    lm_rate,
    margin_rate_curve,
    product_rate,
)

__version__ = "0.1.0"
