"""aepkit: entropy, rate functions and near-optimal coding for coloured
random graphs and multitype Galton-Watson trees."""

from .measures import (
    Alphabet,
    ConnectionKernel,
    FiniteMeasure,
    PairMeasure,
    ProbVector,
    ShapeMismatchError,
    h_c,
    kernel_product,
    relative_entropy,
    total_mass,
)
from .graphs import (
    ColouredGraph,
    GraphModel,
    ScalingFamily,
    TiltSpec,
    empirical_colour,
    empirical_pair,
    expected_information,
    log_prob_graph,
    normalized_information,
    rn_log_residual,
    sample_graph,
    tilt,
)
from .trees import (
    AttemptsExhaustedError,
    ImpossibleSizeError,
    OffspringKernel,
    OffspringMeasure,
    Overflow,
    TypedTree,
    is_irreducible,
    log_prob_tree,
    log_prob_tree_conditioned,
    mean_matrix,
    offspring_measure,
    progeny_distribution,
    sample_tree,
    sample_tree_conditioned,
    shift_invariance_residual,
    spectral,
    tree_aep_entropy,
)
from .rates import (
    RateResult,
    VariationalReport,
    euler_check,
    graph_aep_entropy,
    numeric_sup_I1,
    numeric_sup_I2,
    numeric_sup_I3,
    rate_I,
    rate_I1,
    rate_I2,
    rate_I3,
    rate_I4,
    rate_J,
)

__version__ = "0.1.0"
