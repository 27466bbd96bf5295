"""Orthodox quantum measurement with a valence-biased choice rule.

Simulates how a small bias in Nature's choice of a participant's final
experience reweights whole histories, producing apparently retrocausal
statistics in Bem-style protocols while the unbiased rule stays
no-signaling.
"""

from .bias import ChoicePolicy, biased_weights, policy_weights, sample_outcome
from .errors import (
    ConfigError,
    DegenerateInput,
    FamilyIncomplete,
    InvalidState,
    LayoutMismatch,
    NonCommutingCondition,
    NumericIntegrityError,
    ProtocolMalformed,
    RetrosimError,
    ScheduleMismatch,
    ZeroProbabilityOutcome,
)
from .harness import (
    RunConfig,
    TrialReport,
    emit_report,
    load_config,
    load_report,
    run_simulation,
    sweep_beta,
    verify,
    wilson_interval,
)
from .histories import (
    History,
    HistoryEnsemble,
    Is,
    Overlap,
    Same,
    conditional_rate,
    enumerate_ensemble,
    marginal,
    no_signaling_gap,
    sequential_equivalence_distance,
)
from .linalg import (
    DensityMatrix,
    Projector,
    SubsystemLayout,
    UnitaryOp,
    apply_unitary,
    complement,
    make_pure_state,
    matrix_trace,
    partial_trace,
    tensor_product,
)
from .measurement import (
    MeasurementRecord,
    OutcomeFamily,
    born_probability,
    collapse,
    conditional_probability,
    effective_past,
    family_probabilities,
)
from .protocols import (
    ProtocolSpec,
    ReactionTimeModel,
    avoidance_protocol,
    bem_protocols,
    detection_protocol,
    falsification_variant,
    habituation_protocol,
    priming_protocol,
    recall_protocol,
    reversed_polarity_variant,
)

__version__ = "0.1.0"
