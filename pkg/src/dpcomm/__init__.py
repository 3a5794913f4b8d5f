"""Privacy-concern driven DP consent pipeline.

Asks users which of seven privacy concerns they hold, matches the selection
to local or central differential privacy, explains the matched mechanism
with text, illustration payloads, and an interactive storyboard, and then
actually runs that mechanism on submitted data.
"""

from .concerns import (
    CellGrid,
    Concern,
    ConcernSet,
    DpLevel,
    NumericDomain,
    Scenario,
    ScenarioKind,
    list_concerns,
    match_dp_level,
)
from .mechanisms import (
    BudgetLedger,
    MechanismParams,
    NoiseSample,
    QueryAnswer,
    central_answer_query,
    laplace_perturb,
    rr_perturb,
)
from .verification import (
    FiniteMechanism,
    LaplaceHandle,
    VerificationReport,
    identity_mechanism,
    rr_finite_mechanism,
    verify_dp_bound,
    verify_laplace_bound,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetLedger",
    "CellGrid",
    "Concern",
    "ConcernSet",
    "DpLevel",
    "FiniteMechanism",
    "LaplaceHandle",
    "MechanismParams",
    "NoiseSample",
    "NumericDomain",
    "QueryAnswer",
    "Scenario",
    "ScenarioKind",
    "VerificationReport",
    "central_answer_query",
    "identity_mechanism",
    "laplace_perturb",
    "list_concerns",
    "match_dp_level",
    "rr_finite_mechanism",
    "rr_perturb",
    "verify_dp_bound",
    "verify_laplace_bound",
]
