"""Dose-schedule escalation with a time-to-event pharmacokinetic safety model."""

from .escalation import (
    Combination,
    CombinationGrid,
    Completion,
    CompletionAction,
    DecisionRow,
    DecisionTable,
    EscalationConfig,
    SelectionStrategy,
    TrialState,
    check_completion,
    evaluate_grid,
    next_patient_assignment,
)
from .inference import (
    BetaPrior,
    DltRiskSummary,
    InconsistentDataError,
    PatientRecord,
    PointMassPosterior,
    Posterior,
    cloglog,
    default_prior,
    fit_posterior,
    inv_cloglog,
    log_likelihood,
    metropolis_sample,
    prob_dlt_cycle1,
)
from .pk import (
    ExposureProfile,
    PkParams,
    Regimen,
    auc_ceff,
    concentration_eff,
    fit_keff_from_quantiles,
    make_exposure,
    reference_auc,
)
from .simulate import (
    DltGenerator,
    DltOutcome,
    OperatingCharacteristics,
    Scenario,
    StudyResult,
    TrialResult,
    parse_scenario_table,
    run_study,
    run_trial,
    sample_dlt,
    sample_dlt_many,
)
from . import scenarios

__version__ = "0.1.0"

__all__ = [
    "BetaPrior",
    "Combination",
    "CombinationGrid",
    "Completion",
    "CompletionAction",
    "DecisionRow",
    "DecisionTable",
    "DltGenerator",
    "DltOutcome",
    "DltRiskSummary",
    "EscalationConfig",
    "ExposureProfile",
    "InconsistentDataError",
    "OperatingCharacteristics",
    "PatientRecord",
    "PkParams",
    "PointMassPosterior",
    "Posterior",
    "Regimen",
    "Scenario",
    "SelectionStrategy",
    "StudyResult",
    "TrialResult",
    "TrialState",
    "auc_ceff",
    "check_completion",
    "cloglog",
    "concentration_eff",
    "default_prior",
    "evaluate_grid",
    "fit_keff_from_quantiles",
    "fit_posterior",
    "inv_cloglog",
    "log_likelihood",
    "make_exposure",
    "metropolis_sample",
    "next_patient_assignment",
    "parse_scenario_table",
    "prob_dlt_cycle1",
    "reference_auc",
    "run_study",
    "run_trial",
    "sample_dlt",
    "sample_dlt_many",
    "scenarios",
]
