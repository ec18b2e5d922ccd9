"""EWOC eligibility, next-combination selection, and trial stopping logic.

A combination is admissible when its posterior overdosing probability is
below the feasibility bound.  Because the end-of-cycle DLT probability is a
monotone function of the cycle-1 exposure area, eligibility is downward
closed in AUC_E(t*): once a combination is too risky, everything with more
exposure is too.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .inference import PatientRecord, interval_log_beta_thresholds
from .pk import PkParams, Regimen, make_exposure


@dataclass(frozen=True)
class Combination:
    """One candidate dose-schedule combination."""

    dose: float
    freq: float
    schedule: str

    @property
    def label(self) -> str:
        return f"{self.dose:g}{self.schedule}"

    def regimen(self, t_star: float) -> Regimen:
        return Regimen.regular(self.dose, self.freq, t_star)


class CombinationGrid:
    """Cross of doses and schedules with derived cycle-1 exposure areas."""

    def __init__(
        self,
        doses: tuple[float, ...],
        schedules: tuple[tuple[str, float], ...],
        params: PkParams,
    ):
        if not doses or not schedules:
            raise ValueError("grid needs at least one dose and one schedule")
        self.doses = tuple(float(d) for d in doses)
        self.schedules = tuple((str(lbl), float(f)) for lbl, f in schedules)
        self.params = params
        self.combinations: tuple[Combination, ...] = tuple(
            Combination(dose=d, freq=f, schedule=lbl)
            for lbl, f in self.schedules
            for d in self.doses
        )
        self.regimens = tuple(c.regimen(params.t_star) for c in self.combinations)
        self.profiles = tuple(make_exposure(r, params) for r in self.regimens)
        self.auc_cycle1 = np.asarray([p.auc_cycle1 for p in self.profiles])
        if np.any(self.auc_cycle1 <= 0):
            raise ValueError("every combination must have positive cycle-1 exposure")

    def __len__(self) -> int:
        return len(self.combinations)

    def index_of(self, combination: Combination) -> int:
        return self.combinations.index(combination)

    def levels(self) -> np.ndarray:
        """Distinct exposure levels, ascending; equal AUC values are one level."""
        return np.unique(self.auc_cycle1)


class SelectionStrategy(str, enum.Enum):
    """How to pick among EWOC-eligible combinations."""

    HIGHEST_ELIGIBLE_EXPOSURE = "highest-exposure"
    LOWEST_ELIGIBLE_EXPOSURE = "lowest-exposure"
    MAX_TARGET_PROBABILITY = "max-target"


@dataclass(frozen=True)
class EscalationConfig:
    feasibility_bound: float = 0.25
    interval: tuple[float, float] = (0.20, 0.40)
    target_confidence: float = 0.50
    min_patients_at_mtc: int = 9
    min_patients_total_fallback: int = 21
    max_patients: int = 60
    selection_strategy: SelectionStrategy = SelectionStrategy.HIGHEST_ELIGIBLE_EXPOSURE
    no_skip: bool = True
    cohort_size: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.feasibility_bound < 1.0:
            raise ValueError(f"feasibility_bound must be in (0, 1), got {self.feasibility_bound!r}")
        lo, hi = self.interval
        if not 0.0 < lo < hi < 1.0:
            raise ValueError(f"interval bounds must be ordered in (0, 1), got {self.interval!r}")
        if not 0.0 < self.target_confidence < 1.0:
            raise ValueError("target_confidence must be in (0, 1)")
        for name in ("min_patients_at_mtc", "min_patients_total_fallback", "max_patients", "cohort_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive count")
        if isinstance(self.selection_strategy, str) and not isinstance(
            self.selection_strategy, SelectionStrategy
        ):
            object.__setattr__(self, "selection_strategy", SelectionStrategy(self.selection_strategy))


@dataclass(frozen=True)
class DecisionRow:
    combination: Combination
    auc_cycle1: float
    p_under: float
    p_target: float
    p_over: float
    ewoc_ok: bool
    mean_dlt_prob: float | None = None

    def to_dict(self) -> dict:
        return {
            "dose": self.combination.dose,
            "schedule": self.combination.schedule,
            "freq": self.combination.freq,
            "auc_cycle1": self.auc_cycle1,
            "p_underdosing": self.p_under,
            "p_target": self.p_target,
            "p_overdosing": self.p_over,
            "ewoc_ok": self.ewoc_ok,
            "mean_dlt_prob": self.mean_dlt_prob,
        }


RATIONALE_RECOMMEND = "recommendation"
RATIONALE_STOP_OVERDOSING = "stop-all-overdosing"


@dataclass(frozen=True)
class DecisionTable:
    rows: tuple[DecisionRow, ...]
    recommendation: Combination | None
    rationale: str
    feasibility_bound: float
    interval: tuple[float, float]

    def row_for(self, combination: Combination) -> DecisionRow:
        for row in self.rows:
            if row.combination == combination:
                return row
        raise KeyError(f"combination {combination.label} not in table")

    def eligible(self) -> tuple[DecisionRow, ...]:
        return tuple(r for r in self.rows if r.ewoc_ok)

    def to_dict(self) -> dict:
        rec = self.recommendation
        return {
            "bound": self.feasibility_bound,
            "interval": {"lower": self.interval[0], "upper": self.interval[1]},
            "rows": [r.to_dict() for r in self.rows],
            "recommendation": None
            if rec is None
            else {"dose": rec.dose, "schedule": rec.schedule, "freq": rec.freq},
            "rationale": self.rationale,
        }


def _interval_probabilities(posterior, aucs: np.ndarray, bounds: tuple[float, float]):
    thr = np.asarray([interval_log_beta_thresholds(a, bounds) for a in aucs])
    cdf_lo = np.asarray(posterior.cdf(thr[:, 0]))
    cdf_hi = np.asarray(posterior.cdf(thr[:, 1]))
    return cdf_lo, cdf_hi - cdf_lo, 1.0 - cdf_hi


def _pick(indices: list[int], criterion: np.ndarray, rng) -> int:
    best = criterion[indices].max()
    tied = [i for i in indices if criterion[i] == best]
    if len(tied) == 1:
        return tied[0]
    if rng is None:
        rng = np.random.default_rng(0)
    return tied[int(rng.integers(len(tied)))]


def evaluate_grid(
    posterior,
    grid: CombinationGrid,
    cfg: EscalationConfig,
    params: PkParams,
    rng=None,
    with_mean: bool = False,
) -> DecisionTable:
    """Classify every combination and recommend one (or stop).

    Eligibility: P(overdosing) < feasibility bound.  The recommendation
    applies the configured selection strategy over eligible rows only; exact
    criterion ties are broken uniformly at random from rng.
    """
    if len(grid) == 0:
        raise ValueError("combination grid is empty")
    aucs = grid.auc_cycle1
    p_under, p_target, p_over = _interval_probabilities(posterior, aucs, cfg.interval)
    means = [None] * len(grid)
    if with_mean:
        # E[1 - exp(-beta * AUC)] pushed through the quadrature grid; a
        # degenerate posterior (single-point grid, no density) is exact.
        x = posterior.grid
        dens = getattr(posterior, "density", None)
        probs = -np.expm1(-np.exp(x)[:, None] * aucs[None, :])
        if dens is None:
            means = list(probs[0])
        else:
            means = list(np.trapezoid(probs * dens[:, None], x, axis=0))
    eligible = p_over < cfg.feasibility_bound
    rows = tuple(
        DecisionRow(
            combination=grid.combinations[i],
            auc_cycle1=float(aucs[i]),
            p_under=float(p_under[i]),
            p_target=float(p_target[i]),
            p_over=float(p_over[i]),
            ewoc_ok=bool(eligible[i]),
            mean_dlt_prob=None if means[i] is None else float(means[i]),
        )
        for i in range(len(grid))
    )
    idx_eligible = [i for i in range(len(grid)) if eligible[i]]
    if not idx_eligible:
        return DecisionTable(rows, None, RATIONALE_STOP_OVERDOSING, cfg.feasibility_bound, cfg.interval)
    if cfg.selection_strategy is SelectionStrategy.LOWEST_ELIGIBLE_EXPOSURE:
        choice = _pick(idx_eligible, -aucs, rng)
    elif cfg.selection_strategy is SelectionStrategy.MAX_TARGET_PROBABILITY:
        choice = _pick(idx_eligible, p_target, rng)
    else:
        choice = _pick(idx_eligible, aucs, rng)
    return DecisionTable(
        rows, grid.combinations[choice], RATIONALE_RECOMMEND, cfg.feasibility_bound, cfg.interval
    )


@dataclass
class TrialState:
    """Snapshot of an ongoing trial: data, posterior, and current decision table."""

    grid: CombinationGrid
    records: list[tuple[int, PatientRecord]] = field(default_factory=list)
    posterior: object | None = None
    table: DecisionTable | None = None

    @property
    def total_enrolled(self) -> int:
        return len(self.records)

    def counts(self) -> np.ndarray:
        out = np.zeros(len(self.grid), dtype=int)
        for idx, _ in self.records:
            out[idx] += 1
        return out

    def count_at(self, combination: Combination) -> int:
        idx = self.grid.index_of(combination)
        return sum(1 for i, _ in self.records if i == idx)

    def tried_levels(self) -> np.ndarray:
        tried = {float(self.grid.auc_cycle1[i]) for i, _ in self.records}
        return np.asarray(sorted(tried))


def _no_skip_cap(state: TrialState) -> float:
    """Highest exposure level allowed next: the lowest untried level above
    everything tried so far (the lowest level overall when nothing is tried)."""
    levels = state.grid.levels()
    tried = state.tried_levels()
    top_tried = tried[-1] if len(tried) else -math.inf
    above = levels[levels > top_tried]
    return float(above[0]) if len(above) else math.inf


def next_patient_assignment(
    state: TrialState, cfg: EscalationConfig, params: PkParams, rng=None
) -> Combination | None:
    """Combination for the next patient, or None when nothing is admissible.

    With no_skip, assignment may not jump past the lowest untried exposure
    level above everything tried (exposure levels, not dose indices: the
    grid is two-dimensional).
    """
    table = state.table
    if table is None:
        raise ValueError("trial state has no decision table; evaluate the grid first")
    aucs = state.grid.auc_cycle1
    eligible = [i for i, row in enumerate(table.rows) if row.ewoc_ok]
    if not eligible:
        return None
    allowed = eligible
    if cfg.no_skip and cfg.selection_strategy is not SelectionStrategy.LOWEST_ELIGIBLE_EXPOSURE:
        cap = _no_skip_cap(state)
        capped = [i for i in eligible if aucs[i] <= cap]
        if capped:
            allowed = capped
    if cfg.selection_strategy is SelectionStrategy.LOWEST_ELIGIBLE_EXPOSURE:
        choice = _pick(allowed, -aucs, rng)
    elif cfg.selection_strategy is SelectionStrategy.MAX_TARGET_PROBABILITY:
        p_target = np.asarray([row.p_target for row in table.rows])
        choice = _pick(allowed, p_target, rng)
    else:
        choice = _pick(allowed, aucs, rng)
    return state.grid.combinations[choice]


class CompletionAction(str, enum.Enum):
    CONTINUE = "continue"
    DECLARE_MTC = "declare-mtc"
    STOP_NO_MTC = "stop-no-mtc"


@dataclass(frozen=True)
class Completion:
    action: CompletionAction
    mtc: Combination | None = None


def check_completion(state: TrialState, cfg: EscalationConfig) -> Completion:
    """Trial end decision after the latest posterior refresh.

    Declare the current recommendation once it carries the minimum patient
    count and either the targeted-toxicity confidence or the total-enrolment
    fallback is met; stop without an MTC when nothing is admissible; force a
    resolution at the patient cap.
    """
    table = state.table
    if table is None:
        raise ValueError("trial state has no decision table; evaluate the grid first")
    if table.recommendation is None:
        return Completion(CompletionAction.STOP_NO_MTC)
    rec = table.recommendation
    n_at_rec = state.count_at(rec)
    total = state.total_enrolled
    enough_at_rec = n_at_rec >= cfg.min_patients_at_mtc
    if enough_at_rec:
        p_target = table.row_for(rec).p_target
        if p_target >= cfg.target_confidence or total >= cfg.min_patients_total_fallback:
            return Completion(CompletionAction.DECLARE_MTC, rec)
    if total >= cfg.max_patients:
        if enough_at_rec:
            return Completion(CompletionAction.DECLARE_MTC, rec)
        return Completion(CompletionAction.STOP_NO_MTC)
    return Completion(CompletionAction.CONTINUE)
