"""Monte-Carlo engine: virtual patients, full trials, operating characteristics.

Virtual DLT outcomes are drawn so the end-of-cycle-1 event probability
matches the scenario truth exactly under every timing mechanism; the
mechanisms differ only in when within the cycle an event lands.  Trials run
one cohort at a time with full cycle-1 follow-up before the next
assignment, the posterior refreshed after every outcome.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .escalation import (
    Combination,
    CombinationGrid,
    Completion,
    CompletionAction,
    DecisionTable,
    EscalationConfig,
    TrialState,
    check_completion,
    evaluate_grid,
    next_patient_assignment,
)
from .inference import BetaPrior, PatientRecord, fit_posterior
from .pk import ExposureProfile, PkParams, Regimen, make_exposure

UNDERDOSING = "underdosing"
TARGET = "target"
OVERDOSING = "overdosing"


def classify_probability(p: float, bounds: tuple[float, float] = (0.20, 0.40)) -> str:
    """Interval classification; boundary values count as targeted toxicity."""
    lo, hi = bounds
    if p < lo:
        return UNDERDOSING
    if p > hi:
        return OVERDOSING
    return TARGET


@dataclass(frozen=True)
class Scenario:
    """A combination grid plus the true end-of-cycle-1 DLT probability per cell."""

    label: str
    grid: CombinationGrid
    true_p: np.ndarray  # shape (n_schedules, n_doses), rows follow grid.schedules

    def __post_init__(self) -> None:
        tp = np.asarray(self.true_p, dtype=float)
        object.__setattr__(self, "true_p", tp)
        expected = (len(self.grid.schedules), len(self.grid.doses))
        if tp.shape != expected:
            raise ValueError(f"true_p shape {tp.shape} does not match grid {expected}")
        if np.any(tp <= 0.0) or np.any(tp >= 1.0):
            raise ValueError("true DLT probabilities must lie strictly in (0, 1)")

    def true_p_of(self, combination: Combination) -> float:
        s = [lbl for lbl, _ in self.grid.schedules].index(combination.schedule)
        d = self.grid.doses.index(combination.dose)
        return float(self.true_p[s, d])


def parse_scenario_table(text: str, label: str = "custom",
                         default_freqs: dict[str, float] | None = None) -> tuple:
    """Parse a plain-text scenario table: one row per schedule, one column per dose.

    Header: ``schedule [every_hours] <dose> <dose> ...``.  When the
    every_hours column is omitted, schedule labels must resolve through
    default_freqs.  Returns (doses, schedules, true_p, label) ready for
    Scenario construction once PK parameters are known.
    """
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.replace(",", " ").split())
    if not rows:
        raise ValueError("scenario table is empty")
    header = rows[0]
    if header[0].lower() != "schedule":
        raise ValueError("scenario table header must start with 'schedule'")
    has_period = len(header) > 1 and header[1].lower() == "every_hours"
    dose_cols = header[2:] if has_period else header[1:]
    doses = tuple(float(d) for d in dose_cols)
    schedules = []
    matrix = []
    for row in rows[1:]:
        lbl = row[0]
        if has_period:
            freq = 1.0 / float(row[1])
            probs = row[2:]
        else:
            if not default_freqs or lbl not in default_freqs:
                raise ValueError(f"no frequency known for schedule {lbl!r}")
            freq = default_freqs[lbl]
            probs = row[1:]
        if len(probs) != len(doses):
            raise ValueError(f"schedule {lbl!r} has {len(probs)} probabilities for {len(doses)} doses")
        schedules.append((lbl, freq))
        matrix.append([float(p) for p in probs])
    return doses, tuple(schedules), np.asarray(matrix), label


class DltGenerator(str, enum.Enum):
    """Time-to-DLT mechanism used to generate virtual patients."""

    TITE_PK = "tite-pk"
    UNIFORM = "uniform"
    EXPONENTIAL = "exponential"
    EARLY_LATE = "early-late"


class DltOutcome(NamedTuple):
    dlt: bool
    time: float | None


def invert_cumulative_exposure(profile: ExposureProfile, targets, tol: float = 1e-6):
    """Solve AUC_E(t) = target for t in (0, t*] by bisection (vectorized)."""
    t_star = profile.params.t_star
    targets = np.asarray(targets, dtype=float)
    lo = np.zeros_like(targets)
    hi = np.full_like(targets, t_star)
    n_iter = max(1, int(math.ceil(math.log2(t_star / tol))))
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        below = np.asarray(profile.auc(mid)) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def sample_dlt_many(
    gen: DltGenerator,
    true_p: float,
    regimen: Regimen,
    params: PkParams,
    rng: np.random.Generator,
    n: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized draws; returns (event flags, event times with NaN when none).

    Every mechanism hits the end-of-cycle event probability exactly; times
    are sampled strictly inside (0, t*] via inverse transforms.
    """
    if not 0.0 < true_p < 1.0:
        raise ValueError(f"true DLT probability must be in (0, 1), got {true_p!r}")
    t_star = params.t_star
    times = np.full(n, np.nan)
    if gen is DltGenerator.TITE_PK:
        profile = make_exposure(regimen, params)
        beta_true = -math.log1p(-true_p) / profile.auc_cycle1
        u = rng.random(n)
        events = u < true_p
        if events.any():
            targets = -np.log1p(-u[events]) / beta_true
            times[events] = invert_cumulative_exposure(profile, targets)
    elif gen is DltGenerator.EXPONENTIAL:
        rate = -math.log1p(-true_p) / t_star
        waits = -np.log1p(-rng.random(n)) / rate
        events = waits <= t_star
        times[events] = waits[events]
    elif gen is DltGenerator.UNIFORM:
        events = rng.random(n) < true_p
        k = int(events.sum())
        times[events] = t_star * (1.0 - rng.random(k))
    elif gen is DltGenerator.EARLY_LATE:
        events = rng.random(n) < true_p
        k = int(events.sum())
        band = rng.random(k)
        inner = 1.0 - rng.random(k)
        early, late = t_star / 5.0, 4.0 * t_star / 5.0
        lo = np.where(band < 0.4, 0.0, np.where(band < 0.8, late, early))
        hi = np.where(band < 0.4, early, np.where(band < 0.8, t_star, late))
        times[events] = lo + (hi - lo) * inner
    else:
        raise ValueError(f"unknown generator {gen!r}")
    return events, times


def sample_dlt(
    gen: DltGenerator,
    true_p: float,
    regimen: Regimen,
    params: PkParams,
    rng: np.random.Generator,
) -> DltOutcome:
    """One virtual patient outcome under the chosen timing mechanism."""
    events, times = sample_dlt_many(gen, true_p, regimen, params, rng, 1)
    if events[0]:
        return DltOutcome(True, float(times[0]))
    return DltOutcome(False, None)


@dataclass(frozen=True)
class PatientDispensation:
    """One enrolled patient: assignment, outcome, and the table that followed."""

    combination: Combination
    dlt: bool
    time: float
    snapshot: dict

    def to_dict(self) -> dict:
        return {
            "dose": self.combination.dose,
            "schedule": self.combination.schedule,
            "dlt": self.dlt,
            "time_hours": self.time,
            "decision": self.snapshot,
        }


def _table_snapshot(table: DecisionTable) -> dict:
    rec = table.recommendation
    return {
        "eligible": [row.combination.label for row in table.rows if row.ewoc_ok],
        "p_overdosing": {row.combination.label: row.p_over for row in table.rows},
        "recommendation": None if rec is None else rec.label,
    }


@dataclass(frozen=True)
class TrialResult:
    outcome: str  # "mtc" or "no-mtc"
    mtc: Combination | None
    patients: tuple[PatientDispensation, ...]
    final_posterior: object

    @property
    def n_patients(self) -> int:
        return len(self.patients)

    @property
    def n_dlts(self) -> int:
        return sum(1 for p in self.patients if p.dlt)

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "mtc": None if self.mtc is None else {
                "dose": self.mtc.dose,
                "schedule": self.mtc.schedule,
            },
            "n_patients": self.n_patients,
            "n_dlts": self.n_dlts,
            "patients": [p.to_dict() for p in self.patients],
        }


def _rng_from_seed(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def run_trial(
    scenario: Scenario,
    cfg: EscalationConfig,
    gen: DltGenerator,
    prior: BetaPrior,
    params: PkParams,
    seed,
    grid_size: int = 2001,
) -> TrialResult:
    """Simulate one full trial; deterministic for a fixed seed."""
    rng = _rng_from_seed(seed)
    grid = scenario.grid
    state = TrialState(grid=grid)
    state.posterior = fit_posterior([], prior, params, grid_size)
    state.table = evaluate_grid(state.posterior, grid, cfg, params, rng=rng)
    patients: list[PatientDispensation] = []

    while True:
        completion = check_completion(state, cfg)
        if completion.action is not CompletionAction.CONTINUE:
            break
        combo = next_patient_assignment(state, cfg, params, rng=rng)
        if combo is None:
            completion = Completion(CompletionAction.STOP_NO_MTC)
            break
        idx = grid.index_of(combo)
        true_p = scenario.true_p_of(combo)
        n_assign = min(cfg.cohort_size, cfg.max_patients - state.total_enrolled)
        new_records = []
        for _ in range(n_assign):
            outcome = sample_dlt(gen, true_p, grid.regimens[idx], params, rng)
            if outcome.dlt:
                record = PatientRecord.event(grid.regimens[idx], outcome.time)
            else:
                record = PatientRecord.censored(grid.regimens[idx], params.t_star)
            state.records.append((idx, record))
            new_records.append(record)
        state.posterior = fit_posterior([r for _, r in state.records], prior, params, grid_size)
        state.table = evaluate_grid(state.posterior, grid, cfg, params, rng=rng)
        snapshot = _table_snapshot(state.table)
        for record in new_records:
            patients.append(
                PatientDispensation(
                    combination=combo,
                    dlt=record.dlt,
                    time=record.followup_time,
                    snapshot=snapshot,
                )
            )

    if completion.action is CompletionAction.DECLARE_MTC:
        return TrialResult("mtc", completion.mtc, tuple(patients), state.posterior)
    return TrialResult("no-mtc", None, tuple(patients), state.posterior)


@dataclass(frozen=True)
class TrialSummary:
    index: int
    outcome: str
    mtc_dose: float | None
    mtc_schedule: str | None
    classification: str  # underdosing / target / overdosing / none
    n_patients: int
    n_dlts: int
    n_patients_overdose: int

    def to_dict(self) -> dict:
        return {
            "trial": self.index,
            "outcome": self.outcome,
            "mtc_dose": self.mtc_dose,
            "mtc_schedule": self.mtc_schedule,
            "classification": self.classification,
            "n_patients": self.n_patients,
            "n_dlts": self.n_dlts,
            "n_patients_overdose": self.n_patients_overdose,
        }


@dataclass(frozen=True)
class OperatingCharacteristics:
    n_trials: int
    p_select_tt: float
    p_select_od: float
    p_select_ud: float
    p_select_none: float
    mean_patients_od: float
    mean_patients_total: float
    mean_dlts: float
    schedule_selection: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "p_select_tt": self.p_select_tt,
            "p_select_od": self.p_select_od,
            "p_select_ud": self.p_select_ud,
            "p_select_none": self.p_select_none,
            "mean_patients_od": self.mean_patients_od,
            "mean_patients_total": self.mean_patients_total,
            "mean_dlts": self.mean_dlts,
            "schedule_selection": dict(self.schedule_selection),
        }


@dataclass(frozen=True)
class StudyResult:
    scenario_label: str
    oc: OperatingCharacteristics
    trials: tuple[TrialSummary, ...]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario_label,
            "operating_characteristics": self.oc.to_dict(),
            "trials": [t.to_dict() for t in self.trials],
        }


def summarize_trial(index: int, result: TrialResult, scenario: Scenario,
                    bounds: tuple[float, float]) -> TrialSummary:
    n_od = sum(
        1 for p in result.patients
        if scenario.true_p_of(p.combination) > bounds[1]
    )
    if result.mtc is None:
        classification = "none"
        dose = schedule = None
    else:
        classification = classify_probability(scenario.true_p_of(result.mtc), bounds)
        dose, schedule = result.mtc.dose, result.mtc.schedule
    return TrialSummary(
        index=index,
        outcome=result.outcome,
        mtc_dose=dose,
        mtc_schedule=schedule,
        classification=classification,
        n_patients=result.n_patients,
        n_dlts=result.n_dlts,
        n_patients_overdose=n_od,
    )


def _aggregate(summaries: Sequence[TrialSummary], schedule_labels: Sequence[str],
               n_trials: int) -> OperatingCharacteristics:
    def frac(kind: str) -> float:
        return sum(1 for s in summaries if s.classification == kind) / n_trials

    return OperatingCharacteristics(
        n_trials=n_trials,
        p_select_tt=frac(TARGET),
        p_select_od=frac(OVERDOSING),
        p_select_ud=frac(UNDERDOSING),
        p_select_none=frac("none"),
        mean_patients_od=sum(s.n_patients_overdose for s in summaries) / n_trials,
        mean_patients_total=sum(s.n_patients for s in summaries) / n_trials,
        mean_dlts=sum(s.n_dlts for s in summaries) / n_trials,
        schedule_selection={
            lbl: sum(1 for s in summaries if s.mtc_schedule == lbl) / n_trials
            for lbl in schedule_labels
        },
    )


def _trial_chunk(args) -> list[TrialSummary]:
    scenario, cfg, gen, prior, params, entropy, indices, bounds = args
    out = []
    for i in indices:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=entropy, spawn_key=(i,)))
        result = run_trial(scenario, cfg, gen, prior, params, rng)
        out.append(summarize_trial(i, result, scenario, bounds))
    return out


def run_study(
    scenario: Scenario,
    cfg: EscalationConfig,
    gen: DltGenerator,
    prior: BetaPrior,
    params: PkParams,
    n_trials: int,
    seed: int,
    n_jobs: int = 1,
) -> StudyResult:
    """Simulate n_trials independent trials and aggregate operating characteristics.

    Per-trial RNG streams are spawned from (seed, trial index), so results do
    not depend on n_jobs and trials may run in parallel without correlation.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    bounds = cfg.interval
    labels = [lbl for lbl, _ in scenario.grid.schedules]
    indices = list(range(n_trials))
    if n_jobs > 1:
        chunks = [indices[i::n_jobs] for i in range(n_jobs)]
        args = [(scenario, cfg, gen, prior, params, seed, chunk, bounds) for chunk in chunks if chunk]
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_trial_chunk, args))
        summaries = sorted((s for chunk in results for s in chunk), key=lambda s: s.index)
    else:
        summaries = _trial_chunk((scenario, cfg, gen, prior, params, seed, indices, bounds))
    oc = _aggregate(summaries, labels, n_trials)
    return StudyResult(scenario_label=scenario.label, oc=oc, trials=tuple(summaries))
