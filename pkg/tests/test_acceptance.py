"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s``.  The Monte-Carlo
criteria share cached 1000-trial studies keyed by (scenario, bound,
generator, strategy); per-trial RNG streams derive from a fixed study seed,
so the whole suite is deterministic.
"""

import math
import os
import time
from functools import lru_cache

import numpy as np
import pytest

from titepk import (
    BetaPrior,
    DltGenerator,
    EscalationConfig,
    PatientRecord,
    Regimen,
    SelectionStrategy,
    auc_ceff,
    concentration_eff,
    evaluate_grid,
    fit_posterior,
    make_exposure,
    metropolis_sample,
    run_study,
    sample_dlt_many,
)
from titepk.inference import interval_log_beta_thresholds
from titepk.scenarios import load_scenario, reference_results, vidaza_grid, vidaza_params, vidaza_prior

from oracles import batch_means_se, rk4_effect_compartment, trapezoid_auc

SEED = 20260809
N_TRIALS = 1000
N_JOBS = min(4, os.cpu_count() or 1)

PARAMS = vidaza_params()
PRIOR = vidaza_prior()
GRID = vidaza_grid(PARAMS)

_study_seconds: dict[tuple, float] = {}


def _report(number: int, name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {number} ({name}): {'PASS' if ok else 'FAIL'} -- {detail}")
    assert ok, f"criterion {number} {name}: {detail}"


@lru_cache(maxsize=None)
def study(scenario_id: str, bound: float, gen: DltGenerator,
          strategy: SelectionStrategy = SelectionStrategy.HIGHEST_ELIGIBLE_EXPOSURE):
    scenario = load_scenario(scenario_id, PARAMS)
    cfg = EscalationConfig(feasibility_bound=bound, selection_strategy=strategy)
    start = time.perf_counter()
    result = run_study(scenario, cfg, gen, PRIOR, PARAMS,
                       n_trials=N_TRIALS, seed=SEED, n_jobs=N_JOBS)
    _study_seconds[(scenario_id, bound, gen.value, strategy.value)] = time.perf_counter() - start
    return result


def test_criterion_1_pk_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst_conc = 0.0
    worst_auc = 0.0
    for _ in range(5):
        dose = float(rng.uniform(4.0, 30.0))
        gaps = rng.uniform(4.0, 48.0, size=int(rng.integers(5, 11)))
        times = tuple(np.concatenate(([0.0], np.cumsum(gaps[:-1]))))
        regimen = Regimen(dose, times)
        horizon = times[-1] + 24.0
        queries = np.linspace(0.25, horizon, 100)
        oracle = rk4_effect_compartment(regimen, PARAMS, queries, max_step=0.01)
        closed = np.asarray(concentration_eff(regimen, PARAMS, queries))
        worst_conc = max(worst_conc, float(np.max(np.abs(closed - oracle) / np.abs(oracle))))
        for t_end in (24.0, 168.0, 672.0):
            trap = trapezoid_auc(
                lambda ts: np.asarray(concentration_eff(regimen, PARAMS, ts)), t_end, step=0.01
            )
            closed_auc = auc_ceff(regimen, PARAMS, t_end)
            worst_auc = max(worst_auc, abs(closed_auc - trap) / trap)
    elapsed = time.perf_counter() - start
    ok = worst_conc < 1e-6 and worst_auc < 1e-5 and elapsed < 10.0
    _report(1, "pk-oracles", ok,
            f"max conc rel err {worst_conc:.2e} (<1e-6), max auc rel err {worst_auc:.2e} "
            f"(<1e-5), {elapsed:.1f}s (<10s)")


def test_criterion_2_reference_normalization():
    ref = Regimen.regular(PARAMS.ref_dose, PARAMS.ref_freq, PARAMS.t_star)
    value = make_exposure(ref, PARAMS).auc(PARAMS.t_star)
    ok = abs(value - 1.0) < 1e-9
    _report(2, "normalization", ok, f"AUC_E(t*|ref) = {value:.12f} (|err| < 1e-9)")


def test_criterion_3_posterior_vs_metropolis():
    start = time.perf_counter()
    rng = np.random.default_rng(SEED + 1)
    n_checks = 0
    worst_ratio = 0.0
    for ds in range(20):
        n_pat = int(rng.integers(1, 31))
        records = []
        for _ in range(n_pat):
            regimen = GRID.regimens[int(rng.integers(len(GRID.regimens)))]
            if rng.random() < 0.3:
                records.append(PatientRecord.event(regimen, float(PARAMS.t_star * (1 - rng.random()))))
            elif rng.random() < 0.15:
                records.append(PatientRecord.censored(regimen, float(PARAMS.t_star * (1 - rng.random()))))
            else:
                records.append(PatientRecord.censored(regimen, PARAMS.t_star))
        posterior = fit_posterior(records, PRIOR, PARAMS)
        draws = metropolis_sample(records, PRIOR, PARAMS, n_draws=50_000,
                                  n_burnin=5_000, seed=1000 + ds)
        for combo_idx in rng.choice(len(GRID.regimens), size=3, replace=False):
            auc = float(GRID.auc_cycle1[combo_idx])
            lo, hi = interval_log_beta_thresholds(auc, (0.2, 0.4))
            pieces = {
                "under": ((draws <= lo).astype(float), posterior.cdf(lo)),
                "target": (((draws > lo) & (draws <= hi)).astype(float),
                           posterior.cdf(hi) - posterior.cdf(lo)),
                "over": ((draws > hi).astype(float), 1.0 - posterior.cdf(hi)),
            }
            for indicator, quad in pieces.values():
                se = batch_means_se(indicator, p_ref=max(quad, indicator.mean()))
                ratio = abs(quad - indicator.mean()) / (3 * se)
                worst_ratio = max(worst_ratio, ratio)
                n_checks += 1
    elapsed = time.perf_counter() - start
    ok = worst_ratio <= 1.0 and elapsed < 120.0
    _report(3, "posterior-oracle", ok,
            f"{n_checks} interval probabilities, worst |diff|/(3*SE) = {worst_ratio:.2f} "
            f"(<=1), {elapsed:.0f}s (<120s)")


def test_criterion_4_generator_marginals():
    scenario = load_scenario("S1", PARAMS)
    n = 100_000
    rng = np.random.default_rng(SEED + 2)
    worst = 0.0
    for gen in DltGenerator:
        for idx, combo in enumerate(GRID.combinations):
            true_p = scenario.true_p_of(combo)
            events, _ = sample_dlt_many(gen, true_p, GRID.regimens[idx], PARAMS, rng, n)
            se = math.sqrt(true_p * (1 - true_p) / n)
            worst = max(worst, abs(events.mean() - true_p) / (3 * se))
    ok = worst <= 1.0
    _report(4, "generator-marginals", ok,
            f"4 generators x 12 combinations x {n} draws, worst |diff|/(3*sigma) = {worst:.2f} (<=1)")


def test_criterion_5_ewoc_set_properties():
    rng = np.random.default_rng(SEED + 3)
    order = np.argsort(GRID.auc_cycle1)
    strict_cfg = EscalationConfig(feasibility_bound=0.25)
    loose_cfg = EscalationConfig(feasibility_bound=0.50)
    violations = 0
    for _ in range(1000):
        prior = BetaPrior(rng.uniform(-4.0, 2.0), rng.uniform(0.2, 3.0))
        if rng.random() < 0.25:
            records = []
            for _ in range(int(rng.integers(1, 6))):
                regimen = GRID.regimens[int(rng.integers(len(GRID.regimens)))]
                if rng.random() < 0.4:
                    records.append(PatientRecord.event(regimen, float(672 * (1 - rng.random()))))
                else:
                    records.append(PatientRecord.censored(regimen, 672.0))
            posterior = fit_posterior(records, prior, PARAMS, grid_size=401)
        else:
            posterior = fit_posterior([], prior, PARAMS, grid_size=401)
        strict = evaluate_grid(posterior, GRID, strict_cfg, PARAMS)
        loose = evaluate_grid(posterior, GRID, loose_cfg, PARAMS)
        for table in (strict, loose):
            flags = [table.rows[i].ewoc_ok for i in order]
            blocked = False
            for flag in flags:
                blocked = blocked or not flag
                if blocked and flag:
                    violations += 1
        for s_row, l_row in zip(strict.rows, loose.rows):
            if s_row.ewoc_ok and not l_row.ewoc_ok:
                violations += 1
    ok = violations == 0
    _report(5, "ewoc-set-properties", ok,
            f"1000 random posteriors, {violations} monotonicity/inclusion violations (exact)")


def test_criterion_6_scenario2_early_stopping():
    oc = study("S2", 0.25, DltGenerator.TITE_PK).oc
    ok = oc.p_select_none >= 0.85 and oc.mean_patients_total <= 6.0
    _report(6, "S2-early-stop", ok,
            f"p_select_none = {oc.p_select_none:.3f} (>=0.85, published 0.94), "
            f"mean patients = {oc.mean_patients_total:.2f} (<=6, published 3.6)")


def test_criterion_7_no_overdose_selection_when_none_exists():
    details = []
    ok = True
    for sid in ("S1", "S6"):
        for bound in (0.25, 0.50):
            oc = study(sid, bound, DltGenerator.TITE_PK).oc
            details.append(f"{sid}/a={bound:g}: od={oc.p_select_od:g}, n_od={oc.mean_patients_od:g}")
            ok = ok and oc.p_select_od == 0.0 and oc.mean_patients_od == 0.0
    _report(7, "no-overdose-exists", ok, "; ".join(details) + " (all exactly 0)")


def test_criterion_8_published_selection_probabilities():
    details = []
    ok = True
    for sid in ("S1", "S3"):
        target = reference_results(sid, "tite-pk-a50", "p_select_tt")
        default = SelectionStrategy.HIGHEST_ELIGIBLE_EXPOSURE
        deltas = {default: abs(study(sid, 0.50, DltGenerator.TITE_PK, default).oc.p_select_tt - target)}
        if deltas[default] <= 0.10:
            details.append(f"{sid}: default strategy off by {deltas[default]:.3f} (<=0.10 of {target})")
            continue
        for strategy in (SelectionStrategy.MAX_TARGET_PROBABILITY,
                         SelectionStrategy.LOWEST_ELIGIBLE_EXPOSURE):
            oc = study(sid, 0.50, DltGenerator.TITE_PK, strategy).oc
            deltas[strategy] = abs(oc.p_select_tt - target)
        closest = min(deltas, key=deltas.get)
        details.append(
            f"{sid}: default off by {deltas[default]:.3f} (>0.10); closest strategy "
            f"{closest.value} off by {deltas[closest]:.3f} "
            f"(deltas: {', '.join(f'{k.value}={v:.3f}' for k, v in deltas.items())})"
        )
        ok = ok and min(deltas.values()) <= 0.15
    _report(8, "published-selection", ok, "; ".join(details))


def test_criterion_9_robustness_across_generators():
    details = []
    ok = True
    for i in range(1, 8):
        sid = f"S{i}"
        tts = []
        totals = []
        for gen in DltGenerator:
            oc = study(sid, 0.50, gen).oc
            tts.append(oc.p_select_tt)
            totals.append(oc.mean_patients_total)
        tt_spread = max(tts) - min(tts)
        total_spread = max(totals) - min(totals)
        details.append(f"{sid}: d_tt={tt_spread:.3f}, d_n={total_spread:.2f}")
        ok = ok and tt_spread <= 0.08 and total_spread <= 1.5
    _report(9, "generator-robustness", ok,
            "; ".join(details) + " (tt spread <= 0.08, patient spread <= 1.5)")


def test_criterion_10_monotone_safety_in_feasibility_bound():
    details = []
    ok = True
    for i in range(1, 11):
        sid = f"S{i}"
        conservative = study(sid, 0.25, DltGenerator.TITE_PK).oc
        aggressive = study(sid, 0.50, DltGenerator.TITE_PK).oc
        od_ok = conservative.p_select_od <= aggressive.p_select_od
        dlt_ok = conservative.mean_dlts <= aggressive.mean_dlts + 0.3
        details.append(
            f"{sid}: od {conservative.p_select_od:.2f}<={aggressive.p_select_od:.2f}"
            f"{'' if od_ok else '!'} dlt {conservative.mean_dlts:.2f}"
            f"<={aggressive.mean_dlts:.2f}+0.3{'' if dlt_ok else '!'}"
        )
        ok = ok and od_ok and dlt_ok
    _report(10, "monotone-safety", ok, "; ".join(details))


def test_study_runtime_budget():
    # every cached study must have completed well inside the desk-scale budget
    if not _study_seconds:
        pytest.skip("no studies were run")
    slowest = max(_study_seconds.values())
    assert slowest < 300.0, f"slowest study took {slowest:.0f}s"
    print(f"study runtime: {len(_study_seconds)} studies, slowest {slowest:.0f}s (<300s)")
