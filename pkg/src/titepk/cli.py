"""Command-line entry point: simulation studies, decision tables, exposure curves.

Exit codes: 0 success, 2 usage or validation problem, 1 internal error.
All outputs are pure functions of (inputs, seed); repeated runs produce
byte-identical artifacts.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
from pathlib import Path

import click
import numpy as np

from . import scenarios as catalog
from .escalation import (
    CombinationGrid,
    DecisionTable,
    EscalationConfig,
    SelectionStrategy,
    evaluate_grid,
)
from .inference import (
    BetaPrior,
    PatientRecord,
    default_prior,
    fit_posterior,
)
from .pk import PkParams, Regimen, make_exposure
from .simulate import DltGenerator, Scenario, StudyResult, parse_scenario_table, run_study

ENV_OUT_DIR = "TITEPK_OUT"


class ValidationFailure(click.UsageError):
    """User-facing input problem; click maps it to exit code 2."""


def _json_dumps(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ValidationFailure(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise ValidationFailure(f"config file {path} is not valid JSON: {err}")
    if not isinstance(cfg, dict):
        raise ValidationFailure(f"config file {path} must hold a JSON object")
    return cfg


def _params_from_config(cfg: dict) -> PkParams:
    pk = cfg.get("pk", {})
    if "k_eff" in pk and "log_k_eff" in pk:
        raise ValidationFailure("pk config: give either k_eff or log_k_eff, not both")
    k_eff = pk.get("k_eff")
    if k_eff is None:
        k_eff = math.exp(pk.get("log_k_eff", catalog.LOG_K_EFF))
    try:
        return PkParams(
            k_e=float(pk.get("k_e", catalog.K_E)),
            k_eff=float(k_eff),
            t_star=float(pk.get("t_star_hours", catalog.T_STAR_HOURS)),
            ref_dose=float(pk.get("ref_dose", catalog.REF_DOSE)),
            ref_freq=1.0 / float(pk.get("ref_every_hours", catalog.REF_EVERY_HOURS)),
        )
    except (TypeError, ValueError) as err:
        raise ValidationFailure(f"pk config invalid: {err}")


def _prior_from_config(cfg: dict) -> BetaPrior:
    pr = cfg.get("prior", {})
    try:
        sigma = float(pr.get("sigma", catalog.PRIOR_SIGMA))
        if "mu" in pr:
            return BetaPrior(mu=float(pr["mu"]), sigma=sigma)
        return default_prior(None, p_ref=float(pr.get("p_ref", catalog.PRIOR_P_REF)), sigma=sigma)
    except (TypeError, ValueError) as err:
        raise ValidationFailure(f"prior config invalid: {err}")


def _grid_from_config(cfg: dict, params: PkParams) -> CombinationGrid:
    grid_cfg = cfg.get("grid")
    if grid_cfg is None:
        return CombinationGrid(
            catalog.DOSES,
            tuple((lbl, 1.0 / period) for lbl, period in catalog.SCHEDULE_EVERY_HOURS),
            params,
        )
    try:
        doses = tuple(float(d) for d in grid_cfg["doses"])
        schedules = tuple(
            (str(s["label"]), 1.0 / float(s["every_hours"])) for s in grid_cfg["schedules"]
        )
        return CombinationGrid(doses, schedules, params)
    except (KeyError, TypeError, ValueError) as err:
        raise ValidationFailure(f"grid config invalid: {err}")


def _escalation_from_config(cfg: dict, bound: float | None, strategy: str | None) -> EscalationConfig:
    esc = dict(cfg.get("escalation", {}))
    if bound is None:
        bound = float(cfg.get("bound", esc.pop("bound", 0.25)))
    else:
        esc.pop("bound", None)
    if strategy is None:
        strategy = cfg.get("strategy", esc.pop("strategy", SelectionStrategy.HIGHEST_ELIGIBLE_EXPOSURE.value))
    else:
        esc.pop("strategy", None)
    interval = esc.pop("interval", (0.20, 0.40))
    try:
        return EscalationConfig(
            feasibility_bound=float(bound),
            interval=(float(interval[0]), float(interval[1])),
            target_confidence=float(esc.pop("target_confidence", 0.50)),
            min_patients_at_mtc=int(esc.pop("min_patients_at_mtc", 9)),
            min_patients_total_fallback=int(esc.pop("min_patients_total_fallback", 21)),
            max_patients=int(esc.pop("max_patients", 60)),
            selection_strategy=SelectionStrategy(strategy),
            no_skip=bool(esc.pop("no_skip", True)),
            cohort_size=int(esc.pop("cohort_size", 1)),
        )
    except ValueError as err:
        raise ValidationFailure(f"escalation config invalid: {err}")


def _scenario_from_config(cfg: dict, scenario_opt: str | None, table_path: str | None,
                          params: PkParams) -> Scenario:
    if table_path is not None:
        try:
            text = Path(table_path).read_text()
        except OSError as err:
            raise ValidationFailure(f"cannot read scenario table: {err}")
        default_freqs = {lbl: 1.0 / period for lbl, period in catalog.SCHEDULE_EVERY_HOURS}
        try:
            doses, schedules, true_p, label = parse_scenario_table(
                text, label=Path(table_path).stem, default_freqs=default_freqs
            )
            grid = CombinationGrid(doses, schedules, params)
            return Scenario(label=label, grid=grid, true_p=true_p)
        except ValueError as err:
            raise ValidationFailure(f"scenario table invalid: {err}")
    spec = scenario_opt if scenario_opt is not None else cfg.get("scenario")
    if spec is None:
        raise ValidationFailure("missing scenario: give --scenario, --scenario-table, or a config 'scenario' field")
    if isinstance(spec, str):
        try:
            return catalog.load_scenario(spec, params)
        except KeyError as err:
            raise ValidationFailure(str(err.args[0]))
    try:
        grid = CombinationGrid(
            tuple(float(d) for d in spec["doses"]),
            tuple((str(s["label"]), 1.0 / float(s["every_hours"])) for s in spec["schedules"]),
            params,
        )
        return Scenario(label=str(spec.get("label", "inline")), grid=grid,
                        true_p=np.asarray(spec["true_p"], dtype=float))
    except (KeyError, TypeError, ValueError) as err:
        raise ValidationFailure(f"inline scenario invalid: {err}")


def _resolve_out(out: str | None, default_name: str) -> Path:
    if out is not None:
        return Path(out)
    env = os.environ.get(ENV_OUT_DIR)
    if env:
        return Path(env) / default_name
    return Path(default_name)


def _oc_block(study: StudyResult, cfg: EscalationConfig, gen: DltGenerator,
              n_trials: int, seed: int) -> str:
    oc = study.oc
    lines = [
        f"Scenario {study.scenario_label} | a={cfg.feasibility_bound:g} | "
        f"strategy={cfg.selection_strategy.value} | generator={gen.value} | "
        f"{n_trials} trials | seed {seed}",
        "-" * 72,
        f"P(select MTC in targeted toxicity interval)   {oc.p_select_tt:6.3f}",
        f"P(select MTC in overdosing interval)          {oc.p_select_od:6.3f}",
        f"P(select MTC in underdosing interval)         {oc.p_select_ud:6.3f}",
        f"P(select no combination)                      {oc.p_select_none:6.3f}",
        f"Mean patients enrolled in overdosing interval {oc.mean_patients_od:6.2f}",
        f"Mean patients enrolled in total               {oc.mean_patients_total:6.2f}",
        f"Mean DLTs observed                            {oc.mean_dlts:6.2f}",
        "Schedule selected as part of MTC:  "
        + " | ".join(f"{k} {v:.3f}" for k, v in oc.schedule_selection.items()),
    ]
    return "\n".join(lines) + "\n"


def _write_study_csv(study: StudyResult, outdir: Path) -> None:
    oc = study.oc.to_dict()
    sched = oc.pop("schedule_selection")
    for lbl, val in sched.items():
        oc[f"schedule_{lbl}"] = val
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(oc))
    writer.writeheader()
    writer.writerow(oc)
    _write_text(outdir / "operating_characteristics.csv", buf.getvalue())

    buf = io.StringIO()
    fields = ["trial", "outcome", "mtc_dose", "mtc_schedule", "classification",
              "n_patients", "n_dlts", "n_patients_overdose"]
    writer = csv.DictWriter(buf, fieldnames=fields)
    writer.writeheader()
    for t in study.trials:
        writer.writerow(t.to_dict())
    _write_text(outdir / "trials.csv", buf.getvalue())


def _decision_csv(table: DecisionTable) -> str:
    buf = io.StringIO()
    fields = ["dose", "schedule", "freq", "auc_cycle1", "p_underdosing", "p_target",
              "p_overdosing", "mean_dlt_prob", "ewoc_ok", "recommended"]
    writer = csv.DictWriter(buf, fieldnames=fields)
    writer.writeheader()
    for row in table.rows:
        record = row.to_dict()
        record["recommended"] = row.combination == table.recommendation
        writer.writerow(record)
    return buf.getvalue()


def _decision_text(table: DecisionTable) -> str:
    lines = [
        f"{'combo':>6s} {'AUC(t*)':>9s} {'P(UD)':>7s} {'P(TT)':>7s} {'P(OD)':>7s} "
        f"{'mean':>7s} {'EWOC':>5s}",
    ]
    for row in table.rows:
        mark = " <- recommended" if row.combination == table.recommendation else ""
        mean = f"{row.mean_dlt_prob:7.3f}" if row.mean_dlt_prob is not None else "      -"
        lines.append(
            f"{row.combination.label:>6s} {row.auc_cycle1:9.4f} {row.p_under:7.3f} "
            f"{row.p_target:7.3f} {row.p_over:7.3f} {mean} {'ok' if row.ewoc_ok else 'no':>5s}{mark}"
        )
    if table.recommendation is None:
        lines.append("recommendation: STOP (all combinations fail the overdose criterion)")
    else:
        lines.append(f"recommendation: {table.recommendation.label}")
    return "\n".join(lines) + "\n"


_COMBO_RE = re.compile(r"^\s*([0-9.]+)\s*[xX/ -]?\s*([A-Za-z]\w*)\s*$")


def _parse_bool(raw: str, row: int, field: str) -> bool:
    val = raw.strip().lower()
    if val in ("1", "true", "yes", "y"):
        return True
    if val in ("0", "false", "no", "n"):
        return False
    raise ValidationFailure(f"record row {row}: {field} must be boolean-like, got {raw!r}")


def read_records_csv(path: str, grid: CombinationGrid, params: PkParams) -> list[PatientRecord]:
    """Patient records from a delimited file; header row required.

    Accepted column sets: (combination, dlt, time_hours),
    (dose, schedule, dlt, time_hours), or (dose, every_hours, dlt, time_hours).
    """
    try:
        fh = open(path, newline="")
    except OSError as err:
        raise ValidationFailure(f"cannot read records: {err}")
    with fh:
        sample = fh.read(4096)
        fh.seek(0)
        try:
            dialect = csv.Sniffer().sniff(sample, delimiters=",;\t") if sample.strip() else csv.excel
        except csv.Error:
            dialect = csv.excel
        reader = csv.DictReader(fh, dialect=dialect)
        if reader.fieldnames is None:
            return []
        cols = {c.strip().lower() for c in reader.fieldnames}
        by_label = {lbl: freq for lbl, freq in grid.schedules}
        records: list[PatientRecord] = []
        for i, raw_row in enumerate(reader, start=1):
            row = {k.strip().lower(): (v or "").strip() for k, v in raw_row.items() if k}
            try:
                if "combination" in cols:
                    m = _COMBO_RE.match(row["combination"])
                    if m is None:
                        raise ValueError(f"cannot parse combination {row['combination']!r}")
                    dose, lbl = float(m.group(1)), m.group(2)
                    if lbl not in by_label:
                        raise ValueError(f"unknown schedule label {lbl!r}")
                    freq = by_label[lbl]
                elif "schedule" in cols:
                    dose = float(row["dose"])
                    lbl = row["schedule"]
                    if lbl not in by_label:
                        raise ValueError(f"unknown schedule label {lbl!r}")
                    freq = by_label[lbl]
                elif "every_hours" in cols:
                    dose = float(row["dose"])
                    freq = 1.0 / float(row["every_hours"])
                else:
                    raise ValueError(
                        "need columns (combination|dose+schedule|dose+every_hours), dlt, time_hours"
                    )
                dlt = _parse_bool(row["dlt"], i, "dlt")
                time_hours = float(row["time_hours"])
            except ValidationFailure:
                raise
            except (KeyError, TypeError, ValueError) as err:
                raise ValidationFailure(f"record row {i}: {err}")
            if not time_hours > 0:
                raise ValidationFailure(f"record row {i}: time_hours must be positive")
            if time_hours > params.t_star:
                raise ValidationFailure(
                    f"record row {i}: time_hours {time_hours:g} exceeds cycle length {params.t_star:g}"
                )
            regimen = Regimen.regular(dose, freq, params.t_star)
            if dlt:
                records.append(PatientRecord.event(regimen, time_hours))
            else:
                records.append(PatientRecord.censored(regimen, time_hours))
        return records


@click.group()
def main() -> None:
    """Dose-schedule escalation with a time-to-event pharmacokinetic safety model."""


@main.command("simulate")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON study configuration; flags override its fields.")
@click.option("--scenario", default=None, help="Built-in scenario id (S1..S10).")
@click.option("--scenario-table", default=None, type=click.Path(),
              help="Plain-text scenario table (rows: schedules, columns: doses).")
@click.option("--bound", type=float, default=None, help="EWOC feasibility bound a.")
@click.option("--strategy", type=click.Choice([s.value for s in SelectionStrategy]), default=None)
@click.option("--generator", type=click.Choice([g.value for g in DltGenerator]), default=None)
@click.option("--trials", type=int, default=None, help="Number of simulated trials.")
@click.option("--seed", type=int, default=None, help="Study seed (per-trial streams are derived).")
@click.option("--jobs", type=int, default=None, help="Worker processes for trial simulation.")
@click.option("--out", default=None, help=f"Output directory (default from ${ENV_OUT_DIR}).")
@click.option("--format", "fmt", type=click.Choice(["json", "csv", "both"]), default="both")
@click.option("--plot/--no-plot", default=True, help="Render summary figures next to the data.")
def cmd_simulate(config_path, scenario, scenario_table, bound, strategy, generator,
                 trials, seed, jobs, out, fmt, plot) -> None:
    """Run a simulation study and write operating characteristics."""
    cfg_file = _load_config(config_path)
    params = _params_from_config(cfg_file)
    prior = _prior_from_config(cfg_file)
    esc = _escalation_from_config(cfg_file, bound, strategy)
    scen = _scenario_from_config(cfg_file, scenario, scenario_table, params)
    gen_name = generator if generator is not None else cfg_file.get("generator", DltGenerator.TITE_PK.value)
    try:
        gen = DltGenerator(gen_name)
    except ValueError:
        raise ValidationFailure(f"unknown generator {gen_name!r}")
    n_trials = int(trials if trials is not None else cfg_file.get("trials", 1000))
    if n_trials < 1:
        raise ValidationFailure("trials must be at least 1")
    study_seed = int(seed if seed is not None else cfg_file.get("seed", 0))
    n_jobs = int(jobs if jobs is not None else cfg_file.get("jobs", 1))

    study = run_study(scen, esc, gen, prior, params, n_trials=n_trials, seed=study_seed, n_jobs=n_jobs)

    outdir = _resolve_out(out, f"study-{scen.label}")
    payload = study.to_dict()
    payload["config"] = {
        "scenario": scen.label,
        "bound": esc.feasibility_bound,
        "strategy": esc.selection_strategy.value,
        "generator": gen.value,
        "trials": n_trials,
        "seed": study_seed,
    }
    if fmt in ("json", "both"):
        _write_text(outdir / "study.json", _json_dumps(payload))
    if fmt in ("csv", "both"):
        _write_study_csv(study, outdir)
    if plot:
        from .plots import render_study_figure

        render_study_figure(study, outdir / "selection.png")
    click.echo(_oc_block(study, esc, gen, n_trials, study_seed), nl=False)
    click.echo(f"wrote {outdir}")


@main.command("recommend")
@click.option("--data", "data_path", type=click.Path(), required=True,
              help="Patient record file (header row required).")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--bound", type=float, default=None)
@click.option("--strategy", type=click.Choice([s.value for s in SelectionStrategy]), default=None)
@click.option("--seed", type=int, default=0, help="Seed for exact-tie breaking.")
@click.option("--out", default=None, help="Optional output directory.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv", "both"]), default="both")
@click.option("--plot/--no-plot", default=True)
def cmd_recommend(data_path, config_path, bound, strategy, seed, out, fmt, plot) -> None:
    """Fit the posterior to observed records and print the decision table."""
    cfg_file = _load_config(config_path)
    params = _params_from_config(cfg_file)
    prior = _prior_from_config(cfg_file)
    esc = _escalation_from_config(cfg_file, bound, strategy)
    grid = _grid_from_config(cfg_file, params)
    records = read_records_csv(data_path, grid, params)
    posterior = fit_posterior(records, prior, params)
    table = evaluate_grid(posterior, grid, esc, params,
                          rng=np.random.default_rng(seed), with_mean=True)
    click.echo(_decision_text(table), nl=False)
    click.echo(_json_dumps(table.to_dict()), nl=False)
    if out is not None:
        outdir = Path(out)
        if fmt in ("json", "both"):
            _write_text(outdir / "decision.json", _json_dumps(table.to_dict()))
        if fmt in ("csv", "both"):
            _write_text(outdir / "decision.csv", _decision_csv(table))
        if plot:
            from .plots import render_decision_figure

            render_decision_figure(table, outdir / "decision.png")
        click.echo(f"wrote {outdir}")


@main.command("exposure")
@click.option("--dose", type=float, required=True, help="Amount per administration.")
@click.option("--every-hours", type=float, default=None, help="Hours between administrations.")
@click.option("--times", default=None, help="Explicit dose times in hours, comma separated.")
@click.option("--horizon-hours", type=float, default=None, help="Sampling window (default t*).")
@click.option("--resolution", type=int, default=2049, help="Number of samples.")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", default=None, help="Output directory.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv", "both"]), default="both")
@click.option("--plot/--no-plot", default=True)
def cmd_exposure(dose, every_hours, times, horizon_hours, resolution, config_path, out, fmt, plot) -> None:
    """Sample E(t) and its running integral for one regimen."""
    cfg_file = _load_config(config_path)
    params = _params_from_config(cfg_file)
    horizon = params.t_star if horizon_hours is None else float(horizon_hours)
    if horizon < 0:
        raise ValidationFailure("horizon must be non-negative")
    if resolution < 1:
        raise ValidationFailure("resolution must be at least 1")
    if (every_hours is None) == (times is None):
        raise ValidationFailure("give exactly one of --every-hours or --times")

    if horizon == 0.0:
        grid_t = np.asarray([0.0])
        exposure = np.asarray([0.0])
        cumulative = np.asarray([0.0])
        label = f"{dose:g} (zero horizon)"
    else:
        try:
            if times is not None:
                dose_times = tuple(float(v) for v in times.split(","))
                regimen = Regimen(dose, dose_times)
            else:
                if every_hours <= 0:
                    raise ValueError("every-hours must be positive")
                regimen = Regimen.regular(dose, 1.0 / every_hours, horizon)
        except ValueError as err:
            raise ValidationFailure(f"invalid regimen: {err}")
        profile = make_exposure(regimen, params)
        grid_t = np.linspace(0.0, horizon, resolution)
        exposure = np.asarray(profile.exposure(grid_t))
        cumulative = np.asarray(profile.auc(grid_t))
        label = f"{dose:g} every {every_hours:g} h" if times is None else f"{dose:g} at {times}"

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["t_hours", "exposure", "cumulative_exposure"])
    for row in zip(grid_t, exposure, cumulative):
        writer.writerow([repr(float(v)) for v in row])
    payload = {
        "dose": dose,
        "times_hours": [float(v) for v in grid_t],
        "exposure": [float(v) for v in exposure],
        "cumulative_exposure": [float(v) for v in cumulative],
    }
    click.echo(f"{label}: final cumulative exposure {float(cumulative[-1]):.6f}")
    if out is not None:
        outdir = Path(out)
        if fmt in ("json", "both"):
            _write_text(outdir / "exposure.json", _json_dumps(payload))
        if fmt in ("csv", "both"):
            _write_text(outdir / "exposure.csv", buf.getvalue())
        if plot:
            from .plots import render_exposure_figure

            render_exposure_figure(grid_t, exposure, cumulative, outdir / "exposure.png", title=label)
        click.echo(f"wrote {outdir}")
    else:
        click.echo(buf.getvalue(), nl=False)


if __name__ == "__main__":
    main()
