"""JSON-over-HTTP facade for live trial conduct.

Sessions hold the configuration, the ordered patient records, and a cached
posterior; every mutation bumps a revision counter and appends to a per-
session log file, so a running trial survives process restarts.  Mutations
use optimistic concurrency: a request carrying a stale revision is rejected
with 409 and never applied.
"""

from __future__ import annotations

import json
import math
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field, field_validator

from . import scenarios as catalog
from .escalation import CombinationGrid, EscalationConfig, SelectionStrategy, evaluate_grid
from .inference import (
    BetaPrior,
    InconsistentDataError,
    PatientRecord,
    default_prior,
    fit_posterior,
)
from .pk import PkParams, Regimen, make_exposure

ENV_STORE_DIR = "TITEPK_SESSIONS_DIR"


class PkConfigModel(BaseModel):
    k_e: float = catalog.K_E
    k_eff: float = Field(default_factory=lambda: math.exp(catalog.LOG_K_EFF))
    t_star_hours: float = catalog.T_STAR_HOURS
    ref_dose: float = catalog.REF_DOSE
    ref_every_hours: float = catalog.REF_EVERY_HOURS

    @field_validator("k_e", "k_eff", "t_star_hours", "ref_dose", "ref_every_hours")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v


class ScheduleModel(BaseModel):
    label: str
    every_hours: float

    @field_validator("every_hours")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v


class GridConfigModel(BaseModel):
    doses: list[float] = Field(default_factory=lambda: list(catalog.DOSES))
    schedules: list[ScheduleModel] = Field(
        default_factory=lambda: [
            ScheduleModel(label=lbl, every_hours=period)
            for lbl, period in catalog.SCHEDULE_EVERY_HOURS
        ]
    )


class PriorConfigModel(BaseModel):
    p_ref: float = catalog.PRIOR_P_REF
    sigma: float = catalog.PRIOR_SIGMA
    mu: float | None = None

    @field_validator("sigma")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v

    @field_validator("p_ref")
    @classmethod
    def _probability(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError("must be in (0, 1)")
        return v


class EscalationConfigModel(BaseModel):
    bound: float = 0.25
    interval: tuple[float, float] = (0.20, 0.40)
    target_confidence: float = 0.50
    min_patients_at_mtc: int = 9
    min_patients_total_fallback: int = 21
    max_patients: int = 60
    strategy: str = SelectionStrategy.HIGHEST_ELIGIBLE_EXPOSURE.value
    no_skip: bool = True
    cohort_size: int = 1

    @field_validator("bound")
    @classmethod
    def _probability(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError("must be in (0, 1)")
        return v

    @field_validator("strategy")
    @classmethod
    def _known(cls, v: str) -> str:
        SelectionStrategy(v)
        return v


class SessionConfigModel(BaseModel):
    pk: PkConfigModel = Field(default_factory=PkConfigModel)
    grid: GridConfigModel = Field(default_factory=GridConfigModel)
    prior: PriorConfigModel = Field(default_factory=PriorConfigModel)
    escalation: EscalationConfigModel = Field(default_factory=EscalationConfigModel)


class DecisionRowModel(BaseModel):
    dose: float
    schedule: str
    freq: float
    auc_cycle1: float
    p_underdosing: float
    p_target: float
    p_overdosing: float
    ewoc_ok: bool
    mean_dlt_prob: float | None = None


class RecommendationModel(BaseModel):
    dose: float
    schedule: str
    freq: float


class IntervalModel(BaseModel):
    lower: float
    upper: float


class DecisionTableModel(BaseModel):
    """Wire format of a decision table; the CLI emits the same shape."""

    bound: float
    interval: IntervalModel
    rows: list[DecisionRowModel]
    recommendation: RecommendationModel | None
    rationale: str


class DecisionResponseModel(BaseModel):
    session_id: str
    revision: int
    decision: DecisionTableModel


class RecordModel(BaseModel):
    dose: float
    freq: float  # administrations per hour
    dlt: bool
    time_hours: float

    @field_validator("dose", "freq", "time_hours")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v


class PostRecordModel(BaseModel):
    record: RecordModel
    revision: int


class WhatIfModel(BaseModel):
    records: list[RecordModel]


@dataclass
class Session:
    session_id: str
    config: SessionConfigModel
    params: PkParams
    grid: CombinationGrid
    prior: BetaPrior
    escalation: EscalationConfig
    records: list[RecordModel] = field(default_factory=list)
    revision: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)
    _decision_cache: dict | None = None

    def patient_records(self, extra: list[RecordModel] = ()) -> list[PatientRecord]:
        out = []
        for rec in list(self.records) + list(extra):
            regimen = Regimen.regular(rec.dose, rec.freq, self.params.t_star)
            if rec.dlt:
                out.append(PatientRecord.event(regimen, rec.time_hours))
            else:
                out.append(PatientRecord.censored(regimen, rec.time_hours))
        return out

    def decision_payload(self, extra: list[RecordModel] = ()) -> dict:
        if not extra and self._decision_cache is not None:
            return self._decision_cache
        posterior = fit_posterior(self.patient_records(extra), self.prior, self.params)
        table = evaluate_grid(
            posterior, self.grid, self.escalation, self.params,
            rng=np.random.default_rng(0), with_mean=True,
        )
        payload = table.to_dict()
        if not extra:
            self._decision_cache = payload
        return payload


def _build_session(session_id: str, config: SessionConfigModel) -> Session:
    params = PkParams(
        k_e=config.pk.k_e,
        k_eff=config.pk.k_eff,
        t_star=config.pk.t_star_hours,
        ref_dose=config.pk.ref_dose,
        ref_freq=1.0 / config.pk.ref_every_hours,
    )
    grid = CombinationGrid(
        tuple(config.grid.doses),
        tuple((s.label, 1.0 / s.every_hours) for s in config.grid.schedules),
        params,
    )
    if config.prior.mu is not None:
        prior = BetaPrior(mu=config.prior.mu, sigma=config.prior.sigma)
    else:
        prior = default_prior(params, p_ref=config.prior.p_ref, sigma=config.prior.sigma)
    esc = EscalationConfig(
        feasibility_bound=config.escalation.bound,
        interval=config.escalation.interval,
        target_confidence=config.escalation.target_confidence,
        min_patients_at_mtc=config.escalation.min_patients_at_mtc,
        min_patients_total_fallback=config.escalation.min_patients_total_fallback,
        max_patients=config.escalation.max_patients,
        selection_strategy=SelectionStrategy(config.escalation.strategy),
        no_skip=config.escalation.no_skip,
        cohort_size=config.escalation.cohort_size,
    )
    return Session(session_id=session_id, config=config, params=params,
                   grid=grid, prior=prior, escalation=esc)


class SessionStore:
    """File-backed session registry: one append-only JSONL log per session."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self._sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()

    def _log_path(self, session_id: str) -> Path:
        return self.directory / f"{session_id}.jsonl"

    def _append(self, session_id: str, entry: dict) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        with open(self._log_path(session_id), "a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def create(self, config: SessionConfigModel) -> Session:
        session_id = uuid.uuid4().hex
        session = _build_session(session_id, config)
        with self._registry_lock:
            self._sessions[session_id] = session
        self._append(session_id, {"type": "config", "config": config.model_dump()})
        return session

    def _replay(self, session_id: str) -> Session | None:
        path = self._log_path(session_id)
        if not path.exists():
            return None
        session: Session | None = None
        with open(path) as fh:
            for line in fh:
                entry = json.loads(line)
                if entry["type"] == "config":
                    config = SessionConfigModel.model_validate(entry["config"])
                    session = _build_session(session_id, config)
                elif session is not None and entry["type"] == "add":
                    session.records.append(RecordModel.model_validate(entry["record"]))
                    session.revision += 1
                elif session is not None and entry["type"] == "delete":
                    del session.records[entry["index"]]
                    session.revision += 1
        return session

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            session = self._sessions.get(session_id)
            if session is None:
                session = self._replay(session_id)
                if session is None:
                    raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
                self._sessions[session_id] = session
        return session

    def append_add(self, session: Session, record: RecordModel) -> None:
        self._append(session.session_id, {"type": "add", "record": record.model_dump()})

    def append_delete(self, session: Session, index: int) -> None:
        self._append(session.session_id, {"type": "delete", "index": index})


def _validate_record_against(session: Session, record: RecordModel, where: str) -> None:
    if record.time_hours > session.params.t_star:
        raise HTTPException(
            status_code=422,
            detail=[{
                "loc": [where, "time_hours"],
                "msg": f"time_hours {record.time_hours:g} exceeds cycle length "
                       f"{session.params.t_star:g}",
            }],
        )


def create_app(store_dir: str | Path | None = None) -> FastAPI:
    directory = Path(store_dir or os.environ.get(ENV_STORE_DIR, ".titepk-sessions"))
    store = SessionStore(directory)
    app = FastAPI(title="titepk trial service")
    app.state.store = store

    @app.post("/sessions", status_code=201, response_model=DecisionResponseModel)
    def create_session(config: SessionConfigModel):
        try:
            session = store.create(config)
        except ValueError as err:
            raise HTTPException(status_code=422, detail=str(err))
        return {
            "session_id": session.session_id,
            "revision": session.revision,
            "decision": session.decision_payload(),
        }

    @app.get("/sessions/{session_id}/decision", response_model=DecisionResponseModel)
    def get_decision(session_id: str):
        session = store.get(session_id)
        with session.lock:
            return {
                "session_id": session.session_id,
                "revision": session.revision,
                "decision": session.decision_payload(),
            }

    @app.get("/sessions/{session_id}/records")
    def get_records(session_id: str):
        session = store.get(session_id)
        with session.lock:
            return {
                "session_id": session.session_id,
                "revision": session.revision,
                "records": [r.model_dump() for r in session.records],
            }

    @app.post("/sessions/{session_id}/records", response_model=DecisionResponseModel)
    def post_record(session_id: str, body: PostRecordModel):
        session = store.get(session_id)
        with session.lock:
            if body.revision != session.revision:
                raise HTTPException(
                    status_code=409,
                    detail=f"stale revision {body.revision}; current is {session.revision}",
                )
            _validate_record_against(session, body.record, "record")
            try:
                payload = session.decision_payload(extra=[body.record])
            except InconsistentDataError as err:
                raise HTTPException(status_code=422,
                                    detail=[{"loc": ["record"], "msg": str(err)}])
            session.records.append(body.record)
            session.revision += 1
            session._decision_cache = payload
            store.append_add(session, body.record)
            return {"session_id": session_id, "revision": session.revision, "decision": payload}

    @app.delete("/sessions/{session_id}/records/{index}", response_model=DecisionResponseModel)
    def delete_record(session_id: str, index: int, revision: int = Query(...)):
        session = store.get(session_id)
        with session.lock:
            if revision != session.revision:
                raise HTTPException(
                    status_code=409,
                    detail=f"stale revision {revision}; current is {session.revision}",
                )
            if not 0 <= index < len(session.records):
                raise HTTPException(status_code=422, detail=[{
                    "loc": ["index"], "msg": f"no record at index {index}",
                }])
            del session.records[index]
            session.revision += 1
            session._decision_cache = None
            store.append_delete(session, index)
            return {
                "session_id": session_id,
                "revision": session.revision,
                "decision": session.decision_payload(),
            }

    @app.post("/sessions/{session_id}/what-if", response_model=DecisionResponseModel)
    def what_if(session_id: str, body: WhatIfModel):
        session = store.get(session_id)
        with session.lock:
            for rec in body.records:
                _validate_record_against(session, rec, "records")
            try:
                payload = session.decision_payload(extra=list(body.records))
            except InconsistentDataError as err:
                raise HTTPException(status_code=422,
                                    detail=[{"loc": ["records"], "msg": str(err)}])
            return {"session_id": session_id, "revision": session.revision, "decision": payload}

    @app.get("/sessions/{session_id}/exposure")
    def exposure(session_id: str, dose: float = Query(..., gt=0),
                 freq: float = Query(..., gt=0), points: int = Query(697, ge=2, le=100_000)):
        session = store.get(session_id)
        if freq * session.params.t_star > 50_000:
            raise HTTPException(status_code=422, detail=[{
                "loc": ["freq"],
                "msg": "frequency implies more than 50000 administrations per cycle",
            }])
        regimen = Regimen.regular(dose, freq, session.params.t_star)
        profile = make_exposure(regimen, session.params)
        times = np.linspace(0.0, session.params.t_star, points)
        return {
            "dose": dose,
            "freq": freq,
            "times_hours": [float(t) for t in times],
            "exposure": [float(v) for v in np.asarray(profile.exposure(times))],
            "cumulative_exposure": [float(v) for v in np.asarray(profile.auc(times))],
        }

    return app


app = create_app()
