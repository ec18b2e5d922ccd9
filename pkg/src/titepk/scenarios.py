"""Built-in study constants, the published scenario catalog, and result fixtures.

Everything here is static data: the default kinetic constants and
combination grid of the motivating azacitidine study, the ten simulation
scenarios ("S1".."S10"), and the published operating-characteristic numbers
used as regression anchors.  Data ships as JSON files inside the package;
a checksum recorded at transcription time guards against silent edits.
"""

from __future__ import annotations

import hashlib
import json
import math
from functools import lru_cache
from importlib import resources

import numpy as np

from .escalation import CombinationGrid
from .inference import BetaPrior, default_prior
from .pk import PkParams
from .simulate import Scenario

# Azacitidine-style defaults: 4 h elimination half-life, effect-compartment
# rate e^-0.15 per hour, 28-day cycle, reference = 24 mg every 96 h.
K_E = math.log(2.0) / 4.0
LOG_K_EFF = -0.15
K_EFF = math.exp(LOG_K_EFF)
T_STAR_HOURS = 672.0
REF_DOSE = 24.0
REF_EVERY_HOURS = 96.0
DOSES = (8.0, 16.0, 24.0)
SCHEDULE_EVERY_HOURS = (("A", 192.0), ("B", 96.0), ("C", 48.0), ("D", 24.0))
PRIOR_P_REF = 0.3
PRIOR_SIGMA = 1.75

_FIXTURE_SHA256 = {
    "scenarios.json": "867da312e00de35847c8eea323a739bb9c43d9d29f497adf0ddddd86da79a8f3",
    "reference_results.json": "8c152c6afe798d0af0973e9fac7e1e44043ff58a0362eae8c21c5404e9754781",
}


def _load_fixture(name: str) -> dict:
    raw = resources.files("titepk.data").joinpath(name).read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != _FIXTURE_SHA256[name]:
        raise RuntimeError(
            f"fixture {name} checksum mismatch: {digest} (expected {_FIXTURE_SHA256[name]})"
        )
    return json.loads(raw)


@lru_cache(maxsize=None)
def _scenario_data() -> dict:
    return _load_fixture("scenarios.json")


@lru_cache(maxsize=None)
def _reference_data() -> dict:
    return _load_fixture("reference_results.json")


def vidaza_params() -> PkParams:
    return PkParams(
        k_e=K_E,
        k_eff=K_EFF,
        t_star=T_STAR_HOURS,
        ref_dose=REF_DOSE,
        ref_freq=1.0 / REF_EVERY_HOURS,
    )


def vidaza_prior() -> BetaPrior:
    return default_prior(vidaza_params(), p_ref=PRIOR_P_REF, sigma=PRIOR_SIGMA)


@lru_cache(maxsize=8)
def vidaza_grid(params: PkParams | None = None) -> CombinationGrid:
    params = params or vidaza_params()
    schedules = tuple((lbl, 1.0 / period) for lbl, period in SCHEDULE_EVERY_HOURS)
    return CombinationGrid(DOSES, schedules, params)


def scenario_ids() -> tuple[str, ...]:
    return tuple(_scenario_data()["scenarios"].keys())


def load_scenario(scenario_id: str, params: PkParams | None = None) -> Scenario:
    """One of the published scenarios, on the default combination grid."""
    data = _scenario_data()
    try:
        matrix = data["scenarios"][scenario_id]
    except KeyError:
        raise KeyError(
            f"unknown scenario {scenario_id!r}; known ids: {', '.join(scenario_ids())}"
        ) from None
    return Scenario(
        label=scenario_id,
        grid=vidaza_grid(params or vidaza_params()),
        true_p=np.asarray(matrix, dtype=float),
    )


def reference_results(scenario_id: str, method: str, metric: str) -> float:
    """Published number for (scenario, method, metric); raises on absent tuples.

    Methods: 'tite-pk-a25', 'tite-pk-a50', 'pocrm-complete', 'pocrm-partial',
    and generator-qualified robustness rows such as 'tite-pk-a50-uniform'.
    Metrics: p_select_tt / p_select_od / p_select_none, mean_patients_od,
    mean_patients_total, mean_dlts, schedule_A..schedule_D.
    """
    data = _reference_data()
    try:
        return float(data[metric][method][scenario_id])
    except KeyError as err:
        raise KeyError(
            f"no published value for scenario={scenario_id!r} method={method!r} metric={metric!r}"
        ) from err
