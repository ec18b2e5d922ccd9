"""Closed-form pseudo-PK: effect-compartment concentration and exposure.

Drug is administered as instantaneous boluses into a central compartment
with first-order elimination (rate ``k_e``, unit volume by convention).
A lagged effect compartment with rate ``k_eff`` drives safety:

    C'(t)     = -k_e * C(t)              (+ bolus jumps at dose times)
    C_eff'(t) = k_eff * (C(t) - C_eff(t))

The system is linear, so the multi-dose solution is the superposition of
single-dose solutions.  The exposure measure E(t) rescales C_eff so that a
reference dose-schedule combination accumulates unit area over the first
cycle; downstream the hazard is proportional to E(t), which makes the
proportionality parameter interpretable at the reference combination.

All times are hours.  Dose amounts are unit-agnostic but must be consistent
with the reference dose (only ratios enter the model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import norm

# Below this relative rate separation, use the k_eff -> k_e limit of the
# two-exponential solution (removable singularity).
_EQUAL_RATE_RTOL = 1e-8


@dataclass(frozen=True)
class PkParams:
    """Fixed kinetic constants plus the normalizing reference combination.

    k_e, k_eff are 1/hour; t_star is the cycle-1 duration in hours;
    ref_dose / ref_freq define the reference regular schedule whose
    cycle-1 exposure area is normalized to one.
    """

    k_e: float
    k_eff: float
    t_star: float
    ref_dose: float
    ref_freq: float

    def __post_init__(self) -> None:
        for name in ("k_e", "k_eff", "t_star", "ref_dose", "ref_freq"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class Regimen:
    """A dosing history: one amount per administration at explicit times."""

    dose: float
    dose_times: tuple[float, ...]

    def __post_init__(self) -> None:
        times = tuple(float(t) for t in self.dose_times)
        object.__setattr__(self, "dose_times", times)
        if not (math.isfinite(self.dose) and self.dose > 0):
            raise ValueError(f"dose must be positive, got {self.dose!r}")
        if not times:
            raise ValueError("regimen needs at least one administration")
        if times[0] < 0:
            raise ValueError("dose times must be non-negative")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("dose times must be strictly increasing")
        object.__setattr__(self, "_times_array", np.asarray(times, dtype=float))

    @classmethod
    def regular(cls, dose: float, freq: float, horizon: float) -> "Regimen":
        """Regular schedule: administrations at 0, 1/freq, 2/freq, ... on [0, horizon)."""
        if freq <= 0:
            raise ValueError(f"frequency must be positive, got {freq!r}")
        if horizon <= 0:
            raise ValueError(f"horizon must be positive, got {horizon!r}")
        period = 1.0 / freq
        n = int(math.floor((horizon - 1e-9) / period)) + 1
        return cls(dose, tuple(i * period for i in range(n)))

    @property
    def times(self) -> np.ndarray:
        return self._times_array  # type: ignore[attr-defined]


def _rates_nearly_equal(params: PkParams) -> bool:
    return abs(params.k_eff - params.k_e) <= _EQUAL_RATE_RTOL * params.k_e


def _unit_conc(tau: np.ndarray, params: PkParams) -> np.ndarray:
    """Effect-compartment concentration per unit dose at elapsed time tau >= 0."""
    if _rates_nearly_equal(params):
        k = 0.5 * (params.k_e + params.k_eff)
        return k * tau * np.exp(-k * tau)
    scale = params.k_eff / (params.k_eff - params.k_e)
    return scale * (np.exp(-params.k_e * tau) - np.exp(-params.k_eff * tau))


def _unit_auc(tau: np.ndarray, params: PkParams) -> np.ndarray:
    """Integral of _unit_conc from 0 to tau, per unit dose."""
    if _rates_nearly_equal(params):
        k = 0.5 * (params.k_e + params.k_eff)
        return -np.expm1(-k * tau) / k - tau * np.exp(-k * tau)
    k_e, k_eff = params.k_e, params.k_eff
    scale = k_eff / (k_eff - k_e)
    return scale * (-np.expm1(-k_e * tau) / k_e + np.expm1(-k_eff * tau) / k_eff)


def _superpose(regimen: Regimen, params: PkParams, t, per_dose) -> float | np.ndarray:
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("time must be non-negative")
    # Doses strictly after t contribute zero; clipping is exact because the
    # per-dose kernels vanish at elapsed time zero.
    tau = np.clip(t_arr[..., np.newaxis] - regimen.times, 0.0, None)
    total = regimen.dose * per_dose(tau, params).sum(axis=-1)
    if t_arr.ndim == 0:
        return float(total)
    return total


def concentration_eff(regimen: Regimen, params: PkParams, t) -> float | np.ndarray:
    """Effect-compartment concentration at time(s) t for a dosing history."""
    return _superpose(regimen, params, t, _unit_conc)


def auc_ceff(regimen: Regimen, params: PkParams, t) -> float | np.ndarray:
    """Exact running integral of concentration_eff from 0 to time(s) t."""
    return _superpose(regimen, params, t, _unit_auc)


@lru_cache(maxsize=None)
def reference_auc(params: PkParams) -> float:
    """Cycle-1 area of the reference combination; normalizer for E(t)."""
    ref = Regimen.regular(params.ref_dose, params.ref_freq, params.t_star)
    value = auc_ceff(ref, params, params.t_star)
    if not (math.isfinite(value) and value > 0):
        raise ValueError("reference exposure area must be positive and finite")
    return value


@dataclass(frozen=True)
class ExposureProfile:
    """E(t) and AUC_E(t) for one (regimen, params) pair, reference-normalized."""

    regimen: Regimen
    params: PkParams
    norm: float

    def exposure(self, t) -> float | np.ndarray:
        return concentration_eff(self.regimen, self.params, t) / self.norm

    def auc(self, t) -> float | np.ndarray:
        return auc_ceff(self.regimen, self.params, t) / self.norm

    @property
    def auc_cycle1(self) -> float:
        return float(self.auc(self.params.t_star))


@lru_cache(maxsize=4096)
def make_exposure(regimen: Regimen, params: PkParams) -> ExposureProfile:
    """Bind a regimen to its normalized exposure evaluators."""
    return ExposureProfile(regimen, params, reference_auc(params))


def fit_keff_from_quantiles(q_low: float, q_high: float) -> tuple[float, float]:
    """Log-normal (mu, sigma) whose 0.025/0.975 quantiles equal the given rates.

    Intended for choosing an effect-compartment rate from the slowest and
    fastest time scales of an experiment.
    """
    if q_low <= 0 or q_high <= 0 or q_low >= q_high:
        raise ValueError(
            f"quantiles must satisfy 0 < q_low < q_high, got ({q_low!r}, {q_high!r})"
        )
    z = norm.ppf(0.975)
    mu = 0.5 * (math.log(q_low) + math.log(q_high))
    sigma = (math.log(q_high) - math.log(q_low)) / (2.0 * z)
    return mu, sigma
