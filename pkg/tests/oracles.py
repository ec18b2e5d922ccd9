"""Independent numerical oracles used by the test suite.

These deliberately avoid the closed forms in titepk.pk: the ODE system is
integrated with fixed-step RK4 and areas are computed by trapezoid
quadrature, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import math

import numpy as np


def rk4_effect_compartment(regimen, params, query_times, max_step=0.01):
    """Integrate C' = -k_e C (+ boluses), C_eff' = k_eff (C - C_eff) with RK4.

    Returns C_eff at the query times.  A dose administered exactly at a query
    time does not contribute at that instant (matching the Heaviside
    convention of the closed form).
    """
    k_e, k_eff = params.k_e, params.k_eff
    dose_times = set(float(t) for t in regimen.dose_times)
    queries = [float(t) for t in query_times]
    knots = sorted(set([0.0]) | dose_times | set(queries))

    def deriv(c, ceff):
        return -k_e * c, k_eff * (c - ceff)

    out = {}
    c = ceff = 0.0
    prev = None
    for t in knots:
        if prev is not None and t > prev:
            span = t - prev
            n = max(1, int(math.ceil(span / max_step)))
            h = span / n
            for _ in range(n):
                k1c, k1e = deriv(c, ceff)
                k2c, k2e = deriv(c + 0.5 * h * k1c, ceff + 0.5 * h * k1e)
                k3c, k3e = deriv(c + 0.5 * h * k2c, ceff + 0.5 * h * k2e)
                k4c, k4e = deriv(c + h * k3c, ceff + h * k3e)
                c += h / 6.0 * (k1c + 2 * k2c + 2 * k3c + k4c)
                ceff += h / 6.0 * (k1e + 2 * k2e + 2 * k3e + k4e)
        out[t] = ceff  # recorded before any bolus at t, per the Heaviside convention
        if t in dose_times:
            c += regimen.dose
        prev = t
    return np.asarray([out[t] for t in queries])


def trapezoid_auc(conc_fn, t_end, step=0.01):
    """Trapezoid quadrature of a concentration curve on [0, t_end]."""
    if t_end == 0:
        return 0.0
    n = max(2, int(math.ceil(t_end / step)) + 1)
    times = np.linspace(0.0, t_end, n)
    values = conc_fn(times)
    return float(np.trapezoid(values, times))


def batch_means_se(samples: np.ndarray, n_batches: int = 45, p_ref: float | None = None) -> float:
    """Monte-Carlo standard error of a mean, batch-means flavor.

    Batch means account for autocorrelation when events are plentiful; for
    rare indicators the batch estimate itself collapses, so when a reference
    probability is supplied the SE is floored at the score-style binomial
    level sqrt(p_ref (1 - p_ref) / n).  Always floored at 1/n.
    """
    n = len(samples)
    usable = (n // n_batches) * n_batches
    batches = samples[:usable].reshape(n_batches, -1).mean(axis=1)
    se = float(batches.std(ddof=1) / math.sqrt(n_batches))
    if p_ref is not None:
        p = min(max(p_ref, 0.0), 1.0)
        se = max(se, math.sqrt(p * (1.0 - p) / n))
    return max(se, 1.0 / n)
