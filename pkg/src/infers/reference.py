"""Closed-form reference estimators: OLR, RLR, variance matching, triple collocation.

Every estimator consumes a :class:`~infers.moments.MomentSet`.  The drifter
``I`` is the calibration reference (zero offset, unit slope).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVariance, SignInconsistency, ZeroCovariance
from .moments import MomentSet


@dataclass(frozen=True)
class ReferenceSolution:
    kind: str
    slope: float
    intercept: complex
    sigma_t2: float
    err_var: dict = field(default_factory=dict)


def _pair(m, ref, other):
    return m.var(ref), m.var(other), m.cov(ref, other)


def olr_fit(m: MomentSet, ref="I", other="N") -> ReferenceSolution:
    """Ordinary regression of ``other`` on ``ref``; all error assigned to ``other``."""
    var_i, var_n, cov = _pair(m, ref, other)
    if var_i <= 0:
        raise DegenerateVariance(f"Var({ref}) must be positive")
    beta = cov / var_i
    alpha = m.mean_of(other) - beta * m.mean_of(ref)
    return ReferenceSolution(
        "OLR", beta, alpha, var_i, {ref: 0.0, other: var_n - beta**2 * var_i}
    )


def rlr_fit(m: MomentSet, ref="I", other="N") -> ReferenceSolution:
    """Reverse regression; all error assigned to ``ref``."""
    var_i, var_n, cov = _pair(m, ref, other)
    if cov == 0:
        raise ZeroCovariance(f"Cov({ref},{other}) is zero")
    beta = var_n / cov
    err_i = var_i - cov**2 / var_n
    alpha = m.mean_of(other) - beta * m.mean_of(ref)
    return ReferenceSolution("RLR", beta, alpha, var_i - err_i, {ref: err_i, other: 0.0})


def variance_match(m: MomentSet, ref="I", other="N") -> float:
    """Slope that matches the joint (complex) variance of ``other`` to ``ref``."""
    var_i = m.var(ref)
    if var_i <= 0:
        raise DegenerateVariance(f"Var({ref}) must be positive")
    return float(np.sqrt(m.var(other) / var_i))


def vm_fit(m: MomentSet, ref="I", other="N") -> ReferenceSolution:
    """Errors-in-variables solution with the variance-matched slope."""
    var_i, var_n, cov = _pair(m, ref, other)
    beta = variance_match(m, ref, other)
    if beta == 0:
        raise DegenerateVariance(f"Var({other}) is zero")
    sigma_t2 = cov / beta
    alpha = m.mean_of(other) - beta * m.mean_of(ref)
    return ReferenceSolution(
        "VM", beta, alpha, sigma_t2, {ref: var_i - sigma_t2, other: var_n - beta**2 * sigma_t2}
    )


def triple_collocation_fit(m3: MomentSet, tags=None):
    """Just-identified triple collocation with the first dataset as reference.

    Returns one :class:`ReferenceSolution` per dataset, in ``tags`` order;
    all share ``sigma_t2`` and the full ``err_var`` map.
    """
    tags = tuple(m3.tags if tags is None else tags)
    if len(tags) != 3:
        raise ValueError("triple collocation needs exactly three datasets")
    a, b, c = tags
    c12, c13, c23 = m3.cov(a, b), m3.cov(a, c), m3.cov(b, c)
    if min(abs(c12), abs(c13), abs(c23)) == 0:
        raise ZeroCovariance("triple collocation needs nonzero pairwise covariances")
    sigma_t2 = c12 * c13 / c23
    if sigma_t2 < 0:
        raise SignInconsistency(f"negative true variance estimate {sigma_t2:.6g}")
    slopes = {a: 1.0, b: c23 / c13, c: c23 / c12}
    err = {t: m3.var(t) - slopes[t] ** 2 * sigma_t2 for t in tags}
    mean_ref = m3.mean_of(a)
    return tuple(
        ReferenceSolution("TC", slopes[t], m3.mean_of(t) - slopes[t] * mean_ref, sigma_t2, dict(err))
        for t in tags
    )
