"""Deterministic minimum-covariance-determinant trimming.

Six deterministic starting scatter estimates (hyperbolic tangent,
Spearman, normal-score, spatial-sign, smallest-norm half, and
orthogonalized pairwise) seed concentration steps on the 12 real
velocity coordinates.  The h-subset with the smallest covariance
determinant is kept; its complement is flagged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .errors import SingularCovariance, TooFewRecords
from .moments import as_collocations

MAX_CSTEPS = 100
DET_RTOL = 1e-12


@dataclass(frozen=True)
class TrimResult:
    kept: np.ndarray
    flagged: np.ndarray
    h: int
    det_history: tuple
    start: int = -1
    start_dets: tuple = field(default=())
    singular: bool = False


def subset_size(n, fraction):
    """h = ceil((1 - fraction) * n), guarded against float round-up."""
    return int(math.ceil((1.0 - fraction) * n - 1e-9))


def _mad(x):
    return stats.median_abs_deviation(x, axis=0, scale="normal")


def _log_det(cov):
    sign, logdet = np.linalg.slogdet(cov)
    return logdet if sign > 0 else -np.inf


def _initial_scatters(z):
    """Six deterministic scatter estimates of standardized data ``z``."""
    n, p = z.shape
    out = [np.corrcoef(np.tanh(z), rowvar=False)]
    ranks = stats.rankdata(z, axis=0)
    out.append(np.corrcoef(ranks, rowvar=False))
    out.append(np.corrcoef(stats.norm.ppf((ranks - 1 / 3) / (n + 1 / 3)), rowvar=False))
    norms = np.linalg.norm(z, axis=1)
    k = z / np.where(norms > 0, norms, 1.0)[:, None]
    out.append(k.T @ k / n)
    half = np.argsort(norms, kind="stable")[: (n + 1) // 2]
    out.append(np.cov(z[half], rowvar=False))
    # pairwise robust covariances from scales of sums and differences
    s = _mad(z)
    u = np.eye(p)
    for i in range(p):
        for j in range(i + 1, p):
            a = z[:, i] / s[i]
            b = z[:, j] / s[j]
            u[i, j] = u[j, i] = (_mad(a + b) ** 2 - _mad(a - b) ** 2) / 4
    _, vecs = np.linalg.eigh(u)
    lam = _mad(z @ vecs) ** 2
    out.append(vecs @ np.diag(lam) @ vecs.T)
    return out


def _start_subset(z, scatter, h):
    n = z.shape[0]
    _, vecs = np.linalg.eigh(scatter)
    lam = _mad(z @ vecs) ** 2
    if np.any(lam <= 0):
        return None
    sigma = vecs @ np.diag(lam) @ vecs.T
    root = vecs @ np.diag(np.sqrt(lam)) @ vecs.T
    inv_root = vecs @ np.diag(1 / np.sqrt(lam)) @ vecs.T
    center = root @ np.median(z @ inv_root, axis=0)
    d = _mahalanobis2(z, center, sigma)
    if d is None:
        return None
    half = np.argsort(d, kind="stable")[: (n + 1) // 2]
    d = _mahalanobis2(z, z[half].mean(axis=0), np.cov(z[half], rowvar=False))
    if d is None:
        return None
    return np.sort(np.argsort(d, kind="stable")[:h])


def _mahalanobis2(x, center, cov):
    try:
        chol = linalg.cho_factor(cov, lower=True)
    except linalg.LinAlgError:
        return None
    diff = x - center
    sol = linalg.cho_solve(chol, diff.T)
    return np.einsum("ij,ji->i", diff, sol)


def c_steps(x, subset, h=None, max_steps=MAX_CSTEPS):
    """Concentration steps from an initial subset.

    Returns ``(subset, det_history)``; each step keeps the ``h`` points
    closest (Mahalanobis) to the current subset's mean and covariance.
    """
    x = np.asarray(x, dtype=float)
    subset = np.sort(np.asarray(subset))
    h = len(subset) if h is None else h
    cov = np.cov(x[subset], rowvar=False)
    logdet = _log_det(cov)
    history = [logdet]
    for _ in range(max_steps):
        d = _mahalanobis2(x, x[subset].mean(axis=0), cov)
        if d is None:
            break
        new = np.sort(np.argsort(d, kind="stable")[:h])
        if np.array_equal(new, subset):
            break
        new_cov = np.cov(x[new], rowvar=False)
        new_logdet = _log_det(new_cov)
        if new_logdet > logdet:
            break  # only roundoff can do this; keep the better subset
        improvement = -math.expm1(new_logdet - logdet) if np.isfinite(logdet) else 1.0
        subset, cov, logdet = new, new_cov, new_logdet
        history.append(logdet)
        if improvement < DET_RTOL:
            break
    return subset, tuple(float(np.exp(v)) for v in history)


def trim_outliers(records, fraction=0.10) -> TrimResult:
    """Flag about ``fraction`` of the records as multivariate outliers."""
    if isinstance(records, np.ndarray) and records.dtype.kind == "f":
        x = records
    else:
        x = as_collocations(records).features()
    n, p = x.shape
    if not 0 < fraction < 0.5:
        raise ValueError(f"trim fraction must be in (0, 0.5), got {fraction}")
    if n < 3 * p:
        raise TooFewRecords(f"need at least {3 * p} records to trim, got {n}")
    h = subset_size(n, fraction)
    fallback = TrimResult(np.arange(n), np.array([], dtype=int), n, (), singular=True)

    scale = _mad(x)
    if np.any(scale <= 0):
        raise SingularCovariance("zero robust scale in at least one coordinate", fallback)
    z = (x - np.median(x, axis=0)) / scale

    best = None
    dets = []
    for k, scatter in enumerate(_initial_scatters(z)):
        start = _start_subset(z, scatter, h)
        if start is None:
            dets.append(math.inf)
            continue
        subset, history = c_steps(x, start, h)
        dets.append(history[-1])
        if best is None or history[-1] < best[1][-1]:
            best = (subset, history, k)
    if best is None or not best[1][-1] > 0:
        raise SingularCovariance("covariance of every candidate subset is singular", fallback)
    subset, history, k = best
    flagged = np.setdiff1d(np.arange(n), subset)
    return TrimResult(subset, flagged, h, history, k, tuple(dets))
