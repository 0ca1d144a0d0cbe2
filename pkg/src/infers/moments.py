"""Collocation containers and sample moments.

Velocities are stored as complex numbers ``u + 1j*v`` so that zonal and
meridional components share one calibration.  The joint covariance is the
real part of the complex covariance, which is the sum of the zonal and
meridional covariances.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateVariance, EmptySubset, NonFiniteInput

TAGS = ("I", "N", "F", "E", "R", "S")
MAX_SPEED = 10.0  # m/s, sanity bound for surface currents


@dataclass(frozen=True)
class CollocationRecord:
    """One matched sextuple of velocity samples.

    ``velocity`` holds ``u + 1j*v`` for each tag in ``TAGS`` order.
    """

    time: float
    lat: float
    lon: float
    velocity: tuple

    def __getitem__(self, tag):
        return self.velocity[TAGS.index(tag)]


def invalid_rows(uv, lat=None, lon=None):
    """Boolean mask of rows that violate the record invariants."""
    uv = np.asarray(uv)
    bad = ~(np.isfinite(uv.real) & np.isfinite(uv.imag)).all(axis=1)
    with np.errstate(invalid="ignore"):
        bad |= (np.abs(uv) >= MAX_SPEED).any(axis=1)
    if lat is not None:
        lat = np.asarray(lat, dtype=float)
        bad |= ~((lat >= -90.0) & (lat <= 90.0))
    if lon is not None:
        lon = np.asarray(lon, dtype=float)
        bad |= ~((lon >= -180.0) & (lon < 360.0))
    return bad


class Collocations:
    """Column-oriented store of collocation records.

    Attributes are numpy arrays: ``time`` (epoch seconds), ``lat``, ``lon``
    and ``uv`` with shape ``(n, 6)``, complex, columns in ``TAGS`` order.
    """

    def __init__(self, uv, time=None, lat=None, lon=None, validate=True):
        uv = np.asarray(uv, dtype=np.complex128)
        if uv.ndim != 2 or uv.shape[1] != len(TAGS):
            raise ValueError(f"uv must have shape (n, {len(TAGS)}), got {uv.shape}")
        n = uv.shape[0]
        self.uv = uv
        self.time = np.zeros(n) if time is None else np.asarray(time, dtype=float)
        self.lat = np.zeros(n) if lat is None else np.asarray(lat, dtype=float)
        self.lon = np.zeros(n) if lon is None else np.asarray(lon, dtype=float)
        self.rejected_lines = np.array([], dtype=int)
        if validate:
            bad = invalid_rows(self.uv, self.lat, self.lon)
            if bad.any():
                first = int(np.flatnonzero(bad)[0])
                raise NonFiniteInput(
                    f"{int(bad.sum())} records violate invariants (first at index {first})"
                )

    @classmethod
    def from_records(cls, records: Iterable[CollocationRecord]):
        records = list(records)
        uv = np.array([r.velocity for r in records], dtype=np.complex128).reshape(-1, len(TAGS))
        return cls(
            uv,
            time=[r.time for r in records],
            lat=[r.lat for r in records],
            lon=[r.lon for r in records],
        )

    def __len__(self):
        return self.uv.shape[0]

    def __getitem__(self, index):
        if isinstance(index, (int, np.integer)):
            return CollocationRecord(
                float(self.time[index]),
                float(self.lat[index]),
                float(self.lon[index]),
                tuple(complex(z) for z in self.uv[index]),
            )
        return self.take(index)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def take(self, index):
        return Collocations(
            self.uv[index], self.time[index], self.lat[index], self.lon[index], validate=False
        )

    def column(self, tag):
        return self.uv[:, TAGS.index(tag)]

    def features(self):
        """12 real columns: u and v for each tag, in ``TAGS`` order."""
        out = np.empty((len(self), 2 * len(TAGS)))
        out[:, 0::2] = self.uv.real
        out[:, 1::2] = self.uv.imag
        return out

    def with_uv(self, uv):
        return Collocations(uv, self.time, self.lat, self.lon, validate=False)


def as_collocations(records) -> Collocations:
    if isinstance(records, Collocations):
        return records
    return Collocations.from_records(records)


@dataclass(frozen=True)
class MomentSet:
    """Means and covariances of a collocation subset.

    ``cov_joint`` is the real part of the complex covariance and equals
    ``cov_u + cov_v``.
    """

    n: int
    mean: np.ndarray
    cov_joint: np.ndarray
    cov_u: np.ndarray
    cov_v: np.ndarray
    tags: tuple = field(default=TAGS)

    def index(self, tag):
        return self.tags.index(tag)

    def matrix(self, which="joint"):
        return {"joint": self.cov_joint, "u": self.cov_u, "v": self.cov_v}[which]

    def var(self, tag, which="joint"):
        i = self.index(tag)
        return float(self.matrix(which)[i, i])

    def cov(self, a, b, which="joint"):
        return float(self.matrix(which)[self.index(a), self.index(b)])

    def mean_of(self, tag):
        return complex(self.mean[self.index(tag)])

    def subset(self, tags: Sequence[str]):
        """Moments restricted to ``tags`` (in the given order)."""
        idx = [self.index(t) for t in tags]
        sel = np.ix_(idx, idx)
        return MomentSet(
            self.n,
            self.mean[idx].copy(),
            self.cov_joint[sel].copy(),
            self.cov_u[sel].copy(),
            self.cov_v[sel].copy(),
            tuple(tags),
        )

    @classmethod
    def from_components(cls, n, mean, cov_u, cov_v, tags=TAGS):
        cov_u = np.asarray(cov_u, dtype=float)
        cov_v = np.asarray(cov_v, dtype=float)
        return cls(n, np.asarray(mean, dtype=np.complex128), cov_u + cov_v, cov_u, cov_v, tuple(tags))


def compute_moments(records, tags=TAGS) -> MomentSet:
    """Sample means and unbiased covariances of a collocation subset.

    ``records`` may be a :class:`Collocations`, a sequence of
    :class:`CollocationRecord`, or an ``(n, k)`` complex array whose columns
    correspond to ``tags``.
    """
    if isinstance(records, np.ndarray):
        uv = np.asarray(records, dtype=np.complex128)
    else:
        uv = as_collocations(records).uv
        tags = TAGS
    n = uv.shape[0]
    if n < 2:
        raise EmptySubset(f"need at least 2 records, got {n}")
    if not (np.isfinite(uv.real).all() and np.isfinite(uv.imag).all()):
        raise NonFiniteInput("velocity samples must be finite")
    mean = uv.mean(axis=0)
    du = uv.real - mean.real
    dv = uv.imag - mean.imag
    cov_u = du.T @ du / (n - 1)
    cov_v = dv.T @ dv / (n - 1)
    # symmetrize away the last-bit asymmetry of the matrix product
    cov_u = 0.5 * (cov_u + cov_u.T)
    cov_v = 0.5 * (cov_v + cov_v.T)
    return MomentSet(n, mean, cov_u + cov_v, cov_u, cov_v, tuple(tags))


def correlation(m: MomentSet, a, b, which="joint") -> float:
    """Correlation of datasets ``a`` and ``b`` from the chosen covariance matrix."""
    va = m.var(a, which)
    vb = m.var(b, which)
    if va <= 0 or vb <= 0:
        raise DegenerateVariance(f"zero variance for correlation({a}, {b}) in {which}")
    r = m.cov(a, b, which) / np.sqrt(va * vb)
    return float(np.clip(r, -1.0, 1.0))
