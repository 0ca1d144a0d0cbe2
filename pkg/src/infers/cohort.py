"""Collocation CSV ingestion, analysis subsets, sweeps and small curve fits."""
from __future__ import annotations

import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline

from .errors import (
    EmptyFile,
    InfersError,
    MissingColumn,
    NoFeasibleRegion,
    NoMinimaFound,
    ParseError,
    SubsetTooSmall,
)
from .moments import TAGS, Collocations, invalid_rows

COLUMNS = ("time", "lat", "lon") + tuple(f"{c}_{t.lower()}" for t in TAGS for c in ("u", "v"))
VELOCITY_COLUMNS = COLUMNS[3:]
SPEED_TIE_DECIMALS = 9  # speed distances equal to 1e-9 m/s count as ties


def load_csv(path) -> Collocations:
    """Read a collocation CSV.

    Rows violating the record invariants are dropped; their 1-based file
    line numbers are kept in ``rejected_lines`` on the returned object.
    """
    if os.path.getsize(path) == 0:
        raise EmptyFile(f"{path} is empty")
    with open(path, newline="") as fh:
        header = fh.readline().strip()
    names = [h.strip() for h in header.split(",")]
    missing = [c for c in COLUMNS if c not in names]
    if missing:
        raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
    if tuple(names) != COLUMNS:
        raise ParseError(f"{path}: header must be exactly {','.join(COLUMNS)}", line=1)
    try:
        df = pd.read_csv(path, low_memory=False, float_precision="round_trip")
    except pd.errors.ParserError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if len(df) == 0:
        raise EmptyFile(f"{path} has no data rows")

    numeric = {}
    for col in COLUMNS[1:]:
        s = df[col]
        if s.dtype.kind != "f":
            conv = pd.to_numeric(s, errors="coerce")
            bad = conv.isna() & s.notna()
            if bad.any():
                i = int(np.flatnonzero(bad.to_numpy())[0])
                raise ParseError(f"{path}:{i + 2}: cannot parse {col}={s.iloc[i]!r}", line=i + 2)
            s = conv
        numeric[col] = s.to_numpy(dtype=float)
    ts = pd.to_datetime(df["time"], format="ISO8601", utc=True, errors="coerce")
    bad_time = ts.isna().to_numpy()
    if bad_time.any():
        i = int(np.flatnonzero(bad_time)[0])
        raise ParseError(f"{path}:{i + 2}: cannot parse time={df['time'].iloc[i]!r}", line=i + 2)
    time = ts.dt.tz_localize(None).to_numpy().astype("datetime64[ns]").astype(np.int64) / 1e9

    uv = np.empty((len(df), len(TAGS)), dtype=np.complex128)
    for k, t in enumerate(TAGS):
        uv[:, k] = numeric[f"u_{t.lower()}"] + 1j * numeric[f"v_{t.lower()}"]
    lat, lon = numeric["lat"], numeric["lon"]
    bad = invalid_rows(uv, lat, lon)
    keep = ~bad
    col = Collocations(uv[keep], time[keep], lat[keep], lon[keep], validate=False)
    col.rejected_lines = np.flatnonzero(bad) + 2
    return col


def format_time(time):
    stamps = np.asarray(time, dtype=float)
    whole = np.round(stamps).astype(np.int64)
    if np.all(whole == stamps):
        text = whole.astype("datetime64[s]").astype(str)
    else:
        text = np.round(stamps * 1e6).astype(np.int64).astype("datetime64[us]").astype(str)
    return np.char.add(text, "Z")


def write_csv(col: Collocations, path, chunk=200_000):
    """Write records in the collocation schema, atomically (temp file + rename).

    Floats are written with the shortest decimal that round-trips exactly.
    """
    cols = [col.lat, col.lon]
    for k in range(len(TAGS)):
        cols += [col.uv[:, k].real, col.uv[:, k].imag]

    def writer(fh):
        fh.write(",".join(COLUMNS) + "\n")
        for lo in range(0, len(col), chunk):
            hi = min(lo + chunk, len(col))
            text = [format_time(col.time[lo:hi]).tolist()]
            text += [list(map(repr, c[lo:hi].tolist())) for c in cols]
            fh.write("".join(",".join(row) + "\n" for row in zip(*text)))

    atomic_write(path, writer)


def atomic_write(path, writer, mode="w"):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            writer(fh)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class SubsetSpec:
    """An analysis subset: ``evenYears``, ``oddYears``, ``dayOfYear`` or ``speedBin``."""

    kind: str
    day: int | None = None
    lat_min: float | None = None
    target: float | None = None
    k: int | None = None

    def __post_init__(self):
        if self.kind not in ("evenYears", "oddYears", "dayOfYear", "speedBin"):
            raise ValueError(f"unknown subset kind {self.kind!r}")
        if self.kind == "dayOfYear" and not (self.day is not None and 1 <= self.day <= 366):
            raise ValueError("day of year must be in [1, 366]")
        if self.kind == "speedBin":
            if not (self.target is not None and self.target > 0):
                raise ValueError("speed target must be positive")
            if not (self.k is not None and self.k >= 100):
                raise ValueError("speed bin size k must be at least 100")

    @classmethod
    def even_years(cls):
        return cls("evenYears")

    @classmethod
    def odd_years(cls):
        return cls("oddYears")

    @classmethod
    def day_of_year(cls, day, lat_min=-90.0):
        return cls("dayOfYear", day=int(day), lat_min=float(lat_min))

    @classmethod
    def speed_bin(cls, target, k=500):
        return cls("speedBin", target=float(target), k=int(k))

    @property
    def label(self):
        if self.kind == "dayOfYear":
            return f"day={self.day}"
        if self.kind == "speedBin":
            return f"speed={self.target:g}"
        return self.kind


def calendar(time):
    """UTC year and day of year for epoch-second timestamps."""
    dt = np.asarray(time, dtype=float).astype("datetime64[s]")
    years = dt.astype("datetime64[Y]")
    doy = (dt.astype("datetime64[D]") - years.astype("datetime64[D]")).astype(int) + 1
    return years.astype(int) + 1970, doy


def select_indices(col: Collocations, spec: SubsetSpec):
    if len(col) == 0:
        raise SubsetTooSmall("no records to select from")
    if spec.kind in ("evenYears", "oddYears"):
        year, _ = calendar(col.time)
        return np.flatnonzero(year % 2 == (0 if spec.kind == "evenYears" else 1))
    if spec.kind == "dayOfYear":
        _, doy = calendar(col.time)
        return np.flatnonzero((doy == spec.day) & (col.lat >= spec.lat_min))
    return nearest_speed(col, spec.target, spec.k)


def nearest_speed(col: Collocations, target, k):
    """Indices of the ``k`` records whose drifter speed is closest to ``target``.

    Ties go to the earlier record.
    """
    speed = np.abs(col.column("I"))
    if len(col) < k:
        raise SubsetTooSmall(f"{len(col)} records, speed bin needs {k}")
    dist = np.round(np.abs(speed - target), SPEED_TIE_DECIMALS)
    return np.sort(np.argsort(dist, kind="stable")[:k])


def select(col: Collocations, spec: SubsetSpec) -> Collocations:
    """Records belonging to ``spec``, in their original order."""
    return col.take(select_indices(col, spec))


@dataclass(frozen=True)
class SweepEntry:
    spec: SubsetSpec
    status: str
    n: int
    result: object = None
    curves: object = None
    error: str = ""

    @property
    def ok(self):
        return self.status == "ok"


STATUS = {NoMinimaFound: "no-minima", NoFeasibleRegion: "no-feasible", SubsetTooSmall: "too-small"}


def _status_of(exc):
    for cls, name in STATUS.items():
        if isinstance(exc, cls):
            return name
    return type(exc).__name__


def fit_subset(spec, subset, trim_fraction, grid_size, min_records=100):
    from .model import fit

    try:
        result = fit(subset, trim_fraction=trim_fraction, grid_size=grid_size, min_records=min_records)
    except InfersError as exc:
        return SweepEntry(spec, _status_of(exc), len(subset), None, getattr(exc, "curves", None), str(exc))
    return SweepEntry(spec, "ok", len(subset), result, result.curves)


def _fit_job(args):
    return fit_subset(*args)


def sweep(col: Collocations, specs, trim_fraction=0.10, grid_size=2000, workers=1, min_records=100):
    """Fit every subset independently; failures are recorded, never raised.

    Results are returned in ``specs`` order regardless of ``workers``.
    """
    jobs = []
    early = {}
    for i, spec in enumerate(specs):
        try:
            subset = select(col, spec)
        except SubsetTooSmall as exc:
            early[i] = SweepEntry(spec, "too-small", 0, error=str(exc))
            continue
        jobs.append((i, (spec, subset, trim_fraction, grid_size, min_records)))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_fit_job, [a for _, a in jobs], chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        done = [_fit_job(a) for _, a in jobs]
    out = dict(early)
    out.update({i: entry for (i, _), entry in zip(jobs, done)})
    return [out[i] for i in range(len(specs))]


def running_mean(series, window=5):
    """Centered moving average skipping NaN entries; ends use truncated windows."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    y = np.asarray(series, dtype=float)
    valid = np.isfinite(y)
    vals = np.where(valid, y, 0.0)
    half = window // 2
    kernel = np.ones(window)
    total = np.convolve(vals, kernel, mode="full")[half : half + len(y)]
    count = np.convolve(valid.astype(float), kernel, mode="full")[half : half + len(y)]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / np.where(count > 0, count, 1), np.nan)


@dataclass(frozen=True)
class ExpFit:
    a: float
    b: float
    c: float
    rss: float
    ill_conditioned: bool = False

    def __call__(self, x):
        return self.a + self.b * np.exp(self.c * np.asarray(x, dtype=float))


def exp_fit(x, y) -> ExpFit:
    """Fit ``y = a + b*exp(c*x)`` without iteration.

    The rate comes from the linear relation between ``y - y[0]``, ``x - x[0]``
    and the running integral of ``y`` (computed from a cubic spline); ``a`` and
    ``b`` then follow by linear least squares.  Near-constant data are flagged
    ``ill_conditioned`` with ``a = mean(y)`` and ``b = 0``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 4:
        raise ValueError("exp_fit needs at least 4 paired points")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")

    def flagged():
        return ExpFit(float(y.mean()), 0.0, 0.0, float(np.sum((y - y.mean()) ** 2)), True)

    yscale = max(np.max(np.abs(y)), 1e-300)
    if np.ptp(y) <= 1e-12 * yscale:
        return flagged()
    integral = CubicSpline(x, y).antiderivative()(x)
    design = np.column_stack([x - x[0], integral])
    coef, _, rank, sv = np.linalg.lstsq(design, y - y[0], rcond=None)
    c = float(coef[1])
    if rank < 2 or sv[-1] <= 1e-12 * sv[0] or not np.isfinite(c) or abs(c) * np.ptp(x) < 1e-9:
        return flagged()
    basis = np.column_stack([np.ones_like(x), np.exp(c * x)])
    (a, b), *_ = np.linalg.lstsq(basis, y, rcond=None)
    rss = float(np.sum((y - a - b * np.exp(c * x)) ** 2))
    return ExpFit(float(a), float(b), c, rss)
