"""INFERS measurement model: population moments, strong-constraint solve,
weak-constraint search over true variance, and fit diagnostics.

Model, with drifter ``I`` as the calibration reference::

    I = t + eI
    N = aN + bN t + lN eI + eN
    F = aF + bF t + lF (lN eI + eN) + eF
    E = aE + bE t + lE (lF (lN eI + eN) + eF) + eE
    R = aR + bR t + lR (lN eI + eN) + eR
    S = aS + bS t + lS (lR (lN eI + eN) + eR) + eS

Given true variance and the nowcast slope, the fifteen variance and
I/N covariance equations are solved exactly; the six covariances among
F, E, R, S are left as residuals whose minima locate the true variance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateCalibration,
    DegenerateVariance,
    InfeasibleParams,
    LambdaParentZero,
    NoFeasibleRegion,
    NoMinimaFound,
    SingularCovariance,
    SingularSystem,
    SubsetTooSmall,
)
from .moments import TAGS, MomentSet, as_collocations, compute_moments
from .reference import variance_match

GLOBCURRENT = ("N", "F", "E", "R", "S")
AUTOCOV_PAIRS = (("F", "E"), ("F", "R"), ("F", "S"), ("E", "R"), ("E", "S"), ("R", "S"))
AUTOCOV_KEYS = tuple(a.lower() + b.lower() for a, b in AUTOCOV_PAIRS)
PARENT = {"F": "N", "E": "F", "R": "N", "S": "R"}

SINGULAR_RTOL = 1e-14
LAMBDA_PARENT_TOL = 1e-12
SNR_CAP_DB = 99.0
ENVELOPE_MIN_CORR = 0.7

_OK, _SINGULAR, _LAMBDA_ZERO, _DEGENERATE = 0, 1, 2, 3


@dataclass(frozen=True)
class InfersParams:
    """The 17 model unknowns plus offsets and derived per-component truth.

    ``beta`` and ``lam`` are keyed by N, F, E, R, S; ``sigma2`` by all six
    tags; ``alpha`` holds complex offsets for N, F, E, R, S.
    """

    sigma_t2: float
    beta: dict
    lam: dict
    sigma2: dict
    alpha: dict = field(default_factory=lambda: {t: 0j for t in GLOBCURRENT})
    sigma_t2_u: float = math.nan
    sigma_t2_v: float = math.nan

    @property
    def lambda_N(self):
        return self.lam["N"]

    @property
    def beta_N(self):
        return self.beta["N"]

    def is_feasible(self, tol=0.0):
        vals = [self.sigma_t2, *self.sigma2.values()]
        vals += [v for v in (self.sigma_t2_u, self.sigma_t2_v) if not math.isnan(v)]
        return all(v >= -tol for v in vals)

    @property
    def feasible(self):
        return self.is_feasible()

    def vector(self):
        """The 17 unknowns as a flat array: sigma_t2, betas, lambdas, error variances."""
        return np.array(
            [self.sigma_t2]
            + [self.beta[t] for t in GLOBCURRENT]
            + [self.lam[t] for t in GLOBCURRENT]
            + [self.sigma2[t] for t in TAGS]
        )

    def to_dict(self):
        return {
            "sigma_t2": self.sigma_t2,
            "sigma_t2_u": self.sigma_t2_u,
            "sigma_t2_v": self.sigma_t2_v,
            "beta": dict(self.beta),
            "lambda": dict(self.lam),
            "sigma2": dict(self.sigma2),
            "alpha": {k: [complex(v).real, complex(v).imag] for k, v in self.alpha.items()},
        }


def error_loadings(lam):
    """Matrix ``A`` with ``dataset = beta*t + A @ errors`` (rows/cols in TAGS order)."""
    lN, lF, lE, lR, lS = (lam[t] for t in GLOBCURRENT)
    return np.array(
        [
            [1.0, 0, 0, 0, 0, 0],
            [lN, 1.0, 0, 0, 0, 0],
            [lF * lN, lF, 1.0, 0, 0, 0],
            [lE * lF * lN, lE * lF, lE, 1.0, 0, 0],
            [lR * lN, lR, 0, 0, 1.0, 0],
            [lS * lR * lN, lS * lR, 0, 0, lS, 1.0],
        ]
    )


def model_covariance(sigma_t2, beta, lam, sigma2):
    b = np.array([1.0] + [beta[t] for t in GLOBCURRENT])
    a = error_loadings(lam)
    d = np.array([sigma2[t] for t in TAGS])
    return sigma_t2 * np.outer(b, b) + (a * d) @ a.T


def forward_moments(p: InfersParams, u_fraction=0.5, truth_mean=0j, n=0) -> MomentSet:
    """Population moments implied by ``p``.

    Per-component truth comes from ``p.sigma_t2_u``/``p.sigma_t2_v`` when set
    (otherwise ``u_fraction`` of the joint value); error variances are split
    between components by ``u_fraction``.
    """
    if math.isnan(p.sigma_t2_u) or math.isnan(p.sigma_t2_v):
        st_u, st_v = u_fraction * p.sigma_t2, (1 - u_fraction) * p.sigma_t2
    else:
        st_u, st_v = p.sigma_t2_u, p.sigma_t2_v
    s2u = {k: u_fraction * v for k, v in p.sigma2.items()}
    s2v = {k: (1 - u_fraction) * v for k, v in p.sigma2.items()}
    cov_u = model_covariance(st_u, p.beta, p.lam, s2u)
    cov_v = model_covariance(st_v, p.beta, p.lam, s2v)
    b = np.array([1.0] + [p.beta[t] for t in GLOBCURRENT])
    alpha = np.array([0j] + [complex(p.alpha.get(t, 0j)) for t in GLOBCURRENT])
    return MomentSet.from_components(n, alpha + b * truth_mean, cov_u, cov_v)


def _cascade(m: MomentSet, s, beta_N):
    """Strong-constraint solve for an array of candidate true variances ``s``.

    Returns a dict of arrays plus ``status`` (0 where the solve succeeded).
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    C = m.cov_joint
    ix = {t: m.index(t) for t in TAGS}

    def cov(a, b):
        return C[ix[a], ix[b]]

    status = np.zeros(s.shape, dtype=int)
    with np.errstate(divide="ignore", invalid="ignore"):
        sI = cov("I", "I") - s
        lN = (cov("I", "N") - beta_N * s) / sI
        sN = sI * (beta_N**2 - lN**2)
        g = lN**2 * sI + sN  # propagated nowcast error variance
        det = s * g - beta_N * s * lN * sI
        scale = cov("I", "I") ** 2 * max(beta_N**2, 1.0)
        singular = ~(np.abs(det) >= SINGULAR_RTOL * scale)
        status[singular] = _SINGULAR
        degenerate = np.abs(beta_N - lN) <= SINGULAR_RTOL * max(abs(beta_N), 1.0)
        status[degenerate & (status == _OK)] = _DEGENERATE

        def solve(c1, c2):
            return (g * c1 - lN * sI * c2) / det, (s * c2 - beta_N * s * c1) / det

        beta = {"N": np.full(s.shape, float(beta_N))}
        lam = {"N": lN}
        sig = {"I": sI, "N": sN}
        for x in ("F", "R"):
            beta[x], lam[x] = solve(cov("I", x), cov("N", x))
            sig[x] = cov(x, x) - beta[x] ** 2 * s - lam[x] ** 2 * g
        for y in ("E", "S"):
            parent = PARENT[y]
            beta[y], mu = solve(cov("I", y), cov("N", y))
            tiny = np.abs(lam[parent]) < LAMBDA_PARENT_TOL
            status[tiny & (status == _OK)] = _LAMBDA_ZERO
            lam[y] = mu / lam[parent]
            sig[y] = (
                cov(y, y)
                - beta[y] ** 2 * s
                - lam[y] ** 2 * (lam[parent] ** 2 * g + sig[parent])
            )
        st = {}
        for comp in ("u", "v"):
            Cc = m.matrix(comp)
            st[comp] = (Cc[ix["I"], ix["N"]] - lN * Cc[ix["I"], ix["I"]]) / (beta_N - lN)
    return {"s": s, "beta": beta, "lam": lam, "sigma2": sig, "g": g, "st": st, "status": status}


def shared_error_fraction(m: MomentSet, sigma_t2, beta_N):
    """Shared error fraction implied by the I/N covariance at a given true variance."""
    return (m.cov("I", "N") - beta_N * sigma_t2) / (m.var("I") - sigma_t2)


def strong_solve(m: MomentSet, sigma_t2, beta_N) -> InfersParams:
    """Solve every parameter except true variance and nowcast slope exactly.

    Negative variances are returned unchanged; check ``feasible``.
    """
    var_i = m.var("I")
    if not (0 <= sigma_t2 < var_i):
        raise ValueError(f"sigma_t2={sigma_t2!r} outside [0, Var(I)={var_i!r})")
    if beta_N <= 0:
        raise ValueError("beta_N must be positive")
    sol = _cascade(m, sigma_t2, beta_N)
    status = int(sol["status"][0])
    if status == _SINGULAR:
        raise SingularSystem(f"2x2 strong-constraint system singular at sigma_t2={sigma_t2:.6g}")
    if status == _DEGENERATE:
        raise DegenerateCalibration("beta_N equals lambda_N; per-component truth undefined")
    if status == _LAMBDA_ZERO:
        raise LambdaParentZero(f"forecast/revcast propagation factor vanishes at sigma_t2={sigma_t2:.6g}")
    return _params_at(m, sol, 0)


def _params_at(m, sol, k):
    beta = {t: float(sol["beta"][t][k]) for t in GLOBCURRENT}
    mean_i = m.mean_of("I")
    return InfersParams(
        sigma_t2=float(sol["s"][k]),
        beta=beta,
        lam={t: float(sol["lam"][t][k]) for t in GLOBCURRENT},
        sigma2={t: float(sol["sigma2"][t][k]) for t in TAGS},
        alpha={t: m.mean_of(t) - beta[t] * mean_i for t in GLOBCURRENT},
        sigma_t2_u=float(sol["st"]["u"][k]),
        sigma_t2_v=float(sol["st"]["v"][k]),
    )


def autocov_rhs(sol):
    """Model side of the six F/E/R/S covariance equations, keyed like AUTOCOV_KEYS."""
    s, b, l, sig, g = sol["s"], sol["beta"], sol["lam"], sol["sigma2"], sol["g"]
    return {
        "fe": b["F"] * b["E"] * s + l["E"] * (l["F"] ** 2 * g + sig["F"]),
        "fr": b["F"] * b["R"] * s + l["F"] * l["R"] * g,
        "fs": b["F"] * b["S"] * s + l["F"] * l["S"] * l["R"] * g,
        "er": b["E"] * b["R"] * s + l["E"] * l["F"] * l["R"] * g,
        "es": b["E"] * b["S"] * s + l["E"] * l["F"] * l["S"] * l["R"] * g,
        "rs": b["R"] * b["S"] * s + l["S"] * (l["R"] ** 2 * g + sig["R"]),
    }


@dataclass(frozen=True)
class ResidualCurves:
    """Absolute autocovariance residuals over a grid of candidate true variance.

    ``residual`` has shape ``(6, len(grid))`` with rows in ``AUTOCOV_KEYS``
    order; NaN marks grid points where the strong solve failed.
    """

    grid: np.ndarray
    residual: np.ndarray
    feasible: np.ndarray
    minima: dict
    target: float
    moments: MomentSet
    beta_N: float
    chosen: float = math.nan

    def curve(self, key):
        return self.residual[AUTOCOV_KEYS.index(key)]

    @property
    def has_minima(self):
        return any(len(v) for v in self.minima.values())


def local_minima(y):
    """Indices of strict interior local minima; NaN points and their neighbours never qualify."""
    y = np.asarray(y, dtype=float)
    if y.size < 3:
        return np.array([], dtype=int)
    mid, left, right = y[1:-1], y[:-2], y[2:]
    with np.errstate(invalid="ignore"):
        ok = np.isfinite(mid) & np.isfinite(left) & np.isfinite(right) & (mid < left) & (mid < right)
    return np.flatnonzero(ok) + 1


def residual_curves(m: MomentSet, beta_N, grid_size=2000) -> ResidualCurves:
    """Evaluate the six autocovariance residuals on a uniform grid over [0, Var(I)]."""
    if grid_size < 100:
        raise ValueError(f"grid_size must be at least 100, got {grid_size}")
    var_i = m.var("I")
    if var_i <= 0:
        raise DegenerateVariance("Var(I) must be positive")
    grid = np.linspace(0.0, var_i, grid_size)
    sol = _cascade(m, grid, beta_N)
    ok = sol["status"] == _OK
    ok[-1] = False  # zero drifter error variance, outside the strong-solve domain
    with np.errstate(invalid="ignore", over="ignore"):
        rhs = autocov_rhs(sol)
    residual = np.full((len(AUTOCOV_KEYS), grid_size), np.nan)
    for k, (a, b) in enumerate(AUTOCOV_PAIRS):
        with np.errstate(invalid="ignore"):
            r = np.abs(m.cov(a, b) - rhs[AUTOCOV_KEYS[k]])
        residual[k, ok] = r[ok]
    residual[~np.isfinite(residual)] = np.nan
    with np.errstate(invalid="ignore"):
        feasible = ok.copy()
        for t in TAGS:
            feasible &= sol["sigma2"][t] >= 0
        feasible &= (sol["st"]["u"] >= 0) & (sol["st"]["v"] >= 0)
    minima = {key: [float(grid[i]) for i in local_minima(residual[k])] for k, key in enumerate(AUTOCOV_KEYS)}
    pooled = [x for v in minima.values() for x in v]
    target = float(np.mean(pooled)) if pooled else math.nan
    return ResidualCurves(grid, residual, feasible, minima, target, m, float(beta_N))


def _target_feasible(c: ResidualCurves):
    j = int(np.searchsorted(c.grid, c.target))
    if j < len(c.grid) and c.grid[j] == c.target:
        return bool(c.feasible[j])
    if j == 0 or j >= len(c.grid):
        return False
    return bool(c.feasible[j - 1] and c.feasible[j])


def choose_solution(c: ResidualCurves):
    """Pick the true variance: the pooled-minima mean if feasible, else the
    nearest feasible grid point.  Returns ``(sigma_t2, params)``.
    """
    if not c.has_minima:
        raise NoMinimaFound("no local minima on any autocovariance residual curve", curves=c)
    if _target_feasible(c):
        chosen = c.target
    else:
        idx = np.flatnonzero(c.feasible)
        if idx.size == 0:
            raise NoFeasibleRegion("no grid point yields non-negative variances", curves=c)
        chosen = float(c.grid[idx[np.argmin(np.abs(c.grid[idx] - c.target))]])
    return chosen, strong_solve(c.moments, chosen, c.beta_N)


@dataclass(frozen=True)
class ComponentStats:
    sigma_total: float
    sigma_truth: float
    sigma_err_total: float
    sigma_err_indiv: float
    corr_truth: float
    snr_db: float


@dataclass(frozen=True)
class FitDiagnostics:
    """Per-dataset, per-component standard deviations, signal correlation and SNR.

    ``stats`` is keyed by ``(tag, component)`` with component ``"u"`` or ``"v"``.
    """

    stats: dict
    err_var_u: dict
    err_var_v: dict
    min_envelope_corr_u: float
    min_envelope_corr_v: float
    warnings: tuple = ()

    def __getitem__(self, key):
        return self.stats[key]

    def to_dict(self):
        out = {f"{tag}_{comp}": vars(s).copy() for (tag, comp), s in self.stats.items()}
        return {
            "components": out,
            "err_var_u": dict(self.err_var_u),
            "err_var_v": dict(self.err_var_v),
            "min_envelope_corr_u": self.min_envelope_corr_u,
            "min_envelope_corr_v": self.min_envelope_corr_v,
            "warnings": list(self.warnings),
        }


def snr_db(signal_var, noise_var):
    if noise_var <= 0:
        return SNR_CAP_DB
    if signal_var <= 0:
        return -SNR_CAP_DB
    return float(np.clip(10 * np.log10(signal_var / noise_var), -SNR_CAP_DB, SNR_CAP_DB))


def signal_correlation(beta, sigma_truth, sigma_total):
    """Correlation of a dataset with the truth: beta * sigma_t / sigma."""
    if sigma_total <= 0:
        return math.nan
    return float(np.clip(beta * sigma_truth / sigma_total, -1.0, 1.0))


def drifter_indiv_error(lambda_N, sigma_err_total):
    """Unshared drifter error std, sqrt(1 - lambda_N) * sigma_I (lambda_N clipped to [0, 1])."""
    return math.sqrt(min(max(1.0 - lambda_N, 0.0), 1.0)) * sigma_err_total


def nowcast_indiv_error(lambda_N, sigma_I, sigma_err_total):
    """Individual nowcast error std from its total error std."""
    return math.sqrt(max(sigma_err_total**2 - lambda_N**2 * sigma_I**2, 0.0))


def split_error_variances(p: InfersParams, m: MomentSet):
    """Apportion joint error variances to u and v.

    Each joint variance is split in proportion to the per-component
    remainder ``Var_c(X) - beta^2 sigma_t,c^2 - propagated_c`` (clamped at 0).
    Returns per-component individual and total (propagated + individual)
    error variances.
    """
    st = {"u": max(p.sigma_t2_u, 0.0), "v": max(p.sigma_t2_v, 0.0)}
    indiv = {"u": {}, "v": {}}
    total = {"u": {}, "v": {}}
    truth = {"u": p.sigma_t2_u, "v": p.sigma_t2_v}
    for c in ("u", "v"):
        indiv[c]["I"] = total[c]["I"] = m.var("I", c) - truth[c]
    for x in GLOBCURRENT:
        parent = "I" if x == "N" else PARENT[x]
        prop = {c: p.lam[x] ** 2 * total[c][parent] for c in ("u", "v")}
        rem = {c: max(m.var(x, c) - p.beta[x] ** 2 * st[c] - prop[c], 0.0) for c in ("u", "v")}
        tot = rem["u"] + rem["v"]
        share_u = rem["u"] / tot if tot > 0 else 0.5
        joint = max(p.sigma2[x], 0.0)
        indiv["u"][x], indiv["v"][x] = share_u * joint, (1 - share_u) * joint
        for c in ("u", "v"):
            total[c][x] = prop[c] + indiv[c][x]
    return indiv, total


def envelope_correlations(m: MomentSet):
    """Minimum per-component correlation over all pairs among N, F, E, R, S."""
    out = {}
    for c in ("u", "v"):
        C = m.matrix(c)
        idx = [m.index(t) for t in GLOBCURRENT]
        sub = C[np.ix_(idx, idx)]
        d = np.sqrt(np.diag(sub))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = sub / np.outer(d, d)
        iu = np.triu_indices(len(idx), 1)
        out[c] = float(np.nanmin(r[iu])) if np.isfinite(r[iu]).any() else math.nan
    return out


def diagnostics(p: InfersParams, m: MomentSet, tol=1e-9) -> FitDiagnostics:
    scale = max(m.var("I"), 1e-300)
    if not p.is_feasible(tol * scale):
        raise InfeasibleParams("diagnostics need non-negative variance estimates")
    indiv, total = split_error_variances(p, m)
    st = {"u": max(p.sigma_t2_u, 0.0), "v": max(p.sigma_t2_v, 0.0)}
    stats = {}
    for tag in TAGS:
        beta = 1.0 if tag == "I" else p.beta[tag]
        for c in ("u", "v"):
            sig_total = math.sqrt(max(m.var(tag, c), 0.0))
            err_total = math.sqrt(max(total[c][tag], 0.0))
            if tag == "I":
                err_indiv = drifter_indiv_error(p.lambda_N, err_total)
            else:
                err_indiv = math.sqrt(max(indiv[c][tag], 0.0))
            signal = beta * math.sqrt(st[c])
            stats[(tag, c)] = ComponentStats(
                sig_total, math.sqrt(st[c]), err_total, err_indiv,
                signal_correlation(beta, math.sqrt(st[c]), sig_total), snr_db(signal**2, err_total**2),
            )
    env = envelope_correlations(m)
    warn = []
    for c in ("u", "v"):
        if env[c] < ENVELOPE_MIN_CORR:
            warn.append(f"envelope: minimum NFERS correlation ({c}) {env[c]:.3f} < {ENVELOPE_MIN_CORR}")
    return FitDiagnostics(
        stats,
        {t: indiv["u"][t] for t in TAGS},
        {t: indiv["v"][t] for t in TAGS},
        env["u"],
        env["v"],
        tuple(warn),
    )


@dataclass(frozen=True)
class FitResult:
    params: InfersParams
    curves: ResidualCurves
    diagnostics: FitDiagnostics
    trim: object
    moments: MomentSet
    warnings: tuple = ()


def fit(records, trim_fraction=0.10, grid_size=2000, min_records=100, recommended_records=500) -> FitResult:
    """Trim, compute moments, variance-match, search true variance, diagnose."""
    from .robust import subset_size, trim_outliers

    col = as_collocations(records)
    warn = []
    n_kept = subset_size(len(col), trim_fraction) if trim_fraction > 0 else len(col)
    if n_kept < min_records:
        raise SubsetTooSmall(f"{len(col)} records leave {n_kept} after trimming; need {min_records}")
    trim = None
    kept = col
    if trim_fraction > 0:
        try:
            trim = trim_outliers(col, trim_fraction)
        except SingularCovariance as exc:
            trim = exc.result
            warn.append(f"trim: {exc}; no records flagged")
        kept = col.take(np.asarray(trim.kept))
    if len(kept) < recommended_records:
        warn.append(f"subset size {len(kept)} below recommended {recommended_records}")
    m = compute_moments(kept)
    beta_N = variance_match(m)
    curves = residual_curves(m, beta_N, grid_size)
    chosen, params = choose_solution(curves)
    curves = replace(curves, chosen=chosen)
    if chosen != curves.target:
        warn.append("feasibility: target minimum infeasible; chosen on the feasibility boundary")
    diag = diagnostics(params, m)
    warn.extend(diag.warnings)
    return FitResult(params, curves, diag, trim, m, tuple(warn))
