"""Two-step system GMM for static panels with unit effects.

Each unit contributes a stack of first-differenced rows (t = 2..T) and level
rows (t = 1..T). Differenced rows are instrumented by lagged levels of the
endogenous and predetermined regressors, level rows by lagged differences.
Exogenous regressors, period and sector dummies instrument themselves.

Units are padded to a common row layout; absent rows are zero in the
outcome, the regressors and the instruments, so they drop out of every
moment. Missing lag cells are zero-filled.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg, stats

from .exceptions import (
    DomainError,
    InsufficientPeriods,
    NotOveridentified,
    RankDeficient,
    SingularWeightMatrixWarning,
    SubsetNotFound,
)
from .validation import check_columns, factor_codes

HANSEN_ADVISORY = (
    "Hansen p-values close to 1 can signal instrument proliferation; values well "
    "above 0.25 are commonly read as comfortable but not conclusive."
)


@dataclass
class GmmSpec:
    """Roles and instrument settings for :func:`fit_system_gmm`.

    ``lag_range`` maps a role (``endogenous``, ``predetermined``) to the
    ``(min_lag, max_lag)`` of level instruments in the differenced equation.
    The level equation uses the difference dated ``min_lag - 1``.
    ``equation`` maps a role to ``both`` (default), ``diff`` or ``level``:
    which equations its GMM-style instruments enter.
    """

    endogenous: list = field(default_factory=list)
    predetermined: list = field(default_factory=list)
    exogenous: list = field(default_factory=list)
    lag_range: dict = field(default_factory=lambda: {"endogenous": (2, 3), "predetermined": (2, 3)})
    collapse: bool = False
    equation: dict = field(default_factory=lambda: {"endogenous": "both", "predetermined": "both"})
    fe: tuple = ("time",)
    unit: str = "unit"
    time: str = "year"
    cluster: str = None
    sector: str = "sector"
    y: str = "y"

    def __post_init__(self):
        roles = [set(self.endogenous), set(self.predetermined), set(self.exogenous)]
        if any(a & b for i, a in enumerate(roles) for b in roles[i + 1:]):
            raise ValueError("endogenous, predetermined and exogenous lists must be disjoint")
        lags = {"endogenous": (2, 3), "predetermined": (2, 3)}
        lags.update({k: tuple(int(x) for x in v) for k, v in (self.lag_range or {}).items()})
        for role, (lo, hi) in lags.items():
            if role not in ("endogenous", "predetermined"):
                raise ValueError(f"unknown role {role!r} in lag_range")
            if hi < lo:
                raise ValueError(f"lag_range for {role} has max < min")
        if lags["endogenous"][0] < 2:
            raise ValueError("endogenous regressors need min_lag >= 2")
        if lags["predetermined"][0] < 1:
            raise ValueError("predetermined regressors need min_lag >= 1")
        self.lag_range = lags
        eq = {"endogenous": "both", "predetermined": "both"}
        eq.update(self.equation or {})
        if set(eq) - {"endogenous", "predetermined"} or set(eq.values()) - {"both", "diff", "level"}:
            raise ValueError(f"equation must map endogenous/predetermined to both, diff or level, got {eq}")
        self.equation = eq
        bad = set(self.fe) - {"time", "sector"}
        if bad:
            raise ValueError(f"unknown fixed effects {sorted(bad)}")

    def role(self, name):
        if name in self.endogenous:
            return "endogenous"
        if name in self.predetermined:
            return "predetermined"
        return "exogenous"


@dataclass
class InstrumentSet:
    """Padded instrument array with labelled blocks.

    ``Z`` has shape ``(units, rows, instruments)``; rows ``0..T-2`` are the
    differenced equation (periods 2..T) and rows ``T-1..2T-2`` the levels.
    """

    Z: np.ndarray
    labels: list
    blocks: dict

    @property
    def count(self):
        return self.Z.shape[2]

    def without(self, columns):
        keep = np.setdiff1d(np.arange(self.count), np.asarray(columns, dtype=int))
        labels = [self.labels[j] for j in keep]
        remap = {old: new for new, old in enumerate(keep)}
        blocks = {k: [remap[j] for j in v if j in remap] for k, v in self.blocks.items()}
        return InstrumentSet(self.Z[:, :, keep], labels, {k: v for k, v in blocks.items() if v})


@dataclass
class _Panel:
    units: np.ndarray
    periods: np.ndarray
    values: dict          # name -> (N, T) with NaN for missing
    present: np.ndarray   # (N, T) rows usable in estimation
    sector: np.ndarray = None
    cluster: np.ndarray = None

    @property
    def shape(self):
        return self.present.shape


def _pivot(panel, spec, names):
    check_columns(panel, [spec.unit, spec.time, *names], "panel")
    if panel.duplicated([spec.unit, spec.time]).any():
        raise ValueError("duplicate unit/time rows")
    units = np.sort(panel[spec.unit].unique())
    t0, t1 = int(panel[spec.time].min()), int(panel[spec.time].max())
    periods = np.arange(t0, t1 + 1)
    ui = np.searchsorted(units, panel[spec.unit].to_numpy())
    ti = panel[spec.time].to_numpy().astype(int) - t0
    N, T = len(units), len(periods)
    values = {}
    for name in names:
        arr = np.full((N, T), np.nan)
        arr[ui, ti] = panel[name].to_numpy(dtype=float)
        values[name] = arr
    present = np.zeros((N, T), dtype=bool)
    present[ui, ti] = True
    for name in names:
        present &= ~np.isnan(values[name])
    out = _Panel(units, periods, values, present)
    if "sector" in spec.fe:
        check_columns(panel, [spec.sector], "panel")
        codes = factor_codes(panel[spec.sector].astype(str).to_numpy())
        sec = np.full((N, T), -1)
        sec[ui, ti] = codes
        out.sector = sec
    if spec.cluster and spec.cluster != spec.unit:
        check_columns(panel, [spec.cluster], "panel")
        per_unit = panel.groupby(spec.unit)[spec.cluster].nunique()
        if (per_unit > 1).any():
            raise ValueError("cluster must be constant within unit")
        first = panel.drop_duplicates(spec.unit).set_index(spec.unit)[spec.cluster]
        out.cluster = factor_codes(first.loc[units].to_numpy())
    return out


def _stack(level, diff_valid, level_valid):
    """(N, T) level values -> padded (N, 2T-1) rows: differences then levels."""
    lv = np.nan_to_num(level)
    d = np.where(diff_valid, lv[:, 1:] - lv[:, :-1], 0.0)
    return np.concatenate([d, np.where(level_valid, lv, 0.0)], axis=1)


def _validity(p):
    level_valid = p.present
    diff_valid = p.present[:, 1:] & p.present[:, :-1]
    return diff_valid, level_valid


def _dummies(p, spec):
    """Period (and sector) dummy columns as (N, T) arrays, first category dropped."""
    N, T = p.shape
    out = {}
    if "time" in spec.fe:
        for k in range(1, T):
            arr = np.zeros((N, T))
            arr[:, k] = 1.0
            out[f"year_{p.periods[k]}"] = arr
    if "sector" in spec.fe and p.sector is not None:
        for s in range(1, int(p.sector.max()) + 1):
            out[f"sector_{s}"] = (p.sector == s).astype(float)
    return out


def build_instruments(panel, spec, regressors=None):
    """Instrument blocks for the stacked system.

    Parameters
    ----------
    panel : DataFrame or the padded internal panel
    spec : GmmSpec
    regressors : list of str, optional
        Regressor names (defaults to every role in ``spec``).

    Returns
    -------
    InstrumentSet
    """
    regressors = list(regressors or [*spec.endogenous, *spec.predetermined, *spec.exogenous])
    p = panel if isinstance(panel, _Panel) else _pivot(panel, spec, [spec.y, *regressors])
    N, T = p.shape
    if T < 3:
        raise InsufficientPeriods(f"system GMM needs at least 3 periods, got {T}")
    diff_valid, level_valid = _validity(p)
    R = 2 * T - 1
    cols, labels, blocks = [], [], {}

    def add(block, label, column):
        blocks.setdefault(block, []).append(len(cols))
        cols.append(column)
        labels.append(label)

    for name in regressors:
        role = spec.role(name)
        if role == "exogenous":
            continue
        lo, hi = spec.lag_range[role]
        x = np.nan_to_num(p.values[name])
        xmask = ~np.isnan(p.values[name])
        eq = spec.equation[role]
        # Differenced equation: x_{t-l}, t = 2..T.
        if eq == "level":
            pass
        elif spec.collapse:
            for lag in range(lo, hi + 1):
                col = np.zeros((N, R))
                for t in range(1, T):
                    if t - lag >= 0:
                        col[:, t - 1] = x[:, t - lag] * diff_valid[:, t - 1]
                add(f"gmm_diff:{name}", f"{name}:L{lag}", col)
        else:
            for t in range(1, T):
                for lag in range(lo, hi + 1):
                    if t - lag >= 0:
                        col = np.zeros((N, R))
                        col[:, t - 1] = x[:, t - lag] * diff_valid[:, t - 1]
                        add(f"gmm_diff:{name}", f"{name}:L{lag}@{p.periods[t]}", col)
        if eq == "diff":
            continue
        # Level equation: dx_{t-(lo-1)}, needs both ends of the difference.
        lag = lo - 1
        dx = np.zeros((N, T))
        dx[:, 1:] = np.where(xmask[:, 1:] & xmask[:, :-1], x[:, 1:] - x[:, :-1], 0.0)
        if spec.collapse:
            col = np.zeros((N, R))
            for t in range(T):
                if t - lag >= 1:
                    col[:, T - 1 + t] = dx[:, t - lag] * level_valid[:, t]
            add(f"gmm_level:{name}", f"D.{name}:L{lag}", col)
        else:
            for t in range(T):
                if t - lag >= 1:
                    col = np.zeros((N, R))
                    col[:, T - 1 + t] = dx[:, t - lag] * level_valid[:, t]
                    add(f"gmm_level:{name}", f"D.{name}:L{lag}@{p.periods[t]}", col)

    for name in regressors:
        if spec.role(name) == "exogenous":
            add(f"iv:{name}", name, _stack(p.values[name], diff_valid, level_valid))
    for name, arr in _dummies(p, spec).items():
        add(f"iv:{name}", name, _stack(arr, diff_valid, level_valid))
    const = np.zeros((N, R))
    const[:, T - 1:] = level_valid
    add("iv:const", "const", const)

    Z = np.stack(cols, axis=2) if cols else np.zeros((N, R, 0))
    nonzero = np.flatnonzero(np.abs(Z).sum(axis=(0, 1)) > 0)
    inst = InstrumentSet(Z, labels, blocks)
    return inst.without(np.setdiff1d(np.arange(len(cols)), nonzero)) if nonzero.size < len(cols) else inst


def _one_step_H(T):
    # Differenced rows: MA(1) structure of differenced i.i.d. errors; levels: identity.
    R = 2 * T - 1
    H = np.zeros((R, R))
    n = T - 1
    H[:n, :n] = 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    H[n:, n:] = np.eye(T)
    return H


def _weight(A, what):
    """Inverse of a moment covariance, falling back to ridge or pseudo-inverse."""
    L = A.shape[0]
    if L == 0:
        return A.copy(), None
    if np.linalg.matrix_rank(A) < L:
        warnings.warn(f"{what} is singular; using the pseudo-inverse", SingularWeightMatrixWarning, stacklevel=3)
        return np.linalg.pinv(A, hermitian=True), "pinv"
    if np.linalg.cond(A) > 1e12:
        warnings.warn(f"{what} is ill-conditioned; adding a 1e-10*trace ridge", SingularWeightMatrixWarning,
                      stacklevel=3)
        A = A + 1e-10 * np.trace(A) * np.eye(L)
        return linalg.inv(A), "ridge"
    return linalg.inv(A, check_finite=False), None


def _sym(A):
    return 0.5 * (A + A.T)


@dataclass
class _System:
    y: np.ndarray          # (N, R)
    X: np.ndarray          # (N, R, K)
    names: list
    T: int
    groups: np.ndarray     # cluster code per unit
    n_groups: int
    valid: np.ndarray      # (N, R) rows present in the system


def _two_step(system, inst):
    y, X, Z = system.y, system.X, inst.Z
    K, L = X.shape[2], Z.shape[2]
    if L < K:
        raise RankDeficient(system.names, f"{L} instruments for {K} parameters")
    H = _one_step_H(system.T)
    ZX = np.einsum("nrl,nrk->lk", Z, X)
    Zy = np.einsum("nrl,nr->l", Z, y)
    if np.linalg.matrix_rank(ZX) < K:
        raise RankDeficient(system.names, "instruments do not identify every coefficient")
    ZHZ = np.einsum("nrl,rs,nsm->lm", Z, H, Z, optimize=True)
    A1, flag1 = _weight(_sym(ZHZ), "one-step weight matrix")
    M1 = linalg.inv(_sym(ZX.T @ A1 @ ZX))
    b1 = M1 @ ZX.T @ A1 @ Zy
    e1 = y - np.einsum("nrk,k->nr", X, b1)

    def cluster_moments(e):
        g = np.einsum("nrl,nr->nl", Z, e)
        out = np.zeros((system.n_groups, L))
        np.add.at(out, system.groups, g)
        return out

    g1 = cluster_moments(e1)
    Omega = g1.T @ g1
    W2, flag2 = _weight(_sym(Omega), "two-step weight matrix")
    V2 = linalg.inv(_sym(ZX.T @ W2 @ ZX))
    b2 = V2 @ ZX.T @ W2 @ Zy
    e2 = y - np.einsum("nrk,k->nr", X, b2)
    Ze2 = np.einsum("nrl,nr->l", Z, e2)
    V1r = M1 @ ZX.T @ A1 @ Omega @ A1 @ ZX @ M1

    # Windmeijer correction: derivative of the weight matrix in the one-step estimate.
    Q = np.einsum("nrl,nrk->nlk", Z, X)
    Qg = np.zeros((system.n_groups, L, K))
    np.add.at(Qg, system.groups, Q)
    D = np.zeros((K, K))
    We = W2 @ Ze2
    for j in range(K):
        dOmega = -(Qg[:, :, j].T @ g1 + g1.T @ Qg[:, :, j])
        D[:, j] = -V2 @ ZX.T @ W2 @ dOmega @ We
    Vw = V2 + D @ V2 + V2 @ D.T + D @ V1r @ D.T
    J = float(Ze2 @ W2 @ Ze2)
    return {
        "b1": b1, "b2": b2, "e1": e1, "e2": e2, "V1r": _sym(V1r), "V2": _sym(V2), "Vw": _sym(Vw),
        "W2": W2, "ZX": ZX, "J": J, "flags": [f for f in (flag1, flag2) if f],
    }


@dataclass
class GmmResult:
    coefficients: pd.Series
    cov_onestep: pd.DataFrame
    cov_twostep: pd.DataFrame
    cov_windmeijer: pd.DataFrame
    n_instruments: int
    n_params: int
    n_units: int
    n_clusters: int
    n_obs: int
    hansen: tuple
    diff_hansen: list = field(default_factory=list)
    ar_tests: dict = field(default_factory=dict)
    onestep_coefficients: pd.Series = None
    instrument_labels: list = field(default_factory=list)
    instrument_blocks: dict = field(default_factory=dict)
    weight_flags: list = field(default_factory=list)
    advisory: str = HANSEN_ADVISORY
    spec: GmmSpec = None
    _system: _System = field(default=None, repr=False)
    _instruments: InstrumentSet = field(default=None, repr=False)
    _fit: dict = field(default=None, repr=False)

    @property
    def std_errors(self):
        return pd.Series(np.sqrt(np.diag(self.cov_windmeijer)), index=self.cov_windmeijer.index)

    @property
    def df(self):
        return self.n_instruments - self.n_params

    def summary_frame(self, alpha=0.05):
        se = self.std_errors
        z = self.coefficients / se
        crit = stats.norm.ppf(1 - alpha / 2)
        return pd.DataFrame({
            "coefficient": self.coefficients, "std_error": se,
            "std_error_uncorrected": np.sqrt(np.diag(self.cov_twostep)), "z": z,
            "p_value": 2 * stats.norm.sf(np.abs(z)),
            "ci_low": self.coefficients - crit * se, "ci_high": self.coefficients + crit * se,
        })

    def diagnostics(self):
        stat, df, p = self.hansen
        return {
            "n_instruments": self.n_instruments, "n_params": self.n_params, "n_units": self.n_units,
            "n_clusters": self.n_clusters, "n_obs": self.n_obs,
            "hansen_j": {"stat": stat, "df": df, "p": None if np.isnan(p) else p},
            "diff_hansen": [{"subset": s, "p_excluding": pe, "p_difference": pd_, "df": d}
                            for s, pe, pd_, d in self.diff_hansen],
            "ar_tests": {str(k): v for k, v in self.ar_tests.items()},
            "weight_flags": self.weight_flags, "missing_lags": "zero-filled",
            "advisory": self.advisory,
        }


def _system_arrays(p, spec, regressors):
    diff_valid, level_valid = _validity(p)
    N, T = p.shape
    y = _stack(p.values[spec.y], diff_valid, level_valid)
    cols, names = [], []
    for name in regressors:
        cols.append(_stack(p.values[name], diff_valid, level_valid))
        names.append(name)
    for name, arr in _dummies(p, spec).items():
        cols.append(_stack(arr, diff_valid, level_valid))
        names.append(name)
    const = np.zeros((N, 2 * T - 1))
    const[:, T - 1:] = level_valid
    cols.append(const)
    names.append("const")
    X = np.stack(cols, axis=2)
    keep = [j for j in range(X.shape[2]) if np.abs(X[:, :, j]).sum() > 0]
    X, names = X[:, :, keep], [names[j] for j in keep]
    groups = p.cluster if p.cluster is not None else np.arange(N)
    valid = np.concatenate([diff_valid, level_valid], axis=1)
    return _System(y, X, names, T, groups, int(groups.max()) + 1, valid)


def _result(system, inst, spec, fit):
    names = system.names
    frame = lambda V: pd.DataFrame(V, index=names, columns=names)  # noqa: E731
    K, L = len(names), inst.count
    df = L - K
    p = float(stats.chi2.sf(fit["J"], df)) if df > 0 else float("nan")
    return GmmResult(
        coefficients=pd.Series(fit["b2"], index=names),
        cov_onestep=frame(fit["V1r"]),
        cov_twostep=frame(fit["V2"]),
        cov_windmeijer=frame(fit["Vw"]),
        n_instruments=L,
        n_params=K,
        n_units=system.y.shape[0],
        n_clusters=system.n_groups,
        n_obs=int(system.valid[:, system.T - 1:].sum()),
        hansen=(fit["J"] if df > 0 else 0.0, df, p),
        onestep_coefficients=pd.Series(fit["b1"], index=names),
        instrument_labels=list(inst.labels),
        instrument_blocks={k: len(v) for k, v in inst.blocks.items()},
        weight_flags=fit["flags"],
        spec=spec,
        _system=system,
        _instruments=inst,
        _fit=fit,
    )


def fit_system_gmm(panel, regressors, spec, diff_hansen_subsets=(), ar_orders=(1, 2)):
    """Two-step system GMM with Windmeijer-corrected covariance.

    Parameters
    ----------
    panel : DataFrame
        Long panel with ``spec.unit``, ``spec.time``, ``spec.y`` and the
        regressors.
    regressors : list of str
        Regressors not listed in a ``spec`` role are treated as exogenous.
    spec : GmmSpec
    diff_hansen_subsets : sequence of str
        Instrument blocks to test (see :func:`diff_hansen`).
    ar_orders : sequence of int
        Arellano-Bond orders to report; orders the panel is too short for
        are skipped.
    """
    regressors = list(regressors)
    p = _pivot(panel, spec, [spec.y, *regressors])
    inst = build_instruments(p, spec, regressors)
    system = _system_arrays(p, spec, regressors)
    fit = _two_step(system, inst)
    result = _result(system, inst, spec, fit)
    for label in diff_hansen_subsets:
        try:
            result.diff_hansen.append((label, *diff_hansen(result, label, return_all=True)))
        except (NotOveridentified, RankDeficient):
            # Dropping the block leaves the model without enough instruments.
            result.diff_hansen.append((label, float("nan"), float("nan"), len(_subset_columns(result, label))))
    for order in ar_orders:
        if order <= system.T - 3:
            result.ar_tests[order] = ar_test(result, order)
    return result


def hansen_j(result):
    """``(J, df, p)``; an exactly identified fit gives ``(0.0, 0, nan)``."""
    return result.hansen


def hansen_j_strict(result):
    stat, df, p = result.hansen
    if df == 0:
        raise NotOveridentified("exactly identified: Hansen J is zero with undefined p-value")
    return stat, df, p


def _subset_columns(result, subset):
    blocks = result._instruments.blocks
    labels = [subset] if isinstance(subset, str) else list(subset)
    cols = set()
    for label in labels:
        if label in blocks:
            cols.update(blocks[label])
        elif label == "level":
            cols.update(j for k, v in blocks.items() if k.startswith("gmm_level:") for j in v)
        elif label.startswith("gmm:"):
            name = label[4:]
            hits = [k for k in blocks if k in (f"gmm_diff:{name}", f"gmm_level:{name}")]
            if not hits:
                raise SubsetNotFound(label)
            cols.update(j for k in hits for j in blocks[k])
        elif label == "iv":
            cols.update(j for k, v in blocks.items() if k.startswith("iv:") for j in v)
        else:
            raise SubsetNotFound(label)
    return sorted(cols)


def diff_hansen(result, subset, return_all=False):
    """Difference-in-Hansen test for an instrument block.

    ``subset`` is a block label (``gmm_diff:<var>``, ``gmm_level:<var>``,
    ``iv:<var>``), a shorthand (``level``, ``gmm:<var>``, ``iv``) or a list
    of these. Returns the p-value of the difference statistic; with
    ``return_all`` returns ``(p_excluding, p_difference, df)``.
    """
    cols = _subset_columns(result, subset)
    stat, _, _ = result.hansen
    if not cols:
        return (float("nan"), 1.0, 0) if return_all else 1.0
    reduced = result._instruments.without(cols)
    K = result.n_params
    if reduced.count < K:
        raise NotOveridentified(f"dropping {subset!r} leaves {reduced.count} instruments for {K} parameters")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularWeightMatrixWarning)
        fit = _two_step(result._system, reduced)
    df_ex = reduced.count - K
    j_ex = fit["J"] if df_ex > 0 else 0.0
    diff = stat - j_ex
    df = len(cols)
    p_diff = float(stats.chi2.sf(diff, df))
    p_ex = float(stats.chi2.sf(j_ex, df_ex)) if df_ex > 0 else float("nan")
    return (p_ex, p_diff, df) if return_all else p_diff


def ar_test(result, order):
    """Arellano-Bond test for serial correlation of the differenced residuals.

    Returns the two-sided standard-normal p-value.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    system, fit = result._system, result._fit
    T = system.T
    if order > T - 3:
        raise InsufficientPeriods(f"AR({order}) needs more than {order + 2} periods, panel has {T}")
    n = T - 1
    e = fit["e2"]
    de = e[:, :n]
    Xd = system.X[:, :n, :]
    valid = system.valid[:, :n]
    lag = np.zeros_like(de)
    lag[:, order:] = de[:, :-order]
    lag_valid = np.zeros_like(valid)
    lag_valid[:, order:] = valid[:, :-order]
    both = valid & lag_valid
    cur, prev = np.where(both, de, 0.0), np.where(both, lag, 0.0)
    scale = max(1.0, np.abs(system.y).max())
    if np.abs(cur).max() <= 1e-10 * scale or np.abs(prev).max() <= 1e-10 * scale:
        raise DomainError("differenced residuals are all zero; AR test undefined")
    a_unit = (cur * prev).sum(axis=1)
    a = np.zeros(system.n_groups)
    np.add.at(a, system.groups, a_unit)
    num = a.sum()
    Xs = np.where(both[:, :, None], Xd, 0.0)
    c = np.einsum("nr,nrk->k", prev, Xs)
    Z = result._instruments.Z
    g = np.einsum("nrl,nr->nl", Z, e)
    gc = np.zeros((system.n_groups, Z.shape[2]))
    np.add.at(gc, system.groups, g)
    ZX, W2, V2, Vw = fit["ZX"], fit["W2"], fit["V2"], fit["Vw"]
    var = (a @ a) - 2 * c @ V2 @ ZX.T @ W2 @ (gc.T @ a) + c @ Vw @ c
    if not var > 0:
        raise DomainError("non-positive variance in AR test")
    z = num / np.sqrt(var)
    return float(2 * stats.norm.sf(abs(z)))

