"""Linear probability models with absorbed monadic and dyadic fixed effects.

Fixed effects are swept out by alternating projections (repeated group
demeaning), slopes come from OLS on the residualized data, and inference uses
cluster-robust CR1 covariance.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.utils.validation import check_is_fitted

from .exceptions import EmptySubsample, NonConvergence, RankDeficient, SingletonClusterWarning
from .validation import check_binary, check_columns, combine_factors, factor_codes

FACTOR_PARTS = {
    "time": ("year",),
    "origin": ("origin",),
    "destination": ("destination",),
    "sector": ("sector",),
    "pair": ("origin", "destination"),
    "origin_time": ("origin", "year"),
    "destination_time": ("destination", "year"),
    "sector_time": ("sector", "year"),
}

# Named fixed-effect structures of the estimation ladder.
PRESETS = {
    "baseline": ("time",),
    "monadic": ("time", "origin", "destination", "sector"),
    "pair": ("time", "pair", "sector"),
    "origin_time": ("origin_time", "destination", "sector"),
    "destination_time": ("destination_time", "origin", "sector"),
    "origin_time_sector_time": ("origin_time", "destination", "sector_time"),
    "destination_time_sector_time": ("destination_time", "origin", "sector_time"),
}


@dataclass(frozen=True)
class FixedEffectSpec:
    """Ordered fixed-effect dimensions.

    ``columns`` maps the parts ``year``, ``origin``, ``destination`` and
    ``sector`` to column names in the data.
    """

    factors: tuple
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise ValueError("a fixed-effect spec needs at least one factor")
        unknown = [f for f in factors if f not in FACTOR_PARTS]
        if unknown:
            raise ValueError(f"unknown fixed-effect factors: {unknown}")
        if len(set(factors)) != len(factors):
            raise ValueError("duplicate fixed-effect factors")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def preset(cls, name, **columns):
        return cls(PRESETS[name], columns)

    def column(self, part):
        return self.columns.get(part, part)

    def required_columns(self):
        return sorted({self.column(p) for f in self.factors for p in FACTOR_PARTS[f]})

    def codes(self, frame):
        check_columns(frame, self.required_columns(), "panel")
        return [combine_factors(*(frame[self.column(p)].to_numpy() for p in FACTOR_PARTS[f])) for f in self.factors]


def demean(X, factors, tol=1e-8, max_iter=10_000, return_iterations=False):
    """Residualize the columns of ``X`` on the indicator spaces of ``factors``.

    Parameters
    ----------
    X : array_like, shape (n,) or (n, k)
    factors : sequence of array_like
        One integer-coded (or hashable) group label per row for each factor.
    tol : float
        Stop once the largest absolute change of any entry over a full sweep
        falls below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    squeeze = X.ndim == 1
    R = (X[:, None] if squeeze else X).copy()
    codes = [factor_codes(f) for f in factors]
    counts = [np.bincount(c).astype(float) for c in codes]
    for c in codes:
        if c.shape[0] != R.shape[0]:
            raise ValueError("factor length does not match data")

    def sweep(M):
        for c, n in zip(codes, counts):
            for j in range(M.shape[1]):
                M[:, j] -= (np.bincount(c, weights=M[:, j], minlength=n.size) / n)[c]

    if len(codes) == 0:
        iterations = 0
    elif len(codes) == 1:
        sweep(R)
        iterations = 1
    else:
        for iterations in range(1, max_iter + 1):
            prev = R.copy()
            sweep(R)
            change = np.max(np.abs(R - prev), axis=0) if R.size else np.zeros(R.shape[1])
            if np.all(change < tol):
                break
        else:
            worst = int(np.argmax(change))
            raise NonConvergence(f"demeaning did not converge; worst column {worst} (change {change[worst]:.3e})")
    out = R[:, 0] if squeeze else R
    return (out, iterations) if return_iterations else out


def _group_sum(codes, M):
    G = int(codes.max()) + 1
    return np.column_stack([np.bincount(codes, weights=M[:, j], minlength=G) for j in range(M.shape[1])])


def cluster_covariance(X, resid, clusters=None, small_sample=True, n_params=None):
    """Sandwich covariance ``(X'X)^-1 (sum_g s_g s_g') (X'X)^-1`` with ``s_g = X_g' e_g``.

    With ``small_sample`` the CR1 factor ``G/(G-1) * (N-1)/(N-K)`` is applied.
    ``clusters=None`` treats every row as its own cluster.
    """
    N, K = X.shape
    K = K if n_params is None else n_params
    bread = np.linalg.inv(X.T @ X)
    scores = X * resid[:, None]
    if clusters is None:
        S = scores
    else:
        S = _group_sum(factor_codes(clusters), scores)
    G = S.shape[0]
    V = bread @ (S.T @ S) @ bread
    if small_sample:
        # Undefined without spare clusters or residual degrees of freedom.
        V *= G / (G - 1) * (N - 1) / (N - K) if G > 1 and N > K else np.nan
    return (V + V.T) / 2


def _collinear(X, names, rtol=1e-10):
    if X.shape[1] == 0:
        return []
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * max(diag[0], 1e-300))) if diag.size else 0
    return [names[j] for j in sorted(piv[rank:])]


@dataclass
class EstimationResult:
    coefficients: dict
    covariance: pd.DataFrame
    cluster: str
    n_obs: int
    n_clusters: int
    r_squared: float
    within_r_squared: float
    fe_iterations: int
    covariance_cr0: pd.DataFrame = None
    singletons: dict = field(default_factory=dict)
    dropped_missing: int = 0
    prediction_report: dict = None
    df_resid: int = None

    @property
    def std_errors(self):
        return pd.Series(np.sqrt(np.diag(self.covariance)), index=self.covariance.index)

    def summary_frame(self, alpha=0.05):
        se = self.std_errors
        coef = pd.Series({k: self.coefficients[k] for k in se.index})
        tval = coef / se
        df = self.df_resid if self.df_resid else np.inf
        crit = stats.t.ppf(1 - alpha / 2, df)
        return pd.DataFrame({
            "coefficient": coef,
            "std_error": se,
            "t": tval,
            "p_value": 2 * stats.t.sf(np.abs(tval), df),
            "ci_low": coef - crit * se,
            "ci_high": coef + crit * se,
        })

    def conf_int(self, alpha=0.05):
        return self.summary_frame(alpha)[["ci_low", "ci_high"]]

    def diagnostics(self):
        return {
            "n_obs": self.n_obs,
            "n_clusters": self.n_clusters,
            "cluster": self.cluster,
            "r_squared": self.r_squared,
            "within_r_squared": self.within_r_squared,
            "fe_iterations": self.fe_iterations,
            "singletons": self.singletons,
            "dropped_missing": self.dropped_missing,
            "prediction_report": self.prediction_report,
        }


class LinearProbabilityModel(RegressorMixin, BaseEstimator):
    """OLS on a binary outcome with absorbed fixed effects.

    Parameters
    ----------
    regressors : list of str, optional
        Columns of ``X`` used as slopes. Defaults to every column that is
        not a fixed-effect or cluster column.
    fixed_effects : sequence of str or FixedEffectSpec
        Factor names from ``FACTOR_PARTS`` or a preset name from ``PRESETS``.
    fe_columns : dict, optional
        Column names for the parts ``year``, ``origin``, ``destination``,
        ``sector``.
    cluster : str, optional
        Column whose values define clusters. ``None`` gives
        heteroskedasticity-robust errors.
    small_sample : bool
        Apply the CR1 small-sample factor.
    """

    def __init__(self, regressors=None, fixed_effects=(), fe_columns=None, cluster=None,
                 small_sample=True, tol=1e-8, max_iter=10_000):
        self.regressors = regressors
        self.fixed_effects = fixed_effects
        self.fe_columns = fe_columns
        self.cluster = cluster
        self.small_sample = small_sample
        self.tol = tol
        self.max_iter = max_iter

    def _spec(self):
        fe = self.fixed_effects
        if isinstance(fe, FixedEffectSpec):
            return fe
        if isinstance(fe, str):
            fe = PRESETS[fe] if fe in PRESETS else (fe,)
        if not fe:
            return None
        return FixedEffectSpec(tuple(fe), dict(self.fe_columns or {}))

    def _regressor_names(self, X, spec):
        if self.regressors is not None:
            return list(self.regressors)
        skip = set(spec.required_columns()) if spec else set()
        if self.cluster is not None:
            skip.add(self.cluster)
        return [c for c in X.columns if c not in skip]

    def fit(self, X, y):
        if not isinstance(X, pd.DataFrame):
            X = pd.DataFrame(np.asarray(X, dtype=float)).rename(columns=lambda j: f"x{j}")
        spec = self._spec()
        names = self._regressor_names(X, spec)
        check_columns(X, names, "regressors")
        yv = np.asarray(y, dtype=float).ravel()
        Xv = X[names].to_numpy(dtype=float)
        keep = np.isfinite(yv) & np.all(np.isfinite(Xv), axis=1)
        self.dropped_missing_ = int((~keep).sum())
        X, Xv, yv = X.loc[keep], Xv[keep], yv[keep]
        if yv.size == 0:
            raise EmptySubsample("no complete rows to estimate on")
        check_binary(yv)
        self.sample_index_ = X.index
        self.feature_names_in_ = np.asarray(names, dtype=object)

        n = yv.size
        if spec is None:
            design = np.column_stack([np.ones(n), Xv])
            dnames = ["const"] + names
            yd, Xd, iterations = yv, design, 0
            codes = []
        else:
            codes = spec.codes(X)
            both, iterations = demean(np.column_stack([yv, Xv]), codes, self.tol, self.max_iter, True)
            yd, Xd, dnames = both[:, 0], both[:, 1:], names
        bad = _collinear(Xd, dnames)
        if bad:
            raise RankDeficient(bad)
        beta, *_ = np.linalg.lstsq(Xd, yd, rcond=None)
        resid = yd - Xd @ beta

        clusters = None
        if self.cluster is not None:
            check_columns(X, [self.cluster], "panel")
            clusters = X[self.cluster].to_numpy()
            sizes = np.bincount(factor_codes(clusters))
            if np.any(sizes == 1):
                warnings.warn(f"{int(np.sum(sizes == 1))} clusters hold a single observation", SingletonClusterWarning)
        n_params = Xd.shape[1] + (0 if spec is None else 1)
        V1 = cluster_covariance(Xd, resid, clusters, True, n_params)
        V0 = cluster_covariance(Xd, resid, clusters, False, n_params)
        V = V1 if self.small_sample else V0

        if spec is None:
            self.intercept_ = float(beta[0])
            self.coef_ = beta[1:]
        else:
            self.coef_ = beta
            self.intercept_ = float(np.mean(yv - Xv @ beta))
        self.fitted_ = yv - resid
        self.resid_ = resid
        self.y_ = yv
        self.n_clusters_ = n if clusters is None else int(np.unique(clusters).size)
        self._codes = codes
        self._spec_ = spec
        self._store_effects(X, yv - Xv @ self.coef_ - self.intercept_, codes, spec)

        tss = float(np.sum((yv - yv.mean()) ** 2))
        ssr = float(resid @ resid)
        within_tss = float(yd @ yd) if spec is not None else tss
        coefs = {"const": self.intercept_}
        coefs.update({nm: float(b) for nm, b in zip(names, self.coef_)})
        self.result_ = EstimationResult(
            coefficients=coefs,
            covariance=pd.DataFrame(V, index=dnames, columns=dnames),
            covariance_cr0=pd.DataFrame(V0, index=dnames, columns=dnames),
            cluster=self.cluster or "observation",
            n_obs=int(n),
            n_clusters=self.n_clusters_,
            r_squared=1.0 - ssr / tss,
            within_r_squared=1.0 - ssr / within_tss if within_tss > 0 else float("nan"),
            fe_iterations=int(iterations),
            singletons={f: int(np.sum(np.bincount(c) == 1)) for f, c in zip(spec.factors, codes)} if spec else {},
            dropped_missing=self.dropped_missing_,
            df_resid=self.n_clusters_ - 1,
        )
        return self

    def _store_effects(self, X, r, codes, spec):
        # Gauss-Seidel on the level effects; only needed for out-of-sample prediction.
        self._effects = []
        if spec is None:
            return
        keys = [X[[spec.column(p) for p in FACTOR_PARTS[f]]].astype(str).agg("|".join, axis=1).to_numpy()
                for f in spec.factors]
        alphas = [np.zeros(int(c.max()) + 1) for c in codes]
        counts = [np.bincount(c) for c in codes]
        for _ in range(self.max_iter):
            delta = 0.0
            for f, c in enumerate(codes):
                other = sum(alphas[g][codes[g]] for g in range(len(codes)) if g != f)
                new = np.bincount(c, weights=r - other, minlength=counts[f].size) / counts[f]
                delta = max(delta, float(np.max(np.abs(new - alphas[f]))))
                alphas[f] = new
            if delta < self.tol:
                break
        for f, (c, a) in enumerate(zip(codes, alphas)):
            lookup = dict(zip(keys[f], a[c]))
            self._effects.append(lookup)

    def predict(self, X):
        check_is_fitted(self, "coef_")
        if not isinstance(X, pd.DataFrame):
            X = pd.DataFrame(np.asarray(X, dtype=float)).rename(columns=lambda j: f"x{j}")
        pred = self.intercept_ + X[list(self.feature_names_in_)].to_numpy(dtype=float) @ self.coef_
        spec = self._spec_
        if spec is not None:
            for f, lookup in zip(spec.factors, self._effects):
                keys = X[[spec.column(p) for p in FACTOR_PARTS[f]]].astype(str).agg("|".join, axis=1)
                pred = pred + keys.map(lookup).fillna(0.0).to_numpy(dtype=float)
        return pred


def fit_lpm(panel, regressors, spec=(), cluster="destination", y="migrate", **kwargs):
    """Fit a linear probability model on ``panel`` and return its result.

    The fitted estimator is available as ``result.model``.
    """
    check_columns(panel, [y], "panel")
    model = LinearProbabilityModel(regressors=list(regressors), fixed_effects=spec, cluster=cluster, **kwargs)
    model.fit(panel, panel[y])
    result = model.result_
    result.model = model
    return result


def interaction(panel, a, b, name=None):
    """Elementwise product of two columns, named ``"{a}X{b}"`` by default."""
    check_columns(panel, [a, b], "panel")
    return (panel[a] * panel[b]).rename(name or f"{a}X{b}")


def prediction_range_report(fitted, y):
    fitted = np.asarray(fitted, dtype=float)
    y = np.asarray(y, dtype=float)
    n = fitted.size
    below, above = fitted < 0, fitted > 1
    out = below | above
    n_out = int(out.sum())
    return {
        "n_total": int(n),
        "n_below_0": int(below.sum()),
        "n_above_1": int(above.sum()),
        "n_in_range": int(n - n_out),
        "share_below_0": below.sum() / n,
        "share_above_1": above.sum() / n,
        "share_in_range": (n - n_out) / n,
        "migrant_share_among_out_of_range": float(y[out].mean()) if n_out else 0.0,
        "migrant_below_0_share_of_total": float(np.sum(below & (y == 1)) / n),
    }


def unit_interval_refit(fit, panel, y="migrate"):
    """Refit on the rows whose fitted probability lies in ``[0, 1]``.

    ``fit`` is a fitted ``LinearProbabilityModel`` or a result returned by
    :func:`fit_lpm`. Returns ``(result, report)``; the report counts rows
    predicted below 0 and above 1 and the share of migrants among them.
    """
    model = getattr(fit, "model", fit)
    check_is_fitted(model, "fitted_")
    report = prediction_range_report(model.fitted_, model.y_)
    inside = (model.fitted_ >= 0) & (model.fitted_ <= 1)
    if not inside.any():
        raise EmptySubsample("no fitted probability lies in the unit interval")
    sub = panel.loc[model.sample_index_[inside]]
    refit = clone(model).fit(sub, sub[y])
    result = refit.result_
    result.model = refit
    result.prediction_report = report
    model.result_.prediction_report = report
    return result, report
