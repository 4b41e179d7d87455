"""Random-intercept logistic regression with two or three nested levels.

The marginal likelihood integrates the random intercepts by adaptive
Gauss-Hermite quadrature. Nodes are centred on the conditional mode of each
cluster's random effect and scaled by its curvature, so ``nodes=1`` is the
Laplace approximation. In the three-level model the inner nodes follow the
conditional mode of the inner effect given the outer one.

Two-level scores are analytic (implicit differentiation through the mode);
three-level scores use complex-step differentiation of the full objective,
mode finding included. Both are exact to rounding error.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import optimize, sparse, stats
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import BoundaryWarning, NonConvergence, UnidentifiedVarianceWarning
from .validation import as_design, check_binary, check_columns, combine_factors, factor_codes

LOGISTIC_VARIANCE = np.pi ** 2 / 3
PSI_BOUNDS = (-20.0, 10.0)
GRAD_TOL = 1e-6
_CSTEP = 1e-30


def icc(variances):
    """Intra-class correlations on the latent logistic scale.

    Parameters
    ----------
    variances : sequence of float
        Random-intercept variances ordered from the outermost level inwards.

    Returns
    -------
    list of float
        Entry ``j`` is the correlation between two observations sharing the
        first ``j + 1`` levels, ``sum(v[:j+1]) / (sum(v) + pi**2 / 3)``. For a
        two-level model this is the single value ``v / (v + pi**2 / 3)``.
    """
    v = np.asarray(variances, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("need at least one variance")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("variances must be finite and nonnegative")
    return list(np.cumsum(v) / (v.sum() + LOGISTIC_VARIANCE))


def _log_sigmoid(x):
    # Stable for real parts of either sign; analytic, so complex-step safe.
    m = np.maximum(0.0, -x.real)
    return -(m + np.log(np.exp(-m) + np.exp(-x - m)))


def _log_normal(a, var):
    return -0.5 * np.log(2 * np.pi * var) - a * a / (2 * var)


def _logsumexp(a, axis):
    m = a.real.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def _indicator(codes, n_groups):
    n = codes.size
    return sparse.csr_matrix((np.ones(n), (codes, np.arange(n))), shape=(n_groups, n))


class _Likelihood:
    """Marginal log-likelihood of the random-intercept logit.

    ``top`` codes the outer clusters. ``inner`` (optional) codes the nests
    inside them; each nest must belong to exactly one outer cluster.
    """

    def __init__(self, X, y, top, inner=None, nodes=7):
        if nodes < 1:
            raise ValueError("nodes must be >= 1")
        self.X, self.y = X, y
        self.n, self.p = X.shape
        self.top = top
        self.n_top = int(top.max()) + 1
        self.S_top = _indicator(top, self.n_top)
        self.three = inner is not None
        if self.three:
            self.inner = inner
            self.n_inner = int(inner.max()) + 1
            self.S_inner = _indicator(inner, self.n_inner)
            nest_top = np.zeros(self.n_inner, dtype=int)
            nest_top[inner] = top
            if np.any(nest_top[inner] != top):
                raise ValueError("a nest spans several outer clusters")
            self.nest_top = nest_top
            self.C_nest = _indicator(nest_top, self.n_top)
        z, w = np.polynomial.hermite.hermgauss(nodes)
        self.z = z
        self.logw = np.log(w) + z * z + 0.5 * np.log(2.0)
        self.nodes = nodes
        self.n_var = 2 if self.three else 1
        self._u = np.zeros(self.n_top)
        self._v = np.zeros(self.n_inner) if self.three else None

    # Newton search for the conditional modes, warm-started from the last call.
    def _modes2(self, eta, s2):
        u = self._u.astype(eta.dtype)
        for _ in range(100):
            p = np.exp(_log_sigmoid(eta + u[self.top]))
            grad = self.S_top @ (self.y - p) - u / s2
            hess = -(self.S_top @ (p * (1 - p))) - 1 / s2
            step = grad / hess
            u = u - step
            if np.abs(step).max() < 1e-12:
                break
        else:
            raise NonConvergence("conditional-mode search did not converge")
        p = np.exp(_log_sigmoid(eta + u[self.top]))
        hess = -(self.S_top @ (p * (1 - p))) - 1 / s2
        self._u = u.real.copy()
        return u, hess

    def _per_group2(self, theta):
        beta, s2 = theta[: self.p], np.exp(theta[self.p])
        eta = self.X @ beta
        u, hess = self._modes2(eta, s2)
        sd = 1 / np.sqrt(-hess)
        a = u[:, None] + np.sqrt(2.0) * sd[:, None] * self.z[None, :]
        e = eta[:, None] + a[self.top]
        ll = self.y[:, None] * _log_sigmoid(e) + (1 - self.y[:, None]) * _log_sigmoid(-e)
        h = self.S_top @ ll + _log_normal(a, s2)
        return _logsumexp(h + np.log(sd)[:, None] + self.logw[None, :], axis=1)

    def _modes3(self, eta, s3, s2):
        u = self._u.astype(eta.dtype)
        v = self._v.astype(eta.dtype)
        for _ in range(100):
            p = np.exp(_log_sigmoid(eta + u[self.top] + v[self.inner]))
            r, w = self.y - p, p * (1 - p)
            wn = self.S_inner @ w
            gv = self.S_inner @ r - v / s2
            hvv = -wn - 1 / s2
            huv = -wn
            gu = self.S_top @ r - u / s3
            schur = -(self.S_top @ w) - 1 / s3 - self.C_nest @ (huv * huv / hvv)
            du = (-gu + self.C_nest @ (huv * gv / hvv)) / schur
            dv = (-gv - huv * du[self.nest_top]) / hvv
            u, v = u + du, v + dv
            if max(np.abs(du).max(), np.abs(dv).max()) < 1e-12:
                break
        else:
            raise NonConvergence("conditional-mode search did not converge")
        p = np.exp(_log_sigmoid(eta + u[self.top] + v[self.inner]))
        wn = self.S_inner @ (p * (1 - p))
        hvv = -wn - 1 / s2
        schur = -(self.S_top @ (p * (1 - p))) - 1 / s3 - self.C_nest @ (wn * wn / hvv)
        self._u, self._v = u.real.copy(), v.real.copy()
        return u, v, schur, hvv, -wn

    def _per_group3(self, theta):
        beta = theta[: self.p]
        s3, s2 = np.exp(theta[self.p]), np.exp(theta[self.p + 1])
        eta = self.X @ beta
        u, v, schur, hvv, huv = self._modes3(eta, s3, s2)
        Q = self.nodes
        sd_u = 1 / np.sqrt(-schur)
        sd_v = 1 / np.sqrt(-hvv)
        slope = -huv / hvv
        a = u[:, None] + np.sqrt(2.0) * sd_u[:, None] * self.z[None, :]            # (C, Q)
        shift = (a - u[:, None])[self.nest_top]                                     # (K, Q)
        b = (v[:, None, None] + slope[:, None, None] * shift[:, :, None]
             + np.sqrt(2.0) * sd_v[:, None, None] * self.z[None, None, :])          # (K, Q, R)
        e = eta[:, None, None] + a[self.top][:, :, None] + b[self.inner]
        ll = self.y[:, None, None] * _log_sigmoid(e) + (1 - self.y[:, None, None]) * _log_sigmoid(-e)
        inner = (self.S_inner @ ll.reshape(self.n, Q * Q)).reshape(self.n_inner, Q, Q)
        inner = inner + _log_normal(b, s2) + np.log(sd_v)[:, None, None] + self.logw[None, None, :]
        J = _logsumexp(inner, axis=2)                                               # (K, Q)
        h = self.C_nest @ J + _log_normal(a, s3)
        return _logsumexp(h + np.log(sd_u)[:, None] + self.logw[None, :], axis=1)

    def _scores2(self, theta):
        # Total derivative, including the dependence of the node centre
        # (mode m) and scale (sd) on the parameters.
        beta, s2 = theta[: self.p], np.exp(theta[self.p])
        X, y, top, S = self.X, self.y, self.top, self.S_top
        eta = X @ beta
        m, hess = self._modes2(eta, s2)
        sd = 1 / np.sqrt(-hess)
        pm = np.exp(_log_sigmoid(eta + m[top]))
        wm = pm * (1 - pm)
        h3 = -(S @ (wm * (1 - 2 * pm)))
        k = self.p + 1
        d_hp = np.empty((self.n_top, k))            # d h'(m) / d theta
        d_hp[:, : self.p] = -(S @ (wm[:, None] * X))
        d_hp[:, self.p] = m / s2
        d_hpp = np.empty((self.n_top, k))           # partial d h''(m) / d theta
        d_hpp[:, : self.p] = -(S @ ((wm * (1 - 2 * pm))[:, None] * X))
        d_hpp[:, self.p] = 1 / s2
        dm = -d_hp / hess[:, None]
        dsd = 0.5 * sd[:, None] ** 3 * (d_hpp + h3[:, None] * dm)

        a = m[:, None] + np.sqrt(2.0) * sd[:, None] * self.z[None, :]
        e = eta[:, None] + a[top]
        ll = y[:, None] * _log_sigmoid(e) + (1 - y[:, None]) * _log_sigmoid(-e)
        h = S @ ll + _log_normal(a, s2)
        logpost = h + np.log(sd)[:, None] + self.logw[None, :]
        post = np.exp(logpost - _logsumexp(logpost, axis=1)[:, None])
        resid = y[:, None] - np.exp(_log_sigmoid(e))
        Hp = S @ resid - a / s2                      # H'(a_q)
        out = np.empty((self.n_top, k))
        r = (post[top] * resid).sum(axis=1)
        out[:, : self.p] = S @ (r[:, None] * X)
        out[:, self.p] = (post * (-0.5 + a * a / (2 * s2))).sum(axis=1)
        node_shift = (post * Hp).sum(axis=1)[:, None] * dm + \
            (post * Hp * np.sqrt(2.0) * self.z[None, :]).sum(axis=1)[:, None] * dsd
        return out + node_shift + dsd / sd[:, None]

    def per_group(self, theta):
        return self._per_group3(theta) if self.three else self._per_group2(theta)

    def loglik(self, theta):
        return float(self.per_group(np.asarray(theta, dtype=float)).sum())

    def scores(self, theta, free=None):
        """Per-outer-cluster score matrix by complex step."""
        theta = np.asarray(theta, dtype=float)
        if not self.three:
            return self._scores2(theta)
        return self._scores_cstep(theta, free)

    def _scores_cstep(self, theta, free=None):
        idx = np.arange(theta.size) if free is None else np.flatnonzero(free)
        out = np.zeros((self.n_top, theta.size))
        for j in idx:
            t = theta.astype(complex)
            t[j] += 1j * _CSTEP
            out[:, j] = self.per_group(t).imag / _CSTEP
        return out

    def gradient(self, theta, free=None):
        return self.scores(theta, free).sum(axis=0)

    def hessian(self, theta, free):
        idx = np.flatnonzero(free)
        H = np.zeros((idx.size, idx.size))
        for col, j in enumerate(idx):
            h = 1e-5 * max(1.0, abs(theta[j]))
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h
            tm[j] -= h
            H[:, col] = (self.gradient(tp, free)[idx] - self.gradient(tm, free)[idx]) / (2 * h)
        return 0.5 * (H + H.T)


def _plain_logit(X, y, max_iter=100):
    beta = np.zeros(X.shape[1])
    ybar = y.mean()
    for j in range(X.shape[1]):
        if np.allclose(X[:, j], 1.0):
            beta[j] = np.log(ybar / (1 - ybar))
    for _ in range(max_iter):
        p = np.exp(_log_sigmoid(X @ beta))
        g = X.T @ (y - p)
        H = (X * (p * (1 - p))[:, None]).T @ X
        step = np.linalg.solve(H, g)
        beta += step
        if np.abs(step).max() < 1e-12:
            break
    return beta


def _maximize(lik, theta0, free, tol=GRAD_TOL, max_newton=50):
    """L-BFGS-B followed by Newton polishing on the free parameters."""
    theta = theta0.copy()
    lower = np.full(theta.size, -np.inf)
    upper = np.full(theta.size, np.inf)
    lower[lik.p:], upper[lik.p:] = PSI_BOUNDS
    idx = np.flatnonzero(free)
    path = []

    def full(t):
        out = theta.copy()
        out[idx] = t
        return out

    def fun(t):
        th = full(t)
        g = lik.gradient(th, free)
        return -lik.loglik(th), -g[idx]

    res = optimize.minimize(fun, theta[idx], jac=True, method="L-BFGS-B",
                            bounds=list(zip(lower[idx], upper[idx])),
                            options={"maxiter": 1000, "gtol": 1e-9, "ftol": 1e-15},
                            callback=lambda t: path.append(-fun(t)[0]))
    theta = full(res.x)
    ll = lik.loglik(theta)
    path.append(ll)
    iterations = int(res.nit)
    converged = False
    g = lik.gradient(theta, free)
    for _ in range(max_newton):
        at_low = free & (theta <= lower + 1e-12) & (g < 0)
        active = free & ~at_low
        if np.abs(g[active]).max(initial=0.0) < tol:
            converged = True
            break
        H = lik.hessian(theta, active)
        ga = g[active]
        try:
            evals = np.linalg.eigvalsh(H)
            if evals.max() >= 0:
                raise np.linalg.LinAlgError
            step = -np.linalg.solve(H, ga)
        except np.linalg.LinAlgError:
            step = ga / max(1.0, np.abs(ga).max())
        alpha = 1.0
        while alpha > 1e-10:
            cand = theta.copy()
            cand[active] += alpha * step
            cand = np.clip(cand, lower, upper)
            ll_new = lik.loglik(cand)
            if ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            alpha /= 2
        else:
            break
        iterations += 1
        g_new = lik.gradient(cand, free)
        if ll_new < ll:
            # Rounding-level change in ll: accept only if the score shrinks.
            if np.abs(g_new[active]).max() >= np.abs(ga).max():
                break
            theta, g = cand, g_new
            continue
        theta, ll, g = cand, ll_new, g_new
        path.append(ll)
    return theta, ll, g, converged, iterations, path


@dataclass
class NestingSpec:
    """Grouping structure of the random intercepts.

    ``level2`` names the city grouping (``origin``, ``destination`` or the
    ``pair``). With ``level3_education`` the cities move up a level and
    schooling nests within each city form the new level-2 grouping.
    """

    level2: str = "destination"
    level3_education: bool = False
    schooling_column: str = "schooling"
    origin_column: str = "origin"
    destination_column: str = "destination"

    def __post_init__(self):
        if self.level2 not in ("origin", "destination", "pair"):
            raise ValueError(f"level2 must be origin, destination or pair, got {self.level2!r}")

    def columns(self):
        cols = {"origin": [self.origin_column], "destination": [self.destination_column],
                "pair": [self.origin_column, self.destination_column]}[self.level2]
        return cols + ([self.schooling_column] if self.level3_education else [])

    def codes(self, frame):
        cities = [frame[c].to_numpy() for c in self.columns()[: 2 if self.level2 == "pair" else 1]]
        top = combine_factors(*cities)
        if not self.level3_education:
            return top, None
        inner = combine_factors(top, frame[self.schooling_column].to_numpy())
        return top, inner

    def level_names(self):
        if self.level3_education:
            return [self.level2, f"{self.level2}>schooling"]
        return [self.level2]


@dataclass
class MixedLogitResult:
    coefficients: pd.Series
    covariance: pd.DataFrame
    variances: dict
    variance_se: dict
    icc: dict
    loglik: float
    nodes: int
    n_obs: int
    n_groups: dict
    boundary: list = field(default_factory=list)
    converged: bool = True
    iterations: int = 0
    gradient_max: float = 0.0
    loglik_path: list = field(default_factory=list)
    robust: bool = False
    means: pd.Series = None
    theta: np.ndarray = None

    @property
    def std_errors(self):
        return pd.Series(np.sqrt(np.diag(self.covariance)), index=self.covariance.index)

    def summary_frame(self, alpha=0.05):
        se = self.std_errors
        z = self.coefficients / se
        crit = stats.norm.ppf(1 - alpha / 2)
        return pd.DataFrame({
            "coefficient": self.coefficients, "std_error": se, "z": z,
            "p_value": 2 * stats.norm.sf(np.abs(z)),
            "ci_low": self.coefficients - crit * se, "ci_high": self.coefficients + crit * se,
        })

    def diagnostics(self):
        return {
            "loglik": self.loglik, "nodes": self.nodes, "n_obs": self.n_obs,
            "n_groups": self.n_groups, "variances": self.variances,
            "variance_se": self.variance_se, "icc": self.icc,
            "boundary": self.boundary, "converged": self.converged,
            "iterations": self.iterations, "gradient_max": self.gradient_max,
            "robust": self.robust,
        }


class MixedLogit(ClassifierMixin, BaseEstimator):
    """Logistic regression with nested normal random intercepts.

    Parameters
    ----------
    nodes : int
        Gauss-Hermite nodes per level; 1 gives the Laplace approximation.
    fit_intercept : bool
    robust : bool
        Cluster-robust sandwich covariance over the outermost clusters.
    level_names : list of str, optional
        Labels for the random-effect levels, outermost first.
    tol : float
        Convergence threshold on the largest absolute score.
    """

    def __init__(self, nodes=7, fit_intercept=True, robust=False, level_names=None, tol=GRAD_TOL):
        self.nodes = nodes
        self.fit_intercept = fit_intercept
        self.robust = robust
        self.level_names = level_names
        self.tol = tol

    def _design(self, X):
        mat, names = as_design(X, getattr(self, "feature_names_", None) if hasattr(self, "coef_") else None)
        if self.fit_intercept:
            mat = np.column_stack([np.ones(mat.shape[0]), mat])
            names = ["const"] + names
        return mat, names

    def fit(self, X, y, groups, subgroups=None):
        """Fit by maximum marginal likelihood.

        ``groups`` labels the outermost clusters; ``subgroups`` (optional)
        labels nests inside them and turns on the three-level model.
        """
        mat, names = as_design(X)
        self.feature_names_ = names
        design, all_names = self._design(X)
        y = check_binary(y)
        top = factor_codes(np.asarray(groups))
        inner = None if subgroups is None else combine_factors(top, np.asarray(subgroups))
        if len(top) != len(y) or design.shape[0] != len(y):
            raise ValueError("X, y and groups must have the same length")
        lik = _Likelihood(design, y, top, inner, self.nodes)
        level_names = list(self.level_names or (["level3", "level2"] if inner is not None else ["level2"]))

        free = np.ones(lik.p + lik.n_var, dtype=bool)
        theta0 = np.concatenate([_plain_logit(design, y), np.full(lik.n_var, np.log(0.5))])
        sizes = np.bincount(top)
        if inner is None and sizes.max() == 1:
            warnings.warn("every cluster has one observation; the random-intercept variance is "
                          "not identified and is fixed at zero (plain logit)", UnidentifiedVarianceWarning,
                          stacklevel=2)
            free[lik.p:] = False
            theta0[lik.p:] = PSI_BOUNDS[0]

        theta, ll, grad, converged, iterations, path = _maximize(lik, theta0, free, self.tol)
        # Pin variances whose likelihood is flat toward zero at the floor.
        boundary = []
        for j in range(lik.p, theta.size):
            if not free[j]:
                continue
            trial = theta.copy()
            trial[j] = PSI_BOUNDS[0]
            if theta[j] <= PSI_BOUNDS[0] + 1e-8 or lik.loglik(trial) >= ll - 1e-9:
                boundary.append(level_names[j - lik.p])
                if trial[j] != theta[j]:
                    free_j = free.copy()
                    free_j[j] = False
                    theta, ll, grad, converged, it2, path2 = _maximize(lik, trial, free_j, self.tol)
                    iterations += it2
                    path += path2
                free[j] = False
        if boundary:
            warnings.warn(f"variance component(s) at the zero boundary: {boundary}", BoundaryWarning, stacklevel=2)
        if not converged:
            raise NonConvergence(f"score max-abs {np.abs(grad[free]).max():.3g} above {self.tol}")

        H = lik.hessian(theta, free)
        try:
            Hinv = np.linalg.inv(-H)
        except np.linalg.LinAlgError:
            Hinv = np.linalg.pinv(-H)
        if self.robust:
            S = lik.scores(theta, free)[:, free]
            G = S.shape[0]
            Hinv = Hinv @ (S.T @ S) * (G / (G - 1)) @ Hinv
        cov = np.full((theta.size, theta.size), np.nan)
        cov[np.ix_(free, free)] = Hinv

        variances, variance_se = {}, {}
        for j, name in enumerate(level_names):
            k = lik.p + j
            var = float(np.exp(theta[k])) if free[k] else 0.0
            variances[name] = var
            variance_se[name] = float(var * np.sqrt(cov[k, k])) if free[k] else float("nan")
        iccs = icc([variances[n] for n in level_names])

        self.coef_ = theta[1:lik.p] if self.fit_intercept else theta[: lik.p]
        self.intercept_ = theta[0] if self.fit_intercept else 0.0
        self.classes_ = np.array([0, 1])
        self.result_ = MixedLogitResult(
            coefficients=pd.Series(theta[: lik.p], index=all_names),
            covariance=pd.DataFrame(cov[: lik.p, : lik.p], index=all_names, columns=all_names),
            variances=variances,
            variance_se=variance_se,
            icc=dict(zip(level_names, iccs)),
            loglik=ll,
            nodes=self.nodes,
            n_obs=int(len(y)),
            n_groups={level_names[0]: int(lik.n_top), **({level_names[1]: int(lik.n_inner)} if lik.three else {})},
            boundary=boundary,
            converged=converged,
            iterations=iterations,
            gradient_max=float(np.abs(grad[free]).max(initial=0.0)),
            loglik_path=path,
            robust=self.robust,
            means=pd.Series(design.mean(axis=0), index=all_names),
            theta=theta,
        )
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        mat, _ = as_design(X)
        return mat @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        """Probabilities with the random intercepts at zero."""
        p = np.exp(_log_sigmoid(np.asarray(self.decision_function(X), dtype=float)))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)


def fit_mixed_logit(panel, regressors, nesting=None, nodes=7, y="migrate", robust=False):
    """Fit the random-intercept logit on a panel frame.

    Rows with missing values in any used column are dropped.
    """
    nesting = nesting or NestingSpec()
    regressors = list(regressors)
    check_columns(panel, regressors + nesting.columns() + [y], "panel")
    frame = panel.dropna(subset=regressors + nesting.columns() + [y])
    top, inner = nesting.codes(frame)
    model = MixedLogit(nodes=nodes, robust=robust, level_names=nesting.level_names())
    model.fit(frame[regressors], frame[y].to_numpy(), top, inner)
    result = model.result_
    result.dropped_missing = int(len(panel) - len(frame))
    result.model = model
    return result


def marginal_effect_curve(fit, variable, step=0.2, grid=None, lower=None, upper=None):
    """Marginal effect of ``variable`` over a grid, other covariates at their means.

    The effect is ``b * p * (1 - p)`` with ``p`` the probability at the grid
    point and the random intercepts at zero; standard errors use the delta
    method.

    Returns
    -------
    DataFrame with columns ``value``, ``effect``, ``std_error``.
    """
    result = getattr(fit, "result_", fit)
    coef = result.coefficients
    if variable not in coef.index or variable == "const":
        raise KeyError(f"{variable!r} is not a fixed regressor")
    if grid is None:
        if lower is None or upper is None:
            raise ValueError("give a grid or both lower and upper")
        count = int(np.floor((upper - lower) / step + 1e-9)) + 1
        grid = lower + step * np.arange(count)
    grid = np.asarray(grid, dtype=float)
    cov = result.covariance.loc[coef.index, coef.index].to_numpy()
    j = list(coef.index).index(variable)
    rows = []
    for g in grid:
        x = result.means.to_numpy().copy()
        x[j] = g
        p = float(np.exp(_log_sigmoid(np.array([x @ coef.to_numpy()])))[0])
        b = coef.iloc[j]
        effect = b * p * (1 - p)
        jac = b * p * (1 - p) * (1 - 2 * p) * x
        jac[j] += p * (1 - p)
        rows.append((g, effect, float(np.sqrt(jac @ cov @ jac))))
    return pd.DataFrame(rows, columns=["value", "effect", "std_error"])
