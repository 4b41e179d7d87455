"""Data generators shared by the unit and acceptance tests."""

import numpy as np
import pandas as pd
from scipy.special import expit


def gmm_panel(seed, n_units=200, periods=6, beta=1.0, rho=0.8):
    """Static panel with a unit effect and an endogenous regressor.

    ``x = 0.8 a + xi`` where ``xi`` is a mean-stationary AR(1) that loads on
    the contemporaneous outcome error, so ``x`` is correlated with both the
    unit effect and the current error while lags two and deeper are valid
    instruments in the differenced equation and lagged differences are valid
    in the level equation.
    """
    rng = np.random.default_rng(seed)
    a = rng.normal(size=n_units)
    u = rng.normal(size=(n_units, periods))
    e = rng.normal(size=(n_units, periods))
    xi = np.zeros((n_units, periods))
    innov = 0.5 * u + e
    xi[:, 0] = innov[:, 0] / np.sqrt(1 - rho ** 2)
    for t in range(1, periods):
        xi[:, t] = rho * xi[:, t - 1] + innov[:, t]
    x = 0.8 * a[:, None] + xi
    y = beta * x + a[:, None] + u
    return pd.DataFrame({
        "unit": np.repeat(np.arange(n_units), periods),
        "year": np.tile(np.arange(2000, 2000 + periods), n_units),
        "x": x.ravel(), "y": y.ravel(),
    })


def mixed_logit_data(seed, n_groups=200, per_group=200, sigma2=1.0, beta=(-1.0, 0.5)):
    rng = np.random.default_rng(seed)
    g = np.repeat(np.arange(n_groups), per_group)
    x = rng.normal(size=g.size)
    u = rng.normal(scale=np.sqrt(sigma2), size=n_groups)[g]
    y = (rng.random(g.size) < expit(beta[0] + beta[1] * x + u)).astype(int)
    return pd.DataFrame({"x": x}), y, g


def stacked_iv_oracle(frame, lag):
    """Direct IV on the stacked system, built row by row from the long panel.

    Regressors: x and a constant that is one in level rows only. Instruments:
    one column per period t >= lag + 1 holding x_{t-lag} in the differenced
    row of period t, plus the level-row constant.
    """
    periods = sorted(frame["year"].unique())
    inst_periods = periods[lag:]
    Zs, Xs, ys = [], [], []
    for _, g in frame.sort_values("year").groupby("unit"):
        x, y = g["x"].to_numpy(), g["y"].to_numpy()
        for t in range(1, len(periods)):
            z = [x[t - lag] if (t - lag >= 0 and periods[t] == p) else 0.0 for p in inst_periods]
            Zs.append(z + [0.0])
            Xs.append([x[t] - x[t - 1], 0.0])
            ys.append(y[t] - y[t - 1])
        for t in range(len(periods)):
            Zs.append([0.0] * len(inst_periods) + [1.0])
            Xs.append([x[t], 1.0])
            ys.append(y[t])
    Z, X, y = map(np.asarray, (Zs, Xs, ys))
    return np.linalg.solve(Z.T @ X, Z.T @ y)
