"""Reference-dependent random-utility migration model and panel simulator.

A person in origin ``j`` at year ``t`` values destination ``k`` at

    U_k = w[k, t] + beta * Delta[k, t+1] - cost[t, j, k] + theta * D[j, k, t] + eps_k

where ``Delta`` is the logsum continuation value

    Delta[k, t] = tau + log sum_q exp(w[q, t] - cost[t, k, q] + beta * Delta[q, t+1]),

``tau`` is the Euler constant, ``eps`` is a zero-mean type-1 extreme value
shock and ``D`` is the started-log job-trending distance. Payoffs are frozen
at their final-year values beyond the horizon, which pins ``Delta`` past the
last year at the stationary fixed point.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .exceptions import ConfigError, DomainError, NonConvergence
from .trending import DEFAULT_EPS, fit_started_log_offset, trending_array

EULER_GAMMA = 0.5772156649015329
DEFAULT_SECTORS = ("primary", "secondary", "tertiary")
PANEL_COLUMNS = [
    "individual_id", "sector", "year", "origin", "destination", "moved",
    "distance_jobtrend", "distance_jobtrend_raw", "utility", "utility_stay", "prob",
]


def _broadcast_w(w, n_sectors, n_cities, n_years):
    arr = np.asarray(w, dtype=float)
    if arr.ndim == 0:
        arr = np.full((n_cities, n_years), float(arr))
    if arr.ndim == 2:
        arr = np.broadcast_to(arr, (n_sectors, n_cities, n_years))
    if arr.shape != (n_sectors, n_cities, n_years):
        raise ConfigError(f"w has shape {arr.shape}, expected (sectors, cities, years) = {(n_sectors, n_cities, n_years)}")
    return np.array(arr)


def _broadcast_cost(cost, n_cities, n_years):
    arr = np.asarray(cost, dtype=float)
    if arr.ndim == 0:
        arr = np.full((n_cities, n_cities), float(arr))
        np.fill_diagonal(arr, 0.0)
    if arr.ndim == 2:
        arr = np.broadcast_to(arr, (n_years, n_cities, n_cities))
    if arr.shape != (n_years, n_cities, n_cities):
        raise ConfigError(f"cost has shape {arr.shape}, expected (years, cities, cities)")
    return np.array(arr)


@dataclass
class WorldConfig:
    """Primitives of a simulated migration world.

    ``w`` broadcasts to ``(sectors, cities, years)``; ``cost`` broadcasts to
    ``(years, cities, cities)`` with a zero diagonal. ``employment``, when
    given, has shape ``(sectors, cities, years + 2)`` and starts two years
    before the horizon so that every horizon year has a trending value.
    """

    cities: list
    years: list
    w: np.ndarray
    cost: np.ndarray
    beta: float
    r: float = 0.9
    seed: int = 0
    sectors: tuple = DEFAULT_SECTORS
    employment: np.ndarray = None
    started_log_eps: float = DEFAULT_EPS

    def __post_init__(self):
        self.cities = [str(c) for c in self.cities]
        self.sectors = tuple(self.sectors)
        if len(self.years) == 2 and self.years[1] - self.years[0] > 1:
            self.years = list(range(int(self.years[0]), int(self.years[1]) + 1))
        self.years = [int(y) for y in self.years]
        if self.years != list(range(self.years[0], self.years[0] + len(self.years))):
            raise ConfigError("years must be a contiguous range")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError("beta must lie in [0, 1)")
        if not 0.0 < self.r < 1.0:
            raise ConfigError("r must lie in (0, 1)")
        S, C, T = len(self.sectors), len(self.cities), len(self.years)
        self.w = _broadcast_w(self.w, S, C, T)
        self.cost = _broadcast_cost(self.cost, C, T)
        if np.any(np.diagonal(self.cost, axis1=1, axis2=2) != 0):
            raise ConfigError("staying must be free: cost[t, j, j] = 0")
        if np.any(self.cost < 0) or np.any(np.isnan(self.cost)):
            raise ConfigError("moving costs must be nonnegative")
        if self.employment is not None:
            emp = np.asarray(self.employment, dtype=float)
            if emp.shape != (S, C, T + 2):
                raise ConfigError(f"employment has shape {emp.shape}, expected {(S, C, T + 2)}")
            if np.any(emp < 0):
                raise ConfigError("employment counts must be nonnegative")
            self.employment = emp

    @property
    def shape(self):
        return len(self.sectors), len(self.cities), len(self.years)

    def year_index(self, year):
        return int(year) - self.years[0]

    def city_index(self, city):
        return self.cities.index(str(city))

    def sector_index(self, sector):
        if sector is None:
            return 0
        if isinstance(sector, (int, np.integer)):
            return int(sector)
        return self.sectors.index(sector)

    def trends(self):
        """Job-trending values with shape ``(sectors, cities, years)``."""
        if self.employment is None:
            return np.zeros(self.shape)
        return trending_array(self.employment)[..., 2:]

    def to_dict(self):
        return {
            "cities": self.cities,
            "sectors": list(self.sectors),
            "years": [self.years[0], self.years[-1]],
            "w": self.w.tolist(),
            "cost": self.cost.tolist(),
            "beta": self.beta,
            "r": self.r,
            "seed": int(self.seed),
            "employment": None if self.employment is None else self.employment.tolist(),
            "started_log_eps": self.started_log_eps,
        }

    @classmethod
    def from_dict(cls, payload):
        payload = dict(payload)
        try:
            return cls(**payload)
        except TypeError as exc:
            raise ConfigError(f"invalid world configuration: {exc}") from exc


def random_world(n_cities=6, years=(1997, 2016), beta=0.9, r=0.9, seed=0,
                 sectors=DEFAULT_SECTORS, cost_scale=4.0, growth_sd=0.05):
    """A world with random payoffs, distance-based costs and employment paths."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7919]))
    years = list(range(years[0], years[1] + 1))
    S, C, T = len(sectors), n_cities, len(years)
    city_level = rng.normal(0.0, 0.3, size=C)
    w = city_level[None, :, None] + rng.normal(0.0, 0.1, size=(S, C, T))
    xy = rng.uniform(0, 1, size=(C, 2))
    dist = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1))
    cost = cost_scale + 2.0 * dist
    np.fill_diagonal(cost, 0.0)
    growth = rng.normal(0.03, growth_sd, size=(S, C, T + 1))
    level = rng.uniform(5e4, 5e5, size=(S, C, 1))
    employment = np.concatenate([level, level * np.cumprod(1.0 + growth, axis=-1)], axis=-1)
    cities = [str(1101 + 100 * i) for i in range(C)]
    return WorldConfig(cities=cities, years=years, w=w, cost=cost, beta=beta, r=r,
                       seed=int(seed), sectors=tuple(sectors), employment=employment)


@dataclass
class ValueTable:
    """Continuation values ``Delta`` with shape ``(sectors, cities, years + 1)``.

    The extra last slot holds the stationary post-horizon value.
    """

    values: np.ndarray
    cities: list
    years: list
    sectors: tuple
    residuals: list = field(default_factory=list)
    iterations: int = 0

    def lookup(self, city, year, sector=None):
        s = 0 if sector is None else (sector if isinstance(sector, (int, np.integer)) else self.sectors.index(sector))
        k = self.cities.index(str(city)) if not isinstance(city, (int, np.integer)) else int(city)
        t = min(int(year) - self.years[0], len(self.years))
        if t < 0:
            raise KeyError(f"year {year} precedes the horizon")
        return float(self.values[s, k, t])

    @property
    def stationary(self):
        return self.values[..., -1]


def _bellman(V, w_t, cost_t, beta):
    # V: (S, C); w_t: (S, C); cost_t: (C, C) indexed [from, to]
    inner = w_t[:, None, :] - cost_t[None, :, :] + beta * V[:, None, :]
    return EULER_GAMMA + logsumexp(inner, axis=-1)


def value_iteration(world, tol=1e-10, max_iter=10_000):
    """Logsum continuation values by fixed-point iteration and backward induction.

    The stationary post-horizon values solve the Bellman equation with
    final-year payoffs by successive approximation; sweeps stop once the
    sup-norm change falls below ``tol``. Horizon years are then filled
    backwards from the stationary values.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    S, C, T = world.shape
    w_last, cost_last = world.w[..., -1], world.cost[-1]
    V = np.zeros((S, C))
    residuals = []
    for it in range(1, max_iter + 1):
        V_new = _bellman(V, w_last, cost_last, world.beta)
        if not np.all(np.isfinite(V_new)):
            raise NonConvergence("continuation values overflowed")
        res = float(np.max(np.abs(V_new - V)))
        V = V_new
        if world.beta == 0:
            # No continuation term: one application is exact.
            residuals.append(0.0)
            break
        residuals.append(res)
        if res < tol:
            break
    else:
        raise NonConvergence(f"value iteration residual {residuals[-1]:.3e} >= tol after {max_iter} sweeps")
    values = np.empty((S, C, T + 1))
    values[..., T] = V
    for t in range(T - 1, -1, -1):
        values[..., t] = _bellman(values[..., t + 1], world.w[..., t], world.cost[t], world.beta)
    return ValueTable(values, list(world.cities), list(world.years), tuple(world.sectors), residuals, it)


def one_shot_value(delta, r, beta, g):
    """Continuation payoff ``(r / beta)**g * delta`` of a single move ``g`` periods ahead."""
    if g < 0:
        raise ValueError("g must be nonnegative")
    if g == 0:
        return float(delta)
    if not beta > 0:
        raise ValueError("beta must be positive when g > 0")
    return (r / beta) ** g * delta


def utility(world, values, j, k, t, shock=0.0, sector=None):
    """Systematic utility of moving from ``j`` to ``k`` in year ``t`` plus ``shock``."""
    s = world.sector_index(sector)
    jj = j if isinstance(j, (int, np.integer)) else world.city_index(j)
    kk = k if isinstance(k, (int, np.integer)) else world.city_index(k)
    ti = world.year_index(t)
    cont = values.values[s, kk, min(ti + 1, len(world.years))]
    move_cost = 0.0 if jj == kk else world.cost[ti, jj, kk]
    return world.w[s, kk, ti] + world.beta * cont - move_cost + shock


def choice_probabilities(utilities):
    u = np.asarray(utilities, dtype=float)
    z = np.exp(u - np.max(u, axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def log_odds(world, values, j, k, t, form="raw", sector=None):
    """Log-odds of choosing ``k`` over staying in ``j``.

    ``form="raw"`` uses the difference of continuation values, ``form="log"``
    the log of their ratio.
    """
    s = world.sector_index(sector)
    jj = j if isinstance(j, (int, np.integer)) else world.city_index(j)
    kk = k if isinstance(k, (int, np.integer)) else world.city_index(k)
    if jj == kk:
        return 0.0
    ti = world.year_index(t)
    nxt = min(ti + 1, len(world.years))
    dk, dj = values.values[s, kk, nxt], values.values[s, jj, nxt]
    base = world.w[s, kk, ti] - world.w[s, jj, ti] - world.cost[ti, jj, kk]
    if form == "raw":
        return base + world.beta * (dk - dj)
    if form == "log":
        if dk <= 0 or dj <= 0:
            raise DomainError("log-odds in log form need positive continuation values")
        return base + world.beta * math.log(dk / dj)
    raise ValueError("form must be 'raw' or 'log'")


def ev1_from_uniform(u):
    """Zero-mean type-1 extreme value quantile ``-log(-log(u)) - tau``."""
    return -np.log(-np.log(u)) - EULER_GAMMA


def sample_ev1_shock(stream, size=None):
    u = stream.uniform(np.finfo(float).tiny, 1.0, size=size)
    return ev1_from_uniform(u)


def individual_stream(seed, individual):
    """Counter-based generator for one individual, independent of draw order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(individual)])))


@dataclass
class SimulatedPanel:
    rows: pd.DataFrame
    generator_params: dict

    def move_share(self):
        per_year = self.rows.groupby(["individual_id", "year"])["moved"].max()
        return float(per_year.mean())

    def to_csv(self, path):
        self.rows.to_csv(path, index=False, float_format="%.17g")

    def params_json(self):
        return json.dumps(self.generator_params, sort_keys=True, indent=2)


def simulate_panel(world, n_individuals, true_coeffs=None, seed=None, values=None):
    """Simulate yearly location choices and return the dyadic long panel.

    Each individual-year contributes one row per alternative destination;
    ``moved`` is 1 on the chosen destination in a move year and 0 otherwise.
    Individuals start in a uniformly drawn city and sector and relocate when
    they move. Every draw comes from the individual's own stream, so the
    panel depends only on ``seed`` (default ``world.seed``).
    """
    if n_individuals < 1:
        raise ValueError("n_individuals must be at least 1")
    coeffs = dict(true_coeffs or {})
    unknown = set(coeffs) - {"distance_jobtrend"}
    if unknown:
        raise ConfigError(f"unsupported true coefficients: {sorted(unknown)}")
    theta = float(coeffs.get("distance_jobtrend", 0.0))
    seed = world.seed if seed is None else seed
    values = values or value_iteration(world)
    S, C, T = world.shape

    trends = world.trends()
    finite = trends[np.isfinite(trends)]
    c = fit_started_log_offset(finite, world.started_log_eps).c if finite.size else world.started_log_eps
    logged = np.log(trends + c)
    # D[s, j, k, t] = dest minus origin
    dist_log = logged[:, None, :, :] - logged[:, :, None, :]
    dist_raw = trends[:, None, :, :] - trends[:, :, None, :]
    dist_log = np.nan_to_num(dist_log)
    dist_raw = np.nan_to_num(dist_raw)

    n = int(n_individuals)
    start = np.empty(n, dtype=int)
    sector = np.empty(n, dtype=int)
    shocks = np.empty((n, T, C))
    for i in range(n):
        stream = individual_stream(seed, i)
        start[i] = stream.integers(C)
        sector[i] = stream.integers(S)
        shocks[i] = sample_ev1_shock(stream, size=(T, C))

    cont = values.values[..., 1:]  # Delta at t+1 for each horizon year
    where = start.copy()
    alts = np.arange(C)
    frames = []
    for ti, year in enumerate(world.years):
        v = (world.w[sector, :, ti] + world.beta * cont[sector, :, ti]
             - world.cost[ti][where] + theta * dist_log[sector, where, :, ti])
        choice = np.argmax(v + shocks[:, ti, :], axis=1)
        prob = choice_probabilities(v)
        ii, kk = np.nonzero(alts[None, :] != where[:, None])
        jj = where[ii]
        frames.append(pd.DataFrame({
            "individual_id": ii,
            "sector": np.asarray(world.sectors, dtype=object)[sector[ii]],
            "year": year,
            "origin": np.asarray(world.cities, dtype=object)[jj],
            "destination": np.asarray(world.cities, dtype=object)[kk],
            "moved": (choice[ii] == kk).astype(int),
            "distance_jobtrend": dist_log[sector[ii], jj, kk, ti],
            "distance_jobtrend_raw": dist_raw[sector[ii], jj, kk, ti],
            "utility": v[ii, kk],
            "utility_stay": v[ii, jj],
            "prob": prob[ii, kk],
        }))
        where = choice
    rows = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=PANEL_COLUMNS)
    rows = rows.sort_values(["individual_id", "year", "destination"], kind="mergesort").reset_index(drop=True)
    params = {
        "world": world.to_dict(),
        "n_individuals": n,
        "true_coeffs": {"distance_jobtrend": theta},
        "seed": int(seed),
        "started_log_c": float(c),
    }
    return SimulatedPanel(rows[PANEL_COLUMNS], params)


def regenerate(generator_params):
    """Rebuild a panel from the ``generator_params`` of an earlier run."""
    world = WorldConfig.from_dict(generator_params["world"])
    return simulate_panel(world, generator_params["n_individuals"], generator_params["true_coeffs"],
                          seed=generator_params["seed"])
