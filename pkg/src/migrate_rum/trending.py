"""Sector-based job-prospect signals.

The job-trending indicator for a city and sector is the annual change in the
employment growth rate,

    trend(t) = GR(t) - GR(t-1),   GR(t) = (E(t) - E(t-1)) / E(t-1),

and the origin/destination distance is either the raw difference of the two
trending values or the difference of their started logarithms
``ln(value + c)``.
"""

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DomainError, EmptyInput, MissingYear, SchemaError, YearMismatch, ZeroBase
from .validation import check_columns, normalize_city

SECTORS = ("primary", "secondary", "tertiary", "total")
FIRST_YEAR, LAST_YEAR = 1995, 2017
DEFAULT_EPS = 1e-6 + 1.0
GROWTH_CLAMP = 130.0


@dataclass(frozen=True)
class SectorEmploymentSeries:
    city_id: str
    sector: str
    employment: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.sector not in SECTORS:
            raise SchemaError(f"unknown sector {self.sector!r}")
        emp = {int(y): float(v) for y, v in self.employment.items()}
        if any(v < 0 or not math.isfinite(v) for v in emp.values()):
            raise SchemaError(f"negative or non-finite employment for {self.city_id}/{self.sector}")
        if emp:
            years = sorted(emp)
            if years[0] < FIRST_YEAR or years[-1] > LAST_YEAR:
                raise SchemaError(f"years outside [{FIRST_YEAR}, {LAST_YEAR}] for {self.city_id}/{self.sector}")
            if years != list(range(years[0], years[-1] + 1)):
                raise SchemaError(f"years are not contiguous for {self.city_id}/{self.sector}")
        object.__setattr__(self, "employment", dict(sorted(emp.items())))

    @property
    def years(self):
        return list(self.employment)

    def scaled(self, k):
        return SectorEmploymentSeries(self.city_id, self.sector, {y: k * v for y, v in self.employment.items()})


@dataclass(frozen=True)
class TrendingValue:
    value: float
    year: int

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("trending value must be finite")


@dataclass(frozen=True)
class StartedLogOffset:
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("started-log offset must be positive")


def growth_rate(series, year, clamp=None):
    """Annual employment growth rate ``(E_t - E_{t-1}) / E_{t-1}``."""
    emp = series.employment
    for y in (year, year - 1):
        if y not in emp:
            raise MissingYear(f"{series.city_id}/{series.sector}: no employment for {y}")
    base = emp[year - 1]
    if base == 0:
        raise ZeroBase(f"{series.city_id}/{series.sector}: zero employment in {year - 1}")
    gr = (emp[year] - base) / base
    if clamp is not None:
        gr = max(-clamp, min(clamp, gr))
    return gr


def job_trending(series, year, clamp=None):
    return TrendingValue(growth_rate(series, year, clamp) - growth_rate(series, year - 1, clamp), year)


def trending_distance(origin, dest):
    if origin.year != dest.year:
        raise YearMismatch(f"origin dated {origin.year}, destination dated {dest.year}")
    return dest.value - origin.value


def fit_started_log_offset(values, eps=DEFAULT_EPS):
    """``c = eps + max(0, -min(values))`` so that every ``value + c`` is positive."""
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float).ravel()
    if arr.size == 0:
        raise EmptyInput("cannot fit a started-log offset on an empty sample")
    if not np.all(np.isfinite(arr)):
        raise ValueError("started-log offset needs finite values")
    if not eps > 0:
        raise ValueError("eps must be positive")
    return StartedLogOffset(float(eps + max(0.0, -arr.min())))


def trending_distance_log(origin, dest, offset):
    if origin.year != dest.year:
        raise YearMismatch(f"origin dated {origin.year}, destination dated {dest.year}")
    c = offset.c if isinstance(offset, StartedLogOffset) else float(offset)
    lo, hi = origin.value + c, dest.value + c
    if lo <= 0 or hi <= 0:
        raise DomainError(f"shifted trending value not positive (c={c}); offset fitted on another sample?")
    return math.log(hi) - math.log(lo)


class StartedLogTransformer(TransformerMixin, BaseEstimator):
    """Started logarithm ``ln(x + c)`` with ``c`` fitted on the training values.

    Parameters
    ----------
    eps : float
        Margin added on top of ``max(0, -min(x))``.
    """

    def __init__(self, eps=DEFAULT_EPS):
        self.eps = eps

    def fit(self, X, y=None):
        self.offset_ = fit_started_log_offset(np.asarray(X, dtype=float).ravel(), self.eps)
        self.c_ = self.offset_.c
        return self

    def transform(self, X):
        check_is_fitted(self, "c_")
        shifted = np.asarray(X, dtype=float) + self.c_
        if np.any(shifted <= 0):
            raise DomainError(f"values at or below -c ({-self.c_}) cannot be transformed")
        return np.log(shifted)


# -- vectorised helpers ----------------------------------------------------

def growth_array(employment, clamp=None):
    """Growth rates along the last axis; the first slot is NaN.

    Zero bases give NaN rather than an infinite rate.
    """
    emp = np.asarray(employment, dtype=float)
    prev = emp[..., :-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        gr = np.where(prev > 0, (emp[..., 1:] - prev) / np.where(prev > 0, prev, 1.0), np.nan)
    if clamp is not None:
        gr = np.clip(gr, -clamp, clamp)
    pad = np.full(emp.shape[:-1] + (1,), np.nan)
    return np.concatenate([pad, gr], axis=-1)


def trending_array(employment, clamp=None):
    """Job-trending values along the last axis; the first two slots are NaN."""
    gr = growth_array(employment, clamp)
    pad = np.full(gr.shape[:-1] + (1,), np.nan)
    return np.concatenate([pad, gr[..., 1:] - gr[..., :-1]], axis=-1)


# -- tabular input ---------------------------------------------------------

def read_employment_csv(path_or_frame):
    """Parse ``city_id, sector, year, employment`` rows into series keyed by (city, sector)."""
    frame = path_or_frame if isinstance(path_or_frame, pd.DataFrame) else pd.read_csv(path_or_frame, dtype={"city_id": str})
    check_columns(frame, ["city_id", "sector", "year", "employment"], "employment table")
    out = {}
    frame = frame.assign(city_id=frame["city_id"].map(normalize_city), sector=frame["sector"].str.strip().str.lower())
    for (city, sector), grp in frame.groupby(["city_id", "sector"], sort=True):
        out[(city, sector)] = SectorEmploymentSeries(city, sector, dict(zip(grp["year"].astype(int), grp["employment"])))
    return out


def trending_table(series_map, clamp=None):
    """Long table ``city_id, sector, year, trend`` of every defined trending value.

    Years whose value is undefined (missing history or a zero base) are
    absent rather than encoded as zero.
    """
    rows = []
    for (city, sector), series in sorted(series_map.items()):
        for year in series.years:
            try:
                tv = job_trending(series, year, clamp)
            except (MissingYear, ZeroBase):
                continue
            rows.append((city, sector, year, tv.value))
    return pd.DataFrame(rows, columns=["city_id", "sector", "year", "trend"])
