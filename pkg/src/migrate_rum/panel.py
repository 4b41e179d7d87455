"""Quasi-panel construction from household-survey answers and city statistics.

Survey rows are classified into natives and four migrant types, each migrant
is paired with a destination city and move year, and every retained person is
expanded into person-year dyad rows carrying the job-trending distance, the
lagged city covariate distances and individual covariates.
"""

import math
from collections import Counter
from dataclasses import asdict, dataclass, fields

import numpy as np
import pandas as pd

from .exceptions import CoverageError, SchemaError, UnpairableError
from .trending import DEFAULT_EPS, fit_started_log_offset, trending_table
from .validation import check_columns, normalize_city

NATIVE = "native"
FLOATING = "floating"
RETURNEE = "returnee"
TRANSFER_RESIDENT = "transfer_resident"
TRANSFER_ELSEWHERE = "transfer_elsewhere"
DROPPED = "dropped"
MIGRANT_KINDS = (FLOATING, RETURNEE, TRANSFER_RESIDENT, TRANSFER_ELSEWHERE)

YES, NO = 1, 2
PANEL_YEARS = (1997, 2017)
AGE_WINDOW = (16, 65)
CITY_COVARIATES = ("lngdppc", "coop", "medical", "highEdu", "ppDen", "tertiaryRatio", "chri")
CHRI_STAGES = ((2000, 2013), (2014, 2017))

# Industry groups (GB/T 4754) folded into the three main sectors.
INDUSTRY_SECTOR = {
    "farming, forestry, animal husbandry": "primary",
    "mining and quarrying": "secondary",
    "manufacturing": "secondary",
    "electric power gas and water production and supply": "secondary",
    "construction": "secondary",
    "wholesale and retail trade": "tertiary",
    "transportation storage post and telecommunications": "tertiary",
    "hotel and catering services": "tertiary",
    "information transmission, software and information technology": "tertiary",
    "banking and insurance": "tertiary",
    "real estate": "tertiary",
    "leasing and business services": "tertiary",
    "scientific research, technical service and geologic prospecting": "tertiary",
    "management of water conservancy, environment and public facilities": "tertiary",
    "social services": "tertiary",
    "education": "tertiary",
    "health, social security and social welfare": "tertiary",
    "culture, sports and entertainment": "tertiary",
    "public management and social organisation": "tertiary",
}

_CITY_FIELDS = ("a2016b", "a2019", "a2022m", "a2023j", "surveyed_city")
_YEAR_FIELDS = ("a2019e", "a2019f", "a2022l", "a2023k", "a3139", "birth_year")
_CODE_FIELDS = ("hhead", "a2001", "a2019b", "a2022k", "a2023g", "a3138", "employee")


def _missing(value):
    if value is None:
        return True
    if isinstance(value, float) and math.isnan(value):
        return True
    return isinstance(value, str) and value.strip().lower() in {"", "nan", "none", "null", "na"}


def _as_int(value, name):
    if _missing(value):
        return None
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise SchemaError(f"{name}={value!r} is not numeric") from None
    if not f.is_integer():
        raise SchemaError(f"{name}={value!r} is not an integer")
    return int(f)


@dataclass(frozen=True)
class SurveyRow:
    person_id: str
    family_id: str = None
    hhead: int = None
    a2001: int = None
    a2016b: str = None
    a2019: str = None
    a2019b: int = None
    a2019e: int = None
    a2019f: int = None
    a2022k: int = None
    a2022l: int = None
    a2022m: str = None
    a2023g: int = None
    a2023j: str = None
    a2023k: int = None
    a3138: int = None
    a3139: int = None
    surveyed_city: str = None
    birth_year: int = None
    gender: float = None
    marriage: float = None
    hukou_type: float = None
    health: float = None
    hh_income: float = None
    schooling_2017: float = None
    sector: str = None
    employee: int = None

    @classmethod
    def from_mapping(cls, record):
        """Parse one raw record, normalizing codes; raises ``SchemaError``."""
        known = {f.name for f in fields(cls)}
        vals = {k: record.get(k) for k in known}
        if _missing(vals["person_id"]):
            raise SchemaError("person_id is required")
        vals["person_id"] = str(vals["person_id"]).removesuffix(".0")
        vals["family_id"] = None if _missing(vals["family_id"]) else str(vals["family_id"]).removesuffix(".0")
        for name in _CITY_FIELDS:
            vals[name] = None if _missing(vals[name]) else normalize_city(vals[name])
        for name in _YEAR_FIELDS:
            vals[name] = _as_int(vals[name], name)
            if vals[name] is not None and not 1900 <= vals[name] <= 2017:
                raise SchemaError(f"{name}={vals[name]} outside [1900, 2017]")
        for name in _CODE_FIELDS:
            vals[name] = _as_int(vals[name], name)
        for name in ("gender", "marriage", "hukou_type", "health", "hh_income", "schooling_2017"):
            vals[name] = None if _missing(vals[name]) else float(vals[name])
        vals["sector"] = None if _missing(vals["sector"]) else str(vals["sector"]).strip().lower()
        if vals["birth_year"] is None:
            raise SchemaError("birth_year is required")
        return cls(**vals)

    @property
    def transfer(self):
        return self.a2022k == YES

    @property
    def householder(self):
        return self.hhead == 1

    def resident_city(self):
        """Where the person lives now; surveyed city only for householders."""
        if self.a2016b is not None:
            return self.a2016b
        if self.householder:
            return self.surveyed_city
        return None


@dataclass(frozen=True)
class MigrantStatus:
    kind: str
    origin: str = None
    destination: str = None
    move_year: int = None
    drop_reason: str = None

    def __post_init__(self):
        if self.kind in MIGRANT_KINDS and (self.destination is None or self.move_year is None):
            raise ValueError("migrants need a destination and a move year")
        if self.kind == DROPPED and not self.drop_reason:
            raise ValueError("dropped records need a reason")

    @property
    def is_migrant(self):
        return self.kind in MIGRANT_KINDS


def _dropped(reason):
    return MigrantStatus(DROPPED, drop_reason=reason)


def migrant_kind(row):
    """Type of the record before destination pairing."""
    if not row.transfer and row.a2019e is not None:
        return FLOATING
    if row.a2023g == YES:
        return TRANSFER_RESIDENT if (row.a2023j is None and row.transfer) else RETURNEE
    if row.transfer and row.a2022m is not None and row.a2019 is not None and row.a2022m != row.a2019:
        resident = row.resident_city()
        if resident is not None and resident == row.a2022m:
            # Hukou moved away while the person stayed in the origin city.
            return NATIVE
        if row.a2023g == NO or (resident is not None and resident == row.a2019):
            return TRANSFER_RESIDENT
        return TRANSFER_ELSEWHERE
    return NATIVE


def _transfer_fallback(row):
    # New Hukou city as destination, one year before the transfer.
    if row.a2019 is None or row.a2022l is None:
        raise UnpairableError("missing_pairing")
    return row.a2019, row.a2022l - 1


def resolve_destination(row, kind):
    """Destination city and move year for a migrant of the given kind.

    Raises
    ------
    UnpairableError
        With a reason code when the record cannot be paired.
    """
    kind = getattr(kind, "kind", kind)
    if kind == FLOATING:
        if row.a2019e is not None and row.a2019f is not None and row.a2019e != row.a2019f:
            raise UnpairableError("multi_move")
        year = row.a2019e
        if row.a2016b is not None:
            return row.a2016b, year
        if row.surveyed_city is None:
            raise UnpairableError("missing_destination")
        if not row.householder:
            raise UnpairableError("non_householder_surveyed_city")
        return row.surveyed_city, year
    if kind == RETURNEE:
        if row.a2023j is None:
            raise UnpairableError("missing_destination")
        if row.a2023k is None:
            raise UnpairableError("returnee_missing_year")
        if row.transfer and row.a2022m is not None and row.a2022m == row.a2023j:
            if row.a2022l is None or row.a2022l >= row.a2023k:
                raise UnpairableError("ambiguous_transfer_return")
        return row.a2023j, row.a2023k
    if kind == TRANSFER_RESIDENT:
        if row.a2019e is not None and row.a2019f is not None and row.a2019e != row.a2019f:
            raise UnpairableError("multi_move")
        if row.a2019 is None:
            raise UnpairableError("missing_destination")
        if row.a2019f is not None:
            return row.a2019, row.a2019f
        return _transfer_fallback(row)
    if kind == TRANSFER_ELSEWHERE:
        if row.a2019e is not None and row.a2019f is not None and row.a2019e != row.a2019f:
            raise UnpairableError("multi_move")
        year = row.a2019f if row.a2019f is not None else row.a2019e
        resident = row.resident_city()
        if resident is not None and year is not None:
            return resident, year
        return _transfer_fallback(row)
    raise ValueError(f"no destination to resolve for kind {kind!r}")


def _origin(row, kind):
    if kind in (FLOATING, RETURNEE):
        return row.a2019
    if kind in (TRANSFER_RESIDENT, TRANSFER_ELSEWHERE):
        # Hukou city before the transfer.
        return row.a2022m
    raise ValueError(kind)


def _native_status(row):
    if row.transfer and row.a2019 is None:
        return _dropped("transfer_missing_hukou")
    if row.transfer and row.a2019b is None and row.a2023g is None:
        return _dropped("transfer_unverified_residence")
    origin = row.a2022m or row.a2019 or row.a2016b
    if origin is None:
        return _dropped("missing_origin")
    if row.householder and row.surveyed_city is not None and row.surveyed_city != origin:
        return _dropped("surveyed_city_mismatch")
    return MigrantStatus(NATIVE, origin=origin, destination=origin)


def classify(row):
    """Classify one survey record as a native, a migrant type, or dropped."""
    if not isinstance(row, SurveyRow):
        row = SurveyRow.from_mapping(row)
    if row.a3138 == NO:
        return _dropped("never_worked")
    kind = migrant_kind(row)
    if kind == NATIVE:
        return _native_status(row)
    try:
        destination, year = resolve_destination(row, kind)
    except UnpairableError as exc:
        return _dropped(exc.reason)
    origin = _origin(row, kind)
    if origin is None:
        return _dropped("missing_origin")
    if origin == destination:
        return _dropped("no_prefecture_move")
    if row.a3139 is not None and row.a3139 <= year:
        return _dropped("job_ended_before_move")
    return MigrantStatus(kind, origin, destination, year)


def pioneer_flag(family, person_id, year):
    """1 if another family member moved strictly before ``year``.

    ``family`` maps person ids to :class:`MigrantStatus` (or is an iterable
    of ``(person_id, status)`` pairs).
    """
    items = family.items() if isinstance(family, dict) else family
    for pid, status in items:
        if pid != person_id and status.is_migrant and status.move_year < year:
            return 1
    return 0


def sector_series_for(row):
    """Employment series used for the person: a main sector, else ``total``."""
    sector = row.sector
    if sector is None or row.employee == 0:
        return "total"
    sector = INDUSTRY_SECTOR.get(sector, sector)
    return sector if sector in ("primary", "secondary", "tertiary") else "total"


class CityStats:
    """Lookup of city covariates by ``(city, year)``."""

    def __init__(self, frame):
        frame = frame.copy()
        check_columns(frame, ["city_id", "year"], "city statistics")
        frame["city_id"] = frame["city_id"].map(normalize_city)
        frame["year"] = frame["year"].astype(int)
        for col in CITY_COVARIATES:
            if col not in frame.columns:
                frame[col] = np.nan
        self.frame = frame.set_index(["city_id", "year"]).sort_index()
        if not self.frame.index.is_unique:
            raise SchemaError("duplicate city/year rows in city statistics")
        self._chri_stage = {}
        chri = self.frame["chri"].dropna()
        for (city, year), value in chri.items():
            for stage, (lo, hi) in enumerate(CHRI_STAGES):
                if lo <= year <= hi:
                    self._chri_stage.setdefault((city, stage), value)

    def covers(self, city, year):
        return (city, year) in self.frame.index

    def value(self, city, year, name):
        if name == "chri":
            return self.chri(city, year)
        if (city, year) not in self.frame.index:
            return np.nan
        return float(self.frame.at[(city, year), name])

    def chri(self, city, year):
        stage = next((s for s, (lo, hi) in enumerate(CHRI_STAGES) if lo <= year <= hi), None)
        if stage is None:
            return np.nan
        if (city, year) in self.frame.index:
            v = self.frame.at[(city, year), "chri"]
            if not pd.isna(v):
                return float(v)
        return float(self._chri_stage.get((city, stage), np.nan))


@dataclass
class QuasiPanel:
    frame: pd.DataFrame
    statuses: dict
    report: dict
    started_log_c: float


def read_survey(path_or_frame):
    """Parse survey records; malformed rows are returned separately with their error."""
    frame = path_or_frame if isinstance(path_or_frame, pd.DataFrame) else pd.read_csv(path_or_frame, dtype=str, keep_default_na=False)
    rows, errors = [], []
    for i, record in enumerate(frame.to_dict("records")):
        try:
            rows.append(SurveyRow.from_mapping(record))
        except SchemaError as exc:
            errors.append((i, record.get("person_id"), str(exc)))
    return rows, errors


def build_quasi_panel(rows, city_stats, employment, years=PANEL_YEARS, age_window=AGE_WINDOW,
                      eps=DEFAULT_EPS, strict=True):
    """Expand classified survey records into the person-year dyad panel.

    Parameters
    ----------
    rows : DataFrame or iterable of SurveyRow / mappings
    city_stats : DataFrame
        ``city_id, year`` plus the city covariates.
    employment : dict or DataFrame
        Series keyed by ``(city, sector)`` as returned by
        :func:`migrate_rum.trending.read_employment_csv`, or an already
        computed trending table with columns ``city_id, sector, year, trend``.
    strict : bool
        Raise :class:`CoverageError` when a needed city-year is absent from
        ``city_stats``; otherwise drop the affected persons.
    """
    schema_errors = []
    if isinstance(rows, pd.DataFrame):
        parsed, schema_errors = read_survey(rows)
    else:
        parsed = []
        for i, r in enumerate(rows):
            try:
                parsed.append(r if isinstance(r, SurveyRow) else SurveyRow.from_mapping(r))
            except SchemaError as exc:
                schema_errors.append((i, getattr(r, "get", lambda *_: None)("person_id"), str(exc)))
    stats = city_stats if isinstance(city_stats, CityStats) else CityStats(city_stats)
    trend_frame = employment if isinstance(employment, pd.DataFrame) else trending_table(employment)
    trend = {(normalize_city(c), s, int(y)): v for c, s, y, v in trend_frame[["city_id", "sector", "year", "trend"]].itertuples(index=False)}

    statuses = {}
    families = {}
    drop_reasons = Counter({"schema_error": len(schema_errors)}) if schema_errors else Counter()
    kinds = Counter()
    for row in parsed:
        status = classify(row)
        statuses[row.person_id] = status
        if status.kind == DROPPED:
            drop_reasons[status.drop_reason] += 1
        else:
            kinds[status.kind] += 1
            families.setdefault(row.family_id or row.person_id, {})[row.person_id] = status

    first, last = years
    lo_age, hi_age = age_window
    person_years = {}
    assembly_drops = Counter()
    missing_cover = set()
    for row in sorted(parsed, key=lambda r: r.person_id):
        status = statuses[row.person_id]
        if status.kind == DROPPED:
            continue
        span = [t for t in range(first, last + 1) if lo_age <= t - row.birth_year <= hi_age]
        if status.is_migrant and status.move_year not in span:
            assembly_drops["move_outside_window"] += 1
            continue
        needed = {(c, t - 1) for t in span for c in (status.origin, status.destination)}
        gaps = {cy for cy in needed if not stats.covers(*cy)}
        if gaps:
            missing_cover |= gaps
            assembly_drops["city_not_covered"] += 1
            continue
        person_years[row.person_id] = (row, status, span)
    if strict and missing_cover:
        raise CoverageError(missing_cover)

    records = []
    missing_trend = 0
    for pid, (row, status, span) in person_years.items():
        sector = sector_series_for(row)
        family = families.get(row.family_id or row.person_id, {})
        for t in span:
            t_o = trend.get((status.origin, sector, t))
            t_d = trend.get((status.destination, sector, t))
            if t_o is None or t_d is None:
                missing_trend += 1
                continue
            age = t - row.birth_year
            rec = {
                "person_id": pid,
                "family_id": row.family_id or pid,
                "kind": status.kind,
                "origin": status.origin,
                "destination": status.destination,
                "year": t,
                "sector": sector,
                "migrate": int(status.is_migrant and t == status.move_year),
                "trend_origin": t_o,
                "trend_destination": t_d,
                "distance_jobtrend_raw": t_d - t_o,
            }
            for name in CITY_COVARIATES:
                rec[f"distance_{name}"] = stats.value(status.destination, t - 1, name) - stats.value(status.origin, t - 1, name)
            school = None if row.schooling_2017 is None else min(row.schooling_2017, max(0.0, age - 6.0))
            rec.update({
                "gender": row.gender,
                "marriage": row.marriage,
                "hukou_type": row.hukou_type,
                "health": row.health,
                "hh_income": row.hh_income,
                "age": age,
                "age2": age * age,
                "schooling": school,
                "pioneer": pioneer_flag(family, pid, t),
            })
            records.append(rec)

    frame = pd.DataFrame.from_records(records)
    if frame.empty:
        c = eps
        frame = pd.DataFrame(columns=panel_columns())
    else:
        pooled = np.concatenate([frame["trend_origin"].to_numpy(), frame["trend_destination"].to_numpy()])
        c = fit_started_log_offset(pooled, eps).c
        frame["distance_jobtrend"] = np.log(frame["trend_destination"] + c) - np.log(frame["trend_origin"] + c)
        frame = frame[panel_columns()].sort_values(["person_id", "year"], kind="mergesort").reset_index(drop=True)

    report = {
        "input_rows": len(parsed) + len(schema_errors),
        "classified": dict(sorted(kinds.items())),
        "dropped": dict(sorted(drop_reasons.items())),
        "schema_errors": [{"row": i, "person_id": p, "error": e} for i, p, e in schema_errors],
        "persons_dropped_in_assembly": dict(sorted(assembly_drops.items())),
        "missing_city_years": sorted([list(cy) for cy in missing_cover]),
        "rows_dropped_missing_trending": missing_trend,
        "rows_out": int(len(frame)),
        "persons_out": int(frame["person_id"].nunique()) if len(frame) else 0,
        "started_log_c": float(c),
    }
    return QuasiPanel(frame, statuses, report, float(c))


def panel_columns():
    return [
        "person_id", "family_id", "kind", "origin", "destination", "year", "sector", "migrate",
        "distance_jobtrend", "distance_jobtrend_raw", "trend_origin", "trend_destination",
        *[f"distance_{c}" for c in CITY_COVARIATES],
        "gender", "marriage", "hukou_type", "health", "hh_income", "age", "age2", "schooling", "pioneer",
    ]


def status_frame(statuses):
    return pd.DataFrame([{"person_id": pid, **asdict(s)} for pid, s in sorted(statuses.items())])
