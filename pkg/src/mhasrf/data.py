"""Appointment-table ingestion, feature engineering, encoding, and splitting.

The raw CSV schema has 22 columns (UTF-8, comma-separated, header row,
RFC-4180 quoting). Header matching is case-insensitive and order-free.
Feature engineering adds five derived columns; encoding yields a 24-feature
numeric design matrix with the appointment status as the binary label
(0 = show, 1 = no-show).

Historical features (%no-show, number of visits) use only the same
patient's strictly earlier appointments, so a row never sees its own label.
"""

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

KEY_COLUMNS = ("patient_id", "date", "appointment_time")
LABEL_COLUMN = "status"
STATUS_SHOW = "show"
STATUS_NO_SHOW = "no-show"
MISSING_TOKEN = "__missing__"

# (name, kind) in the fixed design-matrix order; kind drives encoding and
# the Gaussian/categorical dispatch in naive Bayes.
RAW_FEATURES = [
    ("age", "continuous"),
    ("language", "categorical"),
    ("gender", "categorical"),
    ("visit_reason", "categorical"),
    ("visit_type", "categorical"),
    ("appointment_time", "continuous"),
    ("day_of_week", "categorical"),
    ("month", "categorical"),
]
DERIVED_FEATURES = [
    ("week_of_month", "categorical"),
    ("season", "categorical"),
    ("num_visits", "continuous"),
    ("pct_no_show", "continuous"),
    ("same_day_count", "continuous"),
]
TRAILING_FEATURES = [
    ("institute", "categorical"),
    ("center_name", "categorical"),
    ("department_name", "categorical"),
    ("provider_name", "categorical"),
    ("temperature", "continuous"),
    ("dew", "continuous"),
    ("humidity", "continuous"),
    ("windspeed", "continuous"),
    ("visibility", "continuous"),
    ("weather_condition", "categorical"),
    ("air_quality", "categorical"),
]
FEATURE_COLUMNS = RAW_FEATURES + DERIVED_FEATURES + TRAILING_FEATURES
FEATURE_KINDS = dict(FEATURE_COLUMNS)

# Raw CSV columns, in the order gen-data writes them.
CSV_COLUMNS = [
    "patient_id", "date", "appointment_time", "status",
    "age", "language", "gender", "visit_reason", "visit_type",
    "day_of_week", "month",
    "institute", "center_name", "department_name", "provider_name",
    "temperature", "dew", "humidity", "windspeed", "visibility",
    "weather_condition", "air_quality",
]
# day_of_week and month are recomputed from the date, so files may omit them.
MANDATORY_COLUMNS = [c for c in CSV_COLUMNS if c not in ("day_of_week", "month")]

_HEADER_ALIASES = {
    "appointment_status": "status",
    "time_of_day": "appointment_time",
    "time": "appointment_time",
    "weather_conditions": "weather_condition",
    "weather": "weather_condition",
    "center": "center_name",
    "department": "department_name",
    "provider": "provider_name",
}

_WEEKDAY_NAMES = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"]
_SEASONS = {12: "winter", 1: "winter", 2: "winter",
            3: "spring", 4: "spring", 5: "spring",
            6: "summer", 7: "summer", 8: "summer",
            9: "autumn", 10: "autumn", 11: "autumn"}


@dataclass
class Appointment:
    patient_id: str
    date: dt.date
    minutes: float          # appointment time as minutes since midnight
    status: str             # "show" | "no-show"
    values: dict            # feature name -> value (None when missing)

    @property
    def label(self) -> int:
        return 1 if self.status == STATUS_NO_SHOW else 0


@dataclass
class CleaningReport:
    rows_read: int = 0
    rows_kept: int = 0
    drops: dict = field(default_factory=dict)

    def drop(self, reason: str) -> None:
        self.drops[reason] = self.drops.get(reason, 0) + 1

    @property
    def rows_dropped(self) -> int:
        return sum(self.drops.values())

    def lines(self) -> list[str]:
        out = [
            f"rows read:    {self.rows_read}",
            f"rows kept:    {self.rows_kept}",
            f"rows dropped: {self.rows_dropped}",
        ]
        for reason in sorted(self.drops):
            out.append(f"  - {reason}: {self.drops[reason]}")
        return out

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"


@dataclass
class AppointmentTable:
    rows: list
    cleaning: CleaningReport | None = None

    def __len__(self) -> int:
        return len(self.rows)


@dataclass
class FeatureFrame:
    """Encoded design matrix plus the metadata needed to re-encode new data."""

    X: np.ndarray                 # (n, d) float64, no missing values
    y: np.ndarray                 # (n,) ints in {0, 1}
    feature_names: list
    kinds: list                   # "continuous" | "categorical", aligned with names
    encoders: dict                # categorical column -> {value: code}
    fill_values: dict             # continuous column -> imputation value
    row_keys: list                # (patient_id, iso date, minutes) per row

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, indices) -> "FeatureFrame":
        indices = np.asarray(indices)
        return replace(
            self,
            X=self.X[indices].copy(),
            y=self.y[indices].copy(),
            row_keys=[self.row_keys[i] for i in indices],
        )


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _normalize_header(name: str) -> str:
    cleaned = "".join(ch if ch.isalnum() else "_" for ch in name.strip().lower())
    while "__" in cleaned:
        cleaned = cleaned.replace("__", "_")
    cleaned = cleaned.strip("_")
    return _HEADER_ALIASES.get(cleaned, cleaned)


def _parse_date(text: str):
    try:
        return dt.date.fromisoformat(text.strip())
    except (ValueError, AttributeError):
        return None


def _parse_minutes(text: str):
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        try:
            hours, mins = int(parts[0]), int(parts[1])
        except (ValueError, IndexError):
            return None
        value = 60 * hours + mins
    else:
        try:
            value = float(text)
        except ValueError:
            return None
    if not (0 <= value <= 1439):
        return None
    return float(value)


def _parse_float(text):
    if text is None:
        return None
    text = text.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


_STATUS_MAP = {
    "show": STATUS_SHOW,
    "no-show": STATUS_NO_SHOW,
    "no show": STATUS_NO_SHOW,
    "noshow": STATUS_NO_SHOW,
    "cancelled": "cancelled",
    "canceled": "cancelled",
}


def load_table(path) -> AppointmentTable:
    """Read, validate, and clean an appointment CSV.

    Keeps only show/no-show rows; drops (and counts in the cleaning report)
    cancelled rows and rows with an empty patient id, unparseable date or
    time, or an age outside [0, 120].
    """
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc

    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: zero usable rows (empty file)")
        columns = [_normalize_header(h) for h in header]
        missing = [c for c in MANDATORY_COLUMNS if c not in columns]
        if missing:
            raise DataError(f"{path}: missing mandatory columns: {', '.join(missing)}")
        index = {name: i for i, name in enumerate(columns)}

        report = CleaningReport()
        rows = []
        for record in reader:
            if not any(cell.strip() for cell in record):
                continue
            report.rows_read += 1

            def cell(name):
                i = index.get(name)
                return record[i] if i is not None and i < len(record) else ""

            patient_id = cell("patient_id").strip()
            if not patient_id:
                report.drop("missing patient id")
                continue
            status = _STATUS_MAP.get(cell("status").strip().lower())
            if status == "cancelled":
                report.drop("cancelled appointment")
                continue
            if status is None:
                report.drop("unknown appointment status")
                continue
            date = _parse_date(cell("date"))
            if date is None:
                report.drop("unparseable date")
                continue
            minutes = _parse_minutes(cell("appointment_time"))
            if minutes is None:
                report.drop("unparseable appointment time")
                continue
            age = _parse_float(cell("age"))
            if age is None or not (0 <= age <= 120):
                report.drop("unparseable or out-of-range age")
                continue

            values = {
                "age": age,
                "appointment_time": minutes,
                "day_of_week": _WEEKDAY_NAMES[date.weekday()],
                "month": str(date.month),
            }
            for name, kind in RAW_FEATURES + TRAILING_FEATURES:
                if name in values:
                    continue
                if kind == "continuous":
                    values[name] = _parse_float(cell(name))
                else:
                    text = cell(name).strip()
                    values[name] = text if text else None
            rows.append(Appointment(patient_id, date, minutes, status, values))

    report.rows_kept = len(rows)
    if not rows:
        raise DataError(f"{path}: zero usable rows")
    return AppointmentTable(rows=rows, cleaning=report)


# ---------------------------------------------------------------------------
# Feature engineering
# ---------------------------------------------------------------------------

def week_of_month(day: int) -> int:
    return math.ceil(day / 7)


def season_of_month(month: int) -> str:
    return _SEASONS[month]


def derive_features(table: AppointmentTable) -> AppointmentTable:
    """Add the five derived columns to every row (in place, returns table).

    %no-show and number-of-visits look only at the same patient's strictly
    earlier (date, time) appointments, so results are independent of row
    order; the first appointment of a patient gets 0 for both. The same-day
    count includes the row itself.
    """
    by_patient = {}
    for i, row in enumerate(table.rows):
        by_patient.setdefault(row.patient_id, []).append(i)

    for indices in by_patient.values():
        ordered = sorted(indices, key=lambda i: (table.rows[i].date, table.rows[i].minutes))
        prior_count = 0
        prior_noshows = 0
        pos = 0
        while pos < len(ordered):
            # rows sharing a timestamp see the same strictly-earlier history
            stamp = (table.rows[ordered[pos]].date, table.rows[ordered[pos]].minutes)
            group = [ordered[pos]]
            pos += 1
            while pos < len(ordered) and (table.rows[ordered[pos]].date,
                                          table.rows[ordered[pos]].minutes) == stamp:
                group.append(ordered[pos])
                pos += 1
            for i in group:
                row = table.rows[i]
                row.values["num_visits"] = float(prior_count)
                row.values["pct_no_show"] = (
                    100.0 * prior_noshows / prior_count if prior_count else 0.0
                )
            prior_count += len(group)
            prior_noshows += sum(table.rows[i].label for i in group)

        same_day = {}
        for i in indices:
            same_day[table.rows[i].date] = same_day.get(table.rows[i].date, 0) + 1
        for i in indices:
            table.rows[i].values["same_day_count"] = float(same_day[table.rows[i].date])

    for row in table.rows:
        row.values["week_of_month"] = str(week_of_month(row.date.day))
        row.values["season"] = season_of_month(row.date.month)
    return table


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def encode(table: AppointmentTable, reference: FeatureFrame | None = None) -> FeatureFrame:
    """Turn a derived table into a numeric FeatureFrame.

    Without a reference, categorical codes are assigned in first-appearance
    order and continuous fill values are the column medians. With a
    reference (inference), its encoders and fill values are reused; unseen
    categories map to the reserved code len(encoder) with a warning.
    """
    if not table.rows:
        raise DataError("cannot encode an empty table")
    if "pct_no_show" not in table.rows[0].values:
        raise ValueError("derived columns missing; run derive_features first")

    names = [name for name, _ in FEATURE_COLUMNS]
    kinds = [kind for _, kind in FEATURE_COLUMNS]
    n = len(table.rows)
    X = np.zeros((n, len(names)))

    if reference is None:
        encoders = {name: {} for name, kind in FEATURE_COLUMNS if kind == "categorical"}
        fill_values = {}
    else:
        encoders = {k: dict(v) for k, v in reference.encoders.items()}
        fill_values = dict(reference.fill_values)

    unseen_counts = {}
    for j, (name, kind) in enumerate(FEATURE_COLUMNS):
        if kind == "continuous":
            raw = np.array(
                [np.nan if row.values.get(name) is None else float(row.values[name])
                 for row in table.rows]
            )
            if reference is None:
                present = raw[~np.isnan(raw)]
                fill_values[name] = float(np.median(present)) if present.size else 0.0
            raw[np.isnan(raw)] = fill_values[name]
            X[:, j] = raw
        else:
            mapping = encoders[name]
            reserved = len(mapping)  # unseen-at-inference code, stable per column
            codes = np.zeros(n)
            for i, row in enumerate(table.rows):
                value = row.values.get(name)
                token = MISSING_TOKEN if value is None else str(value)
                code = mapping.get(token)
                if code is None:
                    if reference is None:
                        code = len(mapping)
                        mapping[token] = code
                    else:
                        code = reserved
                        unseen_counts[name] = unseen_counts.get(name, 0) + 1
                codes[i] = code
            X[:, j] = codes

    for name, count in sorted(unseen_counts.items()):
        log.warning("column %r: %d value(s) unseen at fit time mapped to reserved code", name, count)

    y = np.array([row.label for row in table.rows], dtype=np.intp)
    row_keys = [(row.patient_id, row.date.isoformat(), row.minutes) for row in table.rows]
    return FeatureFrame(X, y, names, kinds, encoders, fill_values, row_keys)


def frame_from_arrays(X, y, feature_names=None, kinds=None) -> FeatureFrame:
    """Minimal frame around bare arrays (fixtures, direct-matrix workflows)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    if feature_names is None:
        feature_names = [f"f{j}" for j in range(X.shape[1])]
    if kinds is None:
        kinds = ["continuous"] * X.shape[1]
    row_keys = [(f"row{i}", "2018-01-01", 0.0) for i in range(X.shape[0])]
    return FeatureFrame(X, y, list(feature_names), list(kinds), {}, {}, row_keys)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

@dataclass
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0


def split(frame: FeatureFrame, spec: SplitSpec):
    """Seed-deterministic shuffled split into (train, test) frames."""
    if not 0.0 < spec.train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    n = frame.n_rows
    if n < 2:
        raise ValueError("need at least 2 rows to split")
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(math.floor(spec.train_fraction * n + 0.5))
    return frame.subset(perm[:n_train]), frame.subset(perm[n_train:])


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value) if value != int(value) else str(int(value))
    return str(value)


def write_table(table: AppointmentTable, path) -> None:
    """Write rows back out in the canonical 22-column CSV schema."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for row in table.rows:
            record = []
            for name in CSV_COLUMNS:
                if name == "patient_id":
                    record.append(row.patient_id)
                elif name == "date":
                    record.append(row.date.isoformat())
                elif name == "status":
                    record.append(row.status)
                else:
                    record.append(_format_value(row.values.get(name)))
            writer.writerow(record)


def write_frame(frame: FeatureFrame, path) -> None:
    """Write an encoded frame as CSV: row keys, features, then the label."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(KEY_COLUMNS) + frame.feature_names + ["label"])
        for i in range(frame.n_rows):
            pid, date, minutes = frame.row_keys[i]
            cells = [pid, date, _format_value(minutes)]
            cells += [repr(float(v)) for v in frame.X[i]]
            cells.append(str(int(frame.y[i])))
            writer.writerow(cells)
