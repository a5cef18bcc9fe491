"""Seeded synthetic appointment generator with known ground-truth signal.

Labels are sampled from a logistic model whose inputs are the visit reason,
the visit type, and a per-patient latent no-show propensity. The propensity
persists across a patient's appointments, which is what makes the derived
%no-show feature genuinely predictive. Every other column is either flavor
(demographics, clinic names) or weather; `visibility` is drawn i.i.d. and
independent of everything, so it is a known pure-noise column for
importance sanity checks.
"""

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .data import Appointment, AppointmentTable, STATUS_NO_SHOW, STATUS_SHOW

# Per-category log-odds effects, multiplied by the SignalConfig weights.
# Deep reasons (|effect| >= 12) decide their rows outright; the two mid
# reasons put rows on the boundary, where visit type nudges and the
# patient's propensity decides. Propensity is a bimodal mixture (reliable
# vs unreliable patients), so the derived %no-show feature separates the
# two groups cleanly once a patient has history.
REASON_EFFECTS = {
    "checkup": -18.0,
    "follow_up": -14.0,
    "vaccination": -12.0,
    "screening": -1.0,
    "consultation": 2.0,
    "lab_work": 12.0,
    "physiotherapy": 14.0,
    "chronic_care": 18.0,
}
TYPE_EFFECTS = {
    "consult": -1.5,
    "procedure": 0.2,
    "new": 1.5,
}
PROPENSITY_MODES = (-4.0, 4.0)  # latent log-odds shift of reliable/unreliable patients
PROPENSITY_SD = 0.7             # within-mode spread
MEAN_VISITS_PER_PATIENT = 12    # expected appointments per patient

_LANGUAGES = ["arabic", "english", "urdu", "hindi", "tagalog"]
_GENDERS = ["F", "M"]
_INSTITUTES = ["central", "north", "harbor"]
_CENTERS = ["main_campus", "annex_a", "annex_b", "family_center", "specialty_center", "east_wing"]
_DEPARTMENTS = ["dentistry", "gynecology", "urology", "cardiology",
                "dermatology", "pediatrics", "orthopedics", "ophthalmology"]
_WEATHER = ["clear", "cloudy", "rain", "dust", "fog"]
_WEATHER_P = [0.52, 0.20, 0.08, 0.15, 0.05]
_AIR = ["good", "moderate", "unhealthy", "hazardous"]
_AIR_P = [0.40, 0.35, 0.20, 0.05]


@dataclass
class SignalConfig:
    """Signal knobs; weights of 0 silence a component entirely."""

    base_rate: float = 0.32
    reason_weight: float = 1.0
    type_weight: float = 1.0
    history_weight: float = 1.0
    noise_column: str = "visibility"

    @property
    def signal_columns(self):
        return ["visit_reason", "visit_type", "pct_no_show"]


def generate_synthetic(n: int, seed: int, signal: SignalConfig | None = None) -> AppointmentTable:
    """Emit n schema-conformant appointment rows, deterministic per seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    config = signal or SignalConfig()
    rng = np.random.default_rng(seed)

    n_patients = max(1, n // MEAN_VISITS_PER_PATIENT)
    patient_age = rng.integers(1, 91, size=n_patients)
    patient_gender = rng.choice(_GENDERS, size=n_patients)
    patient_language = rng.choice(_LANGUAGES, size=n_patients)
    propensity = rng.normal(0.0, PROPENSITY_SD, size=n_patients) * config.history_weight

    reasons = list(REASON_EFFECTS)
    types = list(TYPE_EFFECTS)
    base_logit = math.log(config.base_rate / (1.0 - config.base_rate))
    year_start = dt.date(2018, 1, 1)

    rows = []
    for i in range(n):
        pid = int(rng.integers(0, n_patients))
        date = year_start + dt.timedelta(days=int(rng.integers(0, 365)))
        minutes = float(rng.integers(480, 1020))  # clinic hours 08:00-16:59
        reason = reasons[int(rng.integers(0, len(reasons)))]
        visit_type = types[int(rng.integers(0, len(types)))]

        logit = (
            base_logit
            + config.reason_weight * REASON_EFFECTS[reason]
            + config.type_weight * TYPE_EFFECTS[visit_type]
            + propensity[pid]
        )
        p_noshow = 1.0 / (1.0 + math.exp(-logit))
        status = STATUS_NO_SHOW if rng.random() < p_noshow else STATUS_SHOW

        # Seasonal weather; visibility alone is i.i.d. noise by design.
        season_phase = math.sin(2.0 * math.pi * (date.month - 4) / 12.0)
        temperature = round(24.0 + 14.0 * season_phase + rng.normal(0.0, 3.0), 1)
        dew = round(temperature - rng.uniform(4.0, 16.0), 1)
        humidity = round(min(100.0, max(5.0, 58.0 - 0.8 * (temperature - 24.0)
                                        + rng.normal(0.0, 10.0))), 1)
        windspeed = round(abs(rng.normal(12.0, 6.0)), 1)
        visibility = round(rng.normal(10.0, 3.0), 1)

        values = {
            "age": float(patient_age[pid]),
            "language": str(patient_language[pid]),
            "gender": str(patient_gender[pid]),
            "visit_reason": reason,
            "visit_type": visit_type,
            "appointment_time": minutes,
            "day_of_week": ["Monday", "Tuesday", "Wednesday", "Thursday",
                            "Friday", "Saturday", "Sunday"][date.weekday()],
            "month": str(date.month),
            "institute": str(_INSTITUTES[int(rng.integers(0, len(_INSTITUTES)))]),
            "center_name": str(_CENTERS[int(rng.integers(0, len(_CENTERS)))]),
            "department_name": str(_DEPARTMENTS[int(rng.integers(0, len(_DEPARTMENTS)))]),
            "provider_name": f"provider_{int(rng.integers(0, 40)):02d}",
            "temperature": temperature,
            "dew": dew,
            "humidity": humidity,
            "windspeed": windspeed,
            "visibility": visibility,
            "weather_condition": str(rng.choice(_WEATHER, p=_WEATHER_P)),
            "air_quality": str(rng.choice(_AIR, p=_AIR_P)),
        }
        rows.append(Appointment(f"P{pid:06d}", date, minutes, status, values))

    return AppointmentTable(rows=rows)
