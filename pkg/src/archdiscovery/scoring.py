"""Combined model effectiveness and energy/CO2 accounting.

The effectiveness scalar ranks candidates:

    cm = aw * (ta + va) + fw * nf - ew * (t_ne + v_ne)

where nf, t_ne, v_ne are the FPS and energy measurements normalized against
their thresholds and clamped to [0, 1].  Energy converts wall time and a
static power profile into kWh scaled by the 1.58 datacenter PUE factor;
CO2-equivalent is 0.954 lbs per kWh-PUE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .metrics import MetricsRecord, UserCriteria

PUE_FACTOR = 1.58
CO2_LBS_PER_KWH = 0.954


@dataclass(frozen=True)
class ScoringWeights:
    aw: float  # accuracy weight
    fw: float  # FPS weight
    ew: float  # energy weight

    def __post_init__(self):
        for name in ("aw", "fw", "ew"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")


def default_weights(c: UserCriteria) -> ScoringWeights:
    """Derive score weights from the user's declared priorities."""
    return ScoringWeights(aw=(c.pa1 + c.pa2) / 2, fw=c.pf, ew=(c.pe1 + c.pe2) / 2)


@dataclass(frozen=True)
class ScoreReport:
    """cm plus its decomposition; cm is recomputable from the other fields."""

    cm: float
    ta: float
    va: float
    nf: float
    t_ne: float
    v_ne: float
    aw: float
    fw: float
    ew: float

    def recompute(self) -> float:
        return self.aw * (self.ta + self.va) + self.fw * self.nf - self.ew * (
            self.t_ne + self.v_ne
        )


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def combined_effectiveness(
    m: MetricsRecord, c: UserCriteria, w: ScoringWeights
) -> ScoreReport:
    """Score one candidate's metrics under the given criteria and weights."""
    nf = _clamp01(m.fps / c.tf)
    t_ne = _clamp01(m.e1_kwh / c.te1)
    v_ne = _clamp01(m.e2_kwh / c.te2)
    cm = w.aw * (m.a1 + m.a2) + w.fw * nf - w.ew * (t_ne + v_ne)
    return ScoreReport(
        cm=cm, ta=m.a1, va=m.a2, nf=nf, t_ne=t_ne, v_ne=v_ne,
        aw=w.aw, fw=w.fw, ew=w.ew,
    )


@dataclass(frozen=True)
class PowerProfile:
    """Average component draws in watts; gpu_count multiplies the GPU draw."""

    cpu_watts: float
    ram_watts: float
    gpu_watts: float
    gpu_count: int = 1

    def __post_init__(self):
        for name in ("cpu_watts", "ram_watts", "gpu_watts"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")
        if self.gpu_count < 0:
            raise ValueError(f"gpu_count must be >= 0, got {self.gpu_count!r}")

    @property
    def total_watts(self) -> float:
        return self.cpu_watts + self.ram_watts + self.gpu_count * self.gpu_watts


def energy_kwh_pue(hours: float, profile: PowerProfile) -> float:
    """PUE-scaled energy of running `profile` for `hours`."""
    if hours < 0:
        raise ValueError(f"hours must be >= 0, got {hours!r}")
    return PUE_FACTOR * hours * profile.total_watts / 1000.0


def co2_lbs(kwh_pue: float) -> float:
    """Equivalent CO2 emission in pounds for the given kWh-PUE."""
    if kwh_pue < 0:
        raise ValueError(f"kwh_pue must be >= 0, got {kwh_pue!r}")
    return CO2_LBS_PER_KWH * kwh_pue


@dataclass(frozen=True)
class EnergyReport:
    p_t: float  # kWh-PUE
    co2e: float  # pounds

    @classmethod
    def from_duration(cls, hours: float, profile: PowerProfile) -> "EnergyReport":
        p_t = energy_kwh_pue(hours, profile)
        return cls(p_t=p_t, co2e=co2_lbs(p_t))

    @classmethod
    def from_kwh(cls, kwh_pue: float) -> "EnergyReport":
        return cls(p_t=kwh_pue, co2e=co2_lbs(kwh_pue))
