"""Evaluation measurements and user-defined search criteria.

`MetricsRecord` holds what an evaluation produced; `UserCriteria` holds the
priorities and thresholds the user steers the search with.  Five bundled
priority presets cover the common emphasis mixes (accuracy-only, balanced,
validation-only, energy-only, speed-aware).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass


class UnknownPreset(ValueError):
    """Preset number outside 1..5."""


def _require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


def _require_unit(name: str, value: float) -> None:
    _require_finite(name, value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value!r}")


@dataclass(frozen=True)
class MetricsRecord:
    """One evaluation's measurements.

    a1/a2 are train/validation accuracy, e1_kwh/e2_kwh the energy of the
    train and validation phases in kWh-PUE, fps the inference throughput,
    params the model's parameter count.
    """

    a1: float
    a2: float
    e1_kwh: float
    e2_kwh: float
    fps: float
    params: int

    def __post_init__(self):
        _require_unit("a1", self.a1)
        _require_unit("a2", self.a2)
        for name in ("e1_kwh", "e2_kwh", "fps"):
            value = getattr(self, name)
            _require_finite(name, value)
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value!r}")
        if self.params < 0:
            raise ValueError(f"params must be >= 0, got {self.params!r}")


@dataclass(frozen=True)
class UserCriteria:
    """Priorities (pa1..pf), thresholds (ta1..tf) and fit-gap limits (ot, ut).

    Priorities weight the refinement instructions when a threshold is
    violated; ot/ut bound the train-validation accuracy gap before the
    overfit/underfit rules fire.  Priorities conventionally sum to 1; a
    mismatch is only warned about since nothing downstream requires it.
    """

    pa1: float
    pa2: float
    pe1: float
    pe2: float
    pf: float
    ta1: float
    ta2: float
    te1: float
    te2: float
    tf: float
    ot: float = 0.15
    ut: float = 0.15

    def __post_init__(self):
        for name in ("pa1", "pa2", "pe1", "pe2", "pf", "ta1", "ta2", "ot", "ut"):
            _require_unit(name, getattr(self, name))
        for name in ("te1", "te2", "tf"):
            value = getattr(self, name)
            _require_finite(name, value)
            if value <= 0:
                raise ValueError(f"{name} must be > 0, got {value!r}")
        total = self.pa1 + self.pa2 + self.pe1 + self.pe2 + self.pf
        if abs(total - 1.0) > 1e-9:
            warnings.warn(
                f"priorities sum to {total!r}, not 1.0", stacklevel=2
            )


# Priority rows for presets 1-5; thresholds below are shared defaults.
_PRESET_PRIORITIES = {
    1: (0.4, 0.6, 0.0, 0.0, 0.0),
    2: (0.3, 0.3, 0.2, 0.2, 0.0),
    3: (0.0, 1.0, 0.0, 0.0, 0.0),
    4: (0.0, 0.0, 0.5, 0.5, 0.0),
    5: (0.3, 0.4, 0.0, 0.0, 0.3),
}

DEFAULT_THRESHOLDS = {
    "ta1": 0.95,
    "ta2": 0.92,
    "te1": 1e-3,
    "te2": 1e-5,
    "tf": 20000.0,
    "ot": 0.15,
    "ut": 0.15,
}


def load_preset(n: int) -> UserCriteria:
    """Return preset `n` (1-5): its priority row plus the default thresholds."""
    try:
        pa1, pa2, pe1, pe2, pf = _PRESET_PRIORITIES[n]
    except (KeyError, TypeError):
        raise UnknownPreset(f"no preset {n!r}; choose 1-5") from None
    return UserCriteria(pa1=pa1, pa2=pa2, pe1=pe1, pe2=pe2, pf=pf, **DEFAULT_THRESHOLDS)
