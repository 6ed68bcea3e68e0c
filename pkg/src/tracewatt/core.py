"""Units, power/energy math, and error metrics shared by every module.

Canonical units throughout the package: current in mA, voltage in V,
power in mW, energy in mJ. Ingestion converts whatever the device logs
at the boundary, so nothing below this layer ever sees raw units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, InvalidSampleError, ShapeError

#: Relative tolerance for the power == current * voltage consistency check.
POWER_RTOL = 1e-9


def instantaneous_power(current_ma: float, voltage_v: float) -> float:
    """Instantaneous power in mW from current (mA) and voltage (V).

    Current may be negative (charging). Raises InvalidSampleError on
    non-finite input.
    """
    if not (math.isfinite(current_ma) and math.isfinite(voltage_v)):
        raise InvalidSampleError(
            f"non-finite reading: current={current_ma!r} mA, voltage={voltage_v!r} V"
        )
    return current_ma * voltage_v


@dataclass(frozen=True)
class PowerSample:
    """One gauge reading on the 1 Hz grid.

    ``timestamp`` counts seconds since trace start. ``power_mw`` must equal
    ``current_ma * voltage_v`` to within POWER_RTOL.
    """

    timestamp: int
    current_ma: float
    voltage_v: float
    power_mw: float

    def __post_init__(self) -> None:
        expected = instantaneous_power(self.current_ma, self.voltage_v)
        if not math.isclose(self.power_mw, expected, rel_tol=POWER_RTOL, abs_tol=1e-12):
            raise InvalidSampleError(
                f"power {self.power_mw} mW inconsistent with "
                f"{self.current_ma} mA x {self.voltage_v} V = {expected} mW"
            )

    @classmethod
    def from_reading(cls, timestamp: int, current_ma: float, voltage_v: float) -> "PowerSample":
        return cls(timestamp, current_ma, voltage_v, instantaneous_power(current_ma, voltage_v))


@dataclass(frozen=True)
class PowerSeries:
    """Uniformly sampled power readings with fixed step ``dt`` seconds."""

    samples: tuple[PowerSample, ...]
    dt: float = 1.0

    def __post_init__(self) -> None:
        stamps = [s.timestamp for s in self.samples]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise InvalidSampleError("timestamps must be strictly increasing")

    @property
    def powers_mw(self) -> np.ndarray:
        return np.array([s.power_mw for s in self.samples], dtype=float)

    def __add__(self, other: "PowerSeries") -> "PowerSeries":
        """Concatenate two series recorded at the same dt."""
        if other.dt != self.dt:
            raise ShapeError(f"dt mismatch: {self.dt} vs {other.dt}")
        offset = self.samples[-1].timestamp + 1 if self.samples else 0
        shifted = tuple(
            PowerSample(s.timestamp + offset, s.current_ma, s.voltage_v, s.power_mw)
            for s in other.samples
        )
        return PowerSeries(self.samples + shifted, self.dt)


def energy_of_series(series: PowerSeries) -> float:
    """Total energy of a series in mJ.

    Left Riemann sum at the fixed sampling step: sum(power_i * dt). The
    1 Hz grid makes this the plain sum of the per-second power readings.
    """
    if not series.samples:
        raise EmptyInputError("cannot integrate an empty power series")
    return float(np.sum(series.powers_mw) * series.dt)


def mean_absolute_error(predicted, actual) -> float:
    """Mean of |predicted_i - actual_i| in mW.

    Raises ShapeError on length mismatch and EmptyInputError on empty input.
    """
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise ShapeError(f"length mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise EmptyInputError("cannot compute MAE of empty vectors")
    return float(np.mean(np.abs(p - a)))
