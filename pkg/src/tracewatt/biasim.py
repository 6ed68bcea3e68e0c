"""Faulty fuel-gauge simulation and synthetic usage-trace generation.

A worn battery gauge holds its current reading for several samples before
refreshing. The fault fingerprint is the sequence of run lengths in the
current channel; transplanting that pattern onto a clean trace reproduces
the fault, and the generator here builds desk-scale traces to test against
it without any real handsets.
"""

from __future__ import annotations

import io
import zipfile
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import EmptyInputError, ParameterError
from .ingest import CANONICAL_COLUMNS, ORIENTATION_CODES, SIGNAL_RAW, ZIP_ENTRY_NAME, RawTrace

MIN_DURATION_S = 62  # smallest trace the thirty-split benchmark accepts


@dataclass(frozen=True)
class RunLengthPattern:
    """Lengths of consecutive repeated readings, in order of appearance."""

    run_lengths: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(r < 1 for r in self.run_lengths):
            raise ParameterError("every run length must be >= 1")

    @property
    def total(self) -> int:
        return sum(self.run_lengths)

    @property
    def mean_run_length(self) -> float:
        return self.total / len(self.run_lengths)


def extract_run_lengths(series) -> RunLengthPattern:
    """Maximal runs of exactly-equal consecutive values, in order."""
    v = np.asarray(series)
    if v.size == 0:
        raise EmptyInputError("cannot extract runs from an empty series")
    change = np.flatnonzero(v[1:] != v[:-1])
    starts = np.r_[0, change + 1]
    ends = np.r_[change + 1, v.size]
    return RunLengthPattern(tuple(int(x) for x in ends - starts))


def apply_bias(values, pattern: RunLengthPattern) -> np.ndarray:
    """Replay a gauge-fault pattern over a clean series.

    The pattern is walked cyclically; each run of length L emits the true
    value at the run's start repeated L times. Output length equals input
    length, and the first value is always preserved.
    """
    if not pattern.run_lengths:
        raise ParameterError("pattern has no runs")
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise EmptyInputError(f"need a non-empty 1-d series, got shape {v.shape}")
    out = np.empty_like(v)
    pos = 0
    i = 0
    while pos < v.size:
        take = min(pattern.run_lengths[i % len(pattern.run_lengths)], v.size - pos)
        out[pos : pos + take] = v[pos]
        pos += take
        i += 1
    return out


@dataclass(frozen=True)
class PowerLaw:
    """Ground-truth power: intercept + sum(coef * feature) + Gaussian noise."""

    coefficients: dict[str, float]
    intercept_mw: float
    noise_sigma_mw: float = 0.0

    def __post_init__(self) -> None:
        if self.noise_sigma_mw < 0.0:
            raise ParameterError(f"noise sigma must be >= 0, got {self.noise_sigma_mw}")


DEFAULT_POWER_LAW = PowerLaw(
    coefficients={
        "brightness": 2.2,
        "cpu_usage_pct": 9.0,
        "cpu_freq_khz": 0.00035,
        "wifi_signal_dbm": -3.0,
    },
    intercept_mw=420.0,
    noise_sigma_mw=60.0,
)

DEFAULT_APP_SESSIONS = {"mean_length_s": 120.0}


@dataclass
class SynthConfig:
    """Everything the generator needs for one reproducible trace."""

    duration: int = 3600
    seed: int = 0
    app_sessions: dict = field(default_factory=lambda: dict(DEFAULT_APP_SESSIONS))
    power_law: PowerLaw = DEFAULT_POWER_LAW
    gauge_fault: RunLengthPattern | None = None

    def __post_init__(self) -> None:
        if self.duration < MIN_DURATION_S:
            raise ParameterError(f"duration must be >= {MIN_DURATION_S} s, got {self.duration}")


# Per-app feature regimes: (base, jitter sigma) for the wandering numerics,
# plus categorical states and traffic rates. Values are loosely calibrated
# to mid-range handsets; the point is plausible variation, not fidelity.
_APP_PROFILES: dict[str, dict] = {
    "idle": {
        "screen_on": "off",
        "orientation": "Portrait",
        "brightness": (0.0, 0.0),
        "cpu_usage_pct": (3.0, 1.2),
        "cpu_freq_khz": (3.2e5, 2.5e4),
        "cpu_temp_c": (27.0, 0.6),
        "wifi_rx_rate": (180.0, 60.0),
        "wifi_tx_rate": (60.0, 25.0),
        "disk_read_rate": (2.0, 1.0),
        "disk_write_rate": (4.0, 2.0),
        "color_level": 0.0,
    },
    "chrome": {
        "screen_on": "on",
        "orientation": "Portrait",
        "brightness": (176.0, 9.0),
        "cpu_usage_pct": (28.0, 7.0),
        "cpu_freq_khz": (1.25e6, 1.4e5),
        "cpu_temp_c": (33.0, 1.0),
        "wifi_rx_rate": (85_000.0, 30_000.0),
        "wifi_tx_rate": (9_000.0, 3_000.0),
        "disk_read_rate": (55.0, 22.0),
        "disk_write_rate": (30.0, 14.0),
        "color_level": 215.0,
    },
    "youtube": {
        "screen_on": "on",
        "orientation": "Landscape",
        "brightness": (214.0, 7.0),
        "cpu_usage_pct": (42.0, 8.0),
        "cpu_freq_khz": (1.55e6, 1.6e5),
        "cpu_temp_c": (36.0, 1.2),
        "wifi_rx_rate": (610_000.0, 140_000.0),
        "wifi_tx_rate": (14_000.0, 4_000.0),
        "disk_read_rate": (25.0, 10.0),
        "disk_write_rate": (70.0, 25.0),
        "color_level": 120.0,
    },
    "game": {
        "screen_on": "on",
        "orientation": "Landscape",
        "brightness": (238.0, 5.0),
        "cpu_usage_pct": (74.0, 9.0),
        "cpu_freq_khz": (2.05e6, 1.3e5),
        "cpu_temp_c": (41.0, 1.5),
        "wifi_rx_rate": (22_000.0, 9_000.0),
        "wifi_tx_rate": (18_000.0, 7_000.0),
        "disk_read_rate": (90.0, 30.0),
        "disk_write_rate": (45.0, 18.0),
        "color_level": 150.0,
    },
}


def _session_plan(rng: np.random.Generator, duration: int, mean_length: float) -> list[tuple[str, int]]:
    apps = sorted(_APP_PROFILES)
    weights = np.array([0.30 if a == "idle" else 0.70 / (len(apps) - 1) for a in apps])
    plan: list[tuple[str, int]] = []
    remaining = duration
    previous = None
    while remaining > 0:
        w = weights.copy()
        if previous is not None:
            w[apps.index(previous)] = 0.0  # force an actual switch
        w /= w.sum()
        app = str(rng.choice(apps, p=w))
        length = int(min(remaining, max(10, rng.exponential(mean_length))))
        plan.append((app, length))
        remaining -= length
        previous = app
    return plan


def synth_trace(config: SynthConfig) -> RawTrace:
    """Generate a 1 Hz usage trace with a known linear power law.

    An app-session state machine drives screen, brightness, CPU, network,
    disk, and color features; ground-truth power follows config.power_law
    plus Gaussian noise; current is back-solved from a slowly drifting
    voltage; an optional gauge-fault pattern corrupts the current channel.
    Fully deterministic for a given seed.
    """
    rng = np.random.default_rng(config.seed)
    n = config.duration
    mean_length = float(config.app_sessions.get("mean_length_s", 120.0))
    plan = _session_plan(rng, n, mean_length)

    cols: dict[str, np.ndarray] = {name: np.empty(n, dtype=object) for name in
                                   ("screen_on", "wifi_on", "radio_on", "bluetooth_on",
                                    "current_app", "orientation")}
    num: dict[str, np.ndarray] = {}
    for name in ("cpu_freq_khz", "cpu_usage_pct", "cpu_temp_c", "brightness",
                 "red_mean", "red_std", "green_mean", "green_std", "blue_mean", "blue_std",
                 "disk_read_kb_per_s", "disk_write_kb_per_s",
                 "swap_in", "swap_out", "context_switches",
                 "mobile_signal_dbm", "wifi_signal_dbm"):
        num[name] = np.empty(n, dtype=float)
    wifi_rx_rate = np.empty(n, dtype=float)
    wifi_tx_rate = np.empty(n, dtype=float)
    mobile_rx_rate = np.empty(n, dtype=float)
    mobile_tx_rate = np.empty(n, dtype=float)

    pos = 0
    for app, length in plan:
        prof = _APP_PROFILES[app]
        s = slice(pos, pos + length)

        def wander(base_sigma: tuple[float, float], lo: float, hi: float) -> np.ndarray:
            base, sigma = base_sigma
            return np.clip(base + sigma * rng.standard_normal(length), lo, hi)

        cols["screen_on"][s] = prof["screen_on"]
        cols["wifi_on"][s] = "on"
        cols["radio_on"][s] = "on"
        cols["bluetooth_on"][s] = "off"
        cols["current_app"][s] = app
        cols["orientation"][s] = prof["orientation"]

        num["brightness"][s] = wander(prof["brightness"], 0.0, 255.0)
        num["cpu_usage_pct"][s] = wander(prof["cpu_usage_pct"], 0.0, 100.0)
        num["cpu_freq_khz"][s] = wander(prof["cpu_freq_khz"], 2.0e5, 2.4e6)
        num["cpu_temp_c"][s] = wander(prof["cpu_temp_c"], 20.0, 60.0)
        wifi_rx_rate[s] = wander(prof["wifi_rx_rate"], 0.0, np.inf)
        wifi_tx_rate[s] = wander(prof["wifi_tx_rate"], 0.0, np.inf)
        mobile_rx_rate[s] = wander((900.0, 350.0), 0.0, np.inf)
        mobile_tx_rate[s] = wander((350.0, 140.0), 0.0, np.inf)
        num["disk_read_kb_per_s"][s] = wander(prof["disk_read_rate"], 0.0, np.inf)
        num["disk_write_kb_per_s"][s] = wander(prof["disk_write_rate"], 0.0, np.inf)
        num["swap_in"][s] = rng.poisson(0.4, size=length).astype(float)
        num["swap_out"][s] = rng.poisson(0.6, size=length).astype(float)
        num["context_switches"][s] = wander((2400.0, 500.0), 0.0, np.inf)
        level = prof["color_level"]
        for chan in ("red", "green", "blue"):
            if level > 0:
                num[f"{chan}_mean"][s] = np.clip(
                    level + 25.0 * rng.standard_normal(length), 0.0, 255.0
                )
                num[f"{chan}_std"][s] = np.clip(
                    38.0 + 6.0 * rng.standard_normal(length), 0.0, 128.0
                )
            else:
                num[f"{chan}_mean"][s] = 0.0
                num[f"{chan}_std"][s] = 0.0
        num["mobile_signal_dbm"][s] = wander((-78.0, 4.0), -110.0, -40.0)
        num["wifi_signal_dbm"][s] = wander((-56.0, 3.5), -90.0, -30.0)
        pos += length

    num["mobile_rx_bytes"] = np.cumsum(np.round(mobile_rx_rate))
    num["mobile_tx_bytes"] = np.cumsum(np.round(mobile_tx_rate))
    num["wifi_rx_bytes"] = np.cumsum(np.round(wifi_rx_rate))
    num["wifi_tx_bytes"] = np.cumsum(np.round(wifi_tx_rate))
    num["disk_read_kb"] = np.cumsum(np.round(num["disk_read_kb_per_s"]))
    num["disk_write_kb"] = np.cumsum(np.round(num["disk_write_kb_per_s"]))

    # Derived values the power law may reference.
    derived = dict(num)
    derived["mobile_signal_mw"] = np.power(10.0, num[SIGNAL_RAW] / 10.0)
    derived["orientation_code"] = np.array(
        [ORIENTATION_CODES[o] for o in cols["orientation"]], dtype=float
    )

    law = config.power_law
    power = np.full(n, law.intercept_mw, dtype=float)
    for name, coef in law.coefficients.items():
        if name not in derived:
            raise ParameterError(f"power law references unknown feature {name!r}")
        power = power + coef * derived[name]
    if law.noise_sigma_mw > 0.0:
        power = power + law.noise_sigma_mw * rng.standard_normal(n)

    t = np.arange(n, dtype=float)
    voltage = 3.9 + 0.08 * np.sin(2.0 * np.pi * t / 4000.0) - 0.05 * t / max(n, 1)
    current = power / voltage
    if config.gauge_fault is not None:
        current = apply_bias(current, config.gauge_fault)

    frame = {}
    for name in CANONICAL_COLUMNS:
        if name == "current_ma":
            frame[name] = current
        elif name == "voltage_v":
            frame[name] = voltage
        elif name in cols:
            frame[name] = cols[name]
        else:
            frame[name] = num[name]
    df = pd.DataFrame(frame, columns=list(CANONICAL_COLUMNS))
    return RawTrace(header=list(CANONICAL_COLUMNS), rows=df, source_id=f"synth-{config.seed}")


def trace_to_csv_bytes(trace: RawTrace) -> bytes:
    """Canonical CSV encoding; byte-identical for identical traces."""
    return trace.rows.to_csv(index=False).encode("utf-8")


def trace_to_zip_bytes(trace: RawTrace) -> bytes:
    """Single-entry upload archive with a fixed timestamp for reproducibility."""
    buf = io.BytesIO()
    info = zipfile.ZipInfo(ZIP_ENTRY_NAME, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_DEFLATED
    with zipfile.ZipFile(buf, "w") as archive:
        archive.writestr(info, trace_to_csv_bytes(trace))
    return buf.getvalue()
