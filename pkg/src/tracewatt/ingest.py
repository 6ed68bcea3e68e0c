"""Trace ingestion: unzip uploads, parse the monitor CSV, derive the model matrix.

The canonical log is a 31-column CSV written by the on-device monitor
service at 1 Hz: 29 device/state readings plus battery current (mA) and
voltage (V). Column names are fixed here so the generator, the analysis
service, and the pipeline agree byte-for-byte.
"""

from __future__ import annotations

import io
import zipfile
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import EmptyInputError, FormatError, SchemaError

#: Device/state columns logged by the monitor service, in canonical order.
DEVICE_COLUMNS: tuple[str, ...] = (
    "cpu_freq_khz",
    "screen_on",
    "wifi_on",
    "radio_on",
    "bluetooth_on",
    "current_app",
    "cpu_usage_pct",
    "cpu_temp_c",
    "mobile_signal_dbm",
    "wifi_signal_dbm",
    "mobile_rx_bytes",
    "mobile_tx_bytes",
    "wifi_rx_bytes",
    "wifi_tx_bytes",
    "disk_read_kb_per_s",
    "disk_write_kb_per_s",
    "disk_read_kb",
    "disk_write_kb",
    "swap_in",
    "swap_out",
    "context_switches",
    "red_mean",
    "red_std",
    "green_mean",
    "green_std",
    "blue_mean",
    "blue_std",
    "brightness",
    "orientation",
)

#: Battery gauge columns; the product of the two is the regression target.
TARGET_COLUMNS: tuple[str, ...] = ("current_ma", "voltage_v")

CANONICAL_COLUMNS: tuple[str, ...] = DEVICE_COLUMNS + TARGET_COLUMNS

#: Numeric device readings usable as predictors (raw, before transforms).
NUMERIC_FEATURES: tuple[str, ...] = (
    "cpu_freq_khz",
    "cpu_usage_pct",
    "cpu_temp_c",
    "mobile_signal_dbm",
    "wifi_signal_dbm",
    "mobile_rx_bytes",
    "mobile_tx_bytes",
    "wifi_rx_bytes",
    "wifi_tx_bytes",
    "disk_read_kb_per_s",
    "disk_write_kb_per_s",
    "disk_read_kb",
    "disk_write_kb",
    "swap_in",
    "swap_out",
    "context_switches",
    "red_mean",
    "red_std",
    "green_mean",
    "green_std",
    "blue_mean",
    "blue_std",
    "brightness",
)

#: String-valued state columns, never used as predictors directly.
CATEGORICAL_COLUMNS: tuple[str, ...] = (
    "screen_on",
    "wifi_on",
    "radio_on",
    "bluetooth_on",
    "current_app",
    "orientation",
)

SIGNAL_RAW = "mobile_signal_dbm"
#: dBm readings are mapped onto a linear milliwatt scale: 10**(dBm/10).
SIGNAL_TRANSFORMED = "mobile_signal_mw"

ORIENTATION_FEATURE = "orientation_code"
ORIENTATION_CODES = {"Portrait": 0.0, "Landscape": 1.0}

ZIP_ENTRY_NAME = "usage_log.csv"


@dataclass
class RawTrace:
    """A parsed usage log: typed columns, one row per second."""

    header: list[str]
    rows: pd.DataFrame
    source_id: str = ""

    @property
    def n_rows(self) -> int:
        return len(self.rows)


@dataclass
class FeatureMatrix:
    """Numeric predictor matrix with the aligned power target (mW)."""

    feature_names: list[str]
    X: np.ndarray
    y: np.ndarray
    dropped_rows: int = 0

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def select(self, names: list[str]) -> "FeatureMatrix":
        """Column-subset view (copies), keeping y and row order."""
        idx = [self.feature_names.index(name) for name in names]
        return FeatureMatrix(list(names), self.X[:, idx].copy(), self.y.copy(), self.dropped_rows)


def decompress_upload(payload: bytes) -> bytes:
    """Extract the single CSV entry from an uploaded zip archive."""
    try:
        archive = zipfile.ZipFile(io.BytesIO(payload))
    except zipfile.BadZipFile as exc:
        raise FormatError(f"payload is not a zip archive: {exc}") from exc
    entries = archive.infolist()
    if len(entries) == 0:
        raise FormatError("zip archive contains no entries")
    if len(entries) > 1:
        names = ", ".join(e.filename for e in entries)
        raise FormatError(f"zip archive must contain exactly one entry, got: {names}")
    try:
        return archive.read(entries[0])
    except (zipfile.BadZipFile, zipfile.LargeZipFile, NotImplementedError, OSError) as exc:
        raise FormatError(f"zip entry could not be read: {exc}") from exc


def parse_trace(csv_bytes: bytes, source_id: str = "") -> RawTrace:
    """Parse a usage-log CSV into typed columns.

    Numeric columns are coerced; unparseable cells become missing values
    and the row is retained. Missing current/voltage columns raise
    SchemaError, a data-less file raises EmptyInputError.
    """
    try:
        text = csv_bytes.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"log is not valid UTF-8: {exc}") from exc
    try:
        df = pd.read_csv(io.StringIO(text), dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise EmptyInputError("log has no header row") from exc

    header = [str(c) for c in df.columns]
    missing = [c for c in TARGET_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"log is missing mandatory columns: {', '.join(missing)}")
    if len(df) == 0:
        raise EmptyInputError("log has a header but no data rows")

    numeric = set(NUMERIC_FEATURES) | set(TARGET_COLUMNS)
    for col in header:
        if col in numeric:
            df[col] = pd.to_numeric(df[col], errors="coerce")
    return RawTrace(header=header, rows=df, source_id=source_id)


def derive_features(trace: RawTrace) -> FeatureMatrix:
    """Apply the derivation transforms and assemble the regression matrix.

    Per row: the target is current * voltage in mW; the mobile signal
    strength is replaced by its milliwatt-scale value (column renamed to
    prevent double application); orientation is encoded Portrait -> 0,
    Landscape -> 1 and appended as the last feature. Only numeric device
    readings are kept as predictors; current/voltage never enter X. Rows
    with any missing retained value are dropped and counted.
    """
    df = trace.rows
    n_in = len(df)

    y = df["current_ma"].to_numpy(dtype=float) * df["voltage_v"].to_numpy(dtype=float)

    names: list[str] = []
    columns: list[np.ndarray] = []
    for col in NUMERIC_FEATURES:
        if col not in df.columns:
            continue
        values = df[col].to_numpy(dtype=float)
        if col == SIGNAL_RAW:
            names.append(SIGNAL_TRANSFORMED)
            columns.append(np.power(10.0, values / 10.0))
        else:
            names.append(col)
            columns.append(values)

    if "orientation" in df.columns:
        codes = df["orientation"].map(ORIENTATION_CODES).to_numpy(dtype=float)
        names.append(ORIENTATION_FEATURE)
        columns.append(codes)

    X = np.column_stack(columns) if columns else np.empty((n_in, 0))
    keep = np.isfinite(y)
    if X.shape[1]:
        keep &= np.isfinite(X).all(axis=1)
    n_keep = int(keep.sum())
    if n_keep == 0:
        raise EmptyInputError(f"all {n_in} rows dropped for missing values")
    return FeatureMatrix(
        feature_names=names,
        X=X[keep],
        y=y[keep],
        dropped_rows=n_in - n_keep,
    )
