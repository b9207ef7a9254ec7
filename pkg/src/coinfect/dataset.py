"""Patient-record data model, CSV ingestion and contingency summaries.

A record combines 15 clinical/climate covariates with three binary infection
statuses (malaria parasitemia, anti-arbovirus IgM, anti-arbovirus IgG).  The
4-class response is derived from the statuses under one of two case
definitions: ``IgM`` (recent arboviral infection only) or ``IgMIgG``
(IgM or IgG positivity counts as an arboviral case).
"""

from __future__ import annotations

import csv
import enum
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "COVARIATE_NAMES",
    "CONTINUOUS_COVARIATES",
    "BINARY_COVARIATES",
    "CSV_COLUMNS",
    "Mode",
    "InfectionStatus",
    "Dataset",
    "DropReport",
    "ContingencyTable",
    "SchemaError",
    "EmptyDataError",
    "RecordError",
    "encode_response",
    "ingest_csv",
    "summarize",
    "serialize_csv",
]

CONTINUOUS_COVARIATES = ("temperature", "sick_days", "age", "rainfall")
BINARY_COVARIATES = (
    "sex",
    "headache",
    "eye_pain",
    "muscle_pain",
    "joint_pain",
    "cough",
    "nausea_vomiting",
    "chills",
    "diarrhea",
    "nasal_congestion",
    "jaundice",
)
COVARIATE_NAMES = CONTINUOUS_COVARIATES + BINARY_COVARIATES
STATUS_COLUMNS = ("malaria", "igm", "igg")
CSV_COLUMNS = COVARIATE_NAMES + STATUS_COLUMNS


class Mode(enum.Enum):
    """Arboviral case definition."""

    IGM = "IgM"
    IGMIGG = "IgMIgG"


class SchemaError(ValueError):
    """A required CSV column is missing."""


class EmptyDataError(ValueError):
    """Ingestion produced no usable records."""


class RecordError(ValueError):
    """A single record violates the case-definition contract."""


@dataclass(frozen=True)
class InfectionStatus:
    """Raw assay outcomes for one patient; ``igg`` may be unknown."""

    malaria: int
    igm: int
    igg: int | None = None


@dataclass
class DropReport:
    """Accounting of records removed during ingestion."""

    n_read: int = 0
    n_kept: int = 0
    missing: dict = field(default_factory=dict)

    @property
    def n_dropped(self) -> int:
        return self.n_read - self.n_kept

    def as_dict(self) -> dict:
        return {
            "n_read": self.n_read,
            "n_kept": self.n_kept,
            "n_dropped": self.n_dropped,
            "missing": dict(self.missing),
        }


def encode_response(status: InfectionStatus, mode: Mode) -> int:
    """Map an infection status to the 4-class response.

    Classes: 0 other febrile illness, 1 arboviral monoinfection,
    2 malaria monoinfection, 3 coinfection.  Under ``Mode.IGMIGG`` an
    arboviral case is IgM- or IgG-positive; under ``Mode.IGM`` only IgM
    counts.
    """
    if mode is Mode.IGMIGG:
        if status.igg is None:
            raise RecordError("igg status required in IgM/IgG mode")
        arbo = bool(status.igm) or bool(status.igg)
    else:
        arbo = bool(status.igm)
    malaria = bool(status.malaria)
    if malaria and arbo:
        return 3
    if malaria:
        return 2
    if arbo:
        return 1
    return 0


@dataclass
class Dataset:
    """Immutable column-oriented patient data.

    ``X`` is the (n, 15) covariate matrix ordered as COVARIATE_NAMES;
    ``malaria``/``igm`` are {0,1} arrays; ``igg`` is a float array with NaN
    for unknown; ``y`` is the derived response class.
    """

    X: np.ndarray
    malaria: np.ndarray
    igm: np.ndarray
    igg: np.ndarray
    y: np.ndarray
    mode: Mode
    drop_report: DropReport = field(default_factory=DropReport)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.malaria = np.asarray(self.malaria, dtype=np.int64)
        self.igm = np.asarray(self.igm, dtype=np.int64)
        self.igg = np.asarray(self.igg, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        for arr in (self.X, self.malaria, self.igm, self.igg, self.y):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def covariate_names(self) -> tuple:
        return COVARIATE_NAMES

    def status(self, i: int) -> InfectionStatus:
        igg = None if np.isnan(self.igg[i]) else int(self.igg[i])
        return InfectionStatus(int(self.malaria[i]), int(self.igm[i]), igg)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=4)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.X[idx], self.malaria[idx], self.igm[idx], self.igg[idx],
            self.y[idx], self.mode,
        )

    @classmethod
    def from_arrays(cls, X, malaria, igm, igg, mode: Mode,
                    drop_report: DropReport | None = None) -> "Dataset":
        """Build a Dataset, deriving the response from the statuses."""
        malaria = np.asarray(malaria, dtype=np.int64)
        igm = np.asarray(igm, dtype=np.int64)
        igg = np.asarray(igg, dtype=np.float64)
        y = np.empty(len(malaria), dtype=np.int64)
        for i in range(len(malaria)):
            g = None if np.isnan(igg[i]) else int(igg[i])
            y[i] = encode_response(InfectionStatus(int(malaria[i]), int(igm[i]), g), mode)
        return cls(np.asarray(X, dtype=np.float64), malaria, igm, igg, y, mode,
                   drop_report or DropReport())


def _parse_cell(name: str, raw: str):
    """Parse one CSV cell; returns None when the value is missing/invalid."""
    raw = raw.strip()
    if raw == "" or raw.upper() in ("NA", "NAN"):
        return None
    try:
        val = float(raw)
    except ValueError:
        return None
    if name in BINARY_COVARIATES or name in STATUS_COLUMNS:
        if val not in (0.0, 1.0):
            return None
        return int(val)
    if not np.isfinite(val):
        return None
    return val


def ingest_csv(source, mode: Mode) -> Dataset:
    """Read patient records from CSV, dropping incomplete rows.

    ``source`` is a path, a text stream or a byte stream.  Rows with any
    missing covariate, missing malaria/IgM status or (in IgM/IgG mode)
    missing IgG are dropped and counted per field in the drop report.
    """
    if isinstance(source, (str, bytes)) and not (
            isinstance(source, bytes) or "\n" in source):
        fh = open(source, "r", encoding="utf-8", newline="")
        close = True
    elif isinstance(source, bytes):
        fh = io.StringIO(source.decode("utf-8"))
        close = False
    elif isinstance(source, str):
        fh = io.StringIO(source)
        close = False
    else:
        raw = source.read()
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        fh = io.StringIO(raw)
        close = False
    try:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = list(CSV_COLUMNS)
        if mode is Mode.IGM and "igg" not in header:
            required.remove("igg")
        missing_cols = [c for c in required if c not in header]
        if missing_cols:
            raise SchemaError(f"missing required columns: {missing_cols}")

        report = DropReport(missing={})
        rows_X, rows_mal, rows_igm, rows_igg = [], [], [], []
        for row in reader:
            report.n_read += 1
            cov = [_parse_cell(n, row.get(n, "")) for n in COVARIATE_NAMES]
            mal = _parse_cell("malaria", row.get("malaria", ""))
            igm = _parse_cell("igm", row.get("igm", ""))
            igg = _parse_cell("igg", row.get("igg", ""))
            bad = [n for n, v in zip(COVARIATE_NAMES, cov) if v is None]
            if mal is None:
                bad.append("malaria")
            if igm is None:
                bad.append("igm")
            if mode is Mode.IGMIGG and igg is None:
                bad.append("igg")
            if bad:
                for name in bad:
                    report.missing[name] = report.missing.get(name, 0) + 1
                continue
            report.n_kept += 1
            rows_X.append(cov)
            rows_mal.append(mal)
            rows_igm.append(igm)
            rows_igg.append(np.nan if igg is None else igg)
    finally:
        if close:
            fh.close()

    if not rows_X:
        raise EmptyDataError("no usable records after dropping incomplete rows")
    return Dataset.from_arrays(
        np.array(rows_X), rows_mal, rows_igm, rows_igg, mode, report)


def serialize_csv(data: Dataset) -> str:
    """Write a Dataset back to the canonical CSV text (round-trips ingest_csv)."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for i in range(len(data)):
        row = []
        for j, name in enumerate(COVARIATE_NAMES):
            v = data.X[i, j]
            row.append(int(v) if name in BINARY_COVARIATES else repr(float(v)))
        row.append(int(data.malaria[i]))
        row.append(int(data.igm[i]))
        row.append("" if np.isnan(data.igg[i]) else int(data.igg[i]))
        writer.writerow(row)
    return buf.getvalue()


@dataclass
class ContingencyTable:
    """2x2 arbovirus-by-malaria counts with margins and percentages."""

    coinfection: int        # A+, M+  (y = 3)
    arbo_only: int          # A+, M-  (y = 1)
    malaria_only: int       # A-, M+  (y = 2)
    other: int              # A-, M-  (y = 0)
    drop_report: DropReport | None = None

    @property
    def total(self) -> int:
        return self.coinfection + self.arbo_only + self.malaria_only + self.other

    @property
    def arbo_positive(self) -> int:
        return self.coinfection + self.arbo_only

    @property
    def malaria_positive(self) -> int:
        return self.coinfection + self.malaria_only

    def as_dict(self) -> dict:
        n = self.total
        cells = {
            "arbo_pos_malaria_pos": self.coinfection,
            "arbo_pos_malaria_neg": self.arbo_only,
            "arbo_neg_malaria_pos": self.malaria_only,
            "arbo_neg_malaria_neg": self.other,
        }
        out = {
            "cells": cells,
            "margins": {
                "arbo_positive": self.arbo_positive,
                "arbo_negative": self.malaria_only + self.other,
                "malaria_positive": self.malaria_positive,
                "malaria_negative": self.arbo_only + self.other,
                "total": n,
            },
            "percentages": {k: 100.0 * v / n for k, v in cells.items()},
        }
        if self.drop_report is not None:
            out["drop_report"] = self.drop_report.as_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def summarize(data: Dataset) -> ContingencyTable:
    """Cross-tabulate arboviral and malaria positivity.

    Margins are computed arithmetically from the cells.  Note that one of
    the published summary tables for the IgM/IgG case definition reports an
    A+ margin that does not equal the sum of its own cells; a warning is
    raised when a supplied margin disagrees, never a silent correction.
    """
    if len(data) == 0:
        raise EmptyDataError("cannot summarize an empty dataset")
    counts = data.class_counts()
    return ContingencyTable(
        coinfection=int(counts[3]),
        arbo_only=int(counts[1]),
        malaria_only=int(counts[2]),
        other=int(counts[0]),
        drop_report=data.drop_report,
    )


def check_reported_margin(table: ContingencyTable, reported_arbo_positive: int) -> bool:
    """Compare a externally reported A+ margin against the cell arithmetic.

    Returns True when consistent; otherwise emits a warning and returns
    False.  The computed margin is always the authoritative one.
    """
    if reported_arbo_positive == table.arbo_positive:
        return True
    warnings.warn(
        "reported arbovirus-positive margin %d does not match cell sum %d; "
        "using the cell sum" % (reported_arbo_positive, table.arbo_positive),
        stacklevel=2,
    )
    return False
