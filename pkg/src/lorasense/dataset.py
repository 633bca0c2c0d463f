"""Record ingestion, multi-gateway uplink joining, feature vectors, labels
and train/test splitting."""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, fields
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (DomainError, FormatError, LabelConflictError, RecordErrors,
                     SplitError)
from .radio_model import RssiRecord

CSV_COLUMNS = ("timestamp_s", "node_id", "gateway_id", "rssi_dbm", "snr_db",
               "sf", "bw_khz", "cr", "freq_mhz", "occupancy")
TRAFFIC_CLASSES = (1, 2, 3, 4, 5)

# upper car count (inclusive) of classes 1..4; everything above is class 5
_CLASS_UPPER = (17, 24, 31, 38)

_FLOAT_COLS = ("timestamp_s", "rssi_dbm", "snr_db", "bw_khz", "freq_mhz")
_FINITE_COLS = ("timestamp_s", "rssi_dbm", "snr_db")


def label_class(occupancy: int) -> int:
    """Traffic class 1-5 for a car count; 39 cars and above is class 5."""
    if occupancy < 0:
        raise DomainError(f"car count must be >= 0, got {occupancy}")
    for cls, upper in enumerate(_CLASS_UPPER, start=1):
        if occupancy <= upper:
            return cls
    return 5


# -- parsing / serialization ------------------------------------------------

def _convert(row: dict) -> RssiRecord:
    """Map one raw row to a record; raises ``(column, message)`` on failure."""
    values = {}
    for col in CSV_COLUMNS:
        raw = row.get(col)
        if col == "occupancy":
            if raw is None or raw == "":
                values[col] = None
                continue
            try:
                occ = int(raw) if not isinstance(raw, float) else None
            except (TypeError, ValueError):
                occ = None
            if occ is None or isinstance(raw, bool) or occ < 0:
                raise ValueError(col, f"not a nonnegative integer: {raw!r}")
            values[col] = occ
            continue
        if raw is None or raw == "":
            raise ValueError(col, "missing value")
        if col in _FLOAT_COLS:
            try:
                if isinstance(raw, bool):
                    raise TypeError
                v = float(raw)
            except (TypeError, ValueError):
                raise ValueError(col, f"not a number: {raw!r}") from None
            if col in _FINITE_COLS and not math.isfinite(v):
                raise ValueError(col, f"not finite: {raw!r}")
            values[col] = v
        elif col == "sf":
            try:
                if isinstance(raw, (bool, float)):
                    raise TypeError
                values[col] = int(raw)
            except (TypeError, ValueError):
                raise ValueError(col, f"not an integer: {raw!r}") from None
        else:
            values[col] = str(raw)
    return RssiRecord(**values)


def _text_lines(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline="")
    if isinstance(source, str):
        return io.StringIO(source, newline="")
    if isinstance(source, io.TextIOBase):
        return source
    # binary stream
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def parse_records(source, fmt: str = "csv") -> list[RssiRecord]:
    """Parse CSV or JSONL records.

    ``source`` may be bytes, a string, or an open text/binary stream.  A bad
    header raises :class:`FormatError`; bad rows are collected and raised
    together as :class:`RecordErrors` after the whole input is read.
    """
    stream = _text_lines(source)
    records, errors = [], []
    if fmt == "csv":
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise FormatError(f"expected header {','.join(CSV_COLUMNS)}, got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                errors.append((lineno, "*", f"expected {len(CSV_COLUMNS)} fields, got {len(row)}"))
                continue
            try:
                records.append(_convert(dict(zip(CSV_COLUMNS, row))))
            except ValueError as exc:
                errors.append((lineno, *exc.args))
    elif fmt == "jsonl":
        for lineno, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append((lineno, "*", f"invalid JSON: {exc.msg}"))
                continue
            if not isinstance(obj, dict):
                errors.append((lineno, "*", "expected a JSON object"))
                continue
            try:
                records.append(_convert(obj))
            except ValueError as exc:
                errors.append((lineno, *exc.args))
    else:
        raise FormatError(f"unknown format {fmt!r}")
    if errors:
        raise RecordErrors(errors)
    return records


def _fmt_float(v) -> str:
    return repr(float(v))


def write_records(records: Iterable[RssiRecord], stream, fmt: str = "csv") -> int:
    """Write records to a text stream; returns the count written.

    Floats are written as their shortest round-trip repr, so parsing the
    output reproduces every value exactly.
    """
    n = 0
    if fmt == "csv":
        stream.write(",".join(CSV_COLUMNS) + "\n")
        for r in records:
            stream.write(",".join((
                _fmt_float(r.timestamp_s), r.node_id, r.gateway_id,
                _fmt_float(r.rssi_dbm), _fmt_float(r.snr_db), str(int(r.sf)),
                _fmt_float(r.bw_khz), r.cr, _fmt_float(r.freq_mhz),
                "" if r.occupancy is None else str(int(r.occupancy)),
            )) + "\n")
            n += 1
    elif fmt == "jsonl":
        for r in records:
            obj = {f.name: getattr(r, f.name) for f in fields(r)}
            for k in _FLOAT_COLS:
                obj[k] = float(obj[k])
            stream.write(json.dumps(obj) + "\n")
            n += 1
    else:
        raise FormatError(f"unknown format {fmt!r}")
    return n


def records_to_string(records, fmt="csv") -> str:
    buf = io.StringIO(newline="")
    write_records(records, buf, fmt)
    return buf.getvalue()


def read_records_file(path, fmt=None) -> list[RssiRecord]:
    fmt = fmt or ("jsonl" if str(path).endswith(".jsonl") else "csv")
    with open(path, "rb") as fh:
        return parse_records(fh.read(), fmt)


# -- features -----------------------------------------------------------------

@dataclass(frozen=True)
class FeatureVector:
    features: tuple
    label: Optional[int]
    timestamp_s: float
    occupancy: Optional[int] = None


@dataclass
class Dataset:
    """Feature matrix plus labels.

    ``labels`` uses 0 for "unlabeled"; ``occupancy`` uses -1 for unknown.
    """
    X: np.ndarray
    labels: np.ndarray
    timestamps: np.ndarray
    gateway_order: tuple
    occupancy: Optional[np.ndarray] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(-1, len(self.gateway_order))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        if self.occupancy is None:
            self.occupancy = np.full(len(self.labels), -1, dtype=np.int64)
        self.occupancy = np.asarray(self.occupancy, dtype=np.int64)
        n = self.X.shape[0]
        if not (len(self.labels) == len(self.timestamps) == len(self.occupancy) == n):
            raise ValueError("dataset arrays disagree in length")

    def __len__(self):
        return self.X.shape[0]

    @property
    def is_labeled(self) -> bool:
        return bool(len(self) and np.all(self.labels > 0))

    @property
    def class_counts(self) -> dict:
        return {int(k): int(v) for k, v in sorted(Counter(self.labels.tolist()).items())}

    @property
    def vectors(self) -> list[FeatureVector]:
        return [self[i] for i in range(len(self))]

    def __getitem__(self, i) -> FeatureVector:
        lab = int(self.labels[i])
        occ = int(self.occupancy[i])
        return FeatureVector(tuple(float(v) for v in self.X[i]), lab or None,
                             float(self.timestamps[i]), None if occ < 0 else occ)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.labels[idx], self.timestamps[idx],
                       self.gateway_order, self.occupancy[idx])

    @classmethod
    def from_arrays(cls, X, labels, gateway_order=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        order = tuple(gateway_order or (f"f{i}" for i in range(X.shape[1])))
        return cls(X, labels, np.arange(X.shape[0], dtype=float), order)


def build_features(records: Sequence[RssiRecord], gateway_order: Sequence[str],
                   join_tolerance_s: float = 5.0, min_gateways: int = 2) -> Dataset:
    """Join per-gateway reports of the same uplink into fixed-order vectors.

    Records of one node whose timestamps lie within ``join_tolerance_s`` of
    the group's earliest record form one uplink.  Groups heard by fewer than
    ``min_gateways`` of the configured gateways are dropped; gaps in
    accepted groups are filled with that gateway's mean RSSI over all input
    records.  Duplicate reports from one gateway inside a group are averaged.
    """
    order = tuple(gateway_order)
    if not order:
        raise DomainError("gateway_order must not be empty")
    if join_tolerance_s < 0:
        raise DomainError("join_tolerance_s must be >= 0")
    pos = {g: i for i, g in enumerate(order)}

    sums, counts = defaultdict(float), defaultdict(int)
    by_node = defaultdict(list)
    for r in records:
        if r.gateway_id not in pos:
            continue
        sums[r.gateway_id] += r.rssi_dbm
        counts[r.gateway_id] += 1
        by_node[r.node_id].append(r)
    means = {g: sums[g] / counts[g] for g in counts}

    rows = []  # (timestamp, node, features, occupancy)
    for node in sorted(by_node):
        recs = sorted(by_node[node], key=lambda r: (r.timestamp_s, r.gateway_id))
        start = 0
        while start < len(recs):
            t0 = recs[start].timestamp_s
            end = start
            while end < len(recs) and recs[end].timestamp_s - t0 <= join_tolerance_s:
                end += 1
            group = recs[start:end]
            start = end
            per_gw = defaultdict(list)
            for r in group:
                per_gw[r.gateway_id].append(r.rssi_dbm)
            if len(per_gw) < min_gateways:
                continue
            occs = {r.occupancy for r in group if r.occupancy is not None}
            if len(occs) > 1:
                raise LabelConflictError(
                    f"node {node} uplink at t={t0}: conflicting occupancy {sorted(occs)}")
            feat = []
            for g in order:
                if g in per_gw:
                    v = per_gw[g]
                    feat.append(v[0] if len(v) == 1 else sum(v) / len(v))
                elif g in means:
                    feat.append(means[g])
                else:
                    raise DomainError(f"gateway {g} has no records to impute from")
            rows.append((t0, node, feat, occs.pop() if occs else None))

    rows.sort(key=lambda r: (r[0], r[1]))
    X = np.array([r[2] for r in rows], dtype=np.float64).reshape(-1, len(order))
    occ = np.array([-1 if r[3] is None else r[3] for r in rows], dtype=np.int64)
    labels = np.array([0 if o < 0 else label_class(int(o)) for o in occ], dtype=np.int64)
    return Dataset(X, labels, np.array([r[0] for r in rows], dtype=np.float64), order, occ)


# -- splitting ----------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_train_test(ds: Dataset, train_fraction: float = 0.7, seed: int = 42,
                     stratified: bool = True) -> tuple[Dataset, Dataset]:
    """Seeded train/test partition; both halves keep the original order."""
    if not 0 < train_fraction < 1:
        raise SplitError("train_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    n = len(ds)
    train_idx = []
    if stratified:
        for cls, members in _class_members(ds).items():
            if len(members) < 2:
                raise SplitError(f"class {cls} has {len(members)} element(s); need >= 2")
            perm = members[rng.permutation(len(members))]
            k = min(max(_round_half_up(train_fraction * len(members)), 1), len(members) - 1)
            train_idx.extend(perm[:k].tolist())
    else:
        perm = rng.permutation(n)
        train_idx = perm[:_round_half_up(train_fraction * n)].tolist()
    mask = np.zeros(n, dtype=bool)
    mask[train_idx] = True
    return ds.subset(np.flatnonzero(mask)), ds.subset(np.flatnonzero(~mask))


def _class_members(ds: Dataset) -> dict:
    return {int(c): np.flatnonzero(ds.labels == c) for c in np.unique(ds.labels)}


def stratified_folds(ds: Dataset, k: int, seed: int = 42) -> np.ndarray:
    """Fold index (0..k-1) per vector, dealing each class round-robin."""
    if k < 2:
        raise SplitError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(ds), dtype=np.int64)
    for cls, members in _class_members(ds).items():
        if len(members) < k:
            raise SplitError(f"class {cls} has {len(members)} member(s), fewer than {k} folds")
        perm = members[rng.permutation(len(members))]
        folds[perm] = np.arange(len(perm)) % k
    return folds
