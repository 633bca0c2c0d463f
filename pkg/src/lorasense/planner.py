"""Fingerprint radio maps, variance-based deployment point selection and the
node-position accuracy study."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence


from .errors import DomainError, FormatError, MappingError
from .radio_model import ScenarioConfig, simulate_scenario

RADIO_MAP_COLUMNS = ("point_id", "x_m", "y_m", "z_m", "gateway_id",
                     "mean_rssi_dbm", "var_rssi_db2", "n_samples")
STUDY_COLUMNS = ("position_id", "x_m", "y_m", "accuracy_macro")


@dataclass(frozen=True)
class GatewayStats:
    mean: float
    var: float
    n: int


@dataclass
class FingerprintPoint:
    point_id: str
    position: tuple
    per_gateway_stats: dict  # gateway id -> GatewayStats


@dataclass
class RadioMap:
    points: list
    gateway_order: tuple = field(default_factory=tuple)

    def __post_init__(self):
        ids = [p.point_id for p in self.points]
        if len(ids) != len(set(ids)):
            raise DomainError("point ids must be unique")


def _welford(values):
    n, mean, m2 = 0, 0.0, 0.0
    for v in values:
        n += 1
        delta = v - mean
        mean += delta / n
        m2 += delta * (v - mean)
    return mean, (m2 / (n - 1) if n > 1 else 0.0), n


def build_radio_map(groups: Mapping[str, Sequence], positions: Mapping[str, tuple]) -> RadioMap:
    """Per point and gateway: sample mean and unbiased sample variance of RSSI."""
    points, gateways = [], set()
    for pid in sorted(groups):
        recs = groups[pid]
        if not recs:
            raise DomainError(f"point {pid} has no records")
        if pid not in positions:
            raise MappingError(f"point {pid} has no position")
        by_gw = {}
        for r in recs:
            by_gw.setdefault(r.gateway_id, []).append(r.rssi_dbm)
        stats = {g: GatewayStats(*_welford(v)) for g, v in sorted(by_gw.items())}
        gateways.update(stats)
        points.append(FingerprintPoint(pid, tuple(float(c) for c in positions[pid]), stats))
    return RadioMap(points, tuple(sorted(gateways)))


SCORES = {
    "sum": lambda v: float(sum(v)),
    "max": lambda v: float(max(v)),
    "mean": lambda v: float(sum(v) / len(v)),
}


def point_score(p: FingerprintPoint, aggregate: str = "sum") -> float:
    try:
        agg = SCORES[aggregate]
    except KeyError:
        raise DomainError(f"unknown aggregate {aggregate!r}") from None
    return agg([s.var for s in p.per_gateway_stats.values()])


def select_points(rmap: RadioMap, m: int, aggregate: str = "sum") -> list[str]:
    """The ``m`` points with the largest RSSI-variance score, best first.

    Equal scores are ordered by point id.
    """
    if not 0 <= m <= len(rmap.points):
        raise DomainError(f"m={m} outside [0, {len(rmap.points)}]")
    ranked = sorted(rmap.points, key=lambda p: (-point_score(p, aggregate), p.point_id))
    return [p.point_id for p in ranked[:m]]


def write_radio_map(rmap: RadioMap) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RADIO_MAP_COLUMNS)
    for p in rmap.points:
        x, y, *rest = p.position
        z = rest[0] if rest else 0.0
        for g, s in p.per_gateway_stats.items():
            w.writerow([p.point_id, repr(x), repr(y), repr(float(z)), g,
                        repr(s.mean), repr(s.var), s.n])
    return buf.getvalue()


def read_radio_map(text: str) -> RadioMap:
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None or tuple(header) != RADIO_MAP_COLUMNS:
        raise FormatError(f"expected header {','.join(RADIO_MAP_COLUMNS)}")
    points, gateways = {}, set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            pid, x, y, z, g, mean, var, n = row
            pos = (float(x), float(y), float(z))
            stats = GatewayStats(float(mean), float(var), int(n))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        if stats.var < 0 or stats.n < 1:
            raise FormatError(f"line {lineno}: variance must be >= 0 and n_samples >= 1")
        pt = points.setdefault(pid, FingerprintPoint(pid, pos, {}))
        if pt.position != pos:
            raise FormatError(f"line {lineno}: point {pid} has inconsistent positions")
        pt.per_gateway_stats[g] = stats
        gateways.add(g)
    return RadioMap(list(points.values()), tuple(sorted(gateways)))


# -- synthetic survey ---------------------------------------------------------

def survey_grid(cfg: ScenarioConfig, nx: int = 7, ny: int = 4) -> dict:
    """Candidate points on an ``nx`` by ``ny`` grid of cell centres."""
    out = {}
    h = cfg.node_position[2]
    for j in range(ny):
        for i in range(nx):
            pid = f"P{j * nx + i + 1:02d}"
            out[pid] = ((i + 0.5) * cfg.lot_length_m / nx, (j + 0.5) * cfg.lot_width_m / ny, h)
    return out


def simulate_survey(cfg: ScenarioConfig, positions: Mapping[str, tuple],
                    samples_per_point: int = 60) -> dict:
    """Simulated fingerprint measurements, ``samples_per_point`` uplinks per point.

    Every point sees the same occupancy trace (shared seed) so variance
    differences come from the geometry alone.
    """
    groups = {}
    for pid in sorted(positions):
        pcfg = cfg.replace(node_position=tuple(positions[pid]), node_id=pid,
                           duration_s=samples_per_point * cfg.tx_interval_s)
        groups[pid] = list(simulate_scenario(pcfg))
    return groups


# -- position study -----------------------------------------------------------

@dataclass(frozen=True)
class PipelineParams:
    train_fraction: float = 0.7
    join_tolerance_s: float = 5.0
    min_gateways: int = 2
    kernel: str = "rbf"
    gamma: float | None = None
    C: float = 1.0
    tol: float = 1e-3
    max_passes: int = 50


@dataclass(frozen=True)
class StudyRow:
    position_id: str
    x_m: float
    y_m: float
    accuracy_macro: float


def run_pipeline(cfg: ScenarioConfig, params: PipelineParams = PipelineParams()):
    """simulate -> features -> stratified split -> SVM -> held-out report."""
    from .dataset import build_features, split_train_test
    from .metrics import evaluate
    from .svm import KernelSpec, fit_svm

    records = list(simulate_scenario(cfg))
    ds = build_features(records, cfg.gateway_ids, params.join_tolerance_s,
                        min(params.min_gateways, len(cfg.gateway_ids)))
    train, test = split_train_test(ds, params.train_fraction, cfg.seed, stratified=True)
    kernel = KernelSpec(params.kernel, params.gamma if params.kernel == "rbf" else None)
    model = fit_svm(train.X, train.labels, kernel, params.C, params.tol, params.max_passes, cfg.seed)
    classes = sorted(ds.class_counts)
    return evaluate(test.labels, model.predict_many(test.X), classes), model


def position_study(cfg_template: ScenarioConfig, candidates: Mapping[str, tuple],
                   params: PipelineParams = PipelineParams()) -> list[StudyRow]:
    """Macro accuracy of the full pipeline for each candidate node position.

    All candidates share ``cfg_template.seed``; rows come back sorted by id.
    """
    if len(candidates) < 2:
        raise DomainError("position study needs at least two candidate positions")
    rows = []
    for pid in sorted(candidates):
        pos = tuple(float(c) for c in candidates[pid])
        if len(pos) == 2:
            pos = (*pos, cfg_template.node_position[2])
        report, _ = run_pipeline(cfg_template.replace(node_position=pos), params)
        rows.append(StudyRow(pid, pos[0], pos[1], report.macro["accuracy"]))
    return rows


def write_study(rows: Sequence[StudyRow]) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STUDY_COLUMNS)
    for r in rows:
        w.writerow([r.position_id, repr(r.x_m), repr(r.y_m), repr(float(r.accuracy_macro))])
    return buf.getvalue()


def parse_positions(text: str) -> dict:
    """``id:x,y[,z];id:x,y[,z]`` -> mapping."""
    out = {}
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        pid, _, coords = chunk.partition(":")
        vals = tuple(float(v) for v in coords.split(","))
        if not pid or len(vals) not in (2, 3) or not all(math.isfinite(v) for v in vals):
            raise DomainError(f"bad position spec {chunk!r}")
        out[pid.strip()] = vals
    return out
