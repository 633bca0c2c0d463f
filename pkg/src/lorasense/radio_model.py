"""Link-budget path loss, log-distance expected path loss and the
occupancy-modulated channel simulator that produces labeled RSSI corpora."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .errors import ConfigError, DomainError, InvalidMeasurementError

THERMAL_NOISE_DBM_HZ = -174.0


@dataclass(frozen=True)
class RadioParams:
    ptx_dbm: float = 14.0
    gtx_dbi: float = 2.0
    pl_d0_db: float = 40.0
    n_exponent: float = 2.7
    d0_m: float = 1.0
    sigma_db: float = 0.5

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ConfigError(f"{f.name} must be finite")
        if self.d0_m <= 0:
            raise ConfigError("d0_m must be > 0")
        if self.sigma_db < 0:
            raise ConfigError("sigma_db must be >= 0")
        if self.n_exponent <= 0:
            raise ConfigError("n_exponent must be > 0")


@dataclass(frozen=True)
class RssiRecord:
    timestamp_s: float
    node_id: str
    gateway_id: str
    rssi_dbm: float
    snr_db: float
    sf: int = 7
    bw_khz: float = 125.0
    cr: str = "4/5"
    freq_mhz: float = 868.0
    occupancy: Optional[int] = None


def _check_finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise InvalidMeasurementError(f"{name} is not finite: {v!r}")


def path_loss_from_measurement(rec: RssiRecord, params: RadioParams, mode: str = "physical") -> float:
    """Path loss implied by one gateway measurement.

    ``physical`` gives the conventional positive loss ``Ptx + Gtx - RSSI``.
    ``paper`` sums ``RSSI + SNR + Ptx + Gtx`` literally, which comes out
    negative for any realistic link.
    """
    _check_finite(rssi_dbm=rec.rssi_dbm, snr_db=rec.snr_db,
                  ptx_dbm=params.ptx_dbm, gtx_dbi=params.gtx_dbi)
    if mode == "physical":
        return params.ptx_dbm + params.gtx_dbi - rec.rssi_dbm
    if mode == "paper":
        return rec.rssi_dbm + rec.snr_db + params.ptx_dbm + params.gtx_dbi
    raise DomainError(f"unknown mode {mode!r}")


def expected_path_loss(d_m: float, params: RadioParams, shadow_db: float = 0.0) -> float:
    """Log-distance path loss ``PL(d0) + 10 n log10(d/d0) + X`` in dB."""
    if not d_m > 0 or not math.isfinite(d_m):
        raise DomainError(f"distance must be a positive finite number, got {d_m!r}")
    return params.pl_d0_db + 10.0 * params.n_exponent * math.log10(d_m / params.d0_m) + shadow_db


def path_loss_residual(measured_pl: float, expected_pl: float) -> float:
    _check_finite(measured_pl=measured_pl, expected_pl=expected_pl)
    return measured_pl - expected_pl


# -- scenario ---------------------------------------------------------------

LOT_LENGTH_M = 100.0
LOT_WIDTH_M = 35.0


def default_gateway_positions(lot_length_m=LOT_LENGTH_M, lot_width_m=LOT_WIDTH_M):
    # towers at 300/500/800 m from the lot centre, spread 120 degrees apart
    cx, cy = lot_length_m / 2, lot_width_m / 2
    out = []
    for r, bearing, h in ((300.0, 0.0, 30.0), (500.0, 120.0, 32.0), (800.0, 240.0, 35.0)):
        t = math.radians(bearing)
        out.append((round(cx + r * math.cos(t), 6), round(cy + r * math.sin(t), 6), h))
    return tuple(out)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to regenerate a synthetic corpus bit for bit.

    The lot spans ``[0, lot_length_m] x [0, lot_width_m]`` at ground level.
    Occupancy follows either a mean-reverting random walk or a
    piecewise-constant ``occupancy_schedule`` of ``(start_s, count)`` pairs
    (offsets from ``start_time_s``).
    """
    lot_length_m: float = LOT_LENGTH_M
    lot_width_m: float = LOT_WIDTH_M
    capacity: int = 50
    gateway_positions: tuple = field(default_factory=default_gateway_positions)
    node_position: tuple = (LOT_LENGTH_M / 2, LOT_WIDTH_M / 2, 3.0)
    node_id: str = "node1"
    tx_interval_s: float = 60.0
    duration_s: float = 7000 * 60.0
    start_time_s: float = 1_654_041_600.0
    beta_db_per_car: float = 0.2
    beta_position_scaling: bool = True
    coverage_radius_m: float = 20.0
    radio: RadioParams = field(default_factory=RadioParams)
    sf: int = 7
    bw_khz: float = 125.0
    cr: str = "4/5"
    freq_mhz: float = 868.0
    noise_figure_db: float = 6.0
    seed: int = 42
    occupancy_process: str = "random_walk"
    occupancy_start: int = 25
    occupancy_mean: float = 25.0
    occupancy_reversion: float = 0.02
    occupancy_step_std: float = 1.5
    occupancy_schedule: tuple = ()

    def __post_init__(self):
        if self.capacity <= 0:
            raise ConfigError("capacity must be > 0")
        if not self.tx_interval_s > 0:
            raise ConfigError("tx_interval_s must be > 0")
        if self.duration_s < 0:
            raise ConfigError("duration_s must be >= 0")
        if not self.gateway_positions:
            raise ConfigError("at least one gateway is required")
        if self.beta_db_per_car < 0:
            raise ConfigError("beta_db_per_car must be >= 0")
        if self.lot_length_m <= 0 or self.lot_width_m <= 0:
            raise ConfigError("lot dimensions must be > 0")
        if self.coverage_radius_m <= 0:
            raise ConfigError("coverage_radius_m must be > 0")
        for p in (*self.gateway_positions, self.node_position):
            if len(p) != 3 or not all(math.isfinite(v) for v in p):
                raise ConfigError(f"position {p!r} must be three finite coordinates")
            if p[2] < 0:
                raise ConfigError(f"position {p!r} has negative height")
        if self.occupancy_process not in ("random_walk", "schedule"):
            raise ConfigError(f"unknown occupancy_process {self.occupancy_process!r}")
        if self.occupancy_process == "schedule":
            if not self.occupancy_schedule:
                raise ConfigError("schedule process needs occupancy_schedule")
            starts = [s for s, _ in self.occupancy_schedule]
            if starts != sorted(starts):
                raise ConfigError("occupancy_schedule must be sorted by start time")
            for _, c in self.occupancy_schedule:
                if not 0 <= c <= self.capacity:
                    raise ConfigError(f"schedule count {c} outside [0, capacity]")
        elif not 0 <= self.occupancy_start <= self.capacity:
            raise ConfigError("occupancy_start outside [0, capacity]")
        if self.occupancy_step_std < 0 or not 0 <= self.occupancy_reversion <= 1:
            raise ConfigError("random walk needs step_std >= 0 and reversion in [0, 1]")

    @property
    def gateway_ids(self):
        n = len(self.gateway_positions)
        width = len(str(n)) if n > 9 else 1
        return tuple(f"gw{i + 1:0{width}d}" for i in range(n))

    @property
    def n_uplinks(self):
        # uplinks at t = 0, T, 2T, ... strictly before duration_s
        return int(math.floor(self.duration_s / self.tx_interval_s + 1e-9))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def coverage_fraction(cfg: ScenarioConfig, xy=None, samples=4000) -> float:
    """Share of lot area within ``coverage_radius_m`` (horizontal) of ``xy``."""
    nx, ny = (cfg.node_position[:2] if xy is None else xy)
    R, L, W = cfg.coverage_radius_m, cfg.lot_length_m, cfg.lot_width_m
    lo, hi = max(0.0, nx - R), min(L, nx + R)
    if hi <= lo:
        return 0.0
    # midpoint rule over x of the clipped chord length
    dx = (hi - lo) / samples
    x = lo + dx * (np.arange(samples) + 0.5)
    h = np.sqrt(np.maximum(R * R - (x - nx) ** 2, 0.0))
    chord = np.clip(np.minimum(W, ny + h) - np.maximum(0.0, ny - h), 0.0, None)
    return float(chord.sum() * dx / (L * W))


def effective_beta(cfg: ScenarioConfig) -> float:
    """Per-car attenuation at the configured node position.

    With position scaling on, beta is multiplied by the node's coverage
    fraction relative to a node at the lot centre, so the centre sees the
    nominal value and edge positions see less.
    """
    if not cfg.beta_position_scaling:
        return cfg.beta_db_per_car
    centre = coverage_fraction(cfg, (cfg.lot_length_m / 2, cfg.lot_width_m / 2))
    return cfg.beta_db_per_car * (coverage_fraction(cfg) / centre)


def gateway_distances(cfg: ScenarioConfig) -> np.ndarray:
    node = np.asarray(cfg.node_position, dtype=float)
    gws = np.asarray(cfg.gateway_positions, dtype=float)
    return np.sqrt(((gws - node) ** 2).sum(axis=1))


def occupancy_series(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    n = cfg.n_uplinks
    if cfg.occupancy_process == "schedule":
        starts = np.array([s for s, _ in cfg.occupancy_schedule], dtype=float)
        counts = np.array([c for _, c in cfg.occupancy_schedule], dtype=np.int64)
        t = np.arange(n) * cfg.tx_interval_s
        idx = np.searchsorted(starts, t, side="right") - 1
        return counts[np.clip(idx, 0, None)]
    out = np.empty(n, dtype=np.int64)
    steps = rng.normal(0.0, cfg.occupancy_step_std, size=n)
    c = cfg.occupancy_start
    for i in range(n):
        if i:
            nxt = c + cfg.occupancy_reversion * (cfg.occupancy_mean - c) + steps[i]
            c = int(min(max(round(nxt), 0), cfg.capacity))
        out[i] = c
    return out


def simulate_scenario(cfg: ScenarioConfig) -> Iterator[RssiRecord]:
    """Yield one record per gateway per uplink, gateways in ascending id order.

    Occupancy and shadow fading use independent child streams of ``cfg.seed``
    so changing the radio parameters leaves the occupancy trace untouched.
    """
    occ_ss, fade_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    counts = occupancy_series(cfg, np.random.default_rng(occ_ss))
    fade = np.random.default_rng(fade_ss)
    radio = cfg.radio
    epl = [expected_path_loss(d, radio) for d in gateway_distances(cfg)]
    beta = effective_beta(cfg)
    noise_floor = THERMAL_NOISE_DBM_HZ + 10 * math.log10(cfg.bw_khz * 1e3) + cfg.noise_figure_db
    order = sorted(range(len(epl)), key=lambda g: cfg.gateway_ids[g])
    ids = cfg.gateway_ids
    for k in range(cfg.n_uplinks):
        t = cfg.start_time_s + k * cfg.tx_interval_s
        c = int(counts[k])
        shadow = fade.normal(0.0, radio.sigma_db, size=len(epl))
        for g in order:
            rssi = radio.ptx_dbm + radio.gtx_dbi - (epl[g] + beta * c + float(shadow[g]))
            yield RssiRecord(
                timestamp_s=t, node_id=cfg.node_id, gateway_id=ids[g],
                rssi_dbm=rssi, snr_db=rssi - noise_floor, sf=cfg.sf,
                bw_khz=cfg.bw_khz, cr=cfg.cr, freq_mhz=cfg.freq_mhz, occupancy=c,
            )


# -- configuration file -----------------------------------------------------

_RADIO_KEYS = {f.name for f in dataclasses.fields(RadioParams)}


def _parse_positions(text):
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if chunk:
            pts.append(tuple(float(v) for v in chunk.split(",")))
    return tuple(pts)


def _parse_schedule(text):
    out = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if chunk:
            s, c = chunk.split(":")
            out.append((float(s), int(c)))
    return tuple(out)


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config(text: str, base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    """Parse flat ``key = value`` lines (``#`` starts a comment).

    Keys are ScenarioConfig field names plus the RadioParams field names.
    Positions are ``x,y,z`` triples separated by ``;``; the schedule is
    ``start_s:count`` pairs separated by ``,``.
    """
    base = base or ScenarioConfig()
    fields = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    changes, radio_changes = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in _RADIO_KEYS:
                radio_changes[key] = float(value)
            elif key in ("gateway_positions",):
                changes[key] = _parse_positions(value)
            elif key == "node_position":
                (changes[key],) = _parse_positions(value)
            elif key == "occupancy_schedule":
                changes[key] = _parse_schedule(value)
            elif key in fields and key != "radio":
                kind = type(getattr(base, key))
                if kind is bool:
                    changes[key] = _parse_bool(value)
                elif kind is int:
                    changes[key] = int(value)
                elif kind is float:
                    changes[key] = float(value)
                else:
                    changes[key] = value
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    if radio_changes:
        changes["radio"] = dataclasses.replace(base.radio, **radio_changes)
    return dataclasses.replace(base, **changes)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(cfg: ScenarioConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "radio":
            lines += [f"{r.name} = {getattr(v, r.name)!r}" for r in dataclasses.fields(v)]
        elif f.name == "gateway_positions":
            lines.append(f"{f.name} = " + "; ".join(",".join(repr(float(c)) for c in p) for p in v))
        elif f.name == "node_position":
            lines.append(f"{f.name} = " + ",".join(repr(float(c)) for c in v))
        elif f.name == "occupancy_schedule":
            lines.append(f"{f.name} = " + ", ".join(f"{s!r}:{c}" for s, c in v))
        elif isinstance(v, bool):
            lines.append(f"{f.name} = {'true' if v else 'false'}")
        else:
            lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def lot_positions(cfg: ScenarioConfig, height_m: Optional[float] = None) -> dict:
    """Named node positions used by the position study."""
    h = cfg.node_position[2] if height_m is None else height_m
    return {
        "lot-center": (cfg.lot_length_m / 2, cfg.lot_width_m / 2, h),
        "lot-entrance": (0.0, cfg.lot_width_m / 2, h),
    }
