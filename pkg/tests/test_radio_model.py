import math

import pytest
from hypothesis import given, strategies as st

from lorasense.errors import ConfigError, DomainError, InvalidMeasurementError
from lorasense.radio_model import (
    RadioParams, RssiRecord, ScenarioConfig, coverage_fraction, effective_beta,
    expected_path_loss, format_config, gateway_distances, parse_config,
    path_loss_from_measurement, path_loss_residual, simulate_scenario,
)

finite = st.floats(-200, 200, allow_nan=False)


def rec(rssi, snr=0.0):
    return RssiRecord(0.0, "n", "g", rssi, snr)


@pytest.mark.parametrize("mode,expected", [("paper", -77.0), ("physical", 116.0)])
def test_path_loss_from_measurement_examples(mode, expected):
    assert path_loss_from_measurement(rec(-100, 7), RadioParams(14, 2), mode) == expected


@pytest.mark.parametrize("mode", ["paper", "physical"])
def test_path_loss_zero_case(mode):
    assert path_loss_from_measurement(rec(0, 0), RadioParams(0, 0), mode) == 0


def test_default_mode_is_physical():
    assert path_loss_from_measurement(rec(-100, 7), RadioParams(14, 2)) == 116.0


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_measurement_rejected(bad):
    with pytest.raises(InvalidMeasurementError):
        path_loss_from_measurement(rec(bad), RadioParams())
    with pytest.raises(InvalidMeasurementError):
        path_loss_residual(bad, 1.0)


@given(finite, finite, finite, finite)
def test_physical_identity(rssi, snr, ptx, gtx):
    pl = path_loss_from_measurement(rec(rssi, snr), RadioParams(ptx, gtx))
    assert pl + rssi == pytest.approx(ptx + gtx, abs=1e-9)


@pytest.mark.parametrize("d,n,shadow,expected", [
    (1.0, 2.7, 0.0, 40.0),
    (100.0, 2.7, 0.0, 94.0),
    (10.0, 2.0, 1.5, 61.5),
])
def test_expected_path_loss_examples(d, n, shadow, expected):
    p = RadioParams(pl_d0_db=40.0, n_exponent=n, d0_m=1.0)
    assert expected_path_loss(d, p, shadow) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("d", [0.0, -1.0, math.nan])
def test_expected_path_loss_domain(d):
    with pytest.raises(DomainError):
        expected_path_loss(d, RadioParams())


@given(st.floats(0.01, 1e5), st.floats(0.01, 1e5), st.floats(0.1, 6))
def test_expected_path_loss_strictly_increasing(d1, d2, n):
    p = RadioParams(n_exponent=n)
    if d1 < d2 and d2 / d1 > 1 + 1e-9:
        assert expected_path_loss(d1, p) < expected_path_loss(d2, p)


@given(st.floats(0.1, 100), st.floats(0, 200))
def test_expected_path_loss_at_reference(d0, pl0):
    assert expected_path_loss(d0, RadioParams(pl_d0_db=pl0, d0_m=d0)) == pl0


@pytest.mark.parametrize("args,expected", [((94, 94), 0), ((96.3, 94.0), 2.3), ((90, 94), -4)])
def test_residual(args, expected):
    assert path_loss_residual(*args) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("kw", [
    dict(d0_m=0.0), dict(sigma_db=-0.1), dict(n_exponent=0.0),
])
def test_radio_params_invariants(kw):
    with pytest.raises(ConfigError):
        RadioParams(**kw)


@pytest.mark.parametrize("kw", [
    dict(capacity=0), dict(tx_interval_s=0), dict(gateway_positions=()),
    dict(beta_db_per_car=-1), dict(node_position=(0, 0, -1)),
    dict(gateway_positions=((0, 0, -3),)),
    dict(occupancy_process="schedule"),
    dict(occupancy_process="schedule", occupancy_schedule=((0, 60),)),
])
def test_scenario_invariants(kw):
    with pytest.raises(ConfigError):
        ScenarioConfig(**kw)


def _static(**kw):
    base = dict(radio=RadioParams(sigma_db=0.0), occupancy_process="schedule",
                occupancy_schedule=((0.0, 0),), duration_s=10 * 60.0)
    base.update(kw)
    return ScenarioConfig(**base)


def test_noiseless_static_channel():
    cfg = _static(beta_db_per_car=0.0)
    d = gateway_distances(cfg)
    by_gw = {}
    for r in simulate_scenario(cfg):
        by_gw.setdefault(r.gateway_id, set()).add(r.rssi_dbm)
    for g, gid in enumerate(cfg.gateway_ids):
        expected = cfg.radio.ptx_dbm + cfg.radio.gtx_dbi - expected_path_loss(d[g], cfg.radio)
        assert len(by_gw[gid]) == 1
        assert by_gw[gid].pop() == pytest.approx(expected, abs=1e-12)


def test_occupancy_jump_drops_rssi_by_beta_times_count():
    cfg = _static(occupancy_schedule=((0.0, 0), (300.0, 50)))
    recs = list(simulate_scenario(cfg))
    n_gw = len(cfg.gateway_ids)
    before, after = recs[4 * n_gw:5 * n_gw], recs[5 * n_gw:6 * n_gw]
    assert [r.occupancy for r in before] == [0] * n_gw
    assert [r.occupancy for r in after] == [50] * n_gw
    for a, b in zip(before, after):
        assert a.rssi_dbm - b.rssi_dbm == pytest.approx(10.0, abs=1e-9)


def test_residual_equals_occupancy_attenuation_without_noise():
    cfg = ScenarioConfig(radio=RadioParams(sigma_db=0.0), duration_s=200 * 60.0)
    d = dict(zip(cfg.gateway_ids, gateway_distances(cfg)))
    for r in simulate_scenario(cfg):
        measured = path_loss_from_measurement(r, cfg.radio)
        resid = path_loss_residual(measured, expected_path_loss(d[r.gateway_id], cfg.radio))
        assert resid == pytest.approx(cfg.beta_db_per_car * r.occupancy, abs=1e-9)


def test_default_corpus_size_and_order():
    cfg = ScenarioConfig()
    assert cfg.n_uplinks == 7000
    recs = list(simulate_scenario(cfg))
    assert len(recs) == 7000 * 3
    for k in range(0, len(recs), 3):
        group = recs[k:k + 3]
        assert [r.gateway_id for r in group] == ["gw1", "gw2", "gw3"]
        assert len({r.timestamp_s for r in group}) == 1
        assert all(0 <= r.occupancy <= cfg.capacity for r in group)
        assert all((r.sf, r.bw_khz, r.cr, r.freq_mhz) == (7, 125.0, "4/5", 868.0) for r in group)


def test_one_uplink_when_duration_equals_interval():
    cfg = ScenarioConfig(duration_s=60.0, tx_interval_s=60.0)
    assert len(list(simulate_scenario(cfg))) == len(cfg.gateway_ids)


def test_simulation_is_deterministic():
    cfg = ScenarioConfig(duration_s=500 * 60.0)
    a = list(simulate_scenario(cfg))
    b = list(simulate_scenario(cfg))
    assert a == b
    c = list(simulate_scenario(cfg.replace(seed=cfg.seed + 1)))
    assert a != c


def test_shadow_fading_monte_carlo_mean():
    sigma, n = 2.0, 12_000
    cfg = ScenarioConfig(radio=RadioParams(sigma_db=sigma), beta_db_per_car=0.0,
                         duration_s=n * 60.0, seed=7)
    noiseless = {g: cfg.radio.ptx_dbm + cfg.radio.gtx_dbi - expected_path_loss(d, cfg.radio)
                 for g, d in zip(cfg.gateway_ids, gateway_distances(cfg))}
    sums = dict.fromkeys(noiseless, 0.0)
    for r in simulate_scenario(cfg):
        sums[r.gateway_id] += r.rssi_dbm
    for g, s in sums.items():
        assert abs(s / n - noiseless[g]) <= 3 * sigma / math.sqrt(n)


def test_distances_are_3d():
    cfg = ScenarioConfig(gateway_positions=((3.0, 4.0, 12.0),), node_position=(0.0, 0.0, 0.0))
    assert gateway_distances(cfg)[0] == pytest.approx(13.0)


def test_coverage_fraction_and_position_scaling():
    cfg = ScenarioConfig()
    # full disc inside a large lot
    big = ScenarioConfig(lot_length_m=1000, lot_width_m=1000, node_position=(500, 500, 3))
    assert coverage_fraction(big) == pytest.approx(math.pi * 400 / 1e6, rel=1e-5)
    # node on the short edge midpoint covers exactly half the centred disc
    assert effective_beta(cfg) == cfg.beta_db_per_car
    edge = cfg.replace(node_position=(0.0, 17.5, 3.0))
    assert effective_beta(edge) == pytest.approx(0.5 * cfg.beta_db_per_car, rel=1e-5)
    assert effective_beta(edge.replace(beta_position_scaling=False)) == cfg.beta_db_per_car


def test_config_round_trip():
    cfg = ScenarioConfig(seed=9, beta_db_per_car=0.3, occupancy_process="schedule",
                         occupancy_schedule=((0.0, 3), (600.0, 40)),
                         radio=RadioParams(sigma_db=1.25))
    assert parse_config(format_config(cfg)) == cfg


def test_config_parse_errors():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("nonsense = 1\n")
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("seed = 1\ncapacity = many\n")
    with pytest.raises(ConfigError):
        parse_config("capacity = 0\n")


def test_config_comments_and_radio_keys():
    cfg = parse_config("# demo\nsigma_db = 0   # quiet\nduration_s = 120\n"
                       "gateway_positions = 0,0,30; 10,0,30\n")
    assert cfg.radio.sigma_db == 0.0
    assert cfg.n_uplinks == 2
    assert cfg.gateway_ids == ("gw1", "gw2")


def test_many_gateway_ids_sort_numerically():
    cfg = ScenarioConfig(gateway_positions=tuple((float(i), 0.0, 30.0) for i in range(12)))
    ids = cfg.gateway_ids
    assert list(ids) == sorted(ids)
    assert ids[0] == "gw01" and ids[-1] == "gw12"
