import datetime as dt
from fractions import Fraction
import logging

import pytest
from hypothesis import given, strategies as st

from bikelane.ingest import (
    ParseError, StockObservation, decensor, detect_stockouts, geohash_encode, grid_network, parse_network,
    parse_stock, parse_trajectories, synth_instance, trip_cell, write_network, write_trajectories,
)
from bikelane.model import Trajectory, ValidationError, validate_trajectory

B32 = "0123456789bcdefghjkmnpqrstuvwxyz"


def ref_geohash(lon, lat, precision):
    """Interleave fixed-point quantized coordinates instead of bisecting intervals."""
    nbits = 5 * precision
    lon_bits = (nbits + 1) // 2
    lat_bits = nbits // 2
    qlon = min(int((Fraction(lon) + 180) / 360 * (1 << lon_bits)), (1 << lon_bits) - 1)
    qlat = min(int((Fraction(lat) + 90) / 180 * (1 << lat_bits)), (1 << lat_bits) - 1)
    code = 0
    for k in range(nbits):
        if k % 2 == 0:
            bit = (qlon >> (lon_bits - 1 - k // 2)) & 1
        else:
            bit = (qlat >> (lat_bits - 1 - k // 2)) & 1
        code = code * 2 + bit
    return "".join(B32[(code >> (5 * (precision - 1 - i))) & 31] for i in range(precision))


def test_geohash_known_points():
    assert geohash_encode(10.40744, 57.64911, 7) == "u4pruyd"
    assert geohash_encode(0, 0, 1) == "s"
    assert ref_geohash(10.40744, 57.64911, 7) == "u4pruyd"


def test_geohash_errors():
    with pytest.raises(ValueError):
        geohash_encode(0, 0, 0)
    with pytest.raises(ValueError):
        geohash_encode(181, 0)
    with pytest.raises(ValueError):
        geohash_encode(0, -91)


@given(st.floats(-179.99, 179.99), st.floats(-89.99, 89.99), st.integers(1, 9))
def test_geohash_matches_reference(lon, lat, p):
    assert geohash_encode(lon, lat, p) == ref_geohash(lon, lat, p)


@given(st.floats(-180, 180), st.floats(-90, 90))
def test_geohash_prefix_stable(lon, lat):
    assert geohash_encode(lon, lat, 7).startswith(geohash_encode(lon, lat, 5))


def test_parse_trajectories(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("t1,2017-03-05T08:00:00,113.5,22.2,[s1 s2 s3]\n# comment\n\nt2,2017-03-05T09:10:00,113.6,22.3,[s3]\n")
    ts = parse_trajectories(p)
    assert [t.segments for t in ts] == [("s1", "s2", "s3"), ("s3",)]
    assert ts[0].weight == 1.0 and ts[0].origin == (113.5, 22.2)
    assert ts[0].start_time == dt.datetime(2017, 3, 5, 8)
    assert ts[1].trip_id == "t2"


def test_parse_trajectories_empty_file(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("")
    assert parse_trajectories(p) == []


@pytest.mark.parametrize("line", [
    "t1,2017-03-05T08:00:00,113.5,22.2,[]",
    "t1,2017-03-05T08:00:00,113.5,22.2,s1 s2",
    "t1,notatime,113.5,22.2,[s1]",
    "t1,2017-03-05T08:00:00,113.5,[s1]",
    "t1,2017-03-05T08:00:00,113.5,22.2,[s1 s1]",
    "t1,2017-03-05T08:00:00,113.5,22.2,[s1] junk",
])
def test_parse_trajectories_errors_carry_line_number(tmp_path, line):
    p = tmp_path / "t.txt"
    p.write_text("t0,2017-03-05T08:00:00,113.5,22.2,[s1]\n" + line + "\n")
    with pytest.raises(ParseError, match=":2:"):
        parse_trajectories(p)


def test_trajectory_round_trip_keeps_weight(tmp_path):
    ts = [Trajectory(("a", "b"), 1.0, "x", dt.datetime(2020, 1, 1, 7, 5), (1.5, 2.5)),
          Trajectory(("c",), 0.1, "y", dt.datetime(2020, 1, 2, 0, 0), (-3.0, 4.0))]
    p = tmp_path / "t.txt"
    write_trajectories(ts, p)
    back = parse_trajectories(p)
    assert [(t.segments, t.weight, t.trip_id, t.start_time, t.origin) for t in back] == \
        [(t.segments, t.weight, t.trip_id, t.start_time, t.origin) for t in ts]


def test_network_round_trip(tmp_path):
    net, _ = grid_network(3, 3)
    p = tmp_path / "n.txt"
    write_network(net, p)
    back = parse_network(p)
    assert back.ids == net.ids
    assert [(s.length_m, s.cost, s.geometry) for s in back.segments] == \
        [(s.length_m, s.cost, s.geometry) for s in net.segments]
    assert set(back.neighbors) == set(net.neighbors)


def test_network_default_cost(tmp_path):
    p = tmp_path / "n.txt"
    p.write_text("a,100,,\nb,50,7\nNEIGHBORS\na,b\n")
    net = parse_network(p, unit_cost=2.0)
    assert net.cost("a") == 200.0 and net.cost("b") == 7.0
    assert net.are_neighbors("b", "a")


def test_network_bad_line(tmp_path):
    p = tmp_path / "n.txt"
    p.write_text("a,100\n")
    with pytest.raises(ParseError, match=":1:"):
        parse_network(p)


def test_parse_stock_duplicates_and_range(tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("abcdefg,2020-01-01,3,2\nabcdefg,2020-01-01,3,1\n")
    with pytest.raises(ParseError, match="duplicate"):
        parse_stock(p)
    p.write_text("abcdefg,2020-01-01,144,2\n")
    with pytest.raises(ParseError):
        parse_stock(p)
    p.write_text("abcdefg,2020-01-01,143,0\n")
    assert parse_stock(p)[0] == StockObservation("abcdefg", 143, dt.date(2020, 1, 1), 0)


D0 = dt.date(2020, 1, 1)


def test_detect_stockouts_threshold():
    obs = [StockObservation("n", p, D0, a) for p, a in enumerate([3, 1, 0, 2])]
    assert detect_stockouts(obs, 0, periods=range(4)) == {("n", 2, D0)}
    assert detect_stockouts(obs, 1, periods=range(4)) == {("n", 1, D0), ("n", 2, D0)}


def test_detect_stockouts_missing_is_flagged():
    obs = [StockObservation("n", 0, D0, 5)]
    assert ("n", 1, D0) in detect_stockouts(obs, 0, periods=range(2))
    assert detect_stockouts(obs, 0, periods=range(2), lenient=True) == set()


def _fixture(stockout_days_by_period, horizon=14, lon=113.5, lat=22.2):
    hood = geohash_encode(lon, lat)
    days = [D0 + dt.timedelta(days=k) for k in range(horizon)]
    obs = []
    for period, bad in stockout_days_by_period.items():
        for k, d in enumerate(days):
            obs.append(StockObservation(hood, period, d, 0 if k < bad else 4))
    return hood, days, obs


def _trip(tid, period, lon=113.5, lat=22.2):
    start = dt.datetime.combine(D0, dt.time()) + dt.timedelta(minutes=10 * period + 3)
    return Trajectory(("a",), 1.0, tid, start, (lon, lat))


def test_decensor_four_stockout_days():
    hood, days, obs = _fixture({48: 4})
    out, rep = decensor([_trip("x", 48)], obs, 14)
    assert out[0].weight == 1 / 10
    assert rep.stockout_days[(hood, 48)] == 4
    assert trip_cell(out[0]) == (hood, 48)


def test_decensor_uniform_and_dropped():
    hood, days, obs = _fixture({1: 0, 2: 14})
    trips = [_trip("a", 1), _trip("b", 1), _trip("c", 2)]
    out, rep = decensor(trips, obs, 14)
    assert [t.trip_id for t in out] == ["a", "b"]
    assert all(t.weight == 1 / 14 for t in out)
    assert sum(t.weight for t in out) == pytest.approx(2 / 14)
    assert rep.dropped == ["c"] and rep.weights[(hood, 2)] is None


def test_decensor_requires_metadata():
    with pytest.raises(ValidationError):
        decensor([Trajectory(("a",))], [], 14)


def test_decensor_missing_days_count_as_stockouts():
    hood, days, obs = _fixture({5: 0}, horizon=10)
    out, rep = decensor([_trip("a", 5)], obs, 14)
    assert out[0].weight == 1 / 10
    out, rep = decensor([_trip("a", 5)], obs, 14, lenient=True)
    assert out[0].weight == 1 / 14


@given(st.integers(0, 14), st.integers(0, 143))
def test_decensor_weight_formula(k, period):
    hood, days, obs = _fixture({period: k})
    out, rep = decensor([_trip("a", period)], obs, 14)
    if k == 14:
        assert out == [] and rep.dropped == ["a"]
    else:
        assert out[0].weight == 1 / (14 - k)
        # average demand on stocked-in days: one trip per served day sums back to one
        assert out[0].weight * (14 - k) == pytest.approx(1.0)


def test_synth_small_grid_counts():
    inst = synth_instance(1, 2, 2, 5)
    assert len(inst.network) == 4
    assert len(inst.network.neighbors) == 4


def test_synth_zero_trajectories_and_determinism():
    inst = synth_instance(3, 3, 4, 0)
    assert inst.trajectories == () or list(inst.trajectories) == []
    a, b = synth_instance(9, 4, 4, 50), synth_instance(9, 4, 4, 50)
    assert [t.segments for t in a.trajectories] == [t.segments for t in b.trajectories]
    assert a.budget == b.budget and a.network.ids == b.network.ids


@pytest.mark.parametrize("demand", ["walk", "hotspot"])
@given(seed=st.integers(0, 10_000))
def test_synth_trajectories_validate(demand, seed):
    inst = synth_instance(seed, 3, 4, 20, demand=demand)
    for t in inst.trajectories:
        validate_trajectory(inst.network, t)


def test_synth_truncation_warns(caplog):
    with caplog.at_level(logging.WARNING):
        synth_instance(0, 1, 3, 10, mean_length=50)
    assert "truncated" in caplog.text


def test_synth_unknown_demand():
    with pytest.raises(ValueError):
        synth_instance(0, 2, 2, 1, demand="gravity")
