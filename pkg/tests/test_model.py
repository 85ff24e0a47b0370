import datetime as dt
import math

import numpy as np
import pytest

from crowdexpress.model import (
    DataError,
    Edge,
    GeoPoint,
    PackageJob,
    PackageRequest,
    TimeSlotScheme,
    TrajectoryRecord,
    TransportNetwork,
    TravelTimePMF,
    deadline,
    discretize,
    haversine_m,
    slot_of,
)

import netlib

R = 6_371_008.8


def utc(*args) -> float:
    return dt.datetime(*args, tzinfo=dt.timezone.utc).timestamp()


def cosine_law_distance(a: GeoPoint, b: GeoPoint) -> float:
    # independent route: spherical law of cosines
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dl = math.radians(b.lon - a.lon)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return R * math.acos(max(-1.0, min(1.0, c)))


def test_one_degree_of_meridian():
    assert haversine_m(GeoPoint(0, 0), GeoPoint(1, 0)) == pytest.approx(R * math.pi / 180, rel=1e-12)


@pytest.mark.parametrize("a,b", [
    ((40.7128, -74.0060), (40.7580, -73.9855)),
    ((40.6413, -73.7781), (33.9416, -118.4085)),
    ((51.5, -0.12), (-33.86, 151.2)),
])
def test_haversine_matches_cosine_law(a, b):
    pa, pb = GeoPoint(*a), GeoPoint(*b)
    assert haversine_m(pa, pb) == pytest.approx(cosine_law_distance(pa, pb), rel=1e-9)
    assert haversine_m(pa, pb) == pytest.approx(haversine_m(pb, pa), rel=1e-15)


def test_geopoint_rejects_out_of_range():
    with pytest.raises(ValueError):
        GeoPoint(91, 0)
    with pytest.raises(ValueError):
        GeoPoint(0, -181)


def test_trajectory_must_move_forward_in_time():
    p = GeoPoint(40.7, -74.0)
    with pytest.raises(ValueError):
        TrajectoryRecord("t", p, p, 100.0, 100.0)
    assert TrajectoryRecord("t", p, p, 100.0, 160.0).travel_time == 60.0


# 2013-01-07 is a Monday, 2013-01-12 a Saturday
@pytest.mark.parametrize("when,slot", [
    (utc(2013, 1, 7, 6, 59, 59), 2),
    (utc(2013, 1, 7, 7, 0, 0), 0),
    (utc(2013, 1, 7, 9, 59, 59), 0),
    (utc(2013, 1, 7, 10, 0, 0), 1),
    (utc(2013, 1, 7, 17, 0, 0), 2),
    (utc(2013, 1, 7, 23, 59, 59), 2),
    (utc(2013, 1, 12, 0, 0, 0), 3),
    (utc(2013, 1, 12, 7, 59, 59), 3),
    (utc(2013, 1, 12, 8, 0, 0), 4),
])
def test_slot_boundaries(when, slot):
    assert slot_of(when, TimeSlotScheme()) == slot


def test_slot_uses_local_time():
    # 12:00 UTC is 07:00 at UTC-5
    scheme = TimeSlotScheme(utc_offset=-5 * 3600)
    assert slot_of(utc(2013, 1, 7, 12, 0, 0), scheme) == 0
    assert slot_of(utc(2013, 1, 7, 11, 59, 0), scheme) == 2


def test_custom_calendar_turns_a_monday_into_a_rest_day():
    holiday = dt.date(2013, 1, 21)
    cal = lambda d: d.weekday() < 5 and d != holiday
    assert slot_of(utc(2013, 1, 21, 12, 0, 0), TimeSlotScheme(), cal) == 4


def test_slot_lengths_cover_each_day():
    s = TimeSlotScheme()
    assert [s.slot_length(i) for i in range(5)] == [3 * 3600, 7 * 3600, 14 * 3600, 8 * 3600, 16 * 3600]
    assert sum(s.slot_length(i) for i in range(3)) == 86_400
    assert sum(s.slot_length(i) for i in range(3, 5)) == 86_400


def test_scheme_validation():
    with pytest.raises(ValueError):
        TimeSlotScheme(workday_boundaries=(10 * 3600, 7 * 3600, 17 * 3600))
    with pytest.raises(ValueError):
        TimeSlotScheme(restday_boundaries=(0,))
    s = TimeSlotScheme(utc_offset=3600)
    assert TimeSlotScheme.from_dict(s.to_dict()) == s


def test_discretize_is_ceiling():
    assert discretize([1, 299, 300, 301, 600, 601], 300.0).tolist() == [1, 1, 1, 2, 2, 3]


def test_pmf_from_samples():
    pmf = TravelTimePMF.from_samples([100, 200, 350, 900], 300.0)
    assert pmf.mass == {1: 0.5, 2: 0.25, 3: 0.25}
    assert pmf.sample_count == 4
    assert pmf.cdf(599) == 0.5
    assert pmf.cdf(600) == 0.75
    assert pmf.dense(5).tolist() == [0.0, 0.5, 0.25, 0.25, 0.0]


def test_pmf_must_sum_to_one():
    with pytest.raises(ValueError):
        TravelTimePMF(300.0, {1: 0.5, 2: 0.4})
    with pytest.raises(ValueError):
        TravelTimePMF(300.0, {0: 1.0})


def test_deadline_adds_extra_time():
    assert deadline(1800.0, 3600.0) == 5400.0
    with pytest.raises(ValueError):
        deadline(1800.0, -1.0)


def test_package_request_and_job():
    with pytest.raises(ValueError):
        PackageRequest(3, 3, 0.0, 60.0, 100.0)
    req = PackageRequest(0, 5, 1000.0, 3600.0, 5000.0)
    job = PackageJob.new(req)
    assert req.due == 6000.0
    assert job.current_station == 0 and job.arrival_time_at_current == 1000.0
    assert job.remaining(2000.0) == 4000.0


def test_network_rejects_self_loops_and_unknown_stations():
    es = netlib.edge_slot({1: 1.0})
    with pytest.raises(ValueError):
        Edge(1, 1, {0: es})
    with pytest.raises(ValueError):
        TransportNetwork(netlib.stations(2), [Edge(0, 5, {0: es})])


def test_network_queries():
    net = netlib.fig2_network()
    assert net.neighbors(0, 0) == [1, 2, 3, 4]
    assert net.neighbors(0, 1) == []
    assert net.edge_slot(0, 1, 0).pmf.mass == {1: 0.3, 2: 0.7}
    assert net.edge_slot(1, 0, 0) is None
    arr = net.slot_arrays(0)
    assert arr.exists.sum() == len(netlib.FIG2_EDGES)
    assert np.allclose(arr.pmf.sum(axis=2)[arr.exists], 1.0)


def test_network_document_round_trip():
    net = netlib.random_network(np.random.default_rng(5))
    doc = net.to_dict()
    back = TransportNetwork.from_dict(doc)
    assert back.to_dict() == doc


def test_network_document_errors():
    doc = netlib.fig2_network().to_dict()
    with pytest.raises(DataError):
        TransportNetwork.from_dict({**doc, "version": 99})
    with pytest.raises(DataError):
        TransportNetwork.from_dict({**doc, "format": "other"})
    broken = {**doc, "edges": [{"from": 0, "to": 1}]}
    with pytest.raises(DataError):
        TransportNetwork.from_dict(broken)
