import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgeidle.core import DUMP_TRUCK, EXCAVATOR
from edgeidle.errors import ConfigError, StreamOrderError, ValidationError
from edgeidle.tracker import TrackerConfig, TrackerStore, TrackState, tracker_step
from tests.factories import det


def ids(objs):
    return [int(o.track_id) for o in objs]


def test_first_frame_tracks_are_active(make_det):
    store = TrackerStore()
    out = tracker_step(store, [make_det(0, 10, 10), make_det(0, 500, 10)], 0)
    assert ids(out) == [1, 2]
    assert all(t.state == TrackState.ACTIVE for t in store.tracks)


def test_first_frame_can_start_tentative(make_det):
    store = TrackerStore(TrackerConfig(activate_first_frame=False))
    assert tracker_step(store, [make_det(0, 10, 10)], 0) == []
    assert store.tracks[0].state == TrackState.TENTATIVE
    out = store.step([make_det(1, 10, 10)], 1)
    assert ids(out) == [1]
    assert store.tracks[0].state == TrackState.ACTIVE


def test_late_tracks_confirm_on_second_hit(make_det):
    store = TrackerStore()
    store.step([make_det(0, 10, 10)], 0)
    assert ids(store.step([make_det(1, 10, 10), make_det(1, 600, 300)], 1)) == [1]
    assert ids(store.step([make_det(2, 10, 10), make_det(2, 600, 300)], 2)) == [1, 2]


def test_unconfirmed_track_is_dropped(make_det):
    store = TrackerStore()
    store.step([make_det(0, 10, 10)], 0)
    store.step([make_det(1, 10, 10), make_det(1, 600, 300)], 1)
    store.step([make_det(2, 10, 10)], 2)
    assert store.last_terminated == [2]
    store.step([make_det(3, 10, 10), make_det(3, 600, 300)], 3)
    assert ids(store.step([make_det(4, 10, 10), make_det(4, 600, 300)], 4)) == [1, 3]


def test_low_confidence_extends_but_never_starts(make_det):
    store = TrackerStore()
    assert store.step([make_det(0, 10, 10, conf=0.3), make_det(0, 600, 10, conf=0.55)], 0) == []
    assert store.tracks_created == 0

    store = TrackerStore()
    store.step([make_det(0, 10, 10)], 0)
    out = store.step([make_det(1, 11, 10, conf=0.3)], 1)
    assert ids(out) == [1]
    assert out[0].confidence == pytest.approx(0.3)


def test_below_low_thresh_and_tiny_boxes_are_ignored(make_det):
    store = TrackerStore()
    assert store.step([make_det(0, 10, 10, conf=0.05), make_det(0, 500, 10, w=2, h=2)], 0) == []


@pytest.mark.parametrize("gap, same_id", [(5, True), (30, True), (31, False), (45, False)])
def test_occlusion_recovery_depends_on_buffer(make_det, gap, same_id):
    store = TrackerStore(TrackerConfig(track_buffer=30))
    frame = 0
    for frame in range(10):
        store.step([make_det(frame, 400, 300)], frame)
    for frame in range(10, 10 + gap):
        assert store.step([], frame) == []
    frame = 10 + gap
    store.step([make_det(frame, 400, 300)], frame)
    out = store.step([make_det(frame + 1, 400, 300)], frame + 1)
    assert (ids(out) == [1]) is same_id


def test_lost_track_recovers_in_first_stage(make_det):
    store = TrackerStore()
    store.step([make_det(0, 400, 300)], 0)
    store.step([], 1)
    assert store.tracks[0].state == TrackState.LOST
    out = store.step([make_det(2, 400, 300)], 2)
    assert ids(out) == [1]


def test_class_gating(make_det):
    store = TrackerStore()
    store.step([make_det(0, 400, 300, cls=EXCAVATOR)], 0)
    out = store.step([make_det(1, 400, 300, cls=DUMP_TRUCK)], 1)
    assert out == []
    assert store.tracks_created == 2

    ungated = TrackerStore(TrackerConfig(class_gated=False))
    ungated.step([make_det(0, 400, 300, cls=EXCAVATOR)], 0)
    assert ids(ungated.step([make_det(1, 400, 300, cls=DUMP_TRUCK)], 1)) == [1]


def test_moving_box_keeps_identity(make_det):
    store = TrackerStore()
    for t in range(100):
        out = store.step([make_det(t, 100 + 5.0 * t, 200, w=240, h=160)], t)
        assert ids(out) == [1]
    assert out[0].bbox.x == pytest.approx(100 + 5.0 * 99, abs=1.0)


def test_frame_gaps_age_tracks(make_det):
    store = TrackerStore()
    store.step([make_det(0, 400, 300)], 0)
    store.step([], 5)
    assert store.tracks[0].frames_since_update == 5


def test_stream_order_and_frame_mismatch(make_det):
    store = TrackerStore()
    store.step([], 3)
    with pytest.raises(StreamOrderError):
        store.step([], 3)
    with pytest.raises(ValidationError):
        store.step([make_det(9, 0, 0)], 4)


def test_invalid_config_names_the_field():
    with pytest.raises(ConfigError) as e:
        TrackerConfig(low_thresh=0.7).validate()
    assert e.value.field == "tracker.low_thresh"


def test_state_round_trip_continues_identically(two_machines):
    frames = two_machines(40)
    a = TrackerStore()
    for t, dets in frames[:20]:
        a.step(dets, t)
    b = TrackerStore.from_state(a.state_dict())
    for t, dets in frames[20:]:
        assert a.step(dets, t) == b.step(dets, t)


@settings(max_examples=30)
@given(st.lists(st.sets(st.integers(0, 4), max_size=5), min_size=1, max_size=30))
def test_output_ids_unique_per_frame(presence):
    store = TrackerStore()
    for t, present in enumerate(presence):
        dets = [det(t, 350.0 * k, 100.0) for k in sorted(present)]
        out = ids(store.step(dets, t))
        assert len(out) == len(set(out))
        assert all(1 <= i <= store.tracks_created for i in out)


@settings(max_examples=40)
@given(st.lists(st.lists(st.floats(0.1, 0.499), max_size=4), min_size=1, max_size=20))
def test_low_confidence_alone_never_spawns(confidences):
    store = TrackerStore()
    for t, confs in enumerate(confidences):
        assert store.step([det(t, 300.0 * k, 100.0, conf=c) for k, c in enumerate(confs)], t) == []
    assert store.tracks_created == 0


@settings(max_examples=40)
@given(
    st.lists(st.sets(st.integers(0, 4), max_size=5), min_size=1, max_size=20),
    st.lists(st.sets(st.integers(0, 4), max_size=5), min_size=1, max_size=20),
)
def test_far_low_confidence_leaves_track_creation_unchanged(high, low):
    def run(with_low):
        store = TrackerStore()
        for t, present in enumerate(high):
            dets = [det(t, 350.0 * k, 100.0) for k in sorted(present)]
            if with_low and t < len(low):
                dets += [det(t, 350.0 * k, 600.0, conf=0.3) for k in sorted(low[t])]
            store.step(dets, t)
        return store.tracks_created

    assert run(True) == run(False)
