import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgeidle.core import DUMP_TRUCK, EXCAVATOR, BBox, bbox_iou
from edgeidle.errors import ConfigError
from edgeidle.idle import IdleState
from edgeidle.simulator import (
    GroundTruth,
    GroundTruthObject,
    Linear,
    MachineSpec,
    MotionScript,
    NoiseSpec,
    ScenarioSpec,
    Segment,
    Stationary,
    StopGo,
    generate,
    oracle_idle_labels,
    oracle_label_span,
    random_scenario,
)


def scenario(*machines, frames=60, noise=None, seed=0, size=(1280.0, 720.0)):
    return ScenarioSpec(frames, size, 10.0, tuple(machines), noise or NoiseSpec(), seed)


def parked(x=100.0, y=100.0, cls=EXCAVATOR, **kw):
    return MachineSpec(cls, BBox(x, y, 200, 150), MotionScript((Segment(1000, Stationary()),)), **kw)


def driving(vx=5.0, x=100.0, y=400.0, duration=1000):
    return MachineSpec(DUMP_TRUCK, BBox(x, y, 240, 160), MotionScript((Segment(duration, Linear(vx)),)))


def test_noise_free_stationary_machine():
    dets, gt = generate(scenario(parked()))
    assert len(dets) == 60
    assert all(d.bbox == BBox(100, 100, 200, 150) and d.confidence == 0.9 for d in dets)
    assert gt.frame_count == 60 and gt.entity_ids() == [1]


def test_linear_motion_moves_each_frame():
    dets, _ = generate(scenario(driving(vx=5.0)))
    assert [d.bbox.x for d in dets[:4]] == [100.0, 105.0, 110.0, 115.0]


def test_stop_go_moves_during_duty_part_of_each_period():
    mode = StopGo(period=4, duty=0.5, vx=2.0)
    assert mode.moving_frames == 2
    m = MachineSpec(EXCAVATOR, BBox(0, 0, 100, 100), MotionScript((Segment(100, mode),)))
    dets, _ = generate(scenario(m, frames=9))
    assert [d.bbox.x for d in dets] == [0, 2, 2, 2, 4, 6, 6, 6, 8]


def test_machine_stands_still_after_its_script():
    m = MachineSpec(EXCAVATOR, BBox(0, 0, 100, 100), MotionScript((Segment(3, Linear(1.0)),)))
    dets, _ = generate(scenario(m, frames=6))
    assert [d.bbox.x for d in dets] == [0, 1, 2, 2, 2, 2]


def test_occlusion_interval_is_half_open():
    dets, gt = generate(scenario(parked(occlusions=((10, 20),)), frames=30))
    frames = {d.frame_index for d in dets}
    assert frames == set(range(10)) | set(range(20, 30))
    assert [o.visible for objs in gt.frames for o in objs] == [not (10 <= t < 20) for t in range(30)]


def test_leaving_the_frame_is_clipped_and_flagged():
    dets, gt = generate(scenario(driving(vx=50.0, x=1000.0), frames=20))
    for d in dets:
        assert d.bbox.inside(1280, 720)
    flags = [objs[0] for objs in gt.frames]
    assert flags[0].clipped is False
    assert flags[5].clipped is True and flags[5].visible is True
    assert flags[-1].bbox is None and flags[-1].visible is False


def test_same_seed_same_output_and_noise_is_independent_of_motion():
    working = MachineSpec(EXCAVATOR, BBox(300, 200, 200, 150), MotionScript((Segment(100, Stationary(2.0)),)))
    noisy = NoiseSpec(miss_prob=0.2, bbox_jitter_std=2.0, confidence_std=0.05, false_positive_rate=0.5)
    a = generate(scenario(working, noise=noisy, seed=42))
    b = generate(scenario(working, noise=noisy, seed=42))
    assert a == b
    clean = generate(scenario(working, seed=42))
    assert clean[1] == a[1]
    assert generate(scenario(working, seed=43))[1] != a[1]


def test_miss_probability_and_clutter():
    dets, _ = generate(scenario(parked(), noise=NoiseSpec(miss_prob=1.0)))
    assert dets == []
    dets, _ = generate(scenario(parked(), noise=NoiseSpec(false_positive_rate=3.0), frames=100))
    clutter = [d for d in dets if d.bbox != BBox(100, 100, 200, 150)]
    assert 200 < len(clutter) < 400
    assert all(d.bbox.inside(1280, 720) for d in clutter)


def test_invalid_scenarios_name_the_field():
    bad = MachineSpec(EXCAVATOR, BBox(0, 0, 10, 10), MotionScript((Segment(0, Stationary()),)))
    with pytest.raises(ConfigError) as e:
        scenario(bad).validate()
    assert e.value.field == "machines[0].script[0].duration"
    with pytest.raises(ConfigError):
        scenario(parked(), noise=NoiseSpec(miss_prob=1.5)).validate()
    with pytest.raises(ConfigError):
        scenario(MachineSpec(EXCAVATOR, BBox(1270, 0, 100, 10), MotionScript())).validate()
    with pytest.raises(ConfigError):
        ScenarioSpec(0, (10, 10), 10.0, ()).validate()


def test_oracle_windows_follow_true_motion():
    _, gt = generate(scenario(parked(), driving(vx=5.0), frames=45))
    labels = oracle_idle_labels(gt, 15)
    assert [(w.entity_id, w.first_frame, w.last_frame, w.label) for w in labels] == [
        (1, 0, 14, IdleState.IDLE), (1, 15, 29, IdleState.IDLE), (1, 30, 44, IdleState.IDLE),
        (2, 0, 14, IdleState.ACTIVE), (2, 15, 29, IdleState.ACTIVE), (2, 30, 44, IdleState.ACTIVE),
    ]


def test_oracle_windows_skip_hidden_frames():
    _, gt = generate(scenario(parked(occlusions=((5, 12),)), frames=40))
    labels = oracle_idle_labels(gt, 15)
    # 33 visible frames -> two windows, the first spanning the gap
    assert [(w.first_frame, w.last_frame) for w in labels] == [(0, 21), (22, 36)]


def test_oracle_span_threshold():
    slow = MachineSpec(EXCAVATOR, BBox(0, 0, 100, 100), MotionScript((Segment(100, Linear(0.4)),)))
    fast = MachineSpec(EXCAVATOR, BBox(0, 300, 100, 100), MotionScript((Segment(100, Linear(0.6)),)))
    _, gt = generate(scenario(slow, fast, frames=20))
    assert oracle_label_span(gt, 1, 0, 19) is IdleState.IDLE
    assert oracle_label_span(gt, 2, 0, 19) is IdleState.ACTIVE
    assert oracle_label_span(gt, 1, 5, 5) is None


def test_oracle_rejects_tiny_buffers():
    gt = GroundTruth(10.0, (100, 100), [[GroundTruthObject(1, EXCAVATOR, BBox(0, 0, 1, 1), True)]])
    with pytest.raises(ConfigError):
        oracle_idle_labels(gt, 1)


@settings(max_examples=25)
@given(st.integers(0, 2**32))
def test_random_scenarios_never_overlap(seed):
    spec = random_scenario(seed)
    assert 2 <= len(spec.machines) <= 6
    spec.validate()
    _, gt = generate(spec)
    for objs in gt.frames:
        boxes = [o.bbox for o in objs if o.bbox is not None]
        for a, b in itertools.combinations(boxes, 2):
            assert bbox_iou(a, b) == 0.0
        assert all(not o.clipped for o in objs)


@pytest.mark.parametrize("miss_prob", [0.05, 0.3])
def test_empirical_miss_rate_matches_miss_prob(miss_prob):
    trials = detected = 0
    for seed in range(40):
        dets, gt = generate(scenario(parked(), parked(x=700.0), frames=100, noise=NoiseSpec(miss_prob=miss_prob),
                                     seed=seed))
        trials += sum(o.visible for objs in gt.frames for o in objs)
        detected += len(dets)
    rate = 1.0 - detected / trials
    stderr = math.sqrt(miss_prob * (1.0 - miss_prob) / trials)
    assert trials == 40 * 2 * 100
    assert abs(rate - miss_prob) <= 3 * stderr
