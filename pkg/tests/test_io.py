import io
import tracemalloc

import pytest
import yaml

from edgeidle.core import CEMENT_MIXER_TRUCK, DUMP_TRUCK, EXCAVATOR, BBox, Detection, TrackId
from edgeidle.errors import ConfigError, RangeError, RecordFormatError, SchemaVersionError, StreamOrderError
from edgeidle.idle import PUBLISHED_MODEL, IdleState, IdleVerdict, MadVariant, WindowFeatures
from edgeidle.io import (
    TrackRecord,
    TrackRowState,
    iter_frames,
    model_from_document,
    read_detections,
    read_ground_truth,
    read_labeled_windows,
    read_model,
    read_scenario,
    read_tracks,
    read_verdicts,
    scenario_from_document,
    write_detections,
    write_ground_truth,
    write_labeled_windows,
    write_model,
    write_tracks,
    write_verdicts,
)
from edgeidle.simulator import Linear, StopGo, generate

HEADER = '{"schema":"edgeidle.detections","version":1}\n'


def lines(*records):
    return io.StringIO("".join(r + "\n" for r in records))


def test_detections_round_trip(tmp_path):
    dets = [
        Detection(0, BBox(1.5, 2.25, 30, 40), 0.9, EXCAVATOR),
        Detection(0, BBox(100, 200, 50, 60), 0.125, DUMP_TRUCK),
        Detection(3, BBox(7, 8, 9, 10), 1.0, CEMENT_MIXER_TRUCK),
    ]
    path = tmp_path / "dets.jsonl"
    assert write_detections(path, dets, frame_count=5) == 3
    reader = read_detections(path)
    assert list(reader) == dets
    assert reader.frame_count == 5
    first = path.read_text()
    write_detections(path, list(read_detections(path)), frame_count=5)
    assert path.read_text() == first


def test_iter_frames_fills_gaps_and_trailing_frames(tmp_path):
    dets = [Detection(1, BBox(0, 0, 5, 5), 0.9, EXCAVATOR), Detection(3, BBox(0, 0, 5, 5), 0.9, EXCAVATOR)]
    path = tmp_path / "dets.jsonl"
    write_detections(path, dets, frame_count=6)
    frames = [(t, len(ds)) for t, ds in iter_frames(read_detections(path))]
    assert frames == [(0, 0), (1, 1), (2, 0), (3, 1), (4, 0), (5, 0)]
    assert [t for t, _ in iter_frames(dets)] == [0, 1, 2, 3]
    assert list(iter_frames([], frame_count=2)) == [(0, []), (1, [])]


def test_reads_text_and_binary_streams():
    record = '{"frame":0,"cls":1,"conf":0.5,"x":1,"y":2,"w":3,"h":4}'
    from_text = list(read_detections(lines(record)))
    from_bytes = list(read_detections(io.BytesIO((HEADER + record + "\n").encode())))
    assert from_text == from_bytes == [Detection(0, BBox(1, 2, 3, 4), 0.5, DUMP_TRUCK)]


@pytest.mark.parametrize("record, error, line", [
    ('{"frame":0,"cls":0,"conf":0.5,"x":1,"y":2,"w":3', RecordFormatError, 2),
    ('{"frame":0,"cls":0,"conf":0.5,"x":1,"y":2,"w":3}', RecordFormatError, 2),
    ('{"frame":0,"cls":0,"conf":0.5,"x":1,"y":2,"w":3,"h":4,"id":9}', RecordFormatError, 2),
    ('{"frame":0,"cls":0,"conf":1.5,"x":1,"y":2,"w":3,"h":4}', RangeError, 2),
    ('{"frame":0,"cls":0,"conf":0.5,"x":1,"y":2,"w":0,"h":4}', RangeError, 2),
    ('{"frame":-1,"cls":0,"conf":0.5,"x":1,"y":2,"w":3,"h":4}', RangeError, 2),
    ('{"frame":"0","cls":0,"conf":0.5,"x":1,"y":2,"w":3,"h":4}', RecordFormatError, 2),
    ('[1, 2]', RecordFormatError, 2),
])
def test_malformed_records_report_their_line(record, error, line):
    with pytest.raises(error) as e:
        list(read_detections(io.StringIO(HEADER + record + "\n")))
    assert e.value.line == line


def test_out_of_order_frames_and_misplaced_header():
    a = '{"frame":2,"cls":0,"conf":0.5,"x":1,"y":2,"w":3,"h":4}'
    b = '{"frame":1,"cls":0,"conf":0.5,"x":1,"y":2,"w":3,"h":4}'
    with pytest.raises(StreamOrderError):
        list(read_detections(lines(a, b)))
    with pytest.raises(RecordFormatError):
        list(read_detections(lines(a, HEADER.strip())))


def test_unknown_schema_version():
    with pytest.raises(SchemaVersionError):
        list(read_detections(lines('{"schema":"edgeidle.detections","version":2}')))


def test_tracks_round_trip_is_byte_stable(tmp_path):
    records = [
        TrackRecord(0, TrackId(1), EXCAVATOR, BBox(1, 2, 3, 4), 0.9),
        TrackRecord(0, TrackId(2), DUMP_TRUCK, BBox(5, 6, 7, 8), 0.75, TrackRowState.IDLE, 0.921),
        TrackRecord(1, TrackId(2), DUMP_TRUCK, BBox(5, 6, 7, 8), 0.75, TrackRowState.ACTIVE, 0.1),
    ]
    path = tmp_path / "tracks.csv"
    assert write_tracks(path, records) == 3
    text = path.read_text()
    assert text.splitlines()[:3] == [
        "# edgeidle.tracks v1",
        "frame,track_id,class_id,x,y,w,h,confidence,state,p",
        "0,1,0,1.000000,2.000000,3.000000,4.000000,0.900000,ACTIVE_UNKNOWN,",
    ]
    back = list(read_tracks(path))
    assert back == records
    write_tracks(path, back)
    assert path.read_text() == text


def test_track_rows_need_p_exactly_with_a_verdict(tmp_path):
    path = tmp_path / "tracks.csv"
    path.write_text(
        "# edgeidle.tracks v1\n"
        "frame,track_id,class_id,x,y,w,h,confidence,state,p\n"
        "0,1,0,1,2,3,4,0.9,IDLE,\n"
    )
    with pytest.raises(RecordFormatError) as e:
        list(read_tracks(path))
    assert e.value.line == 3


def test_csv_version_and_header_checks(tmp_path):
    path = tmp_path / "tracks.csv"
    path.write_text("# edgeidle.tracks v9\nframe\n")
    with pytest.raises(SchemaVersionError):
        list(read_tracks(path))
    path.write_text("frame,track_id\n")
    with pytest.raises(RecordFormatError):
        list(read_tracks(path))


def test_verdicts_and_labelled_windows(tmp_path):
    v = IdleVerdict(TrackId(4), 15, 29, 0.25, IdleState.ACTIVE, WindowFeatures(12.5, 7.0, 15), EXCAVATOR)
    path = tmp_path / "verdicts.csv"
    write_verdicts(path, [v])
    assert read_verdicts(path) == [v]
    assert path.read_text().splitlines()[2] == "4,0,15,29,15,12.500000,7.000000,0.250000,ACTIVE"

    rows = [(WindowFeatures(1.0, 2.0, 15), IdleState.IDLE), (WindowFeatures(300.0, 9.5, 15), IdleState.ACTIVE)]
    path = tmp_path / "windows.csv"
    assert write_labeled_windows(path, rows) == 2
    assert read_labeled_windows(path) == rows


def test_ground_truth_round_trip(tmp_path):
    from edgeidle.simulator import MachineSpec, MotionScript, NoiseSpec, ScenarioSpec, Segment

    spec = ScenarioSpec(
        30, (640.0, 480.0), 10.0,
        (MachineSpec(EXCAVATOR, BBox(500, 10, 100, 80), MotionScript((Segment(30, Linear(8.0)),)), ((3, 5),)),),
        NoiseSpec(), 1,
    )
    _, gt = generate(spec)
    path = tmp_path / "gt.jsonl"
    write_ground_truth(path, gt)
    assert read_ground_truth(path) == gt


def test_model_document(tmp_path):
    path = tmp_path / "model.yaml"
    write_model(path, PUBLISHED_MODEL)
    assert read_model(path) == PUBLISHED_MODEL
    doc = yaml.safe_load(path.read_text())
    assert doc["schema_version"] == 1 and doc["beta0"] == 2.4613463131

    del doc["beta2"]
    path.write_text(yaml.safe_dump(doc))
    with pytest.raises(ConfigError) as e:
        read_model(path)
    assert e.value.field == "beta2"

    doc.update(beta2=0.0, schema_version=3)
    path.write_text(yaml.safe_dump(doc))
    with pytest.raises(SchemaVersionError):
        read_model(path)


def test_bundled_model_is_the_published_one():
    from edgeidle.settings import BASE_DIR

    model = read_model(BASE_DIR / "models" / "published.yaml")
    assert model == PUBLISHED_MODEL
    assert model.mad_variant is MadVariant.MEAN_OF_DEVIATIONS


def test_scenario_document():
    doc = {
        "schema_version": 1,
        "frame_count": 50,
        "frame_size": [640, 480],
        "fps": 10,
        "seed": 4,
        "noise": {"miss_prob": 0.1},
        "machines": [
            {"class": "excavator", "bbox": [10, 10, 100, 80],
             "script": [{"mode": "stopgo", "period": 6, "duty": 0.5, "duration": 20}], "occlusions": [[5, 8]]},
            {"class": 1, "bbox": [300, 300, 100, 80], "script": [{"mode": "linear", "vx": -1, "duration": 10}]},
        ],
    }
    spec = scenario_from_document(doc)
    assert spec.seed == 4 and spec.noise.miss_prob == 0.1
    assert spec.machines[0].script.segments[0].mode == StopGo(6, 0.5)
    assert spec.machines[0].occlusions == ((5, 8),)
    assert spec.machines[1].cls == DUMP_TRUCK

    doc["machines"][1]["script"][0]["duration"] = 0
    with pytest.raises(ConfigError) as e:
        scenario_from_document(doc)
    assert e.value.field == "machines[1].script[0].duration"

    doc["machines"][1]["script"][0].update(duration=5, mode="teleport")
    with pytest.raises(ConfigError) as e:
        scenario_from_document(doc)
    assert e.value.field == "machines[1].script[0].mode"

    doc["machines"][1]["class"] = "crane"
    with pytest.raises(ConfigError):
        scenario_from_document(doc)


def test_random_scenario_document_and_bundled_files():
    from edgeidle.settings import BASE_DIR

    spec = scenario_from_document({"schema_version": 1, "random": {"seed": 9, "n_machines": 4}})
    assert len(spec.machines) == 4
    for name in ("site_demo", "occlusion", "random"):
        read_scenario(BASE_DIR / "scenarios" / f"{name}.yaml").validate()


def _one_machine(**machine):
    base = {"class": "excavator", "bbox": [10, 10, 100, 80], "script": [{"mode": "stationary", "duration": 20}]}
    base.update(machine)
    return {"schema_version": 1, "frame_count": 20, "frame_size": [640, 480], "fps": 10, "machines": [base]}


@pytest.mark.parametrize("doc, field", [
    ({**_one_machine(), "noise": {"miss_prob": "abc"}}, "noise.miss_prob"),
    (_one_machine(bbox=[10, "a", 100, 80]), "machines[0].bbox[1]"),
    (_one_machine(bbox=[10, 10, 100]), "machines[0].bbox"),
    (_one_machine(occlusions=[[4]]), "machines[0].occlusions[0]"),
    (_one_machine(occlusions=[[4, "x"]]), "machines[0].occlusions[0][1]"),
    (_one_machine(occlusions=5), "machines[0].occlusions"),
    (_one_machine(script=[{"mode": "stopgo", "period": 6, "duty": 0.5, "vx": "fast", "duration": 20}]),
     "machines[0].script[0].vx"),
    ({**_one_machine(), "seed": "x"}, "seed"),
    ({**_one_machine(), "frame_size": [640, "tall"]}, "frame_size[1]"),
    ({"schema_version": 1, "random": {"seed": 1, "n_machines": "four"}}, "random.n_machines"),
    ({"schema_version": 1, "random": {"seed": 1}, "fps": "ten"}, "fps"),
])
def test_malformed_scenario_values_name_the_field(doc, field):
    with pytest.raises(ConfigError) as e:
        scenario_from_document(doc)
    assert e.value.field == field


@pytest.mark.parametrize("header", [
    '{"schema":"edgeidle.ground_truth","version":1,"frame_size":[640,480],"frames":0}\n',
    '{"schema":"edgeidle.ground_truth","version":1,"fps":"fast","frame_size":[640,480],"frames":0}\n',
    '{"schema":"edgeidle.ground_truth","version":1,"fps":10.0,"frame_size":[640,"x"],"frames":0}\n',
    '{"schema":"edgeidle.ground_truth","version":1,"fps":10.0,"frame_size":[640],"frames":0}\n',
])
def test_malformed_ground_truth_header(header):
    with pytest.raises(RecordFormatError) as e:
        read_ground_truth(io.StringIO(header))
    assert e.value.line == 1


def test_model_document_accepts_the_older_variant_name():
    doc = {"schema_version": 1, "beta0": 1.0, "beta1": -1.0, "beta2": -1.0, "capacity": 15, "fps": 10.0,
           "mad_variant": "as_printed"}
    assert model_from_document(doc).mad_variant is MadVariant.MEAN_OF_DEVIATIONS


@pytest.mark.slow
def test_reader_memory_does_not_grow_with_file_length(tmp_path):
    path = tmp_path / "long.jsonl"
    frames = 1_000_000

    def stream():
        for t in range(frames):
            yield Detection(t, BBox(100.0, 100.0, 200.0, 150.0), 0.9, EXCAVATOR)
            yield Detection(t, BBox(900.0, 400.0, 240.0, 160.0), 0.8, DUMP_TRUCK)

    assert write_detections(path, stream(), frames) == 2 * frames

    tracemalloc.start()
    try:
        seen = 0
        for _, dets in iter_frames(read_detections(path)):
            seen += len(dets)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    assert seen == 2 * frames
    assert peak < 4 * 1024 * 1024
