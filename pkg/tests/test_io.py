import numpy as np
import pytest

from dctrack import io, sim
from dctrack.assoc import TargetOutput
from dctrack.errors import InputError


def test_groundtruth_round_trip(tmp_path):
    boxes = np.array([[10, 20, 50, 80], [0, 0, 0, 0], [5.5, 6.5, 15.5, 26.5]], float)
    vis = [True, False, True]
    io.write_groundtruth(tmp_path / "g.txt", boxes, vis)
    io.write_visible(tmp_path / "v.txt", vis)
    assert (tmp_path / "g.txt").read_text().splitlines()[1] == "0,0,0,0"
    got, v = io.read_groundtruth(tmp_path / "g.txt", tmp_path / "v.txt")
    assert v == vis and got[1] is None
    np.testing.assert_allclose(got[2], boxes[2])
    got, v = io.read_groundtruth(tmp_path / "g.txt")
    assert v == vis


def test_groundtruth_errors(tmp_path):
    with pytest.raises(InputError):
        io.read_groundtruth(tmp_path / "missing.txt")
    (tmp_path / "g.txt").write_text("1,2,3\n")
    with pytest.raises(InputError):
        io.read_groundtruth(tmp_path / "g.txt")
    (tmp_path / "g.txt").write_text("1,2,3,4\n0,0,0,0\n")
    (tmp_path / "v.txt").write_text("1\n")
    with pytest.raises(InputError):
        io.read_groundtruth(tmp_path / "g.txt", tmp_path / "v.txt")
    (tmp_path / "v.txt").write_text("1\n1\n")
    with pytest.raises(InputError):
        io.read_groundtruth(tmp_path / "g.txt", tmp_path / "v.txt")
    (tmp_path / "g.txt").write_text("1,2,3,4\n1,x,3,4\n")
    with pytest.raises(InputError):
        io.read_groundtruth(tmp_path / "g.txt")


def test_detections_round_trip(tmp_path):
    seq = sim.generate_sequence(sim.load_scenario("s03"))
    dets = [sim.oracle_detect(seq, f, clutter=1) for f in range(10)]
    io.write_detections(tmp_path / "d.csv", tmp_path / "e.csv", dets)
    back = io.read_detections(tmp_path / "d.csv", tmp_path / "e.csv", frame_count=10)
    assert [len(x) for x in back] == [len(x) for x in dets]
    for a, b in zip(dets[3], back[3]):
        np.testing.assert_allclose(a.box, b.box, atol=1e-5)
        np.testing.assert_allclose(a.embedding, b.embedding, atol=1e-8)
    first = (tmp_path / "d.csv").read_text().splitlines()[0].split(",")
    assert first[0] == "1" and len(first) == 7


def test_detections_errors(tmp_path):
    (tmp_path / "d.csv").write_text("1,1,0,0,10,10,0.9\n5,1,0,0,10,10,0.9\n")
    with pytest.raises(InputError):
        io.read_detections(tmp_path / "d.csv", frame_count=3)
    (tmp_path / "e.csv").write_text("1,2,0.1,0.2\n")
    with pytest.raises(InputError):
        io.read_detections(tmp_path / "d.csv", tmp_path / "e.csv", frame_count=5)
    (tmp_path / "d.csv").write_text("1,1,0,0,-1,10,0.9\n")
    with pytest.raises(InputError):
        io.read_detections(tmp_path / "d.csv", frame_count=1)


def test_results_round_trip(tmp_path):
    outs = [TargetOutput(0, True, np.array([1.0, 2.0, 11.0, 22.0]), 1.0, 0, 1),
            TargetOutput(1, False, None, 0.0, 0, 2)]
    io.write_results(tmp_path / "r.csv", tmp_path / "r.json", outs, {"k": 1})
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == ",".join(io.RESULT_FIELDS)
    for name in ("r.csv", "r.json"):
        boxes, conf = io.read_results(tmp_path / name)
        np.testing.assert_allclose(boxes[0], [1, 2, 11, 22])
        assert boxes[1] is None and conf == [1.0, 0.0]


def test_results_errors(tmp_path):
    (tmp_path / "r.json").write_text("{not json")
    with pytest.raises(InputError):
        io.read_results(tmp_path / "r.json")
    (tmp_path / "r.csv").write_text("frame,present\n1,1\n")
    with pytest.raises(InputError):
        io.read_results(tmp_path / "r.csv")


def test_candidates_and_objects(tmp_path):
    seq = sim.generate_sequence(sim.load_scenario("s02"))
    dets = [sim.oracle_detect(seq, f) for f in range(seq.frame_count)]
    io.write_candidates(tmp_path / "c.csv", dets)
    back = io.read_candidates(tmp_path / "c.csv", seq.frame_count)
    assert len(back[0]) == len(dets[0])
    io.write_objects(tmp_path / "o.csv", seq)
    boxes, vis = io.read_objects(tmp_path / "o.csv", seq.frame_count)
    np.testing.assert_allclose(boxes, seq.boxes, atol=1e-5)
    np.testing.assert_array_equal(vis, seq.visible)


def test_curve_and_table(tmp_path):
    io.write_curve(tmp_path / "c.csv", [(0.0, 1.0), (0.5, 0.25)])
    assert (tmp_path / "c.csv").read_text().splitlines() == ["threshold,value", "0.000000,1.000000",
                                                             "0.500000,0.250000"]
    io.write_table(tmp_path / "t.csv", [{"a": 1, "b": 0.5}])
    assert (tmp_path / "t.csv").read_text().splitlines()[1] == "1,0.500000"
