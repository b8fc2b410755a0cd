import json

import numpy as np
import pytest

from ds_pass.errors import DataError, OutOfFrameError
from ds_pass.labels import SegmentationMap
from ds_pass.semantic_vo import Match, dump_filter_result, filter_matches, label_at, load_matches, parse_matches


def half_planes():
    a = np.full((10, 10), 2, dtype=np.uint8)
    a[:, :5] = 1
    b = np.full((10, 10), 2, dtype=np.uint8)
    b[:, :4] = 1
    b[9, :] = 255
    return SegmentationMap(a), SegmentationMap(b)


def match(xa, ya, xb, yb):
    return Match(xa=xa, ya=ya, xb=xb, yb=yb)


# (match, kept?) enumerated by hand against half_planes()
HAND_ORACLE = [
    (match(2, 2, 2, 2), True),
    (match(7, 2, 7, 2), True),
    (match(4.0, 3, 4.0, 3), False),  # 1 vs 2
    (match(4.4, 3, 3.4, 3), True),  # columns 4 and 3, both class 1
    (match(4.5, 3, 4.5, 3), False),  # halfway rounds to column 4: 1 vs 2
    (match(4.6, 3, 4.6, 3), True),  # column 5, both class 2
    (match(2, 2, 2, 9), False),  # ignore in frame B
    (match(2, 2, 12, 2), False),  # out of frame B
    (match(-0.4, 0, 0, 0), True),  # nearest pixel is column 0
    (match(9.6, 0, 9, 0), False),  # nearest column 10 is outside A
]


def uniform(value, shape=(6, 6)):
    return SegmentationMap(np.full(shape, value, dtype=np.uint8))


def random_matches(rng, count, size=6):
    return [match(*rng.uniform(-0.4, size - 0.6, size=4)) for _ in range(count)]


def test_label_at_uses_nearest_pixel():
    a, _ = half_planes()
    assert label_at(a, (4.0, 0.0)) == 1
    assert label_at(a, (4.4, 0.0)) == 1
    assert label_at(a, (4.5, 0.0)) == 1
    assert label_at(a, (4.51, 0.0)) == 2
    with pytest.raises(OutOfFrameError):
        label_at(a, (-0.6, 0.0))
    with pytest.raises(OutOfFrameError):
        label_at(a, (float("nan"), 0.0))


def test_hand_built_half_planes():
    seg_a, seg_b = half_planes()
    matches = [m for m, _ in HAND_ORACLE]
    kept, report = filter_matches(matches, seg_a, seg_b)
    assert kept == [m for m, keep in HAND_ORACLE if keep]
    assert report.total == 10
    assert report.kept == 5
    assert report.rejected == 5
    assert report.rejections == {"1-2": 2, "1-255": 1, "out-of-frame": 2}
    assert report.out_of_frame == 2
    assert report.kept_ratio == 0.5
    assert report.sparse


def test_uniform_maps(rng):
    matches = random_matches(rng, 20)
    kept, report = filter_matches(matches, uniform(3), uniform(3))
    assert kept == matches and report.rejected == 0
    kept, report = filter_matches(matches, uniform(1), uniform(2))
    assert kept == [] and report.rejections == {"1-2": 20}


def test_filtering_is_idempotent(rng):
    seg_a = SegmentationMap(rng.integers(0, 3, size=(6, 6)).astype(np.uint8))
    seg_b = SegmentationMap(rng.integers(0, 3, size=(6, 6)).astype(np.uint8))
    kept, _ = filter_matches(random_matches(rng, 50), seg_a, seg_b)
    again, report = filter_matches(kept, seg_a, seg_b)
    assert again == kept
    assert report.rejected == 0


def test_kept_set_is_monotone(rng):
    seg_a = SegmentationMap(rng.integers(0, 2, size=(6, 6)).astype(np.uint8))
    seg_b = SegmentationMap(rng.integers(0, 2, size=(6, 6)).astype(np.uint8))
    matches = random_matches(rng, 40)
    kept, _ = filter_matches(matches, seg_a, seg_b)
    assert all(m in matches for m in kept)
    for drop in range(0, 40, 7):
        fewer = matches[:drop] + matches[drop + 1 :]
        kept_fewer, _ = filter_matches(fewer, seg_a, seg_b)
        assert set(kept_fewer) <= set(kept)


def test_ignore_labels_never_match(rng):
    ids = rng.choice(np.array([0, 255], dtype=np.uint8), size=(6, 6))
    seg = SegmentationMap(ids)
    matches = random_matches(rng, 60)
    kept, _ = filter_matches(matches, seg, seg)
    assert all(label_at(seg, m.point_a) != 255 and label_at(seg, m.point_b) != 255 for m in kept)


def test_label_groups_merge_classes(rng):
    matches = random_matches(rng, 10)
    kept, report = filter_matches(matches, uniform(1), uniform(2), label_groups={1: 0, 2: 0})
    assert kept == matches and not report.sparse


def test_matches_file_round_trip(tmp_path):
    seg_a, seg_b = half_planes()
    path = tmp_path / "matches.json"
    path.write_text(json.dumps({"version": 1, "matches": [m.model_dump() for m, _ in HAND_ORACLE]}))
    matches = load_matches(path)
    assert matches == [m for m, _ in HAND_ORACLE]
    kept, report = filter_matches(matches, seg_a, seg_b)
    out = tmp_path / "kept.json"
    dump_filter_result(out, kept, report)
    document = json.loads(out.read_text())
    assert document["report"]["kept"] == 5
    assert parse_matches(document["matches"]) == kept


def test_invalid_matches_files(tmp_path):
    with pytest.raises(DataError):
        load_matches(tmp_path / "missing.json")
    with pytest.raises(DataError):
        parse_matches({"version": 2, "matches": []})
    with pytest.raises(DataError):
        parse_matches([{"xa": 1}])
    with pytest.raises(DataError):
        parse_matches("nonsense")
