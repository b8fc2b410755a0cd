import numpy as np
import pandas as pd
import pytest

from ds_pass.errors import DataError, InvalidInputError, NoScorableClassesError
from ds_pass.evaluation import (
    PASS_REFERENCE_IOU,
    PASS_REFERENCE_MIOU,
    ConfusionMatrix,
    accumulate,
    build_report,
    compare_reports,
    decode_colors,
    evaluate_directories,
    evaluate_pairs,
    format_report_table,
    iou,
    load_pair,
    miou,
    pixel_accuracy,
    render,
    resize_labels,
)
from ds_pass.imageio import save_labels, save_rgb
from ds_pass.labels import SegmentationMap

GT = np.array([[0, 0], [1, 1]], dtype=np.uint8)
PRED = np.array([[0, 1], [1, 1]], dtype=np.uint8)


def hand_case():
    return accumulate(ConfusionMatrix.empty(2), PRED, GT)


def test_two_by_two_confusion_matrix():
    cm = hand_case()
    np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 2]])
    assert iou(cm, 0) == 0.5
    assert iou(cm, 1) == 2 / 3
    assert abs(miou(cm) - 7 / 12) < 1e-15
    assert pixel_accuracy(cm) == 0.75


def test_perfect_prediction_is_diagonal(rng):
    labels = rng.integers(0, 4, size=(8, 8)).astype(np.uint8)
    cm = accumulate(ConfusionMatrix.empty(4), labels, labels)
    assert np.trace(cm.counts) == labels.size
    assert cm.total == labels.size
    assert miou(cm) == 1.0


def test_ignore_ground_truth_is_not_scored():
    cm = ConfusionMatrix.empty(2)
    all_ignore = np.full((2, 2), 255, dtype=np.uint8)
    assert accumulate(cm, PRED, all_ignore).total == 0


def test_ignore_prediction_is_a_miss():
    pred = PRED.copy()
    pred[0, 1] = 255
    cm = accumulate(ConfusionMatrix.empty(2), pred, GT)
    np.testing.assert_array_equal(cm.counts, [[1, 0], [0, 2]])
    np.testing.assert_array_equal(cm.void, [1, 0])
    assert cm.total == 4
    assert iou(cm, 0) == 0.5
    assert iou(cm, 1) == 1.0
    assert pixel_accuracy(cm) == 0.75


def test_unmapped_prediction_lowers_iou(pass_classes):
    gt = np.full((2, 4), 11, dtype=np.uint8)
    pred = gt.copy()
    pred[:, 2:] = 0
    cm, report = evaluate_pairs([(pred, gt)], pass_classes)
    assert report.iou_by_name()["Road"] == 0.5
    road = next(c for c in report.classes if c.name == "Road")
    assert (road.gt_pixels, road.pred_pixels, road.void_pixels) == (8, 4, 4)
    assert cm.void.sum() == 4


def test_accumulate_leaves_its_input_untouched():
    cm = ConfusionMatrix.empty(2)
    accumulate(cm, PRED, GT)
    assert cm.total == 0


def test_accumulate_validates_inputs():
    cm = ConfusionMatrix.empty(2)
    with pytest.raises(InvalidInputError):
        accumulate(cm, PRED, GT[:1])
    with pytest.raises(InvalidInputError):
        accumulate(cm, np.array([[2, 0], [0, 0]], dtype=np.uint8), GT)


def test_undefined_classes_are_left_out_of_the_mean():
    cm = accumulate(ConfusionMatrix.empty(3), GT, GT)
    assert iou(cm, 2) is None
    assert miou(cm) == 1.0
    with pytest.raises(NoScorableClassesError):
        miou(cm, [2])


@pytest.mark.parametrize("trial", range(50))
def test_scores_are_label_permutation_invariant(trial):
    rng = np.random.default_rng(trial)
    k = int(rng.integers(2, 6))
    gt = rng.integers(0, k, size=(6, 7))
    pred = np.where(rng.uniform(size=gt.shape) < 0.6, gt, rng.integers(0, k, size=gt.shape))
    perm = rng.permutation(k)
    cm = accumulate(ConfusionMatrix.empty(k), pred, gt)
    permuted = accumulate(ConfusionMatrix.empty(k), perm[pred], perm[gt])
    for c in range(k):
        assert iou(cm, c) == iou(permuted, perm[c])
    assert miou(cm) == pytest.approx(miou(permuted), abs=1e-12)


@pytest.mark.parametrize("trial", range(50))
def test_accumulation_order_does_not_matter(trial):
    rng = np.random.default_rng(100 + trial)
    pairs = [(rng.integers(0, 3, size=(4, 5)), rng.integers(0, 3, size=(4, 5))) for _ in range(4)]
    forward = ConfusionMatrix.empty(3)
    for pred, gt in pairs:
        forward = accumulate(forward, pred, gt)
    backward = ConfusionMatrix.empty(3)
    for pred, gt in reversed(pairs):
        backward = accumulate(backward, pred, gt)
    np.testing.assert_array_equal(forward.counts, backward.counts)
    parts = [accumulate(ConfusionMatrix.empty(3), pred, gt) for pred, gt in pairs]
    np.testing.assert_array_equal(sum(parts[1:], parts[0]).counts, forward.counts)


def test_report_frame_and_csv(tmp_path):
    report = build_report(hand_case(), {0: "road", 1: "car"}, images=1)
    assert report.iou_by_name() == {"road": 0.5, "car": 2 / 3}
    frame = report.to_frame()
    assert list(frame["name"]) == ["road", "car", "mIoU"]
    path = tmp_path / "report.csv"
    report.to_csv(path)
    loaded = pd.read_csv(path)
    assert loaded["iou"].iloc[-1] == pytest.approx(7 / 12)


def test_compare_reports_gives_the_boost():
    adapted = build_report(hand_case(), {0: "road", 1: "car"})
    baseline = build_report(accumulate(ConfusionMatrix.empty(2), np.ones((2, 2), np.uint8), GT), {0: "road", 1: "car"})
    comparison = compare_reports(adapted, baseline)
    assert baseline.iou_by_name()["road"] == 0.0
    assert comparison.boost["road"] == pytest.approx(0.5)
    assert comparison.miou_boost == pytest.approx(adapted.miou - baseline.miou)


def test_reference_constants_are_consistent():
    assert list(PASS_REFERENCE_IOU) == ["Car", "Road", "Sidewalk", "Crosswalk", "Curb", "Person"]
    assert sum(PASS_REFERENCE_IOU.values()) / 6 == pytest.approx(PASS_REFERENCE_MIOU, abs=0.05)


def test_report_table_shows_reference_values(pass_classes):
    labels = np.array([[4, 11, 12, 26, 16, 20]], dtype=np.uint8)
    _, report = evaluate_pairs([(labels, labels)], pass_classes)
    table = format_report_table(report, PASS_REFERENCE_IOU)
    assert "93.6" in table
    assert "mIoU" in table
    assert "+6.4" in table


def test_pass_report_holds_the_evaluation_classes(pass_classes):
    gt = np.array([[4, 11, 12], [26, 16, 20]], dtype=np.uint8)
    pred = np.array([[4, 11, 0], [26, 16, 5]], dtype=np.uint8)
    cm, report = evaluate_pairs([(pred, gt)], pass_classes)
    assert [c.name for c in report.classes] == ["Car", "Road", "Sidewalk", "Crosswalk", "Curb", "Person"]
    assert cm.num_classes == 6
    assert report.iou_by_name()["Sidewalk"] is None or report.iou_by_name()["Sidewalk"] == 0.0
    assert report.iou_by_name()["Car"] == 1.0


def test_render_of_ignore_is_black(pass_classes):
    seg = SegmentationMap(np.full((3, 4), 255, dtype=np.uint8), pass_classes)
    assert not render(seg, pass_classes).any()


def test_render_and_decode_round_trip(rng, pass_classes):
    ids = rng.choice(pass_classes.known_ids(), size=(5, 6)).astype(np.uint8)
    ids[0, 0] = 255
    rgb = render(SegmentationMap(ids, pass_classes), pass_classes)
    np.testing.assert_array_equal(decode_colors(rgb, pass_classes), ids)


def test_decode_rejects_unknown_colours(two_class_map):
    rgb = np.zeros((3, 1, 1), dtype=np.uint8)
    rgb[:, 0, 0] = (1, 2, 3)
    with pytest.raises(DataError):
        decode_colors(rgb, two_class_map)


def test_load_pair_remaps_training_ids(tmp_path, pass_classes):
    save_rgb(tmp_path / "img.png", np.zeros((3, 2, 3), dtype=np.float32))
    save_labels(tmp_path / "lbl.png", np.array([[4, 0, 11], [20, 255, 26]], dtype=np.uint8))
    image, seg = load_pair(tmp_path / "img.png", tmp_path / "lbl.png", pass_classes)
    assert image.shape == (3, 2, 3)
    np.testing.assert_array_equal(seg.ids, [[0, 255, 1], [5, 255, 3]])


def test_load_pair_rejects_unknown_ids_without_remap(tmp_path, two_class_map):
    save_rgb(tmp_path / "img.png", np.zeros((3, 1, 2), dtype=np.float32))
    save_labels(tmp_path / "lbl.png", np.array([[0, 7]], dtype=np.uint8))
    with pytest.raises(DataError):
        load_pair(tmp_path / "img.png", tmp_path / "lbl.png", two_class_map)


def test_load_pair_rejects_colour_labels(tmp_path, two_class_map):
    save_rgb(tmp_path / "img.png", np.zeros((3, 2, 2), dtype=np.float32))
    with pytest.raises(DataError):
        load_pair(tmp_path / "img.png", tmp_path / "img.png", two_class_map)


def test_nearest_label_resize():
    ids = np.array([[0, 1], [2, 3]], dtype=np.uint8)
    np.testing.assert_array_equal(resize_labels(ids, 4, 4)[::2, ::2], ids)


def write_pairs(root, pairs):
    pred_dir, gt_dir = root / "pred", root / "gt"
    for i, (pred, gt) in enumerate(pairs):
        save_labels(pred_dir / f"{i}.png", np.asarray(pred, dtype=np.uint8))
        save_labels(gt_dir / f"{i}.png", np.asarray(gt, dtype=np.uint8))
    return pred_dir, gt_dir


def test_mini_dataset_matches_hand_computation(tmp_path, two_class_map):
    pairs = [
        (PRED, GT),
        ([[0, 0]], [[0, 0]]),
        ([[0, 1]], [[1, 255]]),
    ]
    pred_dir, gt_dir = write_pairs(tmp_path, pairs)
    cm, report = evaluate_directories(pred_dir, gt_dir, two_class_map)
    np.testing.assert_array_equal(cm.counts, [[3, 1], [1, 2]])
    assert report.iou_by_name() == {"road": 3 / 5, "car": 0.5}
    assert report.miou == pytest.approx(0.55, abs=1e-15)
    assert report.images == 3


def test_identical_directories_score_one(tmp_path, two_class_map):
    pred_dir, gt_dir = write_pairs(tmp_path, [(GT, GT), (PRED, PRED)])
    _, report = evaluate_directories(pred_dir, gt_dir, two_class_map)
    assert report.miou == 1.0


def test_missing_prediction_is_a_data_error(tmp_path, two_class_map):
    pred_dir, gt_dir = write_pairs(tmp_path, [(GT, GT)])
    (pred_dir / "0.png").unlink()
    with pytest.raises(DataError):
        evaluate_directories(pred_dir, gt_dir, two_class_map)
