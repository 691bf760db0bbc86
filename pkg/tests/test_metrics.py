"""Matching, average precision, and evaluation report tests."""

import io
import json
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pose6d import (
    DEFAULT_LADDER,
    EulerAngles,
    NoClassesError,
    NoMatchesError,
    NoiseSpec,
    ParseError,
    SceneSpec,
    ThresholdLadder,
    ValidationError,
    average_precision,
    generate_scene,
    load_ladder,
    match,
    mean_average_precision,
    parse_ladder,
    perturb,
    precision_recall,
    quat_from_euler,
    rotation_error_stats,
    translation_mae,
)

from helpers import ann, as_detection, det, image

PAIR = (1.0, math.radians(10.0))


def rotated(roll: float):
    return quat_from_euler(EulerAngles(roll=roll, pitch=0.0, yaw=0.0))


def noisy_scene(seed: int):
    spec = SceneSpec(seed=seed, n_images=4, objects_per_image=(1, 3),
                     n_classes=1 + seed % 3,
                     noise=NoiseSpec(translation_sigma=0.7, rotation_sigma=0.18,
                                     miss_rate=0.2, false_positive_rate=0.4,
                                     tp_confidence=(0.4, 1.0)))
    gt_records, camera = generate_scene(spec)
    return perturb(gt_records, spec.noise, spec.seed, camera), gt_records


class TestLadder:
    def test_default_ladder_pairs(self):
        assert DEFAULT_LADDER.pairs == (
            (0.5, math.radians(5.0)),
            (1.0, math.radians(10.0)),
            (2.0, math.radians(20.0)),
            (4.0, math.radians(40.0)),
        )

    @pytest.mark.parametrize("pairs", [(), ((0.0, 0.1),), ((1.0, -0.1),)])
    def test_invalid_ladders_are_rejected(self, pairs):
        with pytest.raises(ValueError):
            ThresholdLadder(pairs=pairs)

    def test_parse_ladder_converts_degrees(self):
        ladder = parse_ladder([{"trans_m": 1, "rot_deg": 10},
                               {"trans_m": 2.5, "rot_deg": 45}])
        assert ladder.pairs == ((1.0, math.radians(10.0)), (2.5, math.radians(45.0)))

    @pytest.mark.parametrize("data, exc_type", [
        ([], ParseError),
        ({"trans_m": 1}, ParseError),
        ([[1, 10]], ParseError),
        ([{"trans_m": 1}], ParseError),
        ([{"trans_m": True, "rot_deg": 10}], ParseError),
        ([{"trans_m": 0, "rot_deg": 10}], ValidationError),
    ])
    def test_parse_ladder_errors(self, data, exc_type):
        with pytest.raises(exc_type):
            parse_ladder(data)

    def test_load_ladder_round_trip(self, tmp_path):
        path = tmp_path / "ladder.json"
        path.write_text(json.dumps([{"trans_m": 0.25, "rot_deg": 2.5}]), encoding="utf-8")
        assert load_ladder(str(path)).pairs == ((0.25, math.radians(2.5)),)


class TestMatch:
    def test_higher_confidence_claims_the_target_first(self):
        gts = [ann(0.0, 0.0, 10.0)]
        preds = [det(0.5, 0.0, 10.0, confidence=0.9),   # farther but more confident
                 det(0.1, 0.0, 10.0, confidence=0.8)]   # nearer yet outranked
        result = match(preds, gts, PAIR)
        assert result.pairs == ((0, 0),)
        assert result.unmatched_pred == (1,)
        assert result.trans_errors == (0.5,)

    def test_each_detection_takes_the_nearest_free_target(self):
        gts = [ann(0.4, 0.0, 10.0), ann(0.1, 0.0, 10.0)]
        preds = [det(0.0, 0.0, 10.0, confidence=0.9)]
        result = match(preds, gts, PAIR)
        assert result.pairs == ((0, 1),)
        assert result.unmatched_gt == (0,)

    def test_distance_tie_goes_to_the_lower_target_index(self):
        gts = [ann(0.3, 0.0, 10.0), ann(-0.3, 0.0, 10.0)]
        preds = [det(0.0, 0.0, 10.0)]
        assert match(preds, gts, PAIR).pairs == ((0, 0),)

    def test_confidence_tie_goes_to_the_earlier_detection(self):
        gts = [ann(0.0, 0.0, 10.0)]
        preds = [det(0.1, 0.0, 10.0, confidence=0.7),
                 det(0.05, 0.0, 10.0, confidence=0.7)]
        assert match(preds, gts, PAIR).pairs == ((0, 0),)

    def test_both_gates_must_hold(self):
        gts = [ann(0.0, 0.0, 10.0)]
        too_far = det(2.0, 0.0, 10.0)
        too_rotated = det(0.0, 0.0, 10.0, quat=rotated(math.radians(20.0)))
        assert match([too_far], gts, PAIR).pairs == ()
        assert match([too_rotated], gts, PAIR).pairs == ()

    def test_boundary_distances_and_angles_count_as_matches(self):
        gts = [ann(0.0, 0.0, 10.0)]
        at_edge = det(1.0, 0.0, 10.0, quat=rotated(math.radians(10.0) - 1e-12))
        result = match([at_edge], gts, PAIR)
        assert result.pairs == ((0, 0),)

    def test_rotation_gate_does_not_block_a_farther_candidate(self):
        # the nearest target fails the angle check; the detection must still
        # claim the farther one that passes both gates
        gts = [ann(0.2, 0.0, 10.0, quat=rotated(math.radians(30.0))),
               ann(0.5, 0.0, 10.0)]
        result = match([det(0.0, 0.0, 10.0)], gts, PAIR)
        assert result.pairs == ((0, 1),)

    def test_class_mismatch_never_matches(self):
        gts = [ann(0.0, 0.0, 10.0, class_id=1)]
        result = match([det(0.0, 0.0, 10.0, class_id=0)], gts, PAIR)
        assert result.pairs == ()
        assert result.unmatched_pred == (0,)
        assert result.unmatched_gt == (0,)

    def test_targets_are_matched_at_most_once(self):
        gts = [ann(0.0, 0.0, 10.0)]
        preds = [det(0.1, 0.0, 10.0, confidence=0.9),
                 det(0.2, 0.0, 10.0, confidence=0.8)]
        result = match(preds, gts, PAIR)
        assert result.pairs == ((0, 0),)
        assert result.unmatched_pred == (1,)

    def test_invalid_pair_is_rejected(self):
        with pytest.raises(ValueError):
            match([], [], (0.0, 1.0))


class TestAveragePrecision:
    @pytest.mark.parametrize("flags, num_gt, expected", [
        ([True], 1, 1.0),
        ([True, False], 1, 1.0),          # trailing miss cannot hurt
        ([False, True], 1, 0.5),
        ([True, False, True], 2, 5.0 / 6.0),
        ([True, True], 3, 2.0 / 3.0),
        ([False, False], 2, 0.0),
        ([], 5, 0.0),
        ([], 0, 1.0),                     # degenerate forced-in class
        ([False], 0, 0.0),
    ])
    def test_known_values(self, flags, num_gt, expected):
        assert average_precision(flags, num_gt) == pytest.approx(expected)

    def test_perfect_ranking_is_exactly_one(self):
        assert average_precision([True] * 7, 7) == 1.0

    def test_negative_gt_count_is_rejected(self):
        with pytest.raises(ValueError):
            average_precision([True], -1)

    @given(st.lists(st.booleans(), max_size=30), st.integers(0, 10))
    def test_bounded_when_targets_cover_the_hits(self, flags, extra_gt):
        num_gt = sum(flags) + extra_gt
        value = average_precision(flags, num_gt)
        assert 0.0 <= value <= 1.0

    @given(st.lists(st.booleans(), min_size=1, max_size=30), st.integers(0, 10))
    def test_trailing_misses_never_change_the_value(self, flags, extra_gt):
        num_gt = max(1, sum(flags) + extra_gt)
        assert average_precision(flags + [False], num_gt) == average_precision(flags, num_gt)


def perfect_setup():
    gt_records = [
        image("a", ann(0.0, 0.0, 10.0), ann(3.0, 1.0, 20.0)),
        image("b", ann(-2.0, 0.5, 15.0)),
    ]
    confs = iter((0.9, 0.8, 0.7))
    pred_records = [
        image(r.image_id, *(as_detection(a, next(confs)) for a in r.items))
        for r in gt_records
    ]
    return pred_records, gt_records


class TestMeanAveragePrecision:
    def test_perfect_predictions_score_exactly_one(self):
        preds, gts = perfect_setup()
        value, report = mean_average_precision(preds, gts)
        assert value == 1.0
        assert report.mean_ap == 1.0
        assert report.mae_trans == 0.0
        assert report.rot_error_mean == 0.0
        assert report.rot_error_median == 0.0
        assert report.precision == 1.0 and report.recall == 1.0
        assert (report.tp, report.fp, report.fn) == (3, 0, 0)

    def test_false_positive_only_class_halves_the_mean(self):
        preds, gts = perfect_setup()
        preds[0] = image("a", *preds[0].items, det(5.0, 5.0, 30.0, class_id=7, confidence=0.3))
        value, report = mean_average_precision(preds, gts)
        assert report.per_class_ap[7] == (0.0,) * 4
        assert report.per_class_ap[0] == (1.0,) * 4
        assert value == 0.5

    def test_undetected_class_halves_the_mean(self):
        preds, gts = perfect_setup()
        gts[1] = image("b", *gts[1].items, ann(4.0, -1.0, 40.0, class_id=2))
        value, report = mean_average_precision(preds, gts)
        assert value == 0.5
        assert report.fn == 1

    def test_prediction_only_image_contributes_false_positives(self):
        preds, gts = perfect_setup()
        preds.append(image("zzz", det(1.0, 1.0, 11.0, confidence=0.05)))
        value, report = mean_average_precision(preds, gts)
        assert report.fp == 1
        assert value == 1.0  # ranked below every hit, so the envelope is unchanged

    def test_ground_truth_only_image_contributes_misses(self):
        preds, gts = perfect_setup()
        gts.append(image("ghost", ann(0.0, 0.0, 12.0)))
        value, report = mean_average_precision(preds, gts)
        assert report.fn == 1
        assert value == pytest.approx(0.75)

    def test_false_positive_above_the_hit_costs_half(self):
        gts = [image("a", ann(0.0, 0.0, 10.0))]
        preds = [image("a",
                       det(50.0, 50.0, 90.0, confidence=0.9),
                       det(0.0, 0.0, 10.0, confidence=0.8))]
        value, report = mean_average_precision(preds, gts)
        assert value == pytest.approx(0.5)
        assert (report.tp, report.fp, report.fn) == (1, 1, 0)

    def test_duplicate_image_ids_are_rejected(self):
        preds, gts = perfect_setup()
        with pytest.raises(ValueError, match="duplicate"):
            mean_average_precision(preds + [image("a")], gts)
        with pytest.raises(ValueError, match="duplicate"):
            mean_average_precision(preds, gts + [image("b")])

    def test_no_classes_anywhere_is_an_error(self):
        with pytest.raises(NoClassesError):
            mean_average_precision([image("a")], [image("a")])

    def test_invalid_jobs_count_is_rejected(self):
        preds, gts = perfect_setup()
        with pytest.raises(ValueError):
            mean_average_precision(preds, gts, jobs=0)

    @pytest.mark.parametrize("seed", [3, 11, 27])
    def test_parallel_matching_changes_nothing(self, seed):
        preds, gts = noisy_scene(seed)
        value_1, report_1 = mean_average_precision(preds, gts, jobs=1)
        value_8, report_8 = mean_average_precision(preds, gts, jobs=8)
        assert value_1 == value_8
        assert report_1.to_json_dict() == report_8.to_json_dict()

    @pytest.mark.parametrize("seed", [5, 19])
    def test_record_order_changes_nothing(self, seed):
        preds, gts = noisy_scene(seed)
        shuffled = list(preds)
        random.Random(seed).shuffle(shuffled)
        value, _ = mean_average_precision(preds, gts)
        value_shuffled, _ = mean_average_precision(shuffled, gts)
        assert value == value_shuffled

    @pytest.mark.parametrize("seed", [7, 23])
    def test_monotone_confidence_rescaling_changes_nothing(self, seed):
        from dataclasses import replace

        preds, gts = noisy_scene(seed)
        rescaled = [
            image(r.image_id, *(replace(d, confidence=0.25 + 0.5 * d.confidence)
                                for d in r.items))
            for r in preds
        ]
        value, _ = mean_average_precision(preds, gts)
        value_rescaled, _ = mean_average_precision(rescaled, gts)
        assert value == value_rescaled

    @pytest.mark.parametrize("seed", list(range(12)))
    def test_relaxing_thresholds_never_reduces_ap_on_sampled_scenes(self, seed):
        preds, gts = noisy_scene(seed)
        _, report = mean_average_precision(preds, gts)
        for aps in report.per_class_ap.values():
            for tighter, looser in zip(aps, aps[1:]):
                assert looser >= tighter - 1e-12


class TestScalarStats:
    def test_no_matches_raises(self):
        result = match([det(9.0, 9.0, 99.0)], [ann(0.0, 0.0, 10.0)], PAIR)
        with pytest.raises(NoMatchesError):
            translation_mae([result])
        with pytest.raises(NoMatchesError):
            rotation_error_stats([result])

    def test_precision_recall_sides_go_none_without_denominators(self):
        empty = match([], [], PAIR)
        assert precision_recall([empty]) == (None, None)

    def test_stats_over_two_matches(self):
        gts = [ann(0.0, 0.0, 10.0), ann(5.0, 0.0, 10.0)]
        preds = [det(0.3, 0.0, 10.0, confidence=0.9),
                 det(5.0, 0.4, 10.0, confidence=0.8, quat=rotated(0.1))]
        result = match(preds, gts, PAIR)
        assert translation_mae([result]) == pytest.approx(0.35)
        mean, median = rotation_error_stats([result])
        assert mean == pytest.approx(0.05, abs=1e-12)
        assert median == pytest.approx(0.05, abs=1e-12)
        assert precision_recall([result]) == (1.0, 1.0)


class TestReportOutput:
    def test_json_dict_shape(self):
        preds, gts = perfect_setup()
        _, report = mean_average_precision(preds, gts)
        payload = report.to_json_dict()
        assert set(payload) == {"mAP", "ladder", "per_class", "mae_trans",
                                "angular_error", "precision", "recall", "counts"}
        assert payload["mAP"] == 1.0
        assert payload["per_class"]["0"]["mean_ap"] == 1.0
        assert payload["counts"] == {"tp": 3, "fp": 0, "fn": 0}
        json.dumps(payload)  # must be serializable as-is

    def test_text_table_lists_every_ladder_pair(self):
        preds, gts = perfect_setup()
        _, report = mean_average_precision(preds, gts)
        text = report.to_text()
        assert "mAP" in text
        assert text.count("deg") >= len(DEFAULT_LADDER.pairs)

    def test_text_table_handles_undefined_stats(self):
        _, report = mean_average_precision(
            [image("a")], [image("a", ann(0.0, 0.0, 10.0))])
        assert "n/a" in report.to_text()
