import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from blockbg.evalkit import (SegmentationScore, age, average_reports, clustered_error_pixels,
                             direct_gaussian_model, error_pixels, evaluate_background,
                             gaussian_segment, median_oracle, segment_sequence, similarity)

masks = arrays(bool, (6, 7))


def test_age_examples():
    img = np.full((4, 4), 100, np.uint8)
    assert age(img, img) == 0.0
    assert age(img + 5, img) == 5.0
    half = img.astype(int).copy()
    half[:2] += 20
    assert age(half, img) == 10.0


def test_age_geometry_mismatch():
    with pytest.raises(ValueError):
        age(np.zeros((2, 2)), np.zeros((2, 3)))


def test_unsigned_difference_does_not_wrap():
    assert age(np.array([[0]], np.uint8), np.array([[255]], np.uint8)) == 255.0


def test_ep_threshold_is_strict():
    truth = np.full((5, 5), 50, np.uint8)
    assert error_pixels(truth + 20, truth)[0] == 0
    assert error_pixels(truth + 21, truth)[0] == 25
    one = truth.copy()
    one[2, 3] = 255
    count, mask = error_pixels(one, truth)
    assert count == 1 and mask[2, 3]


def test_cep_examples():
    mask = np.zeros((7, 7), bool)
    mask[3, 3] = True
    assert clustered_error_pixels(mask) == 0
    mask[2:5, 2:5] = True
    assert clustered_error_pixels(mask) == 1
    assert clustered_error_pixels(np.ones((7, 7), bool)) == 49
    assert clustered_error_pixels(np.zeros((7, 7), bool)) == 0


def test_cep_border_uses_in_bounds_neighbours():
    mask = np.zeros((4, 4), bool)
    mask[0, :2] = mask[1, :2] = True  # 2x2 in the corner: only (0, 0) qualifies
    assert clustered_error_pixels(mask) == 1
    mask[:3, :3] = True
    assert clustered_error_pixels(mask) == 4  # (0,0), (0,1), (1,0), (1,1)


@given(masks)
def test_cep_never_exceeds_ep(mask):
    assert 0 <= clustered_error_pixels(mask) <= mask.sum()


def test_evaluate_background_and_average():
    truth = np.zeros((6, 6), np.uint8)
    est = truth.copy()
    est[1:4, 1:4] = 100
    report = evaluate_background(est, truth)
    assert (report.ep_count, report.cep_count) == (9, 1)
    assert report.age == pytest.approx(900 / 36)
    assert report.as_dict()["ep_threshold"] == 20
    avg = average_reports([report, evaluate_background(truth, truth)])
    assert avg["ep"] == 4.5 and avg["cep"] == 0.5


def test_similarity_examples():
    truth = np.zeros((10, 10), bool)
    truth[:5] = True
    assert similarity(truth, truth).similarity == 1.0
    assert SegmentationScore(50, 25, 25).similarity == 0.5
    empty = np.zeros((10, 10), bool)
    assert similarity(empty, empty).similarity == 0.0


@given(masks, masks)
def test_similarity_swap(pred, truth):
    a, b = similarity(pred, truth), similarity(truth, pred)
    assert (a.fp, a.fn) == (b.fn, b.fp)
    assert a.similarity == b.similarity
    assert 0.0 <= a.similarity <= 1.0


def test_gaussian_segment_examples():
    mean = np.full((3, 3), 100.0)
    assert not gaussian_segment(mean, mean, 4.0).any()
    frame = mean.copy()
    frame[0, 0] += 100
    frame[1, 1] += 4
    mask = gaussian_segment(frame, mean, np.full((3, 3), 4.0))
    assert mask[0, 0] and not mask[1, 1] and mask.sum() == 1


def test_gaussian_segment_variance_floor():
    mean = np.zeros((1, 2))
    frame = np.array([[4.5, 4.5]])
    # 4.5^2 = 20.25 > 6.25 * 1 but not > 6.25 * 4
    assert not gaussian_segment(frame, mean, np.array([[0.0, 1.0]])).any()
    assert gaussian_segment(frame, mean, 1.0, var_floor=1.0).all()


def test_direct_model_and_sequence_scoring():
    frames = np.stack([np.full((4, 4), v, np.uint8) for v in (10, 12, 10, 12)])
    mean, var = direct_gaussian_model(frames)
    assert np.all(mean == 11) and np.all(var == 1)
    moved = frames.copy()
    moved[1, :2, :2] = 200
    truth = np.zeros(frames.shape, bool)
    truth[1, :2, :2] = True
    result, score = segment_sequence(moved, mean, var, truth)
    assert score == SegmentationScore(4, 0, 0)
    assert segment_sequence(moved, mean, var)[1] is None
    assert len(result) == 4


@pytest.mark.parametrize("series, expected", [([10, 10, 10, 200, 200], 10),
                                              ([10, 200, 200, 200], 200),
                                              ([7, 7, 7], 7), ([10, 11], 11), ([3], 3)])
def test_median_oracle_examples(series, expected):
    stack = np.array(series, np.uint8)[:, None, None]
    assert median_oracle(stack)[0, 0] == expected


def test_median_recovers_majority_background():
    rng = np.random.default_rng(0)
    truth = rng.integers(0, 256, (8, 8)).astype(np.uint8)
    frames = np.repeat(truth[None], 9, axis=0)
    for f in range(4):
        frames[f, f : f + 3, :] = 255 - truth[f : f + 3, :]
    np.testing.assert_array_equal(median_oracle(frames), truth)
