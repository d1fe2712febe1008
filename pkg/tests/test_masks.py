import numpy as np
import pytest

from forestcal import ValidationError, mask_iou, resize_nearest, rle_decode, rle_encode, shape_vector


def test_known_encoding():
    # Top-right pixel only; column-major order puts it at flat index 2.
    mask = np.array([[0, 1], [0, 0]], dtype=np.uint8)
    assert rle_encode(mask) == "2x2:2,1,1"
    np.testing.assert_array_equal(rle_decode("2x2:2,1,1"), mask)


def test_all_ones_starts_with_zero_run():
    mask = np.ones((2, 3), dtype=np.uint8)
    assert rle_encode(mask) == "2x3:0,6"


@pytest.mark.parametrize("seed", range(8))
def test_round_trip_random(seed):
    rng = np.random.default_rng(seed)
    mask = (rng.random((rng.integers(1, 20), rng.integers(1, 20))) > 0.5).astype(np.uint8)
    np.testing.assert_array_equal(rle_decode(rle_encode(mask)), mask)


def test_decode_rejects_bad_total():
    with pytest.raises(ValidationError, match="sum"):
        rle_decode("2x2:1,1")


def test_decode_rejects_garbage():
    with pytest.raises(ValidationError, match="malformed"):
        rle_decode("not an rle")


def test_encode_rejects_non_binary():
    with pytest.raises(ValidationError, match="binary"):
        rle_encode(np.array([[0, 2]]))


class TestMaskIoU:
    def test_identical(self):
        m = np.eye(4, dtype=np.uint8)
        assert mask_iou(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4), dtype=np.uint8)
        a[0] = 1
        b = np.zeros((4, 4), dtype=np.uint8)
        b[3] = 1
        assert mask_iou(a, b) == 0.0

    def test_half_overlap(self):
        a = np.zeros((2, 2), dtype=np.uint8)
        a[:, 0] = 1
        b = np.ones((2, 2), dtype=np.uint8)
        assert mask_iou(a, b) == pytest.approx(0.5)

    def test_both_empty(self):
        z = np.zeros((3, 3), dtype=np.uint8)
        assert mask_iou(z, z) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError, match="differ"):
            mask_iou(np.zeros((2, 2)), np.zeros((3, 3)))


class TestResize:
    def test_upscale_2x2_to_4x4(self):
        m = np.array([[1, 0], [0, 1]], dtype=np.uint8)
        out = resize_nearest(m, (4, 4))
        expected = np.array([
            [1, 1, 0, 0],
            [1, 1, 0, 0],
            [0, 0, 1, 1],
            [0, 0, 1, 1],
        ])
        np.testing.assert_array_equal(out, expected)

    def test_identity(self):
        m = (np.arange(9).reshape(3, 3) % 2).astype(np.uint8)
        np.testing.assert_array_equal(resize_nearest(m, (3, 3)), m)


def test_shape_vector_mean():
    ones = np.ones((4, 4), dtype=np.uint8)
    zeros = np.zeros((4, 4), dtype=np.uint8)
    vec = shape_vector([ones, zeros], (4, 4))
    np.testing.assert_array_equal(vec, np.full(16, 0.5))


def test_shape_vector_empty_rejected():
    with pytest.raises(ValidationError, match="no masks"):
        shape_vector([], (4, 4))
