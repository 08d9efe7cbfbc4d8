import numpy as np
import pytest
from PIL import Image

from subseg import isolate
from subseg.errors import DataError


def save_gray(path, arr):
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path)


def test_load_mask_all_white(tmp_path):
    p = tmp_path / "m.png"
    save_gray(p, np.full((4, 6), 255))
    assert isolate.load_mask(p).all()


def test_load_mask_all_black(tmp_path):
    p = tmp_path / "m.png"
    save_gray(p, np.zeros((4, 6)))
    mask = isolate.load_mask(p)
    assert not mask.any()
    assert mask.shape == (4, 6)


def test_load_mask_checker(tmp_path):
    yy, xx = np.mgrid[0:4, 0:4]
    checker = ((xx + yy) % 2) * 255
    p = tmp_path / "m.png"
    save_gray(p, checker)
    assert (isolate.load_mask(p) == (checker > 127)).all()


def test_load_mask_threshold_at_127(tmp_path):
    p = tmp_path / "m.png"
    save_gray(p, np.array([[127, 128]]))
    assert isolate.load_mask(p).tolist() == [[False, True]]


def test_load_mask_rejects_rgb(tmp_path):
    p = tmp_path / "m.png"
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8), mode="RGB").save(p)
    with pytest.raises(DataError):
        isolate.load_mask(p)


def test_load_mask_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        isolate.load_mask(tmp_path / "absent.png")


def test_load_mask_dimension_pairing(tmp_path):
    p = tmp_path / "m.png"
    save_gray(p, np.zeros((4, 6)))
    with pytest.raises(DataError):
        isolate.load_mask(p, expect_shape=(6, 4))


# --- threshold_segment -------------------------------------------------------


def white_image(h=20, w=20):
    return np.full((h, w, 3), 255, dtype=np.uint8)


def test_uniform_image_has_no_foreground():
    with pytest.raises(DataError, match="no foreground"):
        isolate.threshold_segment(white_image(), 30)


def test_dark_rectangle_is_recovered_exactly():
    img = white_image(30, 40)
    img[10:20, 5:25] = (40, 40, 40)
    mask = isolate.threshold_segment(img, 30)
    expected = np.zeros((30, 40), dtype=bool)
    expected[10:20, 5:25] = True
    assert (mask == expected).all()
    assert mask.sum() == 10 * 20


def test_largest_of_two_blobs_survives():
    img = white_image(30, 30)
    img[2:6, 2:6] = (0, 0, 0)      # 16 px
    img[10:25, 10:25] = (0, 0, 0)  # 225 px
    mask = isolate.threshold_segment(img, 30)
    assert mask[12, 12] and not mask[3, 3]
    assert mask.sum() == 225


def test_single_connected_component_property(rng):
    from scipy import ndimage

    for _ in range(5):
        img = white_image(24, 24)
        n_blobs = rng.integers(1, 4)
        for _ in range(n_blobs):
            y, x = rng.integers(2, 18, size=2)
            img[y : y + rng.integers(2, 6), x : x + rng.integers(2, 6)] = (10, 10, 10)
        mask = isolate.threshold_segment(img, 30)
        structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
        _, count = ndimage.label(mask, structure=structure)
        assert count == 1


# --- apply_mask ---------------------------------------------------------------


def test_apply_mask_identity():
    img = np.arange(4 * 4 * 3, dtype=np.uint8).reshape(4, 4, 3)
    out = isolate.apply_mask(img, np.ones((4, 4), dtype=bool))
    assert (out == img).all()


def test_apply_mask_all_false_fills():
    img = np.arange(4 * 4 * 3, dtype=np.uint8).reshape(4, 4, 3)
    out = isolate.apply_mask(img, np.zeros((4, 4), dtype=bool), fill=(9, 8, 7))
    assert (out == np.array([9, 8, 7], dtype=np.uint8)).all()


def test_apply_mask_half():
    img = np.full((4, 8, 3), 5, dtype=np.uint8)
    mask = np.zeros((4, 8), dtype=bool)
    mask[:, :4] = True
    out = isolate.apply_mask(img, mask)
    assert (out[:, :4] == 5).all()
    assert (out[:, 4:] == 255).all()


def test_apply_mask_idempotent(rng):
    img = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
    mask = rng.random((6, 6)) > 0.5
    once = isolate.apply_mask(img, mask)
    twice = isolate.apply_mask(once, mask)
    assert (once == twice).all()


def test_apply_mask_dimension_mismatch():
    with pytest.raises(DataError):
        isolate.apply_mask(np.zeros((4, 4, 3), dtype=np.uint8), np.ones((3, 4), dtype=bool))
