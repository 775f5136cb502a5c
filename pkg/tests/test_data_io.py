"""Image loading, preprocessing, dataset folders, label files."""

import numpy as np
import pytest
from PIL import Image

from rgbdsal import data
from rgbdsal.data import DataError


def _write_rgb(path, arr_u8):
    Image.fromarray(arr_u8, mode="RGB").save(path)


def _write_gray(path, arr_u8):
    Image.fromarray(arr_u8, mode="L").save(path)


def _write_depth16(path, arr_u16):
    im = Image.new("I;16", (arr_u16.shape[1], arr_u16.shape[0]))
    im.frombytes(arr_u16.astype("<u2").tobytes())
    im.save(path)


def test_load_rgb_scales_to_unit_range(tmp_path):
    arr = np.zeros((4, 6, 3), dtype=np.uint8)
    arr[..., 0] = 255
    arr[..., 1] = 51
    _write_rgb(tmp_path / "a.png", arr)
    out = data.load_rgb(tmp_path / "a.png")
    assert out.shape == (4, 6, 3)
    assert np.all(out[..., 0] == 1.0)
    assert np.allclose(out[..., 1], 51 / 255)
    assert np.all(out[..., 2] == 0.0)


def test_load_depth_preserves_16bit_values(tmp_path):
    arr = np.array([[500, 1500], [900, 65535]], dtype=np.uint16)
    _write_depth16(tmp_path / "d.png", arr)
    out = data.load_depth(tmp_path / "d.png")
    assert out.shape == (2, 2)
    assert np.array_equal(out, arr.astype(np.float64))


def test_load_depth_8bit_converts_to_grayscale(tmp_path):
    arr = np.array([[0, 128], [255, 10]], dtype=np.uint8)
    _write_gray(tmp_path / "d.png", arr)
    out = data.load_depth(tmp_path / "d.png")
    assert np.array_equal(out, arr.astype(np.float64))


def test_load_gt_and_binarize_thresholds_mid_gray(tmp_path):
    arr = np.array([[0, 128], [255, 127]], dtype=np.uint8)
    _write_gray(tmp_path / "g.png", arr)
    gt = data.load_gt(tmp_path / "g.png")
    assert gt[0, 0] == 0.0 and gt[1, 0] == 1.0
    # 128/255 = 0.502 lands on the foreground side, 127/255 below
    binary = data.binarize_gt(gt)
    assert np.array_equal(binary, [[0.0, 1.0], [1.0, 0.0]])


def test_load_missing_file_is_a_data_error(tmp_path):
    with pytest.raises(DataError):
        data.load_rgb(tmp_path / "nope.png")


def test_normalize_depth_is_min_max():
    d = np.array([[500.0, 1500.0], [1000.0, 750.0]])
    out = data.normalize_depth(d)
    assert out.min() == 0.0 and out.max() == 1.0
    assert out[1, 0] == 0.5


def test_normalize_constant_depth_warns_and_zeroes():
    with pytest.warns(UserWarning):
        out = data.normalize_depth(np.full((3, 3), 7.0))
    assert np.all(out == 0.0)


def test_resize_plane_identity_when_sizes_match(rng):
    arr = rng.uniform(size=(5, 7))
    assert np.array_equal(data.resize_plane(arr, 5, 7), arr)


def test_resize_plane_halving_averages_2x2_blocks(rng):
    arr = rng.uniform(size=(4, 4))
    out = data.resize_plane(arr, 2, 2)
    # half-pixel centers land exactly between sample pairs
    expect = arr.reshape(2, 2, 2, 2).mean(axis=(1, 3))
    assert np.allclose(out, expect, atol=1e-12)


def test_resize_nearest_doubling_repeats_blocks():
    arr = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = data.resize_nearest(arr, 4, 4)
    assert np.array_equal(out, np.kron(arr, np.ones((2, 2))))


def test_standardize_uses_channel_constants():
    out = data.standardize(np.zeros((3, 2, 2)))
    for c in range(3):
        assert np.allclose(out[c], -data.RGB_MEAN[c] / data.RGB_STD[c])


def test_preprocess_depth_replicates_channels(rng):
    depth = rng.uniform(400.0, 1200.0, size=(10, 12))
    out = data.preprocess_depth(depth, 8)
    assert out.shape == (3, 8, 8)
    # same normalized plane under each channel's standardization
    plane = data.normalize_depth(data.resize_plane(depth, 8, 8))
    for c in range(3):
        assert np.allclose(out[c] * data.RGB_STD[c] + data.RGB_MEAN[c], plane)


def test_preprocess_gt_is_binary_with_channel_axis(rng):
    gt = (rng.uniform(size=(9, 9)) > 0.5).astype(np.float64)
    out = data.preprocess_gt(gt, 4)
    assert out.shape == (1, 4, 4)
    assert set(np.unique(out)) <= {0.0, 1.0}


def test_save_map_roundtrip_within_half_step(tmp_path, rng):
    sal = rng.uniform(size=(6, 6))
    sal[0, 0], sal[0, 1] = 0.0, 1.0
    data.save_map(tmp_path / "m.png", sal)
    back = data.load_map(tmp_path / "m.png")
    assert np.max(np.abs(back - sal)) <= 0.5 / 255 + 1e-12
    assert back[0, 0] == 0.0 and back[0, 1] == 1.0


def test_save_map_rejects_wrong_rank():
    with pytest.raises(DataError):
        data.save_map("/tmp/never-written.png", np.zeros((1, 4, 4)))


def _make_folder(root, stems, skip_depth=(), skip_gt=()):
    for sub in ("RGB", "depth", "GT"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for stem in stems:
        _write_rgb(root / "RGB" / f"{stem}.png", np.zeros((6, 6, 3), dtype=np.uint8))
        if stem not in skip_depth:
            ramp = (np.arange(36, dtype=np.uint8) * 4).reshape(6, 6)
            _write_gray(root / "depth" / f"{stem}.png", ramp)
        if stem not in skip_gt:
            _write_gray(root / "GT" / f"{stem}.png", np.full((6, 6), 255, dtype=np.uint8))


def test_pair_folder_lists_sorted_ids(tmp_path):
    _make_folder(tmp_path, ["b", "a", "c"])
    folder = data.PairFolder(tmp_path)
    assert folder.ids() == ["a", "b", "c"]
    assert len(folder) == 3


def test_pair_folder_names_missing_depth(tmp_path):
    _make_folder(tmp_path, ["a", "b"], skip_depth={"b"})
    with pytest.raises(DataError, match="pair b.*depth"):
        data.PairFolder(tmp_path)


def test_pair_folder_gt_optional_when_not_required(tmp_path):
    _make_folder(tmp_path, ["a"], skip_gt={"a"})
    folder = data.PairFolder(tmp_path, require_gt=False)
    raw = folder.load_raw(0)
    assert "gt" not in raw
    with pytest.raises(DataError, match="annotation"):
        data.PairFolder(tmp_path)


def test_pair_folder_load_preprocesses_to_size(tmp_path):
    _make_folder(tmp_path, ["a"])
    sample = data.PairFolder(tmp_path).load(0, 16)
    assert sample["rgb"].shape == (3, 16, 16)
    assert sample["depth"].shape == (3, 16, 16)
    assert sample["gt"].shape == (1, 16, 16)
    assert sample["native_hw"] == (6, 6)


def test_pair_folder_empty_rgb_dir_errors(tmp_path):
    for sub in ("RGB", "depth", "GT"):
        (tmp_path / sub).mkdir()
    with pytest.raises(DataError, match="no images"):
        data.PairFolder(tmp_path)


def test_labels_roundtrip(tmp_path):
    rows = [("a", 0.001, 1), ("b", 0.0195, 1), ("c", 0.021, 0), ("d", 0.4, 0)]
    path = tmp_path / "labels.tsv"
    data.write_labels(path, rows)
    back = data.read_labels(path)
    assert back == {
        "a": (0.001, 1),
        "b": (0.0195, 1),
        "c": (0.021, 0),
        "d": (0.4, 0),
    }


def test_labels_malformed_line_names_lineno(tmp_path):
    path = tmp_path / "labels.tsv"
    path.write_text("a\t0.1\t1\nbroken line\n")
    with pytest.raises(DataError, match=":2"):
        data.read_labels(path)
