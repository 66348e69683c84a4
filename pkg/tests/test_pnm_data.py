import numpy as np
import pytest

from mlfexplain.data import Dataset, load_dataset, synth_images, write_dataset
from mlfexplain.errors import ValidationError
from mlfexplain.pnm import quantize, read_pnm, write_label_pgm, write_pnm


def test_gray_and_color_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    gray = quantize(rng.random((5, 7)))
    color = quantize(rng.random((4, 3, 3)))
    np.testing.assert_array_equal(read_pnm(write_pnm(tmp_path / "g.pgm", gray)), gray)
    np.testing.assert_array_equal(read_pnm(write_pnm(tmp_path / "c.ppm", color)), color)


def test_ascii_formats_with_comments(tmp_path):
    (tmp_path / "a.pgm").write_bytes(b"P2\n# made by hand\n2 2\n# max\n4\n0 1\n2 4\n")
    np.testing.assert_array_equal(read_pnm(tmp_path / "a.pgm"), [[0, 0.25], [0.5, 1.0]])
    (tmp_path / "a.ppm").write_bytes(b"P3 1 1 255 255 0 51\n")
    np.testing.assert_allclose(read_pnm(tmp_path / "a.ppm"), [[[1.0, 0.0, 0.2]]])


def test_sixteen_bit_binary(tmp_path):
    data = np.array([[0, 1000], [65535, 300]], dtype=">u2")
    (tmp_path / "w.pgm").write_bytes(b"P5\n2 2\n65535\n" + data.tobytes())
    np.testing.assert_allclose(read_pnm(tmp_path / "w.pgm"), data / 65535.0)


@pytest.mark.parametrize("payload", [b"P7\n1 1\n255\n\x00", b"P5\n2 2\n255\n\x00", b"P5\n2", b"P2 1 1 255"])
def test_bad_files_rejected(tmp_path, payload):
    (tmp_path / "bad.pgm").write_bytes(payload)
    with pytest.raises(ValidationError):
        read_pnm(tmp_path / "bad.pgm")


def test_label_pgm_keeps_raw_ids(tmp_path):
    lab = np.array([[0, 1], [2, 2]])
    raw = write_label_pgm(tmp_path / "l.pgm", lab).read_bytes()
    assert raw.endswith(bytes([0, 1, 2, 2]))
    big = np.arange(600).reshape(20, 30)
    back = read_pnm(write_label_pgm(tmp_path / "b.pgm", big)) * 65535
    np.testing.assert_array_equal(np.round(back), big)


def test_synth_is_balanced_and_in_range():
    ds = synth_images(300, seed=1)
    assert np.bincount(ds.labels).tolist() == [100, 100, 100]
    assert ds.images.shape == (300, 24, 24)
    assert ds.images.min() >= 0 and ds.images.max() <= 1
    np.testing.assert_array_equal(ds.images, quantize(ds.images))


def test_synth_color_channels():
    ds = synth_images(6, seed=2, channels=3, size=10)
    assert ds.images.shape == (6, 10, 10, 3)
    assert ds.names[0].endswith(".ppm")


def test_synth_validation():
    with pytest.raises(ValidationError):
        synth_images(2, n_classes=3)
    with pytest.raises(ValidationError):
        synth_images(10, n_classes=4)


def test_noise_free_files_are_identical(tmp_path):
    a = write_dataset(synth_images(9, noise=0.0, seed=5), tmp_path / "a")
    b = write_dataset(synth_images(9, noise=0.0, seed=5), tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_dataset_round_trip_and_split(tmp_path):
    ds = synth_images(12, seed=3)
    write_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    np.testing.assert_array_equal(back.images, ds.images)
    np.testing.assert_array_equal(back.labels, ds.labels)
    train, test = back.split(0.25, seed=0)
    assert len(train) == 9 and len(test) == 3
    assert sorted(train.names + test.names) == sorted(ds.names)
    assert isinstance(test, Dataset) and test.flat.shape == (3, 576)


def test_missing_labels_file(tmp_path):
    with pytest.raises(ValidationError):
        load_dataset(tmp_path)
