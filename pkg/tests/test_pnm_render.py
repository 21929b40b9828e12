import numpy as np
import pytest

from gaanet.errors import DataError
from gaanet.metrics import Detection
from gaanet.pnm import read_pnm, read_pnm_size, write_pnm
from gaanet.render import render_detections


def rng(seed=0):
    return np.random.default_rng(seed)


class TestPNM:
    def test_gray_round_trip(self, tmp_path):
        img = rng(1).random((1, 1, 20, 30)).astype(np.float32)
        path = tmp_path / "a.pgm"
        write_pnm(path, img)
        back = read_pnm(path)
        assert back.shape == img.shape
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-6

    def test_rgb_round_trip_exact_on_quantized_values(self, tmp_path):
        quantized = (rng(2).integers(0, 256, size=(1, 3, 8, 8)) / 255.0).astype(
            np.float32
        )
        path = tmp_path / "a.ppm"
        write_pnm(path, quantized)
        np.testing.assert_allclose(read_pnm(path), quantized, atol=1e-7)

    def test_size_probe_matches_header(self, tmp_path):
        img = np.zeros((1, 3, 15, 42), dtype=np.float32)
        path = tmp_path / "s.ppm"
        write_pnm(path, img)
        assert read_pnm_size(path) == (42, 15)

    def test_comment_in_header(self, tmp_path):
        path = tmp_path / "c.pgm"
        payload = bytes(range(4))
        path.write_bytes(b"P5\n# a comment\n2 2\n255\n" + payload)
        img = read_pnm(path)
        assert img.shape == (1, 1, 2, 2)
        assert img[0, 0, 1, 1] == pytest.approx(3 / 255)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "x.pgm"
        path.write_bytes(b"P2\n2 2\n255\n0 0 0 0")
        with pytest.raises(DataError):
            read_pnm(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
        with pytest.raises(DataError):
            read_pnm(path)

    def test_sixteen_bit_rejected(self, tmp_path):
        path = tmp_path / "w.pgm"
        path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
        with pytest.raises(DataError):
            read_pnm(path)


def det(box, class_id=0, conf=0.9):
    return Detection(box=box, class_id=class_id, confidence=conf)


class TestRender:
    def test_no_detections_identical_copy(self):
        img = rng(3).random((1, 3, 32, 32)).astype(np.float32)
        out = render_detections(img, [], ["a"])
        np.testing.assert_array_equal(out, img)

    def test_full_frame_box_touches_only_border(self):
        img = rng(4).random((1, 3, 40, 40)).astype(np.float32)
        out = render_detections(img, [det((0, 0, 40, 40))], ["a"])
        np.testing.assert_array_equal(out[:, :, 2:38, 2:38], img[:, :, 2:38, 2:38])
        assert not np.array_equal(out[:, :, :2, :], img[:, :, :2, :])

    def test_deterministic_bytes(self, tmp_path):
        img = rng(5).random((1, 3, 48, 48)).astype(np.float32)
        dets = [det((8, 10, 30, 28), 1, 0.73), det((20, 22, 44, 40), 0, 0.5)]
        p1, p2 = tmp_path / "r1.ppm", tmp_path / "r2.ppm"
        write_pnm(p1, render_detections(img, dets, ["ab", "cd"]))
        write_pnm(p2, render_detections(img, dets, ["ab", "cd"]))
        assert p1.read_bytes() == p2.read_bytes()

    def test_label_drawn_above_when_room(self):
        img = np.zeros((1, 3, 64, 64), dtype=np.float32)
        out = render_detections(img, [det((10, 20, 40, 40))], ["a"])
        assert out[:, :, 10:20, 10:28].max() > 0  # label bar above the box

    def test_out_of_frame_box_clipped_with_warning(self):
        img = np.zeros((1, 3, 32, 32), dtype=np.float32)
        warnings = []
        out = render_detections(
            img, [det((-5, -5, 50, 50))], ["a"], warn=warnings.append
        )
        assert warnings
        assert out.shape == img.shape

    def test_gray_input_promoted_to_rgb(self):
        img = np.zeros((1, 1, 32, 32), dtype=np.float32)
        out = render_detections(img, [det((4, 10, 20, 26), 0)], ["a"])
        assert out.shape[1] == 3
        border = out[0, :, 11, 5]
        assert not np.allclose(border[0], border[1])  # colored, not gray
