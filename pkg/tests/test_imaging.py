import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from imrkpm import imaging, synthetic
from imrkpm.errors import DegenerateInputError, ImageFormatError, ParameterError


def brute_otsu(pixels):
    """Direct two-class variance scan over raw pixel values."""
    pixels = np.asarray(pixels, dtype=float)
    best, best_t = -1.0, None
    for t in range(256):
        lo, hi = pixels[pixels < t], pixels[pixels >= t]
        if lo.size == 0 or hi.size == 0:
            continue
        w0, w1 = lo.size / pixels.size, hi.size / pixels.size
        var = w0 * w1 * (lo.mean() - hi.mean()) ** 2
        if var > best * (1 + 1e-12):
            best, best_t = var, t
    return best_t


def hist_of(values, counts):
    h = np.zeros(256, dtype=np.int64)
    for v, c in zip(values, counts):
        h[v] += c
    return h


def write_pgm_ascii(path, rows):
    h, w = len(rows), len(rows[0])
    body = "\n".join(" ".join(str(v) for v in r) for r in rows)
    path.write_text(f"P2\n{w} {h}\n255\n{body}\n")


class TestLoadImage:
    def test_two_by_two_pgm(self, tmp_path):
        p = tmp_path / "a.pgm"
        write_pgm_ascii(p, [[0, 255], [255, 0]])
        img = imaging.load_image(p, pixel_size=1.0)
        assert (img.width, img.height) == (2, 2)
        assert img.intensities.size == 4
        assert img.centroid(0, 0) == (0.5, 0.5)
        # bottom row is stored first: file row 2 is [255, 0]
        assert img.intensities[0, 0] == 255 and img.intensities[0, 1] == 0

    def test_binary_pgm_roundtrip(self, tmp_path):
        img, _, _ = synthetic.circle_image(20, 5.0)
        p = tmp_path / "c.pgm"
        imaging.save_pgm(p, img)
        back = imaging.load_image(p, pixel_size=img.pixel_size)
        np.testing.assert_array_equal(back.intensities, img.intensities)

    def test_png(self, tmp_path):
        arr = np.arange(30 * 30, dtype=np.uint8).reshape(30, 30)
        p = tmp_path / "roi.png"
        Image.fromarray(arr, mode="L").save(p)
        img = imaging.load_image(p)
        assert img.intensities.size == 900
        assert img.pixel_size == 0.008
        np.testing.assert_array_equal(img.intensities, arr[::-1])

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.pgm"
        p.write_bytes(b"")
        with pytest.raises(ImageFormatError):
            imaging.load_image(p)

    def test_color_png_rejected(self, tmp_path):
        p = tmp_path / "rgb.png"
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8), mode="RGB").save(p)
        with pytest.raises(ImageFormatError, match="grayscale"):
            imaging.load_image(p)

    def test_16bit_png_rejected(self, tmp_path):
        p = tmp_path / "deep.png"
        Image.fromarray(np.full((4, 4), 1000, dtype=np.uint16)).save(p)
        with pytest.raises(ImageFormatError):
            imaging.load_image(p)

    def test_garbage_rejected(self, tmp_path):
        p = tmp_path / "junk.pgm"
        p.write_bytes(b"not an image at all")
        with pytest.raises(ImageFormatError):
            imaging.load_image(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            imaging.load_image(tmp_path / "nope.pgm")


class TestImageGrid:
    def test_invalid(self):
        with pytest.raises(ParameterError):
            imaging.ImageGrid(np.zeros((2, 2)), pixel_size=0.0)
        with pytest.raises(ParameterError):
            imaging.ImageGrid(np.full((2, 2), 300))
        with pytest.raises(ParameterError):
            imaging.ImageGrid(np.zeros((0, 3)))

    def test_immutable(self):
        img = imaging.ImageGrid(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            img.intensities[0, 0] = 1

    @given(
        i=st.integers(0, 499), j=st.integers(0, 499),
        ps=st.floats(1e-4, 10.0), ox=st.floats(-100, 100), oy=st.floats(-100, 100),
    )
    def test_centroid_index_roundtrip(self, i, j, ps, ox, oy):
        img = imaging.ImageGrid(np.zeros((500, 500)), pixel_size=ps, origin=(ox, oy))
        x, y = img.centroid(i, j)
        assert img.index_of(x, y) == (i, j)

    def test_centroids_match_formula(self):
        img = imaging.ImageGrid(np.zeros((3, 4)), pixel_size=0.5, origin=(1.0, -2.0))
        c = img.centroids()
        assert c.shape == (12, 2)
        np.testing.assert_allclose(c[0], (1.25, -1.75))
        np.testing.assert_allclose(c[5], img.centroid(1, 1))


class TestOtsu:
    def test_two_spikes(self):
        t = imaging.otsu_threshold(hist_of([50, 200], [100, 100]))
        assert 50 < t <= 200
        assert t == brute_otsu([50] * 100 + [200] * 100)

    def test_single_spike_degenerate(self):
        with pytest.raises(DegenerateInputError):
            imaging.otsu_threshold(hist_of([128], [1000]))

    def test_all_zero_degenerate(self):
        with pytest.raises(DegenerateInputError):
            imaging.otsu_threshold(np.zeros(256))

    def test_bad_shape(self):
        with pytest.raises(ParameterError):
            imaging.otsu_threshold(np.ones(10))

    def test_bimodal_gaussian(self):
        v = np.arange(256)
        h = np.round(1000 * (np.exp(-((v - 60) ** 2) / 800) + np.exp(-((v - 190) ** 2) / 800))).astype(int)
        t = imaging.otsu_threshold(h)
        assert 100 <= t <= 150

    def test_matches_brute_force(self, rng):
        for _ in range(5):
            px = np.concatenate([rng.normal(70, 15, 300), rng.normal(180, 25, 200)])
            px = np.clip(np.round(px), 0, 255).astype(int)
            assert imaging.otsu_threshold(np.bincount(px, minlength=256)) == brute_otsu(px)

    @given(st.lists(st.integers(0, 255), min_size=2, max_size=60, unique=True), st.integers(2, 50))
    def test_scaling_invariance(self, levels, k):
        h = hist_of(levels, range(1, len(levels) + 1))
        assert imaging.otsu_threshold(h) == imaging.otsu_threshold(k * h)

    @given(st.lists(st.integers(0, 255), min_size=2, max_size=200))
    def test_relabel_reproduces_partition(self, px):
        px = np.array(px)
        if np.unique(px).size < 2:
            return
        t = imaging.otsu_threshold(np.bincount(px, minlength=256))
        img = imaging.ImageGrid(px.reshape(1, -1))
        lab = imaging.label_pixels(img, t)
        assert 0 < lab.n_matrix < px.size
        np.testing.assert_array_equal(lab.labels.ravel() == imaging.MATRIX, px < t)


class TestLabels:
    def test_pair(self):
        lab = imaging.label_pixels(imaging.ImageGrid(np.array([[0, 255]])), 128)
        np.testing.assert_array_equal(lab.labels, [[1, -1]])

    def test_single_phase(self):
        lab = imaging.label_pixels(imaging.ImageGrid(np.full((3, 3), 10)), 128)
        assert lab.n_matrix == 9 and lab.n_inclusion == 0

    def test_checkerboard(self):
        img = synthetic.checkerboard_image(4, 1)
        t = imaging.otsu_threshold(img.histogram())
        lab = imaging.label_pixels(img, t).labels
        assert np.all(lab[:, 1:] == -lab[:, :-1])
        assert np.all(lab[1:, :] == -lab[:-1, :])

    def test_bad_threshold(self):
        with pytest.raises(ParameterError):
            imaging.label_pixels(imaging.ImageGrid(np.zeros((1, 1))), 300)

    def test_csv_roundtrip(self, tmp_path):
        img, _, _ = synthetic.circle_image(12, 3.0, pixel_size=0.008)
        lab = imaging.label_pixels(img, imaging.otsu_threshold(img.histogram()))
        p = tmp_path / "labels.csv"
        imaging.write_labeled_csv(p, img, lab)
        pts, y = imaging.read_labeled_csv(p)
        p0, y0 = imaging.training_data(img, lab)
        np.testing.assert_array_equal(pts, p0)
        np.testing.assert_array_equal(y, y0)
        assert p.read_text().splitlines()[0] == "x,y,label"
