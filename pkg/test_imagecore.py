import numpy as np
import pytest
from PIL import Image

from errors import (
    CorruptImageError,
    FieldError,
    FieldFormatError,
    ImageNotFoundError,
    UnsupportedFormatError,
)
from imagecore import (
    FCF_SCALAR_MAGIC,
    avg_pool,
    canny_edges,
    central_gradients,
    decode_fcf,
    encode_fcf,
    encode_png,
    laplacian,
    load_image,
    minmax_normalize,
    read_fcf1,
    resize_bilinear,
    sobel_edges,
    sobel_gradients,
    to_grayscale,
    to_uint8,
    write_fcf1,
)
from synthetic import gaussian_bump, ramp, step


def save_rgb(path, pixels):
    Image.fromarray(pixels.astype(np.uint8)).save(path)
    return path


class TestLoadImage:
    def test_png_is_scaled_to_unit_range(self, tmp_path):
        pixels = np.zeros((4, 6, 3), dtype=np.uint8)
        pixels[..., 0] = 255
        img = load_image(save_rgb(tmp_path / "red.png", pixels))
        assert img.shape == (4, 6, 3)
        assert np.all(img[..., 0] == 1.0)
        assert np.all(img[..., 1:] == 0.0)

    def test_grayscale_png_becomes_rgb(self, tmp_path):
        Image.fromarray(np.full((3, 3), 128, dtype=np.uint8)).save(tmp_path / "g.png")
        img = load_image(tmp_path / "g.png")
        assert img.shape == (3, 3, 3)
        assert np.allclose(img, 128 / 255)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ImageNotFoundError):
            load_image(tmp_path / "absent.png")
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "absent.png")

    def test_unsupported_format(self, tmp_path):
        (tmp_path / "notes.png").write_text("not an image")
        with pytest.raises(UnsupportedFormatError):
            load_image(tmp_path / "notes.png")

    def test_truncated_png_is_corrupt(self, tmp_path):
        (tmp_path / "broken.png").write_bytes(b"\x89PNG\r\n\x1a\n" + b"\x00" * 20)
        with pytest.raises(CorruptImageError):
            load_image(tmp_path / "broken.png")

    def test_single_pixel_is_rejected(self, tmp_path):
        with pytest.raises(CorruptImageError):
            load_image(save_rgb(tmp_path / "dot.png", np.zeros((1, 1, 3))))


def test_grayscale_uses_bt601_weights():
    img = np.zeros((2, 2, 3))
    img[..., 0] = 1.0
    assert np.allclose(to_grayscale(img), 0.299)
    assert np.allclose(to_grayscale(np.ones((2, 2, 3))), 1.0)


class TestResize:
    def test_same_size_is_identity_copy(self, rng):
        img = rng.random((5, 7))
        out = resize_bilinear(img, 7, 5)
        assert np.array_equal(out, img)
        assert out is not img

    def test_pixel_center_alignment(self):
        out = resize_bilinear(np.array([[0.0, 1.0]] * 2), 4, 2)
        assert np.allclose(out[0], [0.0, 0.25, 0.75, 1.0])

    def test_values_stay_in_source_range(self, rng):
        img = rng.random((13, 9))
        out = resize_bilinear(img, 31, 4)
        assert out.shape == (4, 31)
        assert out.min() >= img.min() and out.max() <= img.max()

    def test_degenerate_target(self):
        with pytest.raises(FieldError):
            resize_bilinear(np.zeros((4, 4)), 1, 4)


class TestDifferentialOperators:
    def test_central_gradients_exact_on_affine_images(self):
        rows, cols = np.mgrid[0:6, 0:8].astype(np.float64)
        fx, fy = central_gradients(2.0 * cols + 3.0 * rows)
        assert np.all(fx == 2.0)
        assert np.all(fy == 3.0)

    def test_central_gradients_need_three_samples(self):
        with pytest.raises(FieldError):
            central_gradients(np.zeros((2, 5)))

    def test_laplacian_of_impulse(self):
        f = np.zeros((5, 5))
        f[2, 2] = 1.0
        lap = laplacian(f)
        assert lap[2, 2] == -4.0
        assert lap[1, 2] == lap[3, 2] == lap[2, 1] == lap[2, 3] == 1.0
        assert lap.sum() == 0.0

    def test_laplacian_of_constant_is_zero(self):
        assert np.all(laplacian(np.full((4, 4), 0.7)) == 0.0)

    def test_laplacian_of_affine_field_is_zero_inside(self):
        rows, cols = np.mgrid[0:7, 0:9].astype(np.float64)
        for f in (ramp(9, 7), 0.3 * cols - 1.7 * rows + 2.0):
            np.testing.assert_allclose(laplacian(f)[1:-1, 1:-1], 0.0, rtol=0, atol=1e-12)

    def test_central_gradients_flip_equivariance(self, rng):
        img = rng.random((10, 13))
        fx, fy = central_gradients(img)
        flipped_x, flipped_y = central_gradients(img[:, ::-1])
        interior = (slice(1, -1), slice(1, -1))
        np.testing.assert_allclose(flipped_x[interior], -fx[:, ::-1][interior], rtol=0, atol=1e-15)
        np.testing.assert_allclose(flipped_y[interior], fy[:, ::-1][interior], rtol=0, atol=1e-15)


class TestSobel:
    def test_ramp_gives_uniform_response(self):
        gx, gy = sobel_gradients(ramp(9, 9))
        assert np.all(gx == 1.0)
        assert np.all(gy == 0.0)

    def test_ramp_edges_are_zero(self):
        assert np.all(sobel_edges(ramp(9, 9)) == 0.0)

    def test_step_edge_peaks_at_the_step(self):
        edges = sobel_edges(step(16, 8, 8))
        assert edges.max() == 1.0
        assert set(np.flatnonzero(edges[4])) == {7, 8}

    def test_adding_a_constant_changes_nothing(self, structured_images):
        for name, img in structured_images.items():
            np.testing.assert_allclose(sobel_edges(img + 0.25), sobel_edges(img), rtol=0, atol=1e-12, err_msg=name)


class TestCanny:
    def test_constant_image_has_no_edges(self):
        assert np.all(canny_edges(np.full((10, 10), 0.4)) == 0.0)

    def test_symmetric_step_gives_one_pixel_per_row(self):
        edges = canny_edges(step(32, 32, 16))
        assert set(np.unique(edges)) <= {0.0, 1.0}
        assert np.all(edges.sum(axis=1) == 1)
        assert set(np.flatnonzero(edges.any(axis=0))) <= {15, 16}

    def test_adding_a_constant_changes_nothing(self):
        img = gaussian_bump(48, 48, sigma=6.1, center=(20.3, 27.7))
        edges = canny_edges(img)
        assert edges.any()
        assert np.array_equal(canny_edges(img + 0.25), edges)

    @pytest.mark.parametrize("low, high", [(0.3, 0.1), (0.0, 0.3), (0.1, 1.5)])
    def test_invalid_thresholds(self, low, high):
        with pytest.raises(FieldError):
            canny_edges(np.zeros((8, 8)), low, high)


def test_avg_pool():
    f = np.arange(16, dtype=np.float64).reshape(4, 4)
    assert np.array_equal(avg_pool(f, 2), [[2.5, 4.5], [10.5, 12.5]])
    assert np.array_equal(avg_pool(f, 1), f)
    with pytest.raises(FieldError):
        avg_pool(np.zeros((6, 6)), 4)


def test_minmax_normalize():
    assert np.array_equal(minmax_normalize(np.array([[1.0, 3.0], [2.0, 5.0]])), [[0.0, 0.5], [0.25, 1.0]])
    assert np.all(minmax_normalize(np.full((3, 3), 9.0)) == 0.0)


@pytest.mark.parametrize("factor", [1, 2, 4, 8])
def test_avg_pool_preserves_the_mean(rng, factor):
    f = rng.normal(size=(16, 24))
    assert avg_pool(f, factor).mean() == pytest.approx(f.mean(), abs=1e-12)


def test_minmax_normalize_keeps_extreme_positions(rng):
    for _ in range(10):
        f = rng.normal(scale=50.0, size=(7, 9))
        normalized = minmax_normalize(f)
        assert 0.0 <= normalized.min() and normalized.max() <= 1.0
        assert normalized.argmax() == f.argmax()
        assert normalized.argmin() == f.argmin()


class TestRawFloatFormat:
    def test_fcf1_keeps_float32_values(self, tmp_path, rng):
        field = rng.random((5, 7))
        write_fcf1(tmp_path / "f.fcf", field)
        data = (tmp_path / "f.fcf").read_bytes()
        assert data[:4] == b"FCF1"
        assert len(data) == 16 + 4 * 35
        assert np.array_equal(read_fcf1(tmp_path / "f.fcf"), field.astype(np.float32).astype(np.float64))

    def test_short_header(self):
        with pytest.raises(FieldFormatError):
            decode_fcf(b"FCF1\x01\x00")

    def test_unknown_magic(self):
        data = encode_fcf(FCF_SCALAR_MAGIC, np.zeros((1, 2, 2)), 0)
        with pytest.raises(FieldFormatError):
            decode_fcf(b"XXXX" + data[4:])

    def test_payload_length_mismatch(self):
        data = encode_fcf(FCF_SCALAR_MAGIC, np.zeros((1, 2, 2)), 0)
        with pytest.raises(FieldFormatError):
            decode_fcf(data[:-4])

    def test_reserved_word_must_be_zero(self):
        with pytest.raises(FieldFormatError):
            decode_fcf(encode_fcf(FCF_SCALAR_MAGIC, np.zeros((1, 2, 2)), 3))


def test_png_encoding_is_deterministic(rng):
    pixels = to_uint8(rng.random((12, 12)))
    assert encode_png(pixels) == encode_png(pixels.copy())
