import numpy as np
import pytest

from hqsnet.errors import ShapeError
from hqsnet.forward import (
    Measurements,
    add_noise_image,
    add_noise_kspace,
    dc_update,
    forward_model,
    load_measurements,
    save_measurements,
    zero_filled,
)
from hqsnet.numerics import fft2c, ifft2c
from hqsnet.sampling import Mask, generate_mask


@pytest.fixture(scope="module")
def mask():
    return generate_mask(32, 32, 4, 2, 0)


def full(h=16, w=16):
    return Mask(np.ones((h, w), bool), 1.0, 2, 0)


def crandn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def dc_objective(x, z, y, lam):
    r = np.where(y.mask.bits, fft2c(x), 0) - y.ksp
    return np.sum(np.abs(r) ** 2) + lam * np.sum(np.abs(z - x) ** 2)


class TestForwardModel:
    def test_full_mask_roundtrip(self, rng):
        x = rng.random((16, 16))
        y = forward_model(x, full())
        np.testing.assert_allclose(y.ksp, fft2c(x.astype(complex)), atol=0)
        assert np.max(np.abs(zero_filled(y) - x)) < 1e-10

    def test_center_only(self):
        bits = np.zeros((16, 16), bool)
        bits[8, 8] = True
        y = forward_model(np.full((16, 16), 0.3), Mask(bits, 256.0, 2, 0))
        assert y.ksp[8, 8] == pytest.approx(0.3 * 16)
        assert np.count_nonzero(y.ksp) == 1

    def test_off_mask_exact_zero(self, rng, mask):
        y = forward_model(rng.random((32, 32)), mask)
        assert np.all(y.ksp[~mask.bits] == 0)

    def test_shape_error(self, mask):
        with pytest.raises(ShapeError):
            forward_model(np.zeros((16, 32)), mask)
        with pytest.raises(ShapeError):
            Measurements(np.zeros((16, 16)), mask)

    def test_zero_filled_zero(self, mask):
        assert not zero_filled(Measurements(np.zeros((32, 32)), mask)).any()

    def test_zero_filled_oracle(self, rng, mask):
        x = rng.random((32, 32))
        y = forward_model(x, mask)
        masked = fft2c(x.astype(complex)) * mask.bits
        assert np.max(np.abs(zero_filled(y) - ifft2c(masked))) < 1e-12


class TestDCUpdate:
    def test_lambda_zero_hits_data(self, rng, mask):
        y = forward_model(rng.random((32, 32)), mask)
        out = dc_update(crandn(rng, (32, 32)), y, 0.0)
        assert np.max(np.abs(fft2c(out)[mask.bits] - y.ksp[mask.bits])) < 1e-10
        assert np.max(np.abs(dc_update(out, y, 0.0) - out)) < 1e-12

    def test_huge_lambda_keeps_z(self, rng, mask):
        y = forward_model(rng.random((32, 32)), mask)
        z = crandn(rng, (32, 32))
        assert np.max(np.abs(dc_update(z, y, 1e12) - z)) < 1e-9

    def test_off_mask_untouched(self, rng, mask):
        y = forward_model(rng.random((32, 32)), mask)
        z = crandn(rng, (32, 32))
        diff = fft2c(dc_update(z, y, 1.8)) - fft2c(z)
        assert np.max(np.abs(diff[~mask.bits])) < 1e-9

    def test_minimizer_spot_check(self, rng, mask):
        y = Measurements(crandn(rng, (32, 32)) * mask.bits, mask)
        z = crandn(rng, (32, 32))
        x = dc_update(z, y, 1.8)
        f0 = dc_objective(x, z, y, 1.8)
        for _ in range(1000):
            d = crandn(rng, (32, 32)) * 10 ** rng.uniform(-4, 0)
            assert f0 <= dc_objective(x + d, z, y, 1.8)

    @pytest.mark.parametrize("lam", [0.0, 0.5, 1.8, 100.0])
    def test_non_expansive_toward_data(self, rng, mask, lam):
        y = forward_model(rng.random((32, 32)), mask)
        z = crandn(rng, (32, 32))

        def resid(v):
            return np.linalg.norm(np.where(mask.bits, fft2c(v), 0) - y.ksp)

        assert resid(dc_update(z, y, lam)) <= resid(z) + 1e-12

    def test_negative_lambda(self, mask):
        with pytest.raises(ValueError):
            dc_update(np.zeros((32, 32)), Measurements(np.zeros((32, 32)), mask), -1.0)


class TestNoise:
    def test_sigma_zero(self, rng, mask):
        x = rng.random((32, 32))
        np.testing.assert_array_equal(add_noise_image(x, 0.0, 1), x)
        y = forward_model(x, mask)
        np.testing.assert_array_equal(add_noise_kspace(y, 0.0, 1).ksp, y.ksp)

    def test_image_noise_std(self):
        x = np.zeros((256, 256))
        s = np.std(add_noise_image(x, 0.1, 3))
        assert 0.095 <= s <= 0.105

    def test_deterministic(self, rng):
        x = rng.random((16, 16))
        np.testing.assert_array_equal(add_noise_image(x, 0.1, 5), add_noise_image(x, 0.1, 5))
        assert not np.array_equal(add_noise_image(x, 0.1, 5), add_noise_image(x, 0.1, 6))

    def test_kspace_noise_stays_on_mask(self, rng, mask):
        y = add_noise_kspace(forward_model(rng.random((32, 32)), mask), 0.2, 9)
        assert np.all(y.ksp[~mask.bits] == 0)
        assert np.all(y.ksp[mask.bits] != forward_model(np.zeros((32, 32)), mask).ksp[mask.bits])

    def test_kspace_noise_per_component(self):
        m = full(256, 256)
        y = add_noise_kspace(Measurements(np.zeros((256, 256)), m), 0.1, 2)
        assert 0.095 <= y.ksp.real.std() <= 0.105
        assert 0.095 <= y.ksp.imag.std() <= 0.105

    def test_negative_sigma(self):
        with pytest.raises(ValueError):
            add_noise_image(np.zeros((4, 4)), -0.1, 0)


def test_measurement_roundtrip(tmp_path, rng, mask):
    y = forward_model(rng.random((32, 32)), mask)
    save_measurements(tmp_path / "a", y)
    back = load_measurements(tmp_path / "a")
    assert back.mask == mask
    np.testing.assert_array_equal(back.ksp, y.ksp.astype(np.complex64))
