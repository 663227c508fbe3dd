import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mixnoise._validation import DegenerateInputError
from mixnoise.prep import (
    Clipper,
    GammaPoleError,
    clip,
    clip_threshold,
    flom_coeff,
    power_normalize,
)


class TestFlom:
    @pytest.mark.parametrize("p", [0.1, 0.3, 0.5, 0.9, 1.5])
    def test_gaussian_closed_form(self, p):
        # alpha=2 is N(0, 2 gamma^2): E|X|^p = 2^p Gamma((p+1)/2) / sqrt(pi).
        assert flom_coeff(p, 2.0) == pytest.approx(2**p * math.gamma((p + 1) / 2) / math.sqrt(math.pi), rel=1e-12)

    @pytest.mark.parametrize("p", [-0.5, 0.1, 0.3, 0.5, 0.9])
    def test_cauchy_closed_form(self, p):
        # alpha=1: E|X|^p = 1 / cos(p pi / 2).
        assert flom_coeff(p, 1.0) == pytest.approx(1.0 / math.cos(p * math.pi / 2), rel=1e-12)

    def test_threshold_constants(self):
        assert flom_coeff(0.5, 2.0) == pytest.approx(0.97774, abs=5e-6)
        assert flom_coeff(0.5, 0.51) == pytest.approx(40.2468, abs=5e-4)

    def test_zero_order(self):
        assert flom_coeff(0.0, 1.3) == 1.0

    def test_pole(self):
        with pytest.raises(GammaPoleError):
            flom_coeff(1.5, 1.5)

    @pytest.mark.parametrize("p,alpha", [(-1.0, 1.5), (1.6, 1.5), (2.5, 2.0)])
    def test_domain(self, p, alpha):
        with pytest.raises(ValueError):
            flom_coeff(p, alpha)

    @given(p=st.floats(0.01, 0.45), alpha=st.floats(0.5, 2.0))
    def test_positive(self, p, alpha):
        assert flom_coeff(p, alpha) > 0


def _frames(min_len=1, max_len=64):
    return st.integers(min_len, max_len).flatmap(
        lambda n: arrays(np.float64, (2, n), elements=st.floats(-1e6, 1e6))
    )


class TestClip:
    def test_threshold_formula(self, rng):
        y = rng.standard_normal((2, 256))
        mag = np.sqrt(y[0] ** 2 + y[1] ** 2)
        denom = flom_coeff(0.5, 2.0) + flom_coeff(0.5, 0.51)
        assert clip_threshold(y) == pytest.approx(4 * math.sqrt(2) * np.mean(np.sqrt(mag)) / denom + 1)

    @given(_frames(), st.floats(1e-3, 1e3))
    def test_bounded_and_idempotent(self, y, y0):
        once = clip(y, y0)
        assert np.all(np.hypot(once[0], once[1]) <= y0)
        assert np.array_equal(clip(once, y0), once)

    @given(_frames(), st.floats(1e-3, 1e3))
    def test_phase_preserved(self, y, y0):
        out = clip(y, y0)
        z, w = y[0] + 1j * y[1], out[0] + 1j * out[1]
        nz = np.abs(z) > 1e-300
        # w is a nonnegative real multiple of z
        ratio = w[nz] / z[nz]
        np.testing.assert_allclose(ratio.imag, 0, atol=1e-12)
        assert np.all(ratio.real > 0)

    def test_inliers_untouched(self, rng):
        y = rng.standard_normal((2, 100))
        out = clip(y, 1.0)
        keep = np.hypot(*y) <= 1.0
        assert np.array_equal(out[:, keep], y[:, keep])

    def test_gaussian_frames_rarely_clipped(self, rng):
        # Per-channel sigma 0.25: |y| is Rayleigh, so P(|y| > y0) = exp(-y0^2 / (2 sigma^2)).
        sigma = 0.25
        Y = sigma * rng.standard_normal((400, 2, 256))
        altered, expected = 0, 0.0
        for y in Y:
            y0 = clip_threshold(y)
            altered += int(np.sum(np.hypot(*y) > y0))
            expected += 256 * math.exp(-(y0**2) / (2 * sigma**2))
        rate = altered / Y[..., 0, :].size
        assert rate < 1e-3
        assert altered == pytest.approx(expected, abs=5 * math.sqrt(expected) + 2)

    def test_batch(self, rng):
        Y = rng.standard_cauchy((3, 2, 32))
        out = clip(Y, 2.0)
        for k in range(3):
            assert np.array_equal(out[k], clip(Y[k], 2.0))

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            clip(np.ones((2, 4)), 0.0)


class TestNormalize:
    def test_unit_rms(self, rng):
        x = 7.0 * rng.standard_normal(1000)
        z, rec = power_normalize(x)
        assert np.sqrt(np.mean(z**2)) == pytest.approx(1.0)
        np.testing.assert_allclose(z * rec.scale, x)

    def test_zero(self):
        with pytest.raises(DegenerateInputError):
            power_normalize(np.zeros(10))


class TestClipper:
    def test_estimator_api(self, rng):
        c = Clipper(threshold=1.5)
        assert c.get_params() == {"threshold": 1.5}
        Y = rng.standard_cauchy((4, 2, 32))
        np.testing.assert_array_equal(c.fit_transform(Y), clip(Y, 1.5))
        auto = Clipper().fit(Y).transform(Y)
        np.testing.assert_array_equal(auto[1], clip(Y[1], clip_threshold(Y[1])))

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            Clipper().fit(np.ones((3, 4)))
