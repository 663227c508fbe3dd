import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixnoise.sigmod import (
    DatasetSpec,
    build_dataset,
    constellation,
    frame_seed,
    gsnr_of,
    load_dataset,
    make_frame,
    modulate,
    read_frame,
    simulate_dataset,
    solve_noise_scales,
    stack_frames,
    write_frame,
)


class TestNoiseScales:
    @pytest.mark.parametrize(
        "alpha,lam,gsnr,expected",
        [
            (1.2, 0.1, 0.0, (1.982, 0.477)),
            (1.2, 1.0, 10.0, (0.177, 0.354)),
        ],
    )
    def test_reference_table_truths(self, alpha, lam, gsnr, expected):
        gs, gg = solve_noise_scales(alpha, lam, gsnr, es=5.0)
        assert gs == pytest.approx(expected[0], abs=1.5e-3)
        assert gg == pytest.approx(expected[1], abs=1.5e-3)

    def test_pure_impulsive_limit(self):
        gs, gg = solve_noise_scales(1.5, 0.0, 6.0, es=5.0)
        assert gg == 0.0
        assert gs**1.5 == pytest.approx(5.0 * 10 ** (-0.6) / 2)

    def test_infinite_gsnr(self):
        assert solve_noise_scales(1.5, 1.0, math.inf) == (0.0, 0.0)

    @given(
        alpha=st.floats(0.6, 2.0),
        lam=st.floats(0.0, 100.0),
        gsnr=st.floats(-10.0, 30.0),
        es=st.floats(0.1, 10.0),
    )
    def test_roundtrip(self, alpha, lam, gsnr, es):
        gs, gg = solve_noise_scales(alpha, lam, gsnr, es)
        assert gsnr_of(alpha, gs, gg, es) == pytest.approx(gsnr, abs=1e-9)
        if gs > 0:
            assert gg**2 / gs**alpha == pytest.approx(lam, rel=1e-9, abs=1e-12)


class TestModulation:
    @pytest.mark.parametrize("scheme", ["MSK", "QPSK", "QAM16"])
    def test_unit_peak(self, scheme):
        s = modulate(scheme, 64, 4, seed=0)
        assert s.shape == (2, 256)
        assert np.max(np.hypot(*s)) == pytest.approx(1.0, abs=1e-12)

    def test_qpsk_energy(self):
        s = modulate("QPSK", 4096, 4, seed=1)
        assert np.mean(s[0] ** 2 + s[1] ** 2) == pytest.approx(1.0, abs=1e-6)

    def test_qam16_levels(self):
        pts = constellation("16QAM")
        assert pts.size == 16
        levels = np.unique(np.round(pts.real * 3 * math.sqrt(2), 9))
        np.testing.assert_allclose(levels, [-3, -1, 1, 3])

    def test_msk_continuous_phase(self):
        s = modulate("MSK", 128, 4, seed=2)
        z = s[0] + 1j * s[1]
        np.testing.assert_allclose(np.abs(z), 1.0, atol=1e-12)
        steps = np.angle(z[1:] / z[:-1])
        np.testing.assert_allclose(np.abs(steps), math.pi / 8, atol=1e-12)

    def test_rectangular_pulses(self):
        s = modulate("QPSK", 32, 4, seed=3)
        blocks = s.reshape(2, 32, 4)
        assert np.all(blocks == blocks[..., :1])

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            modulate("BPSK", 32)


class TestFrames:
    def test_sum_identity_and_determinism(self):
        f = make_frame("QAM16", 1.5, 1.0, 10.0, L=128, seed=4, es=5.0)
        g = make_frame("QAM16", 1.5, 1.0, 10.0, L=128, seed=4, es=5.0)
        assert f.y.dtype == np.float32
        assert np.array_equal(f.y, f.s + f.n)
        assert np.array_equal(f.y, g.y)

    def test_infinite_gsnr_is_clean(self):
        f = make_frame("QPSK", 1.5, 1.0, math.inf, L=64, seed=1)
        assert np.array_equal(f.y, f.s)

    def test_pure_noise(self):
        f = make_frame("QPSK", 1.5, 1.0, 0.0, L=64, seed=1, signal=False)
        assert not f.s.any()
        assert np.array_equal(f.y, f.n)

    def test_length_check(self):
        with pytest.raises(ValueError):
            make_frame("QPSK", 1.5, 1.0, 0.0, L=100)

    def test_frame_seed_distinct(self):
        seeds = {frame_seed(0, c, f) for c in range(5) for f in range(50)}
        assert len(seeds) == 250

    def test_file_roundtrip(self, tmp_path):
        f = make_frame("MSK", 1.2, 0.1, 0.0, L=64, seed=8, es=5.0)
        path = tmp_path / "f.impf"
        write_frame(f, path)
        g = read_frame(path)
        assert g.scheme == "MSK"
        for a, b in ((f.s, g.s), (f.n, g.n), (f.y, g.y)):
            assert np.array_equal(a, b)

    def test_bad_file(self, tmp_path):
        path = tmp_path / "bad.impf"
        path.write_bytes(b"NOPE" + bytes(40))
        with pytest.raises(ValueError):
            read_frame(path)
        f = make_frame("QPSK", 1.2, 0.1, 0.0, L=64, seed=8)
        write_frame(f, path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(ValueError):
            read_frame(path)


class TestDataset:
    def test_build_and_load(self, tmp_path):
        spec = DatasetSpec(alphas=[1.2, 1.8], lambdas=[1.0], gsnrs=[0.0], schemes=["QPSK", "MSK"],
                           frames_per_cell=3, L=64, es=5.0, master_seed=9)
        manifest = build_dataset(spec, tmp_path)
        assert manifest.n_frames == 12
        _, frames = load_dataset(tmp_path)
        mem = simulate_dataset(spec)
        Y, S, N = stack_frames(frames)
        Ym, _, _ = stack_frames(mem)
        assert Y.shape == (12, 2, 64)
        assert np.array_equal(Y, Ym)
        assert np.array_equal(Y, S + N)

    def test_empty_grid(self, tmp_path):
        with pytest.raises(ValueError):
            build_dataset(DatasetSpec(alphas=[], lambdas=[1.0], gsnrs=[0.0]), tmp_path)
