import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import mixnoise.diffkit as dk


def _conv_oracle(x, w, b):
    # direct loop definition of zero-padded 'same' cross-correlation
    B, C, L = x.shape
    Cout, _, K = w.shape
    pad = K // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    out = np.zeros((B, Cout, L))
    for n in range(B):
        for o in range(Cout):
            for t in range(L):
                out[n, o, t] = np.sum(w[o] * xp[n, :, t : t + K]) + b[o]
    return out


class TestForward:
    @pytest.mark.parametrize("K", [1, 3, 5])
    def test_conv1d_matches_loop(self, rng, K):
        x = rng.standard_normal((2, 3, 9))
        w = rng.standard_normal((4, 3, K))
        b = rng.standard_normal(4)
        np.testing.assert_allclose(dk.conv1d(x, w, b).data, _conv_oracle(x, w, b), atol=1e-12)

    def test_conv1d_unbatched(self, rng):
        x = rng.standard_normal((3, 8))
        w = rng.standard_normal((2, 3, 3))
        b = np.zeros(2)
        assert dk.conv1d(x, w, b).shape == (2, 8)
        np.testing.assert_allclose(dk.conv1d(x, w, b).data, dk.conv1d(x[None], w, b).data[0])

    def test_conv1d_errors(self, rng):
        with pytest.raises(ValueError):
            dk.conv1d(np.ones((1, 3, 8)), np.ones((2, 4, 3)), np.zeros(2))
        with pytest.raises(ValueError):
            dk.conv1d(np.ones((1, 3, 8)), np.ones((2, 3, 2)), np.zeros(2))

    def test_downsample_pairs(self):
        x = np.array([[[1.0, 3.0, 2.0, 2.0, -1.0, -5.0]]])
        np.testing.assert_array_equal(dk.downsample_max(x).data, [[[3.0, 2.0, -1.0]]])

    def test_downsample_tie_routes_to_first(self):
        x = dk.Tensor(np.array([[[2.0, 2.0]]]), requires_grad=True)
        dk.downsample_max(x).backward(np.ones((1, 1, 1)))
        np.testing.assert_array_equal(x.grad, [[[1.0, 0.0]]])

    def test_downsample_odd(self):
        with pytest.raises(ValueError):
            dk.downsample_max(np.ones((1, 1, 3)))

    def test_upsample(self):
        np.testing.assert_array_equal(dk.upsample_dup(np.array([[1.0, 2.0]])).data, [[1, 1, 2, 2]])

    @given(arrays(np.float64, (2, 3, 8), elements=st.floats(-10, 10)))
    def test_down_up_bounds(self, x):
        up = dk.upsample_dup(dk.downsample_max(x)).data
        assert np.all(up >= x)

    def test_concat(self, rng):
        a, b = rng.standard_normal((2, 1, 4)), rng.standard_normal((2, 3, 4))
        out = dk.concat([a, b]).data
        assert out.shape == (2, 4, 4)
        np.testing.assert_array_equal(out[:, 1:], b)
        with pytest.raises(ValueError):
            dk.concat(a, np.ones((2, 1, 5)))

    def test_leaky(self):
        np.testing.assert_allclose(dk.leaky_relu(np.array([-2.0, 0.0, 3.0]), 0.01).data, [-0.02, 0, 3])

    def test_leaky_subgradient_at_zero(self):
        x = dk.Tensor(np.zeros(1), requires_grad=True)
        dk.leaky_relu(x, 0.01).backward(np.ones(1))
        assert x.grad[0] == pytest.approx(0.01)

    def test_dense(self, rng):
        x, W, b = rng.standard_normal((5, 3)), rng.standard_normal((4, 3)), rng.standard_normal(4)
        np.testing.assert_allclose(dk.dense(x, W, b).data, x @ W.T + b)
        with pytest.raises(ValueError):
            dk.dense(x, W.T, b)

    def test_dropout_modes(self, rng):
        x = rng.standard_normal((4, 100))
        assert dk.dropout(x, 0.3, training=False).data is not None
        np.testing.assert_array_equal(dk.dropout(x, 0.3, training=False).data, x)
        np.testing.assert_array_equal(dk.dropout(x, 0.0, training=True).data, x)
        with pytest.raises(ValueError):
            dk.dropout(x, 1.0)

    def test_dropout_is_unbiased(self):
        x = np.ones((1000, 100))
        out = dk.dropout(x, 0.3, training=True, rng=0).data
        assert set(np.unique(np.round(out, 12))) <= {0.0, round(1 / 0.7, 12)}
        assert out.mean() == pytest.approx(1.0, abs=0.01)

    def test_mean_of_exact_for_equal_inputs(self, rng):
        x = rng.standard_normal((3, 7)).astype(np.float32)
        assert np.array_equal(dk.mean_of([x, x, x, x, x]).data, x)

    def test_losses(self, rng):
        p, t = rng.standard_normal((2, 8)), rng.standard_normal((2, 8))
        assert float(dk.mse(p, t).data) == pytest.approx(np.mean((p - t) ** 2))
        params = [rng.standard_normal(3), rng.standard_normal((2, 2))]
        norm = np.sqrt(sum(np.sum(q**2) for q in params))
        loss = dk.nmse_l2_loss(p, t, params, mu=0.1)
        assert float(loss.data) == pytest.approx(np.mean((p - t) ** 2) + 0.1 * norm)
        with pytest.raises(ValueError):
            dk.nmse_l2_loss(p, t, mu=-1)

    def test_deep_supervision_equal_heads_reduce_to_single(self, rng):
        p, t = rng.standard_normal((2, 8)), rng.standard_normal((2, 8))
        params = [rng.standard_normal(4)]
        single = dk.nmse_l2_loss(p, t, params, mu=1e-2)
        multi = dk.deep_supervision_loss([p] * 5, t, params, mu=1e-2)
        assert float(multi.data) == float(single.data)

    def test_l2_norm_zero_subgradient(self):
        w = dk.Tensor(np.zeros(3), requires_grad=True)
        dk.l2_norm([w]).backward()
        np.testing.assert_array_equal(w.grad, 0)


class TestTape:
    def test_shared_node_accumulates(self):
        x = dk.Tensor(np.array([1.0, 2.0]), requires_grad=True)
        y = dk.add(x, x)
        dk.add(y, x).backward(np.ones(2))
        np.testing.assert_array_equal(x.grad, [3.0, 3.0])

    def test_constants_get_no_grad(self):
        x = dk.Tensor(np.ones(2))
        w = dk.Tensor(np.ones(2), requires_grad=True)
        dk.add(x, w).backward(np.ones(2))
        assert x.grad is None
        assert w.grad is not None

    def test_deep_chain_is_iterative(self):
        x = dk.Tensor(np.ones(1), requires_grad=True)
        y = x
        for _ in range(5000):
            y = dk.scale(y, 1.0)
        y.backward(np.ones(1))
        assert x.grad[0] == 1.0

    def test_dtype_preserved(self):
        x = np.ones((1, 2, 4), dtype=np.float32)
        w = np.ones((1, 2, 3), dtype=np.float32)
        assert dk.conv1d(x, w, np.zeros(1, dtype=np.float32)).dtype == np.float32


class TestAdam:
    def test_against_hand_formula(self, rng):
        p = rng.standard_normal(5)
        g1, g2 = rng.standard_normal(5), rng.standard_normal(5)
        ref = p.copy()
        m = v = 0
        for k, g in enumerate((g1, g2), start=1):
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            ref = ref - 1e-3 * (m / (1 - 0.9**k)) / (np.sqrt(v / (1 - 0.999**k)) + 1e-8)
        state = dk.AdamState()
        arr = p.copy()
        dk.adam_step([arr], [g1], state)
        dk.adam_step([arr], [g2], state)
        np.testing.assert_allclose(arr, ref, rtol=1e-12)
        assert state.step == 2

    def test_first_step_size_is_lr(self, rng):
        p = rng.standard_normal(4)
        before = p.copy()
        dk.adam_step([p], [rng.standard_normal(4) * 100], dk.AdamState(lr=0.01))
        np.testing.assert_allclose(np.abs(p - before), 0.01, rtol=1e-6)

    def test_minimizes_quadratic(self):
        w = dk.Tensor(np.array([3.0, -2.0]), requires_grad=True)
        opt = dk.Adam([w], lr=0.05)
        for _ in range(500):
            opt.zero_grad()
            dk.mse(w, np.zeros(2)).backward()
            opt.step()
        assert np.max(np.abs(w.data)) < 1e-2

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            dk.adam_step([np.ones(2)], [np.ones(3)], dk.AdamState())
