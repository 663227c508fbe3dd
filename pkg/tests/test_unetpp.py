import numpy as np
import pytest

import mixnoise.diffkit as dk
from mixnoise.unetpp import (
    CheckpointError,
    TrainingError,
    UnetConfig,
    UnetSeparator,
    build_network,
    forward,
    head_outputs,
    load_checkpoint,
    predict,
    save_checkpoint,
    separate_and_cancel,
    train,
    training_loss,
)

SMALL = UnetConfig(backbone_channels=(4, 8, 12, 16, 20, 24), length=32, head_hidden=16)


def _count_oracle(ch, cin=2, K=3, convs=3, L=256, mix=8, hidden=None, out=2, skip=True):
    # Walk the nested grid independently of the implementation.
    depth = len(ch)
    hidden = hidden or 2 * L * 2
    total = 0
    for j in range(depth):
        for i in range(depth - j):
            if j == 0:
                c = cin if i == 0 else ch[i - 1]
            else:
                c = j * ch[i] + ch[i + 1]
            for _ in range(convs):
                total += ch[i] * c * K + ch[i]
                c = ch[i]
    heads = depth - 1
    total += heads * (mix * ch[0] + mix)
    if skip:
        total += heads * (out * mix + out)
    total += hidden * mix * L + hidden
    total += out * L * hidden + out * L
    return total


DEFAULT_PARAMETER_COUNT = 4_267_026  # frozen from the oracle above


class TestArchitecture:
    def test_default_parameter_count(self):
        assert _count_oracle((16, 32, 60, 96, 144, 256)) == DEFAULT_PARAMETER_COUNT
        assert build_network(UnetConfig()).n_parameters() == DEFAULT_PARAMETER_COUNT

    def test_small_parameter_count(self):
        assert build_network(SMALL).n_parameters() == _count_oracle(SMALL.backbone_channels, L=32, hidden=16)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            UnetConfig(backbone_channels=(8, 4, 12))
        with pytest.raises(ValueError):
            UnetConfig(length=100)
        with pytest.raises(ValueError):
            UnetConfig(kernel=4)
        with pytest.raises(ValueError):
            UnetConfig(ds_reduce="max")

    def test_forward_shapes(self, rng):
        net = build_network(SMALL, seed=1)
        x = rng.standard_normal((3, 2, 32)).astype(np.float32)
        assert forward(net, x).shape == (3, 2, 32)
        assert forward(net, x[0]).shape == (2, 32)
        assert len(head_outputs(net, x)) == 5
        with pytest.raises(ValueError):
            forward(net, np.zeros((2, 64), dtype=np.float32))

    def test_default_forward_shape_and_zero_input(self):
        net = build_network(UnetConfig(), seed=0)
        out = forward(net, np.zeros((2, 256), dtype=np.float32)).data
        assert out.shape == (2, 256)
        assert np.all(np.isfinite(out))

    def test_single_head_variant(self, rng):
        cfg = UnetConfig(backbone_channels=(4, 8, 12), length=32, head_hidden=8, deep_supervision=False)
        net = build_network(cfg)
        assert len(head_outputs(net, rng.standard_normal((2, 32)))) == 1

    def test_eval_deterministic_and_train_stochastic(self, rng):
        net = build_network(SMALL, seed=2)
        x = rng.standard_normal((2, 2, 32)).astype(np.float32)
        np.testing.assert_array_equal(forward(net, x).data, forward(net, x).data)
        a = forward(net, x, training=True, rng=1).data
        b = forward(net, x, training=True, rng=2).data
        assert not np.array_equal(a, b)

    def test_seeded_build(self):
        a, b = build_network(SMALL, seed=5), build_network(SMALL, seed=5)
        for k in a.params:
            assert np.array_equal(a.params[k].data, b.params[k].data)

    def test_untrained_loss_finite(self, rng):
        net = build_network(SMALL)
        x = rng.standard_normal((2, 2, 32)).astype(np.float32)
        assert np.isfinite(float(training_loss(net, x, x, rng=0).data))


class TestTraining:
    def _data(self, rng, n=40):
        S = np.sign(rng.standard_normal((n, 2, 32))).astype(np.float32) * np.float32(0.7)
        Y = S + 0.3 * rng.standard_normal(S.shape).astype(np.float32)
        return Y, S

    def test_loss_decreases(self, rng):
        Y, S = self._data(rng)
        net, curve = train(build_network(SMALL, seed=0), Y, S, epochs=8, batch=10, seed=0, lr=3e-3)
        assert len(curve) == 8
        assert curve[-1] < curve[0]
        assert net.meta["epochs"] == 8

    def test_shape_mismatch(self, rng):
        Y, S = self._data(rng, 4)
        with pytest.raises(TrainingError):
            train(build_network(SMALL), Y, S[:, :, :16], epochs=1)

    def test_nonfinite_loss(self, rng):
        Y, S = self._data(rng, 4)
        net = build_network(SMALL)
        net.params["head.fc2.b"].data[:] = np.inf
        with pytest.raises(TrainingError):
            train(net, Y, S, epochs=1)

    def test_zero_output_means_noise_is_received(self, rng):
        net = build_network(SMALL)
        for p in net.parameters():
            p.data[...] = 0
        y = rng.standard_normal((2, 32)).astype(np.float32)
        np.testing.assert_array_equal(separate_and_cancel(net, y), y)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path, rng):
        net = build_network(SMALL, seed=3)
        net.meta = {"epochs": 7, "final_loss": 0.25}
        path = tmp_path / "m.unpp"
        save_checkpoint(net, path)
        back = load_checkpoint(path)
        assert back.cfg == SMALL
        assert back.meta == {"epochs": 7, "final_loss": 0.25}
        x = rng.standard_normal((2, 2, 32)).astype(np.float32)
        np.testing.assert_array_equal(predict(net, x), predict(back, x))

    def test_fingerprint_mismatch(self, tmp_path):
        path = tmp_path / "m.unpp"
        save_checkpoint(build_network(SMALL), path)
        other = UnetConfig(backbone_channels=(4, 8, 12, 16, 20, 28), length=32, head_hidden=16)
        with pytest.raises(CheckpointError, match="fingerprint"):
            load_checkpoint(path, other)

    def test_mu_is_not_architecture(self, tmp_path):
        path = tmp_path / "m.unpp"
        save_checkpoint(build_network(SMALL), path)
        load_checkpoint(path, UnetConfig(backbone_channels=SMALL.backbone_channels, length=32, head_hidden=16, mu=0.1))

    @pytest.mark.parametrize("damage", ["truncate", "magic", "trailing"])
    def test_corruption(self, tmp_path, damage):
        path = tmp_path / "m.unpp"
        save_checkpoint(build_network(SMALL), path)
        raw = path.read_bytes()
        raw = {"truncate": raw[:-10], "magic": b"XXXX" + raw[4:], "trailing": raw + b"\0"}[damage]
        path.write_bytes(raw)
        with pytest.raises(CheckpointError, match="corrupt"):
            load_checkpoint(path)


class TestSeparator:
    def test_estimator_api(self, tmp_path, rng):
        sep = UnetSeparator(backbone_channels=(4, 8, 12), epochs=2, batch_size=8)
        params = sep.get_params()
        assert params["epochs"] == 2 and params["backbone_channels"] == (4, 8, 12)
        Y = rng.standard_normal((8, 2, 32)).astype(np.float32)
        S = np.clip(Y, -1, 1)
        sep.fit(Y, S)
        assert len(sep.loss_curve_) == 2
        np.testing.assert_allclose(sep.transform(Y), Y - sep.predict(Y), atol=1e-6)
        path = tmp_path / "sep.unpp"
        save_checkpoint(sep.network_, path)
        again = UnetSeparator.from_checkpoint(path)
        np.testing.assert_array_equal(again.predict(Y), sep.predict(Y))

    def test_unfitted(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            UnetSeparator().predict(np.zeros((2, 32)))


def test_small_network_gradient_in_float64():
    net = build_network(SMALL, seed=0, dtype=np.float64)
    cfg = SMALL
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 2, 32))
    s = rng.standard_normal((2, 2, 32))
    err = dk.directional_check(lambda: training_loss(net, x, s, training=False), net.parameters())
    assert err <= 1e-3, cfg
