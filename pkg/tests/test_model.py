import numpy as np
import pytest

from sdmix import autodiff as ad
from sdmix.autodiff import Tape, finite_difference
from sdmix.model import ActivityNet, ArchError, ArchSpec, conv_extent, pool_extent

from gradcheck import REL_TOL, rel_error

# (input shape, kernel width) rows of the published architecture table
TABLE3 = [((3, 1, 151), 9), ((45, 1, 125), 9), ((27, 1, 200), 9), ((6, 1, 200), 6),
          ((9, 1, 125), 9), ((6, 1, 50), 6)]


def small_net(seed=0, C=3, L=12, cin=2, k=3, channels=(2, 3)):
    return ActivityNet.init(ArchSpec((cin, 1, L), k, channels, C), seed)


def test_init_is_deterministic():
    arch = ArchSpec((6, 1, 50), 6, (16, 32), 4)
    a, b = ActivityNet.init(arch, 11), ActivityNet.init(arch, 11)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
    c = ActivityNet.init(arch, 12)
    assert not np.array_equal(a.params["fc.weight"], c.params["fc.weight"])


def test_cross_dataset_geometry():
    arch = ArchSpec((6, 1, 50), 6, (16, 32), 4)
    assert arch.extents() == [("conv1", 45), ("pool1", 22), ("conv2", 17), ("pool2", 8)]
    net = ActivityNet.init(arch, 0)
    assert net.params["fc.weight"].shape == (4, 32 * 8)
    assert net.features(np.zeros((2, 6, 1, 50))).shape == (2, 256)


@pytest.mark.parametrize("shape,k", TABLE3)
def test_table_geometries_match_closed_form(shape, k):
    arch = ArchSpec(shape, k, (2, 3), 5)
    L = shape[2]
    expected = pool_extent(conv_extent(pool_extent(conv_extent(L, k)), k))
    net = ActivityNet.init(arch, 0)
    assert net.features(np.zeros((1,) + shape)).shape == (1, 3 * expected)
    assert net.logits(np.zeros((1,) + shape)).shape == (1, 5)


def test_impossible_geometry_rejected():
    with pytest.raises(ArchError, match="conv1"):
        ActivityNet.init(ArchSpec((1, 1, 4), 9, (2, 2), 2), 0)
    with pytest.raises(ArchError, match="pool2"):
        ActivityNet.init(ArchSpec((1, 1, 8), 3, (2, 2), 2), 0)  # 6 -> 3 -> 1 -> 0



def test_feature_input_shape_mismatch():
    net = small_net()
    with pytest.raises(ad.ShapeError, match="input shape"):
        net.features(np.zeros((1, 3, 1, 12)))


def _identity_bn(net):
    for b in (1, 2):
        net.params[f"bn{b}.scale"][:] = 1.0
        net.params[f"bn{b}.shift"][:] = 0.0
        net.buffers[f"bn{b}.running_mean"][:] = 0.0
        net.buffers[f"bn{b}.running_var"][:] = 1.0 - 1e-5


def test_zero_input_gives_zero_features():
    net = small_net()
    net.params["conv1.bias"][:] = 0
    net.params["conv2.bias"][:] = 0
    _identity_bn(net)
    assert np.array_equal(net.features(np.zeros((3, 2, 1, 12))).value, np.zeros((3, net.arch.feature_dim)))


def test_inference_features_are_batch_independent():
    net = small_net(seed=4)
    rng = np.random.default_rng(0)
    net.buffers["bn1.running_mean"] = rng.standard_normal(2)
    x = rng.standard_normal((8, 2, 1, 12))
    full = net.features(x).value
    for i in range(8):
        np.testing.assert_allclose(net.features(x[i : i + 1]).value[0], full[i], rtol=0, atol=1e-12)


def _hand_forward(net, x):
    """Loop-by-loop trace of conv -> pool -> bn(running) -> relu twice, then flatten."""
    h = x[:, 0, :]  # (cin, L)
    for b in (1, 2):
        W, bias = net.params[f"conv{b}.weight"], net.params[f"conv{b}.bias"]
        cout, cin, _, k = W.shape
        L = h.shape[1]
        conv = np.zeros((cout, L - k + 1))
        for o in range(cout):
            for t in range(L - k + 1):
                s = bias[o]
                for c in range(cin):
                    for j in range(k):
                        s += W[o, c, 0, j] * h[c, t + j]
                conv[o, t] = s
        pooled = np.array([[max(conv[o, 2 * t], conv[o, 2 * t + 1]) for t in range((conv.shape[1] - 2) // 2 + 1)]
                           for o in range(cout)])
        mu, var = net.buffers[f"bn{b}.running_mean"], net.buffers[f"bn{b}.running_var"]
        g, sh = net.params[f"bn{b}.scale"], net.params[f"bn{b}.shift"]
        normed = np.array([[(pooled[o, t] - mu[o]) / np.sqrt(var[o] + 1e-5) * g[o] + sh[o]
                            for t in range(pooled.shape[1])] for o in range(cout)])
        h = np.maximum(normed, 0.0)
    return h.reshape(-1)


def test_features_match_hand_traced_forward():
    rng = np.random.default_rng(9)
    net = ActivityNet.init(ArchSpec((1, 1, 8), 2, (2, 3), 2), 5)
    for b in (1, 2):
        c = net.params[f"bn{b}.scale"].size
        net.params[f"bn{b}.scale"] = rng.uniform(0.5, 1.5, c)
        net.params[f"bn{b}.shift"] = rng.uniform(0.0, 0.5, c)
        net.buffers[f"bn{b}.running_mean"] = rng.standard_normal(c) * 0.1
        net.buffers[f"bn{b}.running_var"] = rng.uniform(0.5, 1.5, c)
    x = rng.standard_normal((1, 1, 8))
    np.testing.assert_allclose(net.features(x[None]).value[0], _hand_forward(net, x), rtol=1e-13, atol=1e-14)


def test_logits_with_zero_classifier_weight_equal_bias():
    net = small_net()
    net.params["fc.weight"][:] = 0
    net.params["fc.bias"] = np.array([0.5, -1.0, 2.0])
    out = net.logits(np.random.default_rng(1).standard_normal((4, 2, 1, 12))).value
    np.testing.assert_array_equal(out, np.tile([0.5, -1.0, 2.0], (4, 1)))


def test_antisymmetric_classifier_gives_opposite_logits():
    net = small_net(C=2)
    w = net.params["fc.weight"][0].copy()
    net.params["fc.weight"] = np.stack([w, -w])
    net.params["fc.bias"] = np.zeros(2)
    out = net.logits(np.random.default_rng(2).standard_normal((5, 2, 1, 12))).value
    np.testing.assert_array_equal(out[:, 1], -out[:, 0])


def test_class_score_input_gradients_match_finite_differences():
    rng = np.random.default_rng(10)
    for seed in range(10):
        net = small_net(seed=seed)
        net.buffers["bn1.running_var"] = rng.uniform(0.5, 2.0, 2)
        x = rng.standard_normal((2, 1, 12))
        grads = net.class_score_input_gradients(x, [0, 1, 2])
        for c, g in enumerate(grads):
            assert g.shape == x.shape
            numeric = finite_difference(lambda v: net.logits(v[None]).value[0, c], x, 1e-5)
            assert rel_error(g, numeric) < REL_TOL


def test_class_score_gradients_repeat_and_range():
    net = small_net()
    x = np.random.default_rng(3).standard_normal((2, 1, 12))
    a, b = net.class_score_input_gradients(x, [1, 1])
    assert np.array_equal(a, b)
    with pytest.raises(IndexError):
        net.class_score_input_gradients(x, [3])


def test_batch_input_gradients_are_per_sample():
    net = small_net(seed=2)
    x = np.random.default_rng(4).standard_normal((5, 2, 1, 12))
    batched = net.batch_input_gradients(x, [0, 2])
    for i in range(5):
        single = net.class_score_input_gradients(x[i], [0, 2])
        np.testing.assert_allclose(batched[0][i], single[0], atol=1e-14)
        np.testing.assert_allclose(batched[1][i], single[1], atol=1e-14)


def test_full_network_parameter_gradients_training_mode():
    rng = np.random.default_rng(11)
    net = small_net(seed=3)
    x = rng.standard_normal((4, 2, 1, 12))
    probe = rng.standard_normal((4, 3))
    tape = Tape()
    bound = net.bind(tape)
    loss = ad.total(ad.scale(net.logits(x, training=True, bound=bound), probe))
    grads = tape.backward(loss)
    for name, t in bound.items():
        def f(v, name=name):
            saved = net.params[name]
            net.params[name] = v
            out = net.classify(net.features(x, training=True, update_stats=False)).value
            net.params[name] = saved
            return float((probe * out).sum())

        numeric = finite_difference(f, net.params[name], 1e-5)
        assert rel_error(grads[t.node_id], numeric) < REL_TOL, name


def test_training_forward_updates_running_statistics():
    net = small_net()
    before = net.buffers["bn1.running_mean"].copy()
    net.features(np.random.default_rng(0).standard_normal((4, 2, 1, 12)) + 3.0, training=True)
    assert not np.array_equal(before, net.buffers["bn1.running_mean"])


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    net = ActivityNet.init(ArchSpec((6, 1, 50), 6, (4, 5), 3), 7)
    net.buffers["bn2.running_var"] = np.random.default_rng(0).uniform(size=5)
    path = tmp_path / "m.ckpt"
    net.save(path)
    back = ActivityNet.load(path)
    assert back.arch == net.arch
    for k in net.params:
        assert np.array_equal(back.params[k], net.params[k])
    for k in net.buffers:
        assert np.array_equal(back.buffers[k], net.buffers[k])
    assert back.to_bytes() == net.to_bytes()


def test_checkpoint_rejects_garbage():
    with pytest.raises(ValueError):
        ActivityNet.from_bytes(b"not a checkpoint at all")
