import numpy as np
import pytest
import torch

from ckmsr.model import (
    SRResNet,
    SRResNetConfig,
    analytic_parameter_count,
    build,
    count_parameters,
    load_checkpoint,
    pixel_shuffle,
    save_checkpoint,
)

TINY = SRResNetConfig(in_channels=1, feature_channels=4, num_residual_blocks=1, upscale_factor=2)


class TestConfig:
    def test_reference_defaults(self):
        cfg = SRResNetConfig.reference()
        assert (cfg.in_channels, cfg.num_residual_blocks, cfg.upscale_factor) == (3, 16, 4)

    def test_economy_defaults(self):
        cfg = SRResNetConfig.economy()
        assert (cfg.in_channels, cfg.num_residual_blocks) == (1, 5)

    @pytest.mark.parametrize("bad_factor", [1, 3, 6, 32])
    def test_factor_must_be_power_of_two_in_range(self, bad_factor):
        with pytest.raises(ValueError, match="factor"):
            SRResNetConfig(upscale_factor=bad_factor)

    def test_blocks_must_be_positive(self):
        with pytest.raises(ValueError):
            SRResNetConfig(num_residual_blocks=0)

    @pytest.mark.parametrize("k,stages", [(2, 1), (4, 2), (8, 3), (16, 4)])
    def test_upsample_stage_count(self, k, stages):
        assert SRResNetConfig(upscale_factor=k).num_upsample_stages == stages


class TestParameterCount:
    def test_reference_config_count(self):
        net = build(SRResNetConfig.reference(4), seed=0)
        assert count_parameters(net) == 1_549_462
        assert analytic_parameter_count(SRResNetConfig.reference(4)) == 1_549_462

    @pytest.mark.parametrize(
        "cfg",
        [
            SRResNetConfig.economy(4),
            TINY,
            SRResNetConfig(in_channels=1, num_residual_blocks=5, upscale_factor=8),
            SRResNetConfig(in_channels=3, feature_channels=32, num_residual_blocks=2, upscale_factor=2),
        ],
    )
    def test_analytic_formula_matches_enumeration(self, cfg):
        assert count_parameters(SRResNet(cfg)) == analytic_parameter_count(cfg)

    def test_single_conv_baseline(self):
        conv = torch.nn.Conv2d(1, 1, 3, padding=1)
        assert sum(p.numel() for p in conv.parameters()) == 10

    def test_running_stats_not_counted(self):
        net = build(TINY, seed=0)
        buffers = sum(b.numel() for b in net.buffers())
        assert buffers > 0
        assert count_parameters(net) == analytic_parameter_count(TINY)


class TestPixelShuffle:
    def test_shape_law(self):
        out = pixel_shuffle(torch.zeros(4, 2, 2), 2)
        assert tuple(out.shape) == (1, 4, 4)

    def test_definitional_arrangement(self):
        a, b, c, d = 1.0, 2.0, 3.0, 4.0
        t = torch.tensor([a, b, c, d]).reshape(4, 1, 1)
        out = pixel_shuffle(t, 2)
        assert out[0].tolist() == [[a, b], [c, d]]

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 8, 3, 5))
        r = 2
        expected = np.zeros((2, 2, 6, 10))
        for n in range(2):
            for c in range(2):
                for di in range(r):
                    for dj in range(r):
                        for i in range(3):
                            for j in range(5):
                                expected[n, c, r * i + di, r * j + dj] = x[n, c * r * r + di * r + dj, i, j]
        out = pixel_shuffle(torch.from_numpy(x), r)
        np.testing.assert_array_equal(out.numpy(), expected)

    def test_preserves_value_multiset(self):
        x = torch.arange(144.0).reshape(16, 3, 3)
        out = pixel_shuffle(x, 4)
        assert sorted(out.flatten().tolist()) == sorted(x.flatten().tolist())

    def test_indivisible_channels_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            pixel_shuffle(torch.zeros(1, 3, 2, 2), 2)


class TestForward:
    def test_shape_law_k4(self):
        net = build(SRResNetConfig(in_channels=3, num_residual_blocks=2, upscale_factor=4), seed=0)
        out = net(torch.rand(2, 3, 32, 32))
        assert tuple(out.shape) == (2, 3, 128, 128)
        assert torch.isfinite(out).all()

    def test_minimal_spatial_extent(self):
        # eval mode: batch-norm cannot take batch statistics of a 1x1 single image
        net = build(TINY, seed=0).eval()
        out = net(torch.rand(1, 1, 1, 1))
        assert tuple(out.shape) == (1, 1, 2, 2)

    def test_channel_mismatch_rejected(self):
        net = build(TINY, seed=0)
        with pytest.raises(ValueError, match="channels"):
            net(torch.rand(1, 3, 4, 4))

    def test_batch_rank_required(self):
        net = build(TINY, seed=0)
        with pytest.raises(ValueError, match="batch"):
            net(torch.rand(1, 4, 4))

    def test_zeroed_tail_gives_constant_output(self):
        net = build(TINY, seed=1)
        with torch.no_grad():
            net.tail.weight.zero_()
            net.tail.bias.zero_()
        out = net(torch.rand(2, 1, 4, 4))
        assert (out == 0).all()


def conv2d_np(x, w, b):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    out = np.zeros((n, o, h, wd))
    for ni in range(n):
        for oi in range(o):
            acc = np.zeros((h, wd))
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        acc += w[oi, ci, i, j] * xp[ni, ci, i : i + h, j : j + wd]
            out[ni, oi] = acc + b[oi]
    return out


def bn_train_np(x, gamma, beta, eps=1e-5):
    mean = x.mean(axis=(0, 2, 3), keepdims=True)
    var = x.var(axis=(0, 2, 3), keepdims=True)
    xhat = (x - mean) / np.sqrt(var + eps)
    return xhat * gamma.reshape(1, -1, 1, 1) + beta.reshape(1, -1, 1, 1)


def prelu_np(x, slope):
    return np.where(x > 0, x, float(slope[0]) * x)


def shuffle_np(x, r):
    n, c2, h, w = x.shape
    c = c2 // (r * r)
    out = np.zeros((n, c, h * r, w * r))
    for ci in range(c):
        for di in range(r):
            for dj in range(r):
                out[:, ci, di::r, dj::r] = x[:, ci * r * r + di * r + dj]
    return out


def forward_np(state, cfg, x):
    """Manual trace of the whole generator in numpy (training-mode batch norm)."""
    h = prelu_np(conv2d_np(x, state["head.0.weight"], state["head.0.bias"]), state["head.1.weight"])
    b = h
    for i in range(cfg.num_residual_blocks):
        p = f"body.{i}.body"
        y = conv2d_np(b, state[f"{p}.0.weight"], state[f"{p}.0.bias"])
        y = bn_train_np(y, state[f"{p}.1.weight"], state[f"{p}.1.bias"])
        y = prelu_np(y, state[f"{p}.2.weight"])
        y = conv2d_np(y, state[f"{p}.3.weight"], state[f"{p}.3.bias"])
        y = bn_train_np(y, state[f"{p}.4.weight"], state[f"{p}.4.bias"])
        b = b + y
    y = conv2d_np(b, state["post.0.weight"], state["post.0.bias"])
    y = bn_train_np(y, state["post.1.weight"], state["post.1.bias"])
    b = y + h
    for s in range(cfg.num_upsample_stages):
        p = f"upsample.{s}"
        b = conv2d_np(b, state[f"{p}.conv.weight"], state[f"{p}.conv.bias"])
        b = shuffle_np(b, 2)
        b = prelu_np(b, state[f"{p}.act.weight"])
    return conv2d_np(b, state["tail.weight"], state["tail.bias"])


def test_forward_matches_numpy_trace():
    net = build(TINY, seed=3).double().train()
    x = torch.rand(2, 1, 4, 4, dtype=torch.float64)
    with torch.no_grad():
        got = net(x).numpy()
    state = {k: v.numpy().astype(np.float64) for k, v in net.state_dict().items()}
    expected = forward_np(state, TINY, x.numpy())
    np.testing.assert_allclose(got, expected, rtol=1e-10, atol=1e-12)


class TestDeterminism:
    def test_same_seed_same_parameters(self):
        a = build(TINY, seed=9)
        b = build(TINY, seed=9)
        for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert ka == kb
            assert torch.equal(va, vb), ka

    def test_different_seed_different_parameters(self):
        a = build(TINY, seed=9)
        b = build(TINY, seed=10)
        assert not torch.equal(a.head[0].weight, b.head[0].weight)

    def test_same_input_same_output(self):
        net = build(TINY, seed=9).eval()
        x = torch.rand(1, 1, 4, 4)
        with torch.no_grad():
            assert torch.equal(net(x), net(x))

    def test_build_does_not_disturb_global_rng(self):
        torch.manual_seed(123)
        before = torch.rand(3)
        torch.manual_seed(123)
        build(TINY, seed=5)
        after = torch.rand(3)
        assert torch.equal(before, after)


class TestCheckpoint:
    def test_round_trip_bitwise_inference(self, tmp_path):
        net = build(TINY, seed=4)
        x = torch.rand(1, 1, 4, 4).contiguous(memory_format=torch.channels_last)
        net.eval()
        with torch.no_grad():
            ref = net(x)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(net, path, seed=4, iteration=17)
        loaded, meta = load_checkpoint(path)
        assert meta == {"seed": 4, "iteration": 17}
        assert loaded.config == TINY
        loaded.eval()
        with torch.no_grad():
            out = loaded(x)
        assert torch.equal(out, ref)

    def test_unknown_version_rejected(self, tmp_path):
        path = tmp_path / "bad.pt"
        torch.save({"format_version": 99}, path)
        with pytest.raises(ValueError, match="format version"):
            load_checkpoint(path)
