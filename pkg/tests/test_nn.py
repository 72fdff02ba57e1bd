import numpy as np
import pytest

from wheellab import nn
from wheellab.errors import ShapeMismatch, StaleCache

SMALL = nn.NetConfig(input_size=16, conv_channels=(4, 8, 16), head_hidden=(8, 4))


def small_model(seed=0):
    return nn.init_params(SMALL, seed=seed)


def random_batch(rng, n=4, cfg=SMALL):
    x = rng.uniform(0, 1, (n, cfg.in_channels, cfg.input_size, cfg.input_size))
    yl = rng.integers(0, 2, n).astype(float)
    yr = rng.integers(0, 2, n).astype(float)
    return x, yl, yr


def naive_forward(params, batch):
    """Independent per-element reference forward (no im2col, no einsum)."""
    cfg = params.arch
    x = np.asarray(batch, dtype=np.float64)
    for li in range(len(cfg.conv_channels)):
        w = params.values[f"conv{li}_w"]
        b = params.values[f"conv{li}_b"]
        n, c, h, wd = x.shape
        k, s, pad = cfg.kernel, cfg.stride, 1
        ho = (h + 2 * pad - k) // s + 1
        wo = (wd + 2 * pad - k) // s + 1
        xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
        xp[:, :, pad : pad + h, pad : pad + wd] = x
        out = np.zeros((n, w.shape[0], ho, wo))
        for ni in range(n):
            for f in range(w.shape[0]):
                for oi in range(ho):
                    for oj in range(wo):
                        acc = b[f]
                        for ci in range(c):
                            for ki in range(k):
                                for kj in range(k):
                                    acc += w[f, ci, ki, kj] * xp[ni, ci, oi * s + ki, oj * s + kj]
                        out[ni, f, oi, oj] = acc
        x = np.maximum(out, 0.0)
    feat = x.mean(axis=(2, 3))
    outs = {}
    n_fc = len(cfg.head_hidden) + 1
    for head in ("left", "right"):
        a = feat
        for j in range(n_fc):
            z = a @ params.values[f"{head}_fc{j}_w"].T + params.values[f"{head}_fc{j}_b"]
            a = np.maximum(z, 0.0) if j < n_fc - 1 else z
        outs[head] = 1.0 / (1.0 + np.exp(-a[:, 0]))
    return outs["left"], outs["right"]


class TestForward:
    def test_zero_weights_give_half(self):
        params = small_model()
        for k in params.values:
            params.values[k][:] = 0.0
        x = np.random.default_rng(0).uniform(0, 1, (3, 3, 16, 16))
        pl, pr, _ = nn.forward(params, x)
        assert np.all(pl == 0.5) and np.all(pr == 0.5)

    def test_identical_inputs_identical_outputs(self):
        params = small_model(1)
        one = np.random.default_rng(2).uniform(0, 1, (1, 3, 16, 16))
        batch = np.repeat(one, 5, axis=0)
        pl, pr, _ = nn.forward(params, batch)
        assert np.all(pl == pl[0]) and np.all(pr == pr[0])

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(3)
        params = small_model(4)
        x, _, _ = random_batch(rng, n=2)
        pl, pr, _ = nn.forward(params, x)
        rl, rr = naive_forward(params, x)
        np.testing.assert_allclose(pl, rl, atol=1e-10)
        np.testing.assert_allclose(pr, rr, atol=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            nn.forward(small_model(), np.zeros((2, 3, 8, 8)))


class TestBceLoss:
    def test_half_is_ln2(self):
        p = np.full(10, 0.5)
        y = np.array([0, 1] * 5, dtype=float)
        assert nn.bce_loss(p, y) == pytest.approx(np.log(2), abs=1e-12)

    def test_perfect_predictions(self):
        y = np.array([0.0, 1.0, 1.0, 0.0])
        assert nn.bce_loss(y, y) <= 1e-6

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(9)
        p = rng.uniform(0.01, 0.99, 50)
        y = rng.integers(0, 2, 50).astype(float)
        direct = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
        assert nn.bce_loss(p, y) == pytest.approx(direct, abs=1e-12)


class TestBackward:
    def test_zero_gradient_at_minimum(self):
        # Construct p = y by using labels equal to the model output.
        rng = np.random.default_rng(0)
        params = small_model(5)
        x, _, _ = random_batch(rng, n=3)
        pl, pr, cache = nn.forward(params, x)
        grads = nn.backward(params, cache, pl, pr)
        total = np.sqrt(sum(np.sum(g * g) for g in grads.values()))
        assert total <= 1e-6

    def test_finite_difference(self):
        rng = np.random.default_rng(1)
        params = small_model(6)
        x, yl, yr = random_batch(rng, n=3)
        err = nn.grad_check(params, x, yl, yr, h=1e-5, sample_frac=0.02, seed=0)
        assert err <= 1e-4

    def test_left_head_independent_of_right_labels(self):
        rng = np.random.default_rng(2)
        params = small_model(7)
        x, yl, yr = random_batch(rng, n=3)
        _, _, cache = nn.forward(params, x)
        g1 = nn.backward(params, cache, yl, yr)
        _, _, cache2 = nn.forward(params, x)
        g2 = nn.backward(params, cache2, yl, 1.0 - yr)
        for name in g1:
            if name.startswith("left_"):
                np.testing.assert_array_equal(g1[name], g2[name])

    def test_stale_cache(self):
        rng = np.random.default_rng(3)
        params = small_model(8)
        x, yl, yr = random_batch(rng, n=2)
        _, _, cache = nn.forward(params, x)
        other = small_model(9)
        with pytest.raises(StaleCache):
            nn.backward(other, cache, yl, yr)


class TestAdam:
    def test_first_step_is_signed_lr(self):
        params = small_model(0)
        cfg = nn.OptimizerConfig(lr=1e-3, weight_decay=0.0)
        state = nn.AdamState.zeros_like(params)
        grads = {k: np.random.default_rng(1).normal(size=v.shape) for k, v in params.values.items()}
        new, _ = nn.adam_step(params, grads, state, cfg)
        for k in params.values:
            g = grads[k]
            mask = np.abs(g) > 1e-3  # away from eps regularization
            expected = params.values[k][mask] - cfg.lr * np.sign(g[mask])
            np.testing.assert_allclose(new.values[k][mask], expected, rtol=1e-6, atol=1e-9)

    def test_zero_gradient_no_motion(self):
        params = small_model(1)
        cfg = nn.OptimizerConfig(weight_decay=0.0)
        state = nn.AdamState.zeros_like(params)
        grads = {k: np.zeros_like(v) for k, v in params.values.items()}
        new, _ = nn.adam_step(params, grads, state, cfg)
        for k in params.values:
            np.testing.assert_array_equal(new.values[k], params.values[k])

    def test_converges_on_quadratic(self):
        # Scalar problem: loss = 0.5 (w - 3)^2, grad = w - 3.
        cfg = nn.NetConfig(input_size=16)
        params = nn.ModelParams(cfg, {"w": np.array([10.0])})
        opt = nn.OptimizerConfig(lr=0.1, weight_decay=0.0)
        state = nn.AdamState.zeros_like(params)
        dists = []
        for _ in range(100):
            grads = {"w": params.values["w"] - 3.0}
            params, state = nn.adam_step(params, grads, state, opt)
            dists.append(abs(params.values["w"][0] - 3.0))
        assert dists[-1] < abs(10.0 - 3.0)
        tail = dists[-50:]
        assert all(b <= a + 1e-12 for a, b in zip(tail, tail[1:]))

    def test_decoupled_weight_decay_shrinks(self):
        params = small_model(2)
        cfg = nn.OptimizerConfig(lr=1e-2, weight_decay=0.5)
        state = nn.AdamState.zeros_like(params)
        grads = {k: np.zeros_like(v) for k, v in params.values.items()}
        new, _ = nn.adam_step(params, grads, state, cfg)
        w = params.values["conv0_w"]
        np.testing.assert_allclose(new.values["conv0_w"], w * (1 - cfg.lr * cfg.weight_decay))


class TestGradCheckHarness:
    def test_detects_injected_fault(self):
        rng = np.random.default_rng(4)
        params = small_model(3)
        x, yl, yr = random_batch(rng, n=2)
        _, _, cache = nn.forward(params, x)
        grads = nn.backward(params, cache, yl, yr)
        # Scale every gradient by 1.01 and compare to finite differences.
        worst = 0.0
        h = 1e-5
        sub = np.random.default_rng(0)
        for name, p in params.values.items():
            flat = p.reshape(-1)
            for idx in sub.choice(p.size, size=min(3, p.size), replace=False):
                orig = flat[idx]
                flat[idx] = orig + h
                lp = nn.total_loss(params, x, yl, yr)
                flat[idx] = orig - h
                lm = nn.total_loss(params, x, yl, yr)
                flat[idx] = orig
                fd = (lp - lm) / (2 * h)
                an = grads[name].reshape(-1)[idx] * 1.01
                denom = max(abs(fd), abs(an))
                if denom < 1e-7:
                    continue
                worst = max(worst, abs(fd - an) / denom)
        assert worst > 5e-3

    def test_h_sweep_stable(self):
        rng = np.random.default_rng(5)
        params = small_model(10)
        x, yl, yr = random_batch(rng, n=2)
        errs = [nn.grad_check(params, x, yl, yr, h=h, sample_frac=0.01, seed=1) for h in (1e-4, 1e-5, 1e-6)]
        assert errs[1] < 1e-3  # middle h never explodes


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        params = small_model(11)
        path = tmp_path / "model.ckpt"
        nn.save_checkpoint(params, path)
        loaded = nn.load_checkpoint(path)
        assert loaded.arch == params.arch
        assert set(loaded.values) == set(params.values)
        for k in params.values:
            np.testing.assert_array_equal(loaded.values[k], params.values[k])

    def test_param_count_stable(self):
        assert small_model(0).param_count() == small_model(99).param_count()
        assert small_model(0).param_count() <= 5000
