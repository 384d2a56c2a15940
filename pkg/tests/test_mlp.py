import numpy as np
import pytest

from i3sb.mlp import (
    TrainConfig,
    TrainingDivergedError,
    _padded_pairs,
    _training_schedule,
    forward,
    init_mlp,
    load_mlp,
    loss_and_grad,
    mlp_predict,
    sample_batch,
    save_mlp,
    train_tiny_mlp,
)
from i3sb.predictor import Condition, GaussianPairModel
from i3sb.schedule import BetaSchedule
from i3sb.streams import stream
from i3sb.tensor_io import ImageTensor

from oracles import linear_ols_population

BETA = BetaSchedule()


def _img(shape, seed):
    return ImageTensor(stream(seed).uniform(-1, 1, shape))


def test_zero_weights_give_zero_output():
    net = init_mlp(5, (8, 8), BETA, seed=0)
    net.weights = [np.zeros_like(w) for w in net.weights]
    x = _img((6, 7), 1)
    out = mlp_predict(net, x, 3, 0.2, Condition(xN=_img((6, 7), 2)))
    assert np.all(out.data == 0)


def test_predict_deterministic_and_shape():
    net = init_mlp(5, (16, 16), BETA, seed=3)
    x, y = _img((7, 9), 1), Condition(xN=_img((7, 9), 2))
    a = mlp_predict(net, x, 3, 0.2, y)
    b = net.predict(x, 3, 0.2, y)
    assert a.shape == (7, 9, 1)
    assert a == b
    assert np.all(np.isfinite(a.data))


def test_predict_shape_mismatch():
    net = init_mlp(3, (4,), BETA)
    with pytest.raises(ValueError):
        mlp_predict(net, _img((4, 4), 0), 1, 0.1, Condition(xN=_img((4, 5), 1)))
    with pytest.raises(ValueError):
        init_mlp(4)


def test_overlap_average_matches_direct_loop():
    # brute force: predict every patch, then average the covering predictions per pixel
    p = 3
    net = init_mlp(p, (6,), BETA, seed=5)
    x, xN = _img((5, 6), 7), _img((5, 6), 8)
    t = 0.3
    out = mlp_predict(net, x, 1, t, Condition(xN=xN)).plane
    xp = np.pad(x.plane.astype(float), 1, mode="edge")
    np_ = np.pad(xN.plane.astype(float), 1, mode="edge")
    params = [q.astype(float) for q in net.params()]
    acc, cnt = np.zeros((7, 8)), np.zeros((7, 8))
    for i in range(5):
        for j in range(6):
            f = np.concatenate([xp[i:i + 3, j:j + 3].ravel(), np_[i:i + 3, j:j + 3].ravel(),
                                [float(BETA.sigma(t)), float(BETA.sigma_bar(t))]])
            o, _ = forward(params, f[None, :])
            acc[i:i + 3, j:j + 3] += o.reshape(3, 3)
            cnt[i:i + 3, j:j + 3] += 1
    ref = (acc / cnt)[1:6, 1:7]
    np.testing.assert_allclose(out, ref, rtol=1e-5, atol=1e-6)


def test_gradient_matches_central_differences():
    net = init_mlp(5, (64, 64), BETA, seed=1)
    pairs = [(_img((16, 16), i), _img((16, 16), 100 + i)) for i in range(3)]
    s = _training_schedule(BETA, TrainConfig())
    params = [q.astype(np.float64) for q in net.params()]
    X, T = sample_batch(_padded_pairs(pairs, 5), s, 5, 2000, stream(4))
    # fixed mini-batch of rows whose hidden pre-activations all sit well away
    # from the ReLU kink, so a +/-h step cannot cross it
    pre, h_in = [], X
    for i in range(2):
        z = h_in @ params[2 * i] + params[2 * i + 1]
        pre.append(np.abs(z).min(axis=1))
        h_in = np.maximum(z, 0)
    keep = np.flatnonzero(np.minimum(*pre) > 0.02)[:16]
    assert len(keep) == 16
    X, T = X[keep], T[keep]
    _, grads = loss_and_grad(params, X, T)
    h = 1e-3

    def pattern(ps):
        _, acts = forward(ps, X)
        return [a > 0 for a in acts[1:-1]]

    base = pattern(params)
    worst, skipped, total = 0.0, 0, 0
    for k, q in enumerate(params):
        for idx in np.ndindex(q.shape):
            total += 1
            old = q[idx]
            q[idx] = old + h
            lp, _ = loss_and_grad(params, X, T)
            flip = any(np.any(a != b) for a, b in zip(pattern(params), base))
            q[idx] = old - h
            lm, _ = loss_and_grad(params, X, T)
            flip = flip or any(np.any(a != b) for a, b in zip(pattern(params), base))
            q[idx] = old
            if flip:
                skipped += 1
            fd = (lp - lm) / (2 * h)
            g = grads[k][idx]
            worst = max(worst, abs(fd - g) / max(abs(g), abs(fd), 1e-8))
    assert total == sum(q.size for q in params)
    assert skipped == 0
    assert worst < 1e-4


def test_linear_variant_recovers_ols():
    m = GaussianPairModel(0.0, 0.5, 0.1)
    rng = stream(3)
    ds = []
    for _ in range(8):
        x0, x1 = m.sample((16, 16), rng)
        ds.append((ImageTensor(x0), ImageTensor(x1)))
    cfg = TrainConfig(lr=3e-2, batch=4096, iters=15000, patch=1, hidden=(), seed=0)
    net, _ = train_tiny_mlp(ds, BETA, cfg)
    s = _training_schedule(BETA, cfg)
    x0 = np.concatenate([a.data.ravel() for a, _ in ds]).astype(np.float64)
    x1 = np.concatenate([b.data.ravel() for _, b in ds]).astype(np.float64)
    w = linear_ols_population(x0, x1, s.sigma2, s.sbar2)
    got = np.concatenate([net.weights[0][:, 0], net.biases[0]]).astype(np.float64)
    assert np.linalg.norm(got - w) / np.linalg.norm(w) < 0.05


def test_identical_pairs_give_small_output():
    ds = [(ImageTensor(np.full((12, 12), c)),) * 2 for c in (-0.5, 0.0, 0.5)]
    cfg = TrainConfig(iters=1500, seed=2)
    net, _ = train_tiny_mlp(ds, BETA, cfg)
    x = ImageTensor(np.full((12, 12), 0.5))
    outs = [np.abs(mlp_predict(net, x, 0, t, Condition(xN=x)).data).mean() for t in (0.05, 0.3, 0.6, 0.9)]
    assert max(outs) < 0.1


def test_training_loss_log_and_determinism():
    ds = [(_img((16, 16), i), _img((16, 16), 50 + i)) for i in range(2)]
    cfg = TrainConfig(iters=250, seed=1)
    a, log_a = train_tiny_mlp(ds, BETA, cfg)
    b, log_b = train_tiny_mlp(ds, BETA, cfg)
    assert [it for it, _ in log_a] == [100, 200, 250]
    assert log_a == log_b
    assert all(np.array_equal(x, y) for x, y in zip(a.params(), b.params()))
    assert all(q.dtype == np.float32 for q in a.params())
    c, _ = train_tiny_mlp(ds, BETA, TrainConfig(iters=250, seed=2))
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_divergence_is_reported():
    ds = [(_img((8, 8), 0), _img((8, 8), 1))]
    bad = init_mlp(5, (4,), BETA)
    bad.weights[0] = np.full_like(bad.weights[0], np.nan)
    with pytest.raises(TrainingDivergedError):
        train_tiny_mlp(ds, BETA, TrainConfig(iters=50), net=bad)
    with pytest.raises(ValueError):
        train_tiny_mlp([], BETA)


def test_save_load_roundtrip(tmp_path):
    net = init_mlp(3, (5, 4), BETA, seed=9)
    save_mlp(net, tmp_path / "m")
    back = load_mlp(tmp_path / "m")
    assert back.patch == 3 and back.hidden == (5, 4) and back.beta == BETA
    assert all(np.array_equal(x, y) for x, y in zip(net.params(), back.params()))
    manifest = (tmp_path / "m" / "manifest.txt").read_text().splitlines()
    assert [l.split()[0] for l in manifest if l.startswith("layer=")] == ["layer=0", "layer=1", "layer=2"]
