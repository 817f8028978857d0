import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hapstream import autodiff as ad
from hapstream.errors import ConfigError, DimensionError, ProtocolError
from hapstream.models import (HapNet, HapNetConfig, HapNetPU, HapNetPUConfig, HedgeConfig,
                              HedgeMLP, ReplayBuffer, WeightedResidual, project_floor_simplex)
from hapstream.models.hedge import model_input
from hapstream.models.layers import sinusoidal_encoding
from hapstream.streams import CompressedSample, StreamSample, compress

SMALL = HapNetConfig(d_model=8, blocks=2, heads=2, ff_width=16)
SMALL_PU = HapNetPUConfig(d_model=8)


def sample(t, values, mask=None, label=0):
    values = np.asarray(values, dtype=np.float64)
    mask = np.ones(values.shape, bool) if mask is None else np.asarray(mask, bool)
    return StreamSample(t, np.where(mask, values, 0.0), mask, label)


def assert_gradcheck(loss_fn, params, tol=1e-4):
    errors = ad.gradcheck(loss_fn, params)
    worst = max(errors, key=errors.get)
    assert errors[worst] < tol, (worst, errors[worst])


# hedge -----------------------------------------------------------------------

@pytest.fixture
def hedge():
    return HedgeMLP(5, 2, HedgeConfig(layers=4), seed=1)


def test_hedge_one_hot_alpha_selects_classifier(hedge):
    x = model_input(np.random.default_rng(0).random(5), np.ones(5))
    for j in range(4):
        hedge.alpha = np.eye(4)[j]
        ens, per = hedge.forward(x)
        np.testing.assert_array_equal(ens, per[j])


def test_hedge_identical_classifiers(hedge):
    # force every classifier to read an identical hidden state and head
    for layer in hedge.hidden[1:]:
        layer[0].data[:] = np.eye(32)
        layer[1].data[:] = 0.0
    for head in hedge.heads[1:]:
        head[0].data[:] = hedge.heads[0][0].data
        head[1].data[:] = hedge.heads[0][1].data
    x = model_input(np.random.default_rng(1).random(5), np.ones(5))
    ens, per = hedge.forward(x)
    np.testing.assert_allclose(ens, per[0], atol=1e-14)


def test_hedge_convex_hull(hedge):
    rng = np.random.default_rng(2)
    for _ in range(1000):
        hedge.alpha = project_floor_simplex(rng.random(4), 0.05)
        x = model_input(rng.normal(size=5), rng.random(5) < 0.5)
        ens, per = hedge.forward(x)
        per = np.stack(per)
        assert np.all(ens >= per.min(axis=0) - 1e-12)
        assert np.all(ens <= per.max(axis=0) + 1e-12)


def test_hedge_width_checked(hedge):
    with pytest.raises(DimensionError):
        hedge.forward(np.zeros(7))


def test_alpha_symmetric_losses_leave_alpha_unchanged():
    alpha = np.array([0.1, 0.2, 0.3, 0.4])
    out = project_floor_simplex(alpha * 0.99 ** np.full(4, 2.3), 0.05)
    np.testing.assert_allclose(out, alpha, rtol=1e-12)


def test_alpha_converges_to_perfect_classifier():
    L, s, beta = 4, 0.2, 0.99
    alpha = np.full(L, 1 / L)
    losses = np.array([10.0, 10.0, 0.0, 10.0])
    for _ in range(500):
        alpha = project_floor_simplex(alpha * beta ** losses, s / L)
    assert alpha[2] == pytest.approx(1 - (L - 1) * s / L, abs=1e-12)


def test_alpha_simplex_over_many_updates(hedge):
    rng = np.random.default_rng(3)
    floor = hedge.config.s / hedge.config.layers
    for _ in range(10_000):
        hedge.alpha = project_floor_simplex(hedge.alpha * 0.99 ** (rng.random(4) * 20), floor)
        assert abs(hedge.alpha.sum() - 1) <= 1e-12
        assert hedge.alpha.min() >= floor - 1e-12


def test_hedge_updates_keep_simplex(hedge):
    rng = np.random.default_rng(4)
    floor = hedge.config.s / hedge.config.layers
    for t in range(200):
        s = sample(t, rng.random(5), rng.random(5) < 0.7, int(rng.integers(2)))
        hedge.predict(s)
        hedge.update(s)
        assert abs(hedge.alpha.sum() - 1) <= 1e-12 and hedge.alpha.min() >= floor - 1e-12


def test_hedge_config_validation():
    with pytest.raises(ConfigError):
        HedgeConfig(layers=1)
    with pytest.raises(ConfigError):
        HedgeConfig(beta=1.0)


# weighted residual -----------------------------------------------------------

def test_weighted_residual_unit_alpha_is_plain_sum():
    m = WeightedResidual(5, 2, seed=0)
    m.alpha.data[:] = 1.0
    x = model_input(np.random.default_rng(0).random(5), np.ones(5))
    outs = m.branch_outputs(x)
    expected = sum(o.data for o in outs)
    np.testing.assert_allclose(m.forward(x).data, expected, atol=1e-15)


def test_weighted_residual_zero_alpha_zero_logits():
    m = WeightedResidual(5, 2, seed=0)
    m.alpha.data[:] = 0.0
    x = model_input(np.random.default_rng(0).random(5), np.ones(5))
    np.testing.assert_array_equal(m.forward(x).data, 0.0)


def test_weighted_residual_gradcheck():
    m = WeightedResidual(4, 2, seed=3)
    x = model_input(np.random.default_rng(5).random(4) + 0.1, np.ones(4))
    assert_gradcheck(lambda: ad.cross_entropy(m.forward(x), [1]), m.params)


def test_hedge_gradcheck():
    m = HedgeMLP(4, 2, seed=3)
    x = model_input(np.random.default_rng(5).random(4) + 0.1, np.ones(4))

    def loss():
        probs = m.classifier_probs(x)
        total = ad.nll(probs[0] * 0.5 + probs[1] * 0.5, [0])
        for pr in probs:
            total = total + ad.nll(pr, [0])
        return total

    assert_gradcheck(loss, m.params)


# embedding -------------------------------------------------------------------

def test_embed_masked_zero_token_is_positional_encoding():
    m = HapNet(6, 2, SMALL, seed=0)
    tok = m.embed(np.zeros(6), np.zeros(6)).data[0]
    np.testing.assert_array_equal(tok, sinusoidal_encoding(np.arange(6), 8))


def test_embed_locality():
    m = HapNet(6, 2, SMALL, seed=0)
    m.avail.data[:] = np.arange(8.0)
    a = m.embed(np.arange(6.0), np.ones(6)).data[0]
    v = np.arange(6.0)
    v[3] = 9.0
    b = m.embed(v, np.ones(6)).data[0]
    changed = np.any(a != b, axis=1)
    np.testing.assert_array_equal(changed, np.arange(6) == 3)


def test_embed_value_is_broadcast():
    m = HapNet(3, 2, SMALL, seed=0)
    tok = m.embed(np.array([0.25, 0.0, 0.0]), np.array([1, 0, 0])).data[0, 0]
    np.testing.assert_allclose(tok - sinusoidal_encoding(0, 8), 0.25)


def test_positional_encodings_distinct_for_wide_inputs():
    pe = sinusoidal_encoding(np.arange(123), 32)
    dist = np.linalg.norm(pe[:, None] - pe[None], axis=-1)
    assert np.all(dist[~np.eye(123, dtype=bool)] > 0)


def test_embed_dimension_checked():
    with pytest.raises(DimensionError):
        HapNet(6, 2, SMALL).embed(np.zeros(5), np.ones(5))


# hapnet ----------------------------------------------------------------------

def test_hapnet_output_shape_german_width():
    assert HapNet(24, 2).forward(np.zeros((3, 24)), np.ones((3, 24))).shape == (3, 2)


def test_hapnet_inference_is_deterministic():
    m = HapNet(6, 2, SMALL, seed=0)
    v, mask = np.random.default_rng(0).random(6), np.ones(6)
    a = m.forward(v, mask).data
    b = m.forward(v, mask).data
    np.testing.assert_array_equal(a, b)


def test_hapnet_sees_feature_values():
    m = HapNet(6, 2, SMALL, seed=0)
    v = np.linspace(0, 1, 6)
    a = m.forward(v, np.ones(6)).data
    b = m.forward(v[::-1].copy(), np.ones(6)).data
    c = m.forward(v * 0.5, np.ones(6)).data
    assert not np.allclose(a, b) and not np.allclose(a, c)


def test_pre_norm_layout_is_blind_to_values():
    # a constant-over-channels offset never reaches attention when norming first
    m = HapNet(6, 2, HapNetConfig(d_model=8, blocks=2, heads=2, ff_width=16, norm_first=True))
    mask = np.ones(6)
    a = m.forward(np.zeros(6), mask).data
    b = m.forward(np.random.default_rng(0).random(6), mask).data
    np.testing.assert_allclose(a, b, atol=1e-12)


@settings(deadline=None, max_examples=30)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6),
       st.lists(st.booleans(), min_size=6, max_size=6))
def test_hapnet_masked_values_are_ignored(junk, mask):
    m = HapNet(6, 2, SMALL, seed=0)
    mask = np.array(mask)
    base = np.where(mask, np.linspace(0.1, 0.9, 6), 0.0)
    noisy = np.where(mask, base, junk)
    np.testing.assert_array_equal(m.forward(base, mask).data, m.forward(noisy, mask).data)


def test_hapnet_gradcheck():
    m = HapNet(4, 2, SMALL, seed=2)
    m.avail.data[:] = np.random.default_rng(0).normal(size=8) * 0.1
    values = np.random.default_rng(1).random((3, 4))
    mask = np.array([[1, 1, 0, 1], [1, 1, 1, 1], [0, 1, 1, 0]])
    labels = [0, 1, 1]

    def loss():
        rng = np.random.default_rng(7)
        return ad.cross_entropy(m.forward(values, mask, training=True, rng=rng), labels)

    assert_gradcheck(loss, m.params)


def test_hapnet_batch_is_bootstrap_copies_when_buffer_empty():
    cfg = HapNetConfig(d_model=8, blocks=1, heads=2, ff_width=8, K=4, batch_size=4)
    m = HapNet(6, 2, cfg, seed=0)
    s = sample(0, np.arange(1.0, 7.0), label=1)
    values, masks, labels = m.training_batch(s)
    assert values.shape == (4, 6) and list(labels) == [1] * 4
    np.testing.assert_array_equal(values[0], s.values)
    assert np.all(values[1:] * (1 - masks[1:]) == 0)


def test_hapnet_batch_fills_from_buffer():
    m = HapNet(6, 2, HapNetConfig(d_model=8, blocks=1, heads=2, ff_width=8), seed=0)
    for t in range(5):
        values, masks, labels = m.training_batch(sample(t, np.full(6, t + 1.0)))
    assert values.shape == (64, 6)


def test_hapnet_protocol_enforced():
    m = HapNet(6, 2, SMALL)
    s = sample(0, np.zeros(6))
    with pytest.raises(ProtocolError):
        m.update(s)
    m.predict(s)
    with pytest.raises(ProtocolError):
        m.predict(sample(1, np.zeros(6)))


def test_hapnet_learns_separable_stream():
    rng = np.random.default_rng(0)
    X = rng.random((500, 2))
    y = (X[:, 0] > X[:, 1]).astype(int)
    # a linear rule separates the stream exactly
    assert np.all((X @ np.array([1.0, -1.0]) > 0) == y)
    m = HapNet(2, 2, HapNetConfig(d_model=8, blocks=2, heads=2, ff_width=16, lr=1e-3), seed=0)
    wrong = []
    for t in range(500):
        s = sample(t, X[t], label=int(y[t]))
        wrong.append(int(np.argmax(m.predict(s))) != y[t])
        m.update(s)
    assert np.mean(wrong[-100:]) < 0.10


def test_hapnet_config_validation():
    with pytest.raises(ConfigError):
        HapNetConfig(d_model=10, heads=4)
    with pytest.raises(ConfigError):
        HapNetConfig(K=0)


def test_hapnet_checkpoint_round_trip(tmp_path):
    a, b = HapNet(6, 2, SMALL, seed=0), HapNet(6, 2, SMALL, seed=1)
    a.save(tmp_path / "ckpt.json")
    b.load(tmp_path / "ckpt.json")
    v = np.random.default_rng(0).random(6)
    np.testing.assert_array_equal(a.forward(v, np.ones(6)).data, b.forward(v, np.ones(6)).data)


# hapnetpu --------------------------------------------------------------------

def compressed(t, pairs, label=0):
    idx = np.array([i for i, _ in pairs], dtype=np.int64)
    return CompressedSample(t, idx, np.array([v for _, v in pairs], dtype=np.float64), label)


def test_pu_empty_sample_keeps_context():
    m = HapNetPU(5, 2, SMALL_PU, seed=0)
    m.context = np.random.default_rng(0).normal(size=8)
    logits, ctx = m.step(compressed(0, []))
    np.testing.assert_array_equal(ctx, m.context)
    z = np.maximum(m.context @ m.head1[0].data + m.head1[1].data, 0)
    np.testing.assert_allclose(logits, z @ m.head2[0].data + m.head2[1].data)


def test_pu_single_entry_deterministic():
    m = HapNetPU(5, 2, SMALL_PU, seed=0)
    a, _ = m.step(compressed(0, [(2, 0.5)]))
    b, _ = m.step(compressed(0, [(2, 0.5)]))
    np.testing.assert_array_equal(a, b)


def test_pu_equal_sequences_equal_logits():
    m = HapNetPU(6, 2, SMALL_PU, seed=0)
    values = np.array([0.3, 0.9, 0.1, 0.7, 0.5, 0.2])
    a = compress(sample(0, values, [1, 0, 1, 0, 0, 1]))
    # different mask and width, identical surviving (index, value) pairs
    b = compress(sample(0, np.r_[values, 4.0, 4.0], [1, 0, 1, 0, 0, 1, 0, 0]))
    assert a.entries == b.entries
    np.testing.assert_array_equal(m.step(a)[0], m.step(b)[0])


def test_pu_output_independent_of_width():
    narrow, wide = HapNetPU(4, 2, SMALL_PU, seed=0), HapNetPU(40, 2, SMALL_PU, seed=0)
    s = compressed(0, [(0, 0.2), (3, 0.8)])
    np.testing.assert_allclose(narrow.step(s)[0], wide.step(s)[0], atol=1e-15)


def test_pu_context_carried_across_steps():
    m = HapNetPU(4, 2, SMALL_PU, seed=0)
    s = compressed(0, [(1, 0.4)])
    first = m.predict(s)
    m.update(s)
    s1 = compressed(1, [(1, 0.4)], label=0)
    second = m.predict(s1)
    assert not np.allclose(first, second)
    assert m._step_context is not m.context


def test_pu_gradcheck_three_entries():
    m = HapNetPU(5, 2, SMALL_PU, seed=4)
    seqs = [(np.array([0, 2, 4]), np.array([0.3, 0.8, 0.5]))]
    ctx = np.random.default_rng(0).normal(size=(1, 8)) * 0.5
    assert_gradcheck(lambda: ad.cross_entropy(m.forward(seqs, ctx, training=False)[0], [1]),
                     m.params)


def test_pu_training_view_equals_inference_when_no_bootstrap():
    cfg = HapNetPUConfig(d_model=8, K=1, q=0.0, batch_size=1, dropout=0.0)
    m = HapNetPU(4, 2, cfg, seed=0)
    s = compressed(0, [(0, 0.1), (1, 0.2), (2, 0.3), (3, 0.4)], label=1)
    logits = m.predict(s)
    seqs, labels, contexts = m.training_batch(s)
    train_logits, _ = m.forward(seqs, contexts, training=True)
    np.testing.assert_allclose(train_logits.data[0], logits, atol=1e-15)


def test_pu_accepts_dense_samples():
    m = HapNetPU(4, 2, SMALL_PU, seed=0)
    s = sample(0, [0.1, 0.2, 0.3, 0.4], [1, 0, 1, 0])
    np.testing.assert_array_equal(m.step(compress(s))[0], m.predict(s))


# finite gradients over long training ------------------------------------------

@pytest.mark.parametrize("make", [
    lambda: HapNet(6, 2, SMALL, seed=0),
    lambda: HapNetPU(6, 2, SMALL_PU, seed=0),
    lambda: HedgeMLP(6, 2, seed=0),
    lambda: WeightedResidual(6, 2, seed=0),
], ids=["hapnet", "hapnetpu", "hedge", "weighted_residual"])
def test_gradients_stay_finite(make):
    m = make()
    step = m.opt.step

    def checked_step():
        for name, p in m.params.items():
            assert np.all(np.isfinite(p.grad)), name
        step()

    m.opt.step = checked_step
    rng = np.random.default_rng(0)
    for t in range(1000 if not isinstance(m, HapNet) else 300):
        s = sample(t, rng.random(6) * 3, rng.random(6) < 0.6, int(rng.integers(2)))
        m.predict(s)
        m.update(s)
    assert all(np.all(np.isfinite(p.data)) for p in m.params.values())


def test_replay_buffer_ring():
    buf = ReplayBuffer(3)
    for i in range(5):
        buf.push(i)
    assert sorted(buf.items) == [2, 3, 4] and len(buf) == 3
    assert buf.sample(0, np.random.default_rng(0)) == []
    assert set(buf.sample(50, np.random.default_rng(0))) <= {2, 3, 4}
