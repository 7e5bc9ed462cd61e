import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import gradcheck
from sparsedyn import stt
from sparsedyn import tensor as T
from sparsedyn.errors import ConfigError, ContractError, DimensionError
from sparsedyn.tensor import Tensor


def _identity_params(d, heads=1, rounds=1):
    eye = [T.parameter(np.eye(d)) for _ in range(6)]
    return stt.SttParams(*eye, T.parameter(np.ones(d)), T.parameter(np.zeros(d)),
                         T.parameter(np.ones(d)), T.parameter(np.zeros(d)), heads=heads, rounds=rounds)


def _softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def _ln(x, eps=1e-5):
    c = x - x.mean()
    return c / np.sqrt((c * c).mean() + eps)


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


# ---------------------------------------------------------------- state and context

def test_init_state_examples():
    assert np.array_equal(stt.init_state(np.array([[2.0, 3.0]])).r.data, [[2.0, 3.0]])
    assert np.allclose(stt.init_state(np.tile([1.5, -1.0], (4, 1))).r.data, [[1.5, -1.0]])
    assert np.allclose(stt.init_state(np.array([[1.0, 0.0], [0.0, 1.0]])).r.data, [[0.5, 0.5]])
    with pytest.raises(ContractError):
        stt.init_state(np.zeros((0, 3)))


def test_context_single_patch():
    p = np.array([[1.0, 2.0]])
    s = stt.init_state(p)
    ctx = stt.build_context(s, p, 0).data
    assert np.array_equal(ctx, [[0, 0], [1, 2], [0, 0], [1, 2], [1, 2]])


def test_context_interior_rows():
    p = np.arange(6.0).reshape(3, 2)
    z = np.array([[10.0, 11.0], [12.0, 13.0], [14.0, 15.0]])
    r = np.array([[7.0, 8.0]])
    s = stt.SttState(z=Tensor(z[None]), r=Tensor(r))
    ctx = stt.build_context(s, p, 1).data
    assert np.array_equal(ctx, [z[0], z[1], z[2], p[1], r[0]])
    zero = stt.SttState(z=Tensor(np.zeros((1, 3, 2))), r=Tensor(np.zeros((1, 2))))
    assert np.all(stt.build_context(zero, np.zeros((3, 2)), 1).data == 0)
    with pytest.raises(ContractError):
        stt.build_context(s, p, 3)


# ---------------------------------------------------------------- updates by hand

def test_patch_update_single_patch_by_hand():
    p = np.array([[0.6, -0.3]])
    params = _identity_params(2)
    s = stt.init_state(p)
    z = stt.patch_update(s, p, params).data[0, 0]
    ctx = np.array([[0, 0], p[0], [0, 0], p[0], p[0]])
    beta = _softmax(ctx @ p[0] / math.sqrt(2))
    assert np.allclose(s.beta.data.reshape(-1), beta, atol=1e-12)
    assert np.allclose(z, _ln(_elu(beta @ ctx)), atol=1e-12)


def test_relay_update_two_patches_by_hand():
    p = np.array([[1.0, 0.0], [0.2, 0.9]])
    params = _identity_params(2)
    s = stt.init_state(p)
    z_new = Tensor(np.array([[[0.5, -0.5], [1.5, 0.3]]]))
    r = stt.relay_update(s, z_new, params).data[0]
    r0 = p.mean(axis=0)
    rows = np.vstack([r0, z_new.data[0]])
    lam = _softmax(rows @ r0 / math.sqrt(2))
    assert np.allclose(s.lam.data.reshape(-1), lam, atol=1e-12)
    assert np.allclose(r, _ln(_elu(lam @ rows)), atol=1e-12)


def test_relay_identical_candidates():
    p = np.array([[0.3, -0.8]])
    params = stt.SttParams.init(2, 1, 1, np.random.default_rng(0))
    s = stt.init_state(p)
    r = stt.relay_update(s, Tensor(p[None]), params).data[0]
    v = p[0] @ params.rv.data
    assert np.allclose(r, _ln(_elu(v)), atol=1e-12)


def test_zero_inputs_leave_bias():
    params = _identity_params(4)
    params.patch_bias.data[:] = [0.1, 0.2, 0.3, 0.4]
    z = stt.patch_update(stt.init_state(np.zeros((3, 4))), np.zeros((3, 4)), params).data
    assert np.allclose(z, [0.1, 0.2, 0.3, 0.4])


def test_shape_mismatch():
    params = stt.SttParams.init(4, 2, 1, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        stt.patch_update(stt.init_state(np.zeros((3, 2))), np.zeros((3, 2)), params)


# ---------------------------------------------------------------- run

def test_round_accounting():
    params = stt.SttParams.init(4, 2, 2, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        stt.run(np.ones((3, 4)), params, rounds=0)
    c = stt.AttentionCounter()
    state = stt.run(np.ones((3, 4)), params, rounds=1, counter=c)
    assert state.t == 1 and c.head_rounds == 2
    assert state.z.shape == (3, 4) and state.r.shape == (4,)


@pytest.mark.parametrize("N", [1, 2, 8, 16, 64])
def test_score_counts(N):
    heads, rounds = 4, 2
    params = stt.SttParams.init(8, heads, rounds, np.random.default_rng(N))
    p = np.random.default_rng(0).normal(size=(N, 8))
    c = stt.AttentionCounter()
    stt.run(p, params, counter=c)
    assert c.per_head_round() == 6 * N + 1
    assert c.patch_scores == 5 * N * heads * rounds and c.relay_scores == (N + 1) * heads * rounds
    d = stt.AttentionCounter()
    stt.dense_run(p, params, counter=d)
    assert d.per_head_round(dense=True) == N * N + N


def test_batched_equals_per_node():
    rng = np.random.default_rng(4)
    params = stt.SttParams.init(6, 3, 2, rng)
    p = rng.normal(size=(5, 4, 6))
    batched = stt.run(p, params)
    for b in range(5):
        single = stt.run(p[b], params)
        assert np.allclose(batched.r.data[b], single.r.data, atol=1e-12)
        assert np.allclose(batched.z.data[b], single.z.data, atol=1e-12)


def test_run_is_pure():
    rng = np.random.default_rng(5)
    params = stt.SttParams.init(6, 3, 2, rng)
    p = rng.normal(size=(4, 6))
    assert np.array_equal(stt.run(p, params).r.data, stt.run(p, params).r.data)


@given(st.integers(1, 9), st.integers(0, 10_000))
def test_softmax_rows(N, seed):
    rng = np.random.default_rng(seed)
    params = stt.SttParams.init(4, 2, 1, rng)
    p = rng.normal(size=(N, 4)) * 3
    state = stt.run(p, params)
    assert np.allclose(state.beta.data.sum(axis=-1), 1.0, atol=1e-9)
    assert np.allclose(state.lam.data.sum(axis=-1), 1.0, atol=1e-9)


@given(st.integers(2, 9), st.integers(0, 10_000))
def test_one_round_locality_without_relay(N, seed):
    rng = np.random.default_rng(seed)
    params = stt.SttParams.init(4, 2, 1, rng)
    p = rng.normal(size=(N, 4))
    j = int(rng.integers(N))
    q = p.copy()
    q[j] += rng.normal(size=4) * 3
    z0 = stt.run(p, params, rounds=1, relay=False).z.data
    z1 = stt.run(q, params, rounds=1, relay=False).z.data
    for i in range(N):
        if abs(i - j) > 1:
            assert np.array_equal(z0[i], z1[i])


def test_relay_reaches_every_patch():
    rng = np.random.default_rng(6)
    params = stt.SttParams.init(4, 2, 1, rng)
    p = T.parameter(rng.normal(size=(7, 4)))
    r = stt.run(p, params, rounds=1).r
    T.backward(T.tsum(r * Tensor(rng.normal(size=4))))
    assert np.all(np.abs(p.grad).sum(axis=1) > 0)


def test_dropout_needs_rng_and_changes_output():
    params = stt.SttParams.init(4, 2, 1, np.random.default_rng(0))
    p = np.random.default_rng(1).normal(size=(3, 4))
    a = stt.run(p, params, training=True, dropout=0.5, rng=np.random.default_rng(2)).r.data
    b = stt.run(p, params).r.data
    assert not np.allclose(a, b)


def test_gradients_n3_d4():
    rng = np.random.default_rng(7)
    p = rng.normal(size=(3, 4))
    base = stt.SttParams.init(4, 2, 2, rng)
    probe = Tensor(rng.normal(size=4))
    names = ["wq", "wk", "wv", "rq", "rk", "rv", "patch_gain", "patch_bias", "relay_gain", "relay_bias"]

    def build(*arrs):
        params = stt.SttParams(*arrs, heads=2, rounds=2)
        return T.tsum(stt.run(p, params).r * probe)

    gradcheck.check(build, [getattr(base, n).data for n in names])
