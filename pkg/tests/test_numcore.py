import math

import numpy as np
import pytest

from mmpred import numcore as nc
from mmpred.numcore import Tensor
from mmpred.numcore import checkpoint

from oracles import numeric_grad, rel_error


def check_grads(build, arrays, seed=0, tol=1e-4):
    """Compare autodiff gradients of sum(w * build(...)) against finite differences."""
    rng = np.random.default_rng(seed)
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = build(*tensors)
    w = rng.normal(size=out.shape)
    loss = (out * w).sum()
    loss.backward()

    def f():
        with nc.no_grad():
            return float((build(*[Tensor(a) for a in arrays]).data * w).sum())

    numeric = numeric_grad(f, arrays)
    for t, num in zip(tensors, numeric):
        assert rel_error(t.grad, num) <= tol


def test_closed_form_values():
    x = Tensor(np.array(0.0), requires_grad=True)
    y = nc.sigmoid(x)
    y.backward()
    assert y.item() == 0.5
    assert x.grad == pytest.approx(0.25)

    r = Tensor(np.array(-3.0), requires_grad=True)
    out = nc.relu(r)
    out.backward()
    assert out.item() == 0.0 and r.grad == 0.0

    loss = nc.binary_cross_entropy(Tensor(np.array([0.5])), np.array([1.0]))
    assert loss.item() == pytest.approx(math.log(2), abs=1e-12)
    assert nc.bce_with_logits(Tensor(np.zeros(3)), np.ones(3)).item() == pytest.approx(math.log(2))


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(nc.DimensionError, match=r"\(2, 3\).*\(4, 5\)"):
        nc.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    with pytest.raises(nc.DimensionError, match=r"\(2, 3\).*\(4,\)"):
        Tensor(np.ones((2, 3))) + Tensor(np.ones(4))


@pytest.mark.parametrize("seed", range(3))
def test_primitive_gradients(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    c = rng.normal(size=(4,))
    d = rng.uniform(0.5, 2.0, size=(3, 4))
    check_grads(lambda x, y: x @ y, [a.copy(), b.copy()], seed)
    check_grads(lambda x, y: x + y, [a.copy(), c.copy()], seed)
    check_grads(lambda x, y: x * y, [a.copy(), d.copy()], seed)
    check_grads(lambda x, y: x / y, [a.copy(), d.copy()], seed)
    check_grads(lambda x: nc.tanh(x), [a.copy()], seed)
    check_grads(lambda x: nc.sigmoid(x), [a.copy()], seed)
    check_grads(lambda x: nc.relu(x), [a.copy()], seed)
    check_grads(lambda x: nc.softmax(x, axis=-1), [a.copy()], seed)
    check_grads(lambda x: nc.log_softmax(x, axis=0), [a.copy()], seed)
    check_grads(lambda x: x.mean(axis=0), [a.copy()], seed)
    check_grads(lambda x: x.sum(axis=1, keepdims=True), [a.copy()], seed)
    check_grads(lambda x, y: nc.concat([x, y.transpose(1, 0)], axis=0), [a.copy(), b.T.copy().T.copy()], seed)
    check_grads(lambda x: x[:, 1:3] * 2.0, [a.copy()], seed)
    check_grads(lambda x: x ** 2.0, [d.copy()], seed)


def test_loss_gradients():
    rng = np.random.default_rng(4)
    p = rng.uniform(0.1, 0.9, size=6)
    y = rng.integers(0, 2, size=6).astype(float)
    z = rng.normal(size=6)
    check_grads(lambda t: nc.binary_cross_entropy(t, y), [p])
    check_grads(lambda t: nc.bce_with_logits(t, y), [z])
    logits = rng.normal(size=(2, 3, 5))
    targets = rng.integers(0, 5, size=(2, 3))
    mask = np.array([[1, 0, 1], [1, 1, 0]])
    check_grads(lambda t: nc.cross_entropy(t, targets, mask), [logits])
    table = rng.normal(size=(7, 3))
    ids = np.array([[1, 2, 1], [6, 0, 0]])
    check_grads(lambda t: nc.embedding(t, ids), [table])


def test_gru_cell_zero_weights_halves_state():
    H, D = 3, 2
    params = {
        "w_x": Tensor(np.zeros((D, 3 * H))), "w_h": Tensor(np.zeros((H, 3 * H))),
        "b_x": Tensor(np.zeros(3 * H)), "b_h": Tensor(np.zeros(3 * H)),
    }
    h_prev = np.array([[0.4, -0.2, 0.8]])
    # z = s(0) = 0.5, n = tanh(0) = 0  =>  h = 0.5 * h_prev
    h = nc.gru_cell(np.array([[3.0, -1.0]]), h_prev, params)
    np.testing.assert_allclose(h.data, 0.5 * h_prev, atol=1e-15)


def test_gru_cell_zero_candidate_from_zero_state():
    rng = np.random.default_rng(0)
    H, D = 3, 2
    w_x = rng.normal(size=(D, 3 * H))
    w_x[:, 2 * H:] = 0.0
    b_x = rng.normal(size=3 * H)
    b_x[2 * H:] = 0.0
    b_h = rng.normal(size=3 * H)
    b_h[2 * H:] = 0.0
    params = {"w_x": Tensor(w_x), "w_h": Tensor(rng.normal(size=(H, 3 * H))),
              "b_x": Tensor(b_x), "b_h": Tensor(b_h)}
    h = nc.gru_cell(rng.normal(size=(4, D)), np.zeros((4, H)), params)
    np.testing.assert_allclose(h.data, 0.0, atol=1e-15)


def test_fused_gru_matches_cell_composition():
    rng = np.random.default_rng(1)
    gru = nc.GRU(3, 4, rng)
    x = rng.normal(size=(2, 5, 3))
    mask = np.array([[1, 1, 1, 0, 0], [1, 1, 1, 1, 1]])
    fused = nc.gru_sequence(Tensor(x), gru.w_x, gru.w_h, gru.b_x, gru.b_h, mask=mask).data
    h = np.zeros((2, 4))
    for t in range(5):
        h_new = nc.gru_cell(x[:, t], h, gru.params()).data
        h = np.where(mask[:, t:t + 1] == 1, h_new, h)
        np.testing.assert_allclose(fused[:, t], h, atol=1e-13)
    assert np.all(np.abs(fused) < 1.0)


@pytest.mark.parametrize("seed", range(3))
def test_gru_gradients(seed):
    rng = np.random.default_rng(seed)
    D, H = 3, 4
    x = rng.normal(size=(2, 4, D))
    w_x = rng.normal(scale=0.5, size=(D, 3 * H))
    w_h = rng.normal(scale=0.5, size=(H, 3 * H))
    b_x = rng.normal(scale=0.1, size=3 * H)
    b_h = rng.normal(scale=0.1, size=3 * H)
    mask = np.array([[1, 1, 0, 1], [1, 1, 1, 1]])
    check_grads(lambda *a: nc.gru_sequence(*a, mask=mask), [x, w_x, w_h, b_x, b_h], seed)
    h = rng.normal(scale=0.5, size=(2, H))

    def cell(xt, hp, wx, wh, bx, bh):
        return nc.gru_cell(xt, hp, {"w_x": wx, "w_h": wh, "b_x": bx, "b_h": bh})

    check_grads(cell, [x[:, 0].copy(), h, w_x, w_h, b_x, b_h], seed)


def _module_gradcheck(module, forward, inputs, seed):
    """Finite-difference check over a module's parameters and the input."""
    rng = np.random.default_rng(seed)
    params = module.parameters()
    x = Tensor(inputs, requires_grad=True)
    out = forward(x)
    w = rng.normal(size=out.shape)
    (out * w).sum().backward()

    def f():
        with nc.no_grad():
            return float((forward(Tensor(inputs)).data * w).sum())

    numeric = numeric_grad(f, [inputs] + [p.data for p in params])
    assert rel_error(x.grad, numeric[0]) <= 1e-4
    for p, num in zip(params, numeric[1:]):
        assert rel_error(p.grad, num) <= 1e-4


@pytest.mark.parametrize("seed", range(2))
def test_attention_block_gradients(seed):
    rng = np.random.default_rng(seed)
    block = nc.TransformerBlock(4, 2, 6, rng)
    pad = np.array([[False, False, True]])
    _module_gradcheck(block, lambda x: block(x, pad), rng.normal(size=(1, 3, 4)), seed)


def test_batchnorm_and_layernorm_gradients():
    rng = np.random.default_rng(3)
    bn = nc.BatchNorm(3)
    _module_gradcheck(bn, bn, rng.normal(size=(5, 3)), 3)
    ln = nc.LayerNorm(4)
    _module_gradcheck(ln, ln, rng.normal(size=(2, 3, 4)), 3)


def test_single_token_attention_attends_to_itself():
    rng = np.random.default_rng(0)
    attn = nc.MultiHeadSelfAttention(4, 2, rng)
    x = rng.normal(size=(1, 1, 4))
    out = attn(Tensor(x)).data
    expected = x @ attn.wv.data @ attn.wo.data + attn.bo.data
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_attention_permutation_equivariance():
    rng = np.random.default_rng(2)
    block = nc.TransformerBlock(4, 2, 8, rng)
    block.eval()
    x = rng.normal(size=(1, 4, 4))
    perm = [2, 0, 3, 1]
    out = block(Tensor(x)).data
    out_perm = block(Tensor(x[:, perm])).data
    np.testing.assert_allclose(out_perm, out[:, perm], atol=1e-12)


def test_head_divisibility_is_rejected():
    with pytest.raises(ValueError, match="divisible"):
        nc.MultiHeadSelfAttention(6, 4, np.random.default_rng(0))


def test_adam_zero_gradient_is_identity():
    p = np.array([1.0, -2.0])
    state = nc.AdamState()
    for _ in range(5):
        nc.adam_step([p], [np.zeros(2)], state, lr=0.1)
    np.testing.assert_array_equal(p, [1.0, -2.0])


def test_adam_first_step_magnitude_is_lr():
    # m_hat = g, v_hat = g^2  =>  step = lr * g / (|g| + eps)
    p = np.array([0.0, 0.0])
    nc.adam_step([p], [np.array([3.0, -0.5])], nc.AdamState(), lr=1e-2)
    np.testing.assert_allclose(np.abs(p), 1e-2, rtol=1e-6)


def test_adam_decreases_quadratic():
    w = Tensor(np.array([5.0]), requires_grad=True)
    opt = nc.Adam([w], lr=0.1)
    losses = []
    for _ in range(200):
        opt.zero_grad()
        loss = ((w - 2.0) ** 2.0).sum()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    assert losses[-1] < 1e-2 * losses[0]
    # monotone after warmup, allowing Adam's overshoot tail near the optimum
    assert all(b <= a + 1e-9 for a, b in zip(losses[10:40], losses[11:41]))


def test_batchnorm_eval_determinism_and_running_stats():
    bn = nc.BatchNorm(2)
    batch = np.tile([[3.0, -1.0]], (8, 1)) + np.array([[0.5, 0.0]] * 4 + [[-0.5, 0.0]] * 4)
    for _ in range(200):
        bn(Tensor(batch))
    np.testing.assert_allclose(bn.running_mean, batch.mean(axis=0), atol=1e-8)
    np.testing.assert_allclose(bn.running_var, batch.var(axis=0), atol=1e-8)
    bn.eval()
    a = bn(Tensor(batch)).data
    b = bn(Tensor(batch)).data
    np.testing.assert_array_equal(a, b)


def test_dropout_expectation():
    drop = nc.Dropout(0.3, seed=5)
    x = Tensor(np.full((1, 50), 2.0))
    drop.train()
    means = [drop(x).data.mean() for _ in range(10_000)]
    drop.eval()
    ref = drop(x).data.mean()
    assert abs(np.mean(means) - ref) <= 0.02 * ref


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    model = nc.TransformerBlock(4, 2, 8, rng)
    state = model.state_dict()
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, state)
    assert path.read_bytes()[:4] == b"MMCK"
    loaded = checkpoint.load(path)
    assert loaded.keys() == state.keys()
    for k in state:
        np.testing.assert_array_equal(loaded[k], state[k])
    other = nc.TransformerBlock(4, 2, 8, np.random.default_rng(9))
    other.load_state_dict(loaded)
    x = Tensor(rng.normal(size=(1, 3, 4)))
    model.eval(), other.eval()
    np.testing.assert_array_equal(model(x).data, other(x).data)


def test_checkpoint_rejects_garbage():
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"NOPE")


def test_no_nan_on_extreme_logits():
    z = Tensor(np.array([-800.0, 0.0, 800.0]))
    assert np.all(np.isfinite(nc.sigmoid(z).data))
    assert np.isfinite(nc.bce_with_logits(z, np.array([1.0, 0.0, 0.0])).item())
