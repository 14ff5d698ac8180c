import math

import numpy as np
import pytest

from qgparse.errors import ContractViolation
from qgparse.gsg import numeric as nm
from gradcheck import numeric_grad, rel_error

TOL = 1e-4


def random_table(rng, n, symmetric_gold=True):
    z = rng.normal(size=(n, n, 2))
    gold = rng.random((n, n)) < 0.4
    if symmetric_gold:
        gold = np.triu(gold) | np.triu(gold).T
    return nm.GcScoreTable(nm.softmax(z), gold)


def random_biaffine(rng, h_gc, h_bi, hidden):
    p = nm.BiaffineParams.init(h_gc, h_bi, hidden, rng)
    p.b = rng.normal(size=2)
    for mlp in (p.head, p.tail):
        mlp.b1 = rng.normal(size=mlp.b1.shape) * 0.1
        mlp.b2 = rng.normal(size=mlp.b2.shape) * 0.1
    return p


# -- loss values ------------------------------------------------------------------

def test_ne_loss_uniform_is_log9():
    t = nm.NeLabelTable(np.zeros((5, 9)), np.array([0, 3, 8, 1, 2]))
    assert abs(nm.ne_loss(t) - math.log(9)) < 1e-12


def test_table_loss_single_uniform_cell_is_log2():
    assert abs(nm.table_loss(nm.GcScoreTable(np.full((1, 1, 2), 0.5), np.array([[True]]))) - math.log(2)) < 1e-12


def test_symmetry_loss_zero_on_symmetric_table(rng):
    z = rng.normal(size=(4, 4, 2))
    t = nm.GcScoreTable(nm.softmax(z + z.transpose(1, 0, 2)))
    assert nm.symmetry_loss(t) < 1e-15


def test_symmetry_loss_known_value():
    p1 = np.array([[0.5, 0.9], [0.1, 0.5]])
    t = nm.GcScoreTable(np.stack([1 - p1, p1], axis=2))
    # |0.9-0.1| twice per class, two classes, over n^2 = 4
    assert nm.symmetry_loss(t) == pytest.approx(4 * 0.8 / 4)


def test_table_loss_floors_zero_probability():
    t = nm.GcScoreTable(np.array([[[1.0, 0.0]]]), np.array([[True]]))
    assert nm.table_loss(t) == pytest.approx(-math.log(nm.PROB_FLOOR))
    assert np.all(np.isfinite(nm.table_loss_grad(t)))


def test_losses_compose():
    rng = np.random.default_rng(0)
    ne = nm.NeLabelTable(rng.normal(size=(3, 9)), np.array([1, 0, 2]))
    gc = random_table(rng, 3)
    assert nm.gc_loss(gc) == nm.table_loss(gc) + nm.symmetry_loss(gc)
    assert nm.gsg_loss(ne, gc) == nm.ne_loss(ne) + nm.gc_loss(gc)


def test_contracts():
    with pytest.raises(ContractViolation):
        nm.GcScoreTable(np.full((2, 2, 2), 0.6))
    with pytest.raises(ContractViolation):
        nm.table_loss(nm.GcScoreTable(np.full((2, 2, 2), 0.5), np.array([[0, 1], [0, 0]])))
    with pytest.raises(ContractViolation):
        nm.ne_loss(nm.NeLabelTable(np.zeros((2, 9)), np.array([0, 9])))
    with pytest.raises(ContractViolation):
        nm.NeLabelTable(np.zeros((2, 8)))
    with pytest.raises(ContractViolation):
        nm.LabelTransferParams(np.zeros((9, 4)), tau=0.0)


# -- gradients ----------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_ne_loss_gradient(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    t = nm.NeLabelTable(rng.normal(size=(n, 9)), rng.integers(0, 9, size=n))
    assert rel_error(nm.ne_loss_grad(t), numeric_grad(lambda: nm.ne_loss(t), t.logits)) < TOL


@pytest.mark.parametrize("seed", range(5))
def test_table_and_symmetry_gradients(seed):
    rng = np.random.default_rng(seed)
    t = random_table(rng, int(rng.integers(1, 7)))
    assert rel_error(nm.table_loss_grad(t), numeric_grad(lambda: nm.table_loss(t), t.probs)) < TOL
    assert rel_error(nm.symmetry_loss_grad(t), numeric_grad(lambda: nm.symmetry_loss(t), t.probs)) < TOL


@pytest.mark.parametrize("seed", range(5))
def test_biaffine_gradients(seed):
    rng = np.random.default_rng(seed)
    n, h_gc, h_bi, hidden = (int(x) for x in rng.integers(1, 9, size=4))
    p = random_biaffine(rng, h_gc, h_bi, hidden)
    H = rng.normal(size=(n, h_gc))
    W = rng.normal(size=(n, n, 2))

    def f():
        return float(np.sum(W * nm.biaffine_forward(H, p)[0]))

    probs, cache = nm.biaffine_forward(H, p)
    grads, dH = nm.biaffine_backward(cache, W, p)
    assert rel_error(dH, numeric_grad(f, H)) < TOL
    for name, arr in (("U1", p.U1), ("U2", p.U2), ("b", p.b), ("head_W1", p.head.W1),
                      ("head_b2", p.head.b2), ("tail_W2", p.tail.W2), ("tail_b1", p.tail.b1)):
        assert rel_error(grads[name], numeric_grad(f, arr)) < TOL, name


@pytest.mark.parametrize("seed", range(3))
def test_gumbel_label_transfer_gradients(seed):
    rng = np.random.default_rng(seed)
    n, h_rb, h_le = 4, 5, 3
    tau = float(rng.uniform(0.5, 2.0))
    lt = nm.LabelTransferParams(rng.normal(size=(9, h_le)), tau)
    logits = rng.normal(size=(n, 9))
    noise = nm.gumbel_noise((n, 9), rng)
    enc = nm.QuestionEncoding(list("abcd"), rng.normal(size=(n, h_rb)))
    W = rng.normal(size=(n, h_rb + h_le))

    def f():
        s = nm.gumbel_sample(nm.NeLabelTable(logits), lt, noise)
        return float(np.sum(W * nm.label_transfer(enc, s, lt)))

    s = nm.gumbel_sample(nm.NeLabelTable(logits), lt, noise)
    dH, ds, dW = nm.label_transfer_backward(s, W, lt)
    dlogits = nm.gumbel_sample_backward(s, ds, tau)
    assert rel_error(dlogits, numeric_grad(f, logits)) < TOL
    assert rel_error(dW, numeric_grad(f, lt.W_le)) < TOL
    assert rel_error(dH, numeric_grad(f, enc.features)) < TOL


# -- biaffine against a scalar loop ----------------------------------------------------

def biaffine_loop(H, p):
    n = H.shape[0]
    out = np.zeros((n, n, 2))
    for i in range(n):
        x = p.head.forward(H[i:i + 1])[0][0]
        for j in range(n):
            y = p.tail.forward(H[j:j + 1])[0][0]
            for k in range(2):
                out[i, j, k] = x @ p.U1[k] @ y + p.U2[k] @ np.concatenate([x, y]) + p.b[k]
            out[i, j] = np.exp(out[i, j] - out[i, j].max())
            out[i, j] /= out[i, j].sum()
    return out


@pytest.mark.parametrize("seed", range(5))
def test_biaffine_matches_scalar_loop(seed):
    rng = np.random.default_rng(seed)
    p = random_biaffine(rng, 6, 4, 5)
    H = rng.normal(size=(5, 6))
    np.testing.assert_allclose(nm.biaffine_forward(H, p)[0], biaffine_loop(H, p), rtol=1e-10, atol=1e-12)
    x, y = p.head.forward(H[1:2])[0][0], p.tail.forward(H[3:4])[0][0]
    np.testing.assert_allclose(nm.softmax(nm.biaffine_scores(x, y, p)), biaffine_loop(H, p)[1, 3], rtol=1e-10)


def test_biaffine_rows_are_distributions(rng):
    p = random_biaffine(rng, 3, 2, 2)
    t = nm.biaffine_table(rng.normal(size=(4, 3)), p)
    np.testing.assert_allclose(t.probs.sum(axis=2), 1.0)


def test_biaffine_shape_mismatch(rng):
    p = random_biaffine(rng, 3, 2, 2)
    with pytest.raises(ContractViolation):
        nm.biaffine_forward(rng.normal(size=(4, 5)), p)


# -- Gumbel sampling ----------------------------------------------------------------------

def test_gumbel_argmax_frequencies_follow_softmax():
    rng = np.random.default_rng(5)
    logits = rng.normal(size=9)
    g = nm.gumbel_noise((50_000, 9), rng)
    freq = np.bincount(np.argmax(logits + g, axis=1), minlength=9) / 50_000
    assert np.max(np.abs(freq - nm.softmax(logits))) < 0.01


def test_gumbel_sample_is_row_stochastic_and_sharpens(rng):
    t = nm.NeLabelTable(rng.normal(size=(3, 9)))
    hot = nm.gumbel_sample(t, nm.LabelTransferParams(np.zeros((9, 2)), 0.01))
    np.testing.assert_allclose(hot.sum(axis=1), 1.0)
    assert np.all(np.argmax(hot, axis=1) == t.predictions())
    assert hot.max(axis=1).min() > 0.99


def test_label_transfer_shapes(rng):
    enc = nm.QuestionEncoding(["a", "b"], rng.normal(size=(2, 4)))
    lt = nm.LabelTransferParams(rng.normal(size=(9, 3)))
    s = nm.gumbel_sample(nm.NeLabelTable(rng.normal(size=(2, 9))), lt, rng)
    assert nm.label_transfer(enc, s, lt).shape == (2, 7)
    assert nm.label_transfer(enc, None, None) is enc.features
    with pytest.raises(ContractViolation):
        nm.label_transfer(enc, np.zeros((3, 9)), lt)
