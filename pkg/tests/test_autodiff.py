"""Tensor engine: frozen op examples, invariants, finite-difference checks."""

import numpy as np
import pytest

import curvetext.autodiff as ad
from curvetext.autodiff import ParameterStore, ShapeError, Tensor, backward
from curvetext.gradcheck import finite_diff_check, suite_tensor_autodiff


class TestConv2d:
    def test_all_ones_center(self):
        x = Tensor(np.ones((1, 1, 3, 3)))
        w = Tensor(np.ones((1, 1, 3, 3)))
        b = Tensor(np.zeros(1))
        out = ad.conv2d(x, w, b, (1, 1), (1, 1))
        assert out.data.shape == (1, 1, 3, 3)
        assert out.data[0, 0, 1, 1] == 9.0

    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.uniform(-1, 1, (2, 1, 5, 7)))
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        out = ad.conv2d(x, Tensor(w), Tensor(np.zeros(1)), (1, 1), (1, 1))
        np.testing.assert_array_equal(out.data, x.data)

    def test_output_size_formula(self):
        x = Tensor(np.zeros((1, 2, 11, 9)))
        w = Tensor(np.zeros((3, 2, 3, 3)))
        out = ad.conv2d(x, w, Tensor(np.zeros(3)), (2, 2), (1, 1))
        # floor((in + 2p - k) / s) + 1
        assert out.data.shape == (1, 3, (11 + 2 - 3) // 2 + 1, (9 + 2 - 3) // 2 + 1)

    def test_channel_mismatch_raises(self):
        x = Tensor(np.zeros((1, 2, 4, 4)))
        w = Tensor(np.zeros((1, 3, 3, 3)))
        with pytest.raises(ShapeError, match="channels"):
            ad.conv2d(x, w, Tensor(np.zeros(1)), (1, 1), (1, 1))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.uniform(-1, 1, (2, 3, 8, 8)), requires_grad=True)
        w = Tensor(rng.uniform(-0.5, 0.5, (4, 3, 3, 3)), requires_grad=True)
        b = Tensor(rng.uniform(-0.5, 0.5, 4), requires_grad=True)
        wsum = rng.uniform(-1, 1, (2, 4, 8, 8))
        err = finite_diff_check(
            lambda: (ad.conv2d(x, w, b, (1, 1), (1, 1)) * Tensor(wsum)).sum(), [x, w, b]
        )
        assert err < 1e-4


class TestMaxpool2:
    def test_max_of_four(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        assert ad.maxpool2(x).data.reshape(()) == 4.0

    def test_tie_routes_to_first_index(self):
        x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
        out = ad.maxpool2(x)
        assert out.data.reshape(()) == 1.0
        backward(out.sum())
        np.testing.assert_array_equal(x.grad.reshape(2, 2), [[1.0, 0.0], [0.0, 0.0]])

    def test_odd_extent_pads(self):
        x = Tensor(np.arange(15, dtype=float).reshape(1, 1, 3, 5))
        out = ad.maxpool2(x)
        assert out.data.shape == (1, 1, 2, 3)
        assert out.data[0, 0, 1, 2] == 14.0  # bottom-right window holds one real cell

    def test_gradient_at_untied_points(self):
        rng = np.random.default_rng(11)
        base = rng.uniform(-1, 1, (1, 2, 6, 6)) + 1e-3 * np.arange(72).reshape(1, 2, 6, 6)
        x = Tensor(base, requires_grad=True)
        wsum = rng.uniform(-1, 1, (1, 2, 3, 3))
        err = finite_diff_check(lambda: (ad.maxpool2(x) * Tensor(wsum)).sum(), [x])
        assert err < 1e-4


class TestLinear:
    def test_zero_weight_gives_bias(self):
        x = Tensor(np.array([1.0, 2.0, 3.0]))
        w = Tensor(np.zeros((2, 3)))
        b = Tensor(np.array([5.0, -1.0]))
        np.testing.assert_array_equal(ad.linear(x, w, b).data, [5.0, -1.0])

    def test_identity_weight(self):
        x = Tensor(np.array([1.5, -2.0]))
        out = ad.linear(x, Tensor(np.eye(2)), Tensor(np.zeros(2)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_gradients(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.uniform(-1, 1, (3, 5)), requires_grad=True)
        w = Tensor(rng.uniform(-1, 1, (4, 5)), requires_grad=True)
        b = Tensor(rng.uniform(-1, 1, 4), requires_grad=True)
        wsum = rng.uniform(-1, 1, (3, 4))
        err = finite_diff_check(lambda: (ad.linear(x, w, b) * Tensor(wsum)).sum(), [x, w, b])
        assert err < 1e-4


class TestActivations:
    def test_relu_kills_negatives(self):
        x = Tensor(np.array([-3.0, -0.5, 0.5, 2.0]))
        np.testing.assert_array_equal(ad.relu(x).data, [0.0, 0.0, 0.5, 2.0])

    def test_softmax_symmetry(self):
        out = ad.softmax(Tensor(np.zeros(3)), axis=0)
        np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-15)

    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = Tensor(rng.uniform(-50, 50, (4, 9)))
            s = ad.softmax(x, axis=1).data.sum(axis=1)
            np.testing.assert_allclose(s, 1.0, atol=1e-12)

    def test_softmax_gradient(self):
        rng = np.random.default_rng(9)
        x = Tensor(rng.uniform(-2, 2, 7), requires_grad=True)
        wsum = rng.uniform(-1, 1, 7)
        err = finite_diff_check(lambda: (ad.softmax(x, axis=0) * Tensor(wsum)).sum(), [x])
        assert err < 1e-4


class TestGruCell:
    @staticmethod
    def _params(rng, d, h, scale=0.7):
        return (
            Tensor(rng.uniform(-scale, scale, (3 * h, d)), requires_grad=True),
            Tensor(rng.uniform(-scale, scale, (3 * h, h)), requires_grad=True),
            Tensor(rng.uniform(-scale, scale, 3 * h), requires_grad=True),
        )

    def test_zero_everything_gives_zero_state(self):
        z = Tensor(np.zeros((1, 3)))
        s = Tensor(np.zeros((1, 4)))
        out = ad.gru_cell(z, s, Tensor(np.zeros((12, 3))), Tensor(np.zeros((12, 4))), Tensor(np.zeros(12)))
        np.testing.assert_array_equal(out.data, np.zeros((1, 4)))

    def test_saturated_low_update_gate_preserves_state(self):
        rng = np.random.default_rng(13)
        x = Tensor(rng.uniform(-1, 1, (1, 3)))
        s = Tensor(rng.uniform(-1, 1, (1, 4)))
        w_ih, w_hh, b = self._params(rng, 3, 4, scale=0.2)
        b.data[:4] = -40.0  # update gate -> 0
        out = ad.gru_cell(x, s, w_ih, w_hh, b)
        np.testing.assert_allclose(out.data, s.data, atol=1e-12)

    def test_gradients_all_params(self):
        rng = np.random.default_rng(17)
        x = Tensor(rng.uniform(-1, 1, (2, 3)), requires_grad=True)
        s = Tensor(rng.uniform(-1, 1, (2, 4)), requires_grad=True)
        w_ih, w_hh, b = self._params(rng, 3, 4)
        wsum = rng.uniform(-1, 1, (2, 4))
        err = finite_diff_check(
            lambda: (ad.gru_cell(x, s, w_ih, w_hh, b) * Tensor(wsum)).sum(),
            [x, s, w_ih, w_hh, b],
        )
        assert err < 1e-4


class TestLstmCell:
    def test_zero_case(self):
        z = Tensor(np.zeros((1, 3)))
        h = Tensor(np.zeros((1, 4)))
        c = Tensor(np.zeros((1, 4)))
        zeros = Tensor(np.zeros((16, 3))), Tensor(np.zeros((16, 4))), Tensor(np.zeros(16))
        hn, cn = ad.lstm_cell(z, h, c, *zeros)
        np.testing.assert_array_equal(hn.data, np.zeros((1, 4)))
        np.testing.assert_array_equal(cn.data, np.zeros((1, 4)))

    def test_forget_gate_saturation_preserves_cell(self):
        rng = np.random.default_rng(19)
        x = Tensor(np.zeros((1, 3)))
        h = Tensor(np.zeros((1, 4)))
        c = Tensor(rng.uniform(-1, 1, (1, 4)))
        w_ih = Tensor(np.zeros((16, 3)))
        w_hh = Tensor(np.zeros((16, 4)))
        b = Tensor(np.zeros(16))
        b.data[:4] = -40.0   # input gate -> 0
        b.data[4:8] = 40.0   # forget gate -> 1
        _, cn = ad.lstm_cell(x, h, c, w_ih, w_hh, b)
        np.testing.assert_allclose(cn.data, c.data, atol=1e-12)

    def test_gradients(self):
        rng = np.random.default_rng(23)
        x = Tensor(rng.uniform(-1, 1, (2, 3)), requires_grad=True)
        h = Tensor(rng.uniform(-1, 1, (2, 4)), requires_grad=True)
        c = Tensor(rng.uniform(-1, 1, (2, 4)), requires_grad=True)
        w_ih = Tensor(rng.uniform(-0.7, 0.7, (16, 3)), requires_grad=True)
        w_hh = Tensor(rng.uniform(-0.7, 0.7, (16, 4)), requires_grad=True)
        b = Tensor(rng.uniform(-0.5, 0.5, 16), requires_grad=True)
        wsum = rng.uniform(-1, 1, (2, 4))

        def loss():
            hn, cn = ad.lstm_cell(x, h, c, w_ih, w_hh, b)
            return (hn * Tensor(wsum)).sum() + (cn * Tensor(wsum[::-1])).sum()

        assert finite_diff_check(loss, [x, h, c, w_ih, w_hh, b]) < 1e-4


class TestEmbedding:
    def test_one_hot_table_returns_basis_row(self):
        table = Tensor(np.eye(5))
        out = ad.embedding_lookup(table, 3)
        np.testing.assert_array_equal(out.data, np.eye(5)[3])

    def test_repeated_index_accumulates_gradient(self):
        table = Tensor(np.zeros((4, 2)), requires_grad=True)
        out = ad.embedding_lookup(table, np.array([1, 1]))
        backward(out.sum())
        np.testing.assert_array_equal(table.grad[1], [2.0, 2.0])
        np.testing.assert_array_equal(table.grad[0], [0.0, 0.0])

    def test_gradient(self):
        rng = np.random.default_rng(29)
        table = Tensor(rng.uniform(-1, 1, (6, 3)), requires_grad=True)
        wsum = rng.uniform(-1, 1, (4, 3))
        err = finite_diff_check(
            lambda: (ad.embedding_lookup(table, np.array([0, 2, 5, 2])) * Tensor(wsum)).sum(),
            [table],
        )
        assert err < 1e-4


class TestCrossEntropy:
    def test_uniform_logits_give_log_vocab(self):
        for v in (3, 10, 68):
            loss = ad.cross_entropy(Tensor(np.zeros(v)), 0)
            np.testing.assert_allclose(loss.data, np.log(v), atol=1e-12)

    def test_dominant_correct_logit_drives_loss_to_zero(self):
        logits = np.zeros(5)
        logits[2] = 60.0
        assert ad.cross_entropy(Tensor(logits), 2).item() < 1e-12

    def test_gradient(self):
        rng = np.random.default_rng(31)
        logits = Tensor(rng.uniform(-2, 2, 7), requires_grad=True)
        assert finite_diff_check(lambda: ad.cross_entropy(logits, 4), [logits]) < 1e-4


class TestBackward:
    def test_sum_of_losses_equals_separate_passes(self):
        rng = np.random.default_rng(37)
        data = rng.uniform(-1, 1, 6)

        def build(x):
            return (x * x).sum(), (ad.tanh(x) * Tensor(np.arange(6.0))).sum()

        x1 = Tensor(data.copy(), requires_grad=True)
        la, lb = build(x1)
        backward(la + lb)
        combined = x1.grad.copy()

        x2 = Tensor(data.copy(), requires_grad=True)
        la, lb = build(x2)
        backward(la)
        backward(lb)
        np.testing.assert_allclose(x2.grad, combined, atol=1e-12)

    def test_repeated_backward_accumulates(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = (x * x).sum()
        backward(y)
        backward(y)
        np.testing.assert_allclose(x.grad, [8.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ShapeError):
            backward(x * 2)

    def test_determinism(self):
        def run():
            rng = np.random.default_rng(41)
            x = Tensor(rng.uniform(-1, 1, (2, 3, 6, 6)), requires_grad=True)
            w = Tensor(rng.uniform(-1, 1, (2, 3, 3, 3)), requires_grad=True)
            out = ad.maxpool2(ad.relu(ad.conv2d(x, w, Tensor(np.zeros(2)), (1, 1), (1, 1))))
            loss = (out * out).sum()
            backward(loss)
            return loss.item(), x.grad.copy()

        l1, g1 = run()
        l2, g2 = run()
        assert l1 == l2
        np.testing.assert_array_equal(g1, g2)


class TestParameterStore:
    def test_duplicate_name_rejected(self):
        store = ParameterStore()
        store.add("a.w", np.zeros(2))
        with pytest.raises(ValueError, match="duplicate"):
            store.add("a.w", np.zeros(2))

    def test_ordered_names(self):
        store = ParameterStore()
        store.add("b", np.zeros(1))
        store.add("a", np.zeros(1))
        assert store.names() == ["b", "a"]


def test_full_op_suite_twenty_seeds():
    # the acceptance-gate bound: every op under 1e-4 across >= 20 seeds
    assert suite_tensor_autodiff(0, rounds=20) < 1e-4
