"""Layers: GRU cell semantics, focal loss values, parameter naming, init."""

import numpy as np
import pytest

from linesg import autodiff as ad
from linesg import nn
from linesg.autodiff import Tensor
from linesg.oracles import finite_difference_check
from linesg.rng import SplitMix64, named_stream


def zeroed(module):
    for _, p in module.named_params():
        p.data = np.zeros_like(p.data)
    return module


class TestGRUCell:
    def test_zero_params_halve_state(self):
        gru = zeroed(nn.GRUCell(4, SplitMix64(0)))
        h = Tensor([[1.0, 2.0, 3.0, 4.0]])
        out = gru(h, Tensor(np.zeros((1, 4), dtype=np.float32)))
        np.testing.assert_allclose(out.data, 0.5 * h.data, atol=1e-7)

    def test_saturated_update_gate_takes_candidate(self):
        gru = zeroed(nn.GRUCell(3, SplitMix64(0)))
        gru.b_z.data = np.full(3, 50.0, dtype=np.float32)
        gru.w_h.data = np.eye(3, dtype=np.float32)
        h = Tensor([[5.0, -1.0, 2.0]])
        m = Tensor([[0.3, -0.2, 0.1]])
        out = gru(h, m)
        np.testing.assert_allclose(out.data, np.tanh(m.data), atol=1e-5)

    def test_saturated_hold_keeps_state(self):
        gru = zeroed(nn.GRUCell(3, SplitMix64(0)))
        gru.b_z.data = np.full(3, -50.0, dtype=np.float32)
        h = Tensor([[5.0, -1.0, 2.0]])
        out = gru(h, Tensor(np.zeros((1, 3), dtype=np.float32)))
        np.testing.assert_allclose(out.data, h.data, atol=1e-5)

    def test_shape_mismatch(self):
        gru = nn.GRUCell(3, SplitMix64(0))
        with pytest.raises(ValueError):
            gru(Tensor(np.zeros((1, 3))), Tensor(np.zeros((1, 4))))

    def test_finite_difference(self):
        rng = np.random.default_rng(0)
        gru = nn.GRUCell(4, SplitMix64(9))
        leaves = []
        for _, p in gru.named_params():
            p.tensor.data = rng.normal(size=p.shape) * 0.4
            leaves.append(p.tensor)
        h = Tensor(rng.normal(size=(2, 4)), dtype=np.float64, requires_grad=True)
        m = Tensor(rng.normal(size=(2, 4)), dtype=np.float64, requires_grad=True)
        w = Tensor(rng.normal(size=(2, 4)), dtype=np.float64)
        err = finite_difference_check(lambda: ad.reduce_sum(gru(h, m) * w),
                                      leaves + [h, m], h=1e-4)
        assert err <= 1e-4


class TestFocalLoss:
    def test_gamma_zero_is_cross_entropy(self):
        probs = Tensor(np.asarray([0.2, 0.5, 0.3], dtype=np.float64))
        loss = nn.focal_loss(probs, 1, gamma=0.0, alpha=1.0)
        assert loss.item() == pytest.approx(-np.log(0.5), abs=1e-7)

    def test_perfect_prediction_is_zero(self):
        probs = Tensor(np.asarray([0.0, 1.0], dtype=np.float64))
        assert nn.focal_loss(probs, 1, gamma=2.0, alpha=1.0).item() == pytest.approx(0.0, abs=1e-9)

    def test_half_probability_closed_form(self):
        probs = Tensor(np.asarray([0.5, 0.5], dtype=np.float64))
        loss = nn.focal_loss(probs, 0, gamma=2.0, alpha=1.0)
        assert loss.item() == pytest.approx(0.25 * np.log(2.0), abs=1e-9)
        assert loss.item() == pytest.approx(0.17329, abs=1e-5)

    def test_alpha_scales(self):
        probs = Tensor(np.asarray([0.5, 0.5], dtype=np.float64))
        quarter = nn.focal_loss(probs, 0, gamma=2.0, alpha=0.25).item()
        assert quarter == pytest.approx(0.25 * 0.25 * np.log(2.0), abs=1e-9)

    def test_target_out_of_range(self):
        with pytest.raises(IndexError):
            nn.focal_loss(Tensor([0.5, 0.5]), 2, 2.0, 1.0)

    def test_clamp_guards_log(self):
        probs = Tensor(np.asarray([1.0, 0.0], dtype=np.float64))
        loss = nn.focal_loss(probs, 1, gamma=2.0, alpha=1.0)
        assert np.isfinite(loss.item())

    def test_gradient(self):
        rng = np.random.default_rng(1)
        logits = Tensor(rng.normal(size=(1, 5)), dtype=np.float64, requires_grad=True)
        err = finite_difference_check(
            lambda: nn.focal_loss(ad.reshape(ad.softmax(logits, axis=-1), (5,)), 2, 2.0, 0.5),
            [logits], h=1e-5)
        assert err <= 1e-4


class TestParamsAndInit:
    def test_names_are_unique_dotted_paths(self):
        class Tiny(nn.Module):
            def __init__(self):
                rng = SplitMix64(1)
                self.proj = nn.Linear(3, 4, rng)
                self.blocks = [nn.GRUCell(4, rng), nn.GRUCell(4, rng)]

        names = [n for n, _ in Tiny().named_params()]
        assert "proj.w" in names and "blocks.1.gru" not in names
        assert "blocks.0.w_z" in names and "blocks.1.u_h" in names
        assert len(names) == len(set(names))

    def test_uniform_init_bounds_and_zero_bias(self):
        rng = named_stream(3, "init")
        lin = nn.Linear(16, 8, rng)
        bound = 1.0 / np.sqrt(16)
        assert np.all(np.abs(lin.w.data) <= bound)
        assert np.all(lin.b.data == 0.0)
        assert np.std(lin.w.data) > 0.1 * bound

    def test_init_is_seed_deterministic(self):
        w1 = nn.Linear(6, 6, named_stream(5, "init")).w.data
        w2 = nn.Linear(6, 6, named_stream(5, "init")).w.data
        np.testing.assert_array_equal(w1, w2)
        w3 = nn.Linear(6, 6, named_stream(6, "init")).w.data
        assert not np.array_equal(w1, w3)

    def test_embedding_rows_distinct_and_out_of_range(self):
        emb = nn.Embedding(5, 8, SplitMix64(2))
        rows = emb(np.array([0, 1])).data
        assert not np.array_equal(rows[0], rows[1])
        same = emb(np.array([3, 3])).data
        np.testing.assert_array_equal(same[0], same[1])
        with pytest.raises(IndexError):
            emb(np.array([5]))
