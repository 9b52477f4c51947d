"""Adapter math: identity at init, finite-difference gradients, merging.

Gradient checks perturb every coordinate of small factor matrices and a
random subset of larger ones; the oracle is the centered difference of
a scalar probe loss, nothing from the implementation under test.
"""

from __future__ import annotations

import numpy as np
import pytest

from deskvla.lora import INIT_STD, LoraAdapter


def make_adapter(rng, out_dim=12, in_dim=10, rank=4, alpha=8.0, seed=0):
    w0 = rng.normal(0.0, 0.5, size=(out_dim, in_dim))
    return LoraAdapter(w0, rank=rank, alpha=alpha, seed=seed)


def probe_loss(adapter, x, weights):
    # Scalar loss with a fixed random projection so gradients are dense.
    y = adapter.forward(x)
    return float(np.sum(y * weights))


def test_fresh_adapter_is_identity():
    rng = np.random.default_rng(0)
    for trial in range(20):
        adapter = make_adapter(rng, seed=trial)
        x = rng.normal(size=(5, 10))
        assert np.allclose(adapter.forward(x), x @ adapter.w0.T, atol=1e-12), f"trial {trial}"


def test_init_distribution():
    adapter = LoraAdapter(np.zeros((64, 64)), rank=32, alpha=64.0, seed=5)
    assert np.all(adapter.b == 0.0)
    assert adapter.a.shape == (32, 64)
    assert abs(float(adapter.a.std()) - INIT_STD) < 0.005
    again = LoraAdapter(np.zeros((64, 64)), rank=32, alpha=64.0, seed=5)
    assert np.array_equal(adapter.a, again.a)


def test_scaling():
    adapter = LoraAdapter(np.zeros((8, 8)), rank=32 // 4, alpha=64.0, seed=0)
    assert adapter.scaling == 8.0
    adapter = LoraAdapter(np.zeros((64, 64)), rank=32, alpha=64.0, seed=0)
    assert adapter.scaling == 2.0


def test_rank_validation():
    with pytest.raises(ValueError, match="rank"):
        LoraAdapter(np.zeros((4, 6)), rank=5, alpha=1.0, seed=0)
    with pytest.raises(ValueError, match="rank"):
        LoraAdapter(np.zeros((4, 6)), rank=0, alpha=1.0, seed=0)
    LoraAdapter(np.zeros((4, 6)), rank=4, alpha=1.0, seed=0)  # boundary is fine


def test_frozen_base_is_read_only():
    adapter = make_adapter(np.random.default_rng(1))
    with pytest.raises(ValueError):
        adapter.w0[0, 0] = 1.0


def test_forward_shape_validation():
    adapter = make_adapter(np.random.default_rng(2))
    with pytest.raises(ValueError, match="does not match"):
        adapter.forward(np.zeros((3, 7)))
    with pytest.raises(ValueError):
        adapter.forward(np.zeros(10))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(42)
    eps = 1e-6
    for trial in range(5):
        adapter = make_adapter(rng, out_dim=9, in_dim=7, rank=3, alpha=6.0, seed=trial)
        # Move B off zero so dL/dA is nonzero too.
        adapter.b = rng.normal(0.0, 0.3, size=adapter.b.shape)
        x = rng.normal(size=(4, 7))
        weights = rng.normal(size=(4, 9))

        grads, dx = adapter.backward(x, weights)

        for mat, grad in ((adapter.a, grads.d_a), (adapter.b, grads.d_b)):
            flat = mat.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + eps
                up = probe_loss(adapter, x, weights)
                flat[idx] = orig - eps
                down = probe_loss(adapter, x, weights)
                flat[idx] = orig
                fd = (up - down) / (2 * eps)
                assert abs(grad.reshape(-1)[idx] - fd) <= 1e-4 * max(1.0, abs(fd)), (
                    f"trial {trial} index {idx}"
                )

        xf = x.reshape(-1)
        for idx in range(xf.size):
            orig = xf[idx]
            xf[idx] = orig + eps
            up = probe_loss(adapter, x, weights)
            xf[idx] = orig - eps
            down = probe_loss(adapter, x, weights)
            xf[idx] = orig
            fd = (up - down) / (2 * eps)
            assert abs(dx.reshape(-1)[idx] - fd) <= 1e-4 * max(1.0, abs(fd))


def test_no_gradient_reaches_frozen_base():
    rng = np.random.default_rng(3)
    adapter = make_adapter(rng)
    before = adapter.w0.copy()
    x = rng.normal(size=(6, 10))
    dy = rng.normal(size=(6, 12))
    adapter.backward(x, dy)
    assert np.array_equal(adapter.w0, before)


@pytest.mark.parametrize("rank", [1, 32])
def test_merge_equivalence(rank):
    rng = np.random.default_rng(rank)
    w0 = rng.normal(size=(64, 64))
    adapter = LoraAdapter(w0, rank=rank, alpha=2.0 * rank, seed=7)
    adapter.b = rng.normal(0.0, 0.1, size=adapter.b.shape)
    adapter.a = rng.normal(0.0, 0.1, size=adapter.a.shape)
    x = rng.normal(size=(16, 64))
    merged = x @ adapter.merge().T
    assert np.max(np.abs(merged - adapter.forward(x))) <= 1e-6


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    adapter = make_adapter(rng, seed=11)
    adapter.a = rng.normal(size=adapter.a.shape)
    adapter.b = rng.normal(size=adapter.b.shape)
    path = tmp_path / "proj.lora"
    adapter.save(path)

    fresh = make_adapter(np.random.default_rng(8), seed=99)
    fresh.load_factors(path)
    # Checkpoints hold f32, so equality is up to f32 rounding.
    assert np.array_equal(fresh.a, adapter.a.astype("<f4").astype(np.float64))
    assert np.array_equal(fresh.b, adapter.b.astype("<f4").astype(np.float64))


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.lora"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    adapter = make_adapter(np.random.default_rng(0))
    with pytest.raises(ValueError, match="not an adapter checkpoint"):
        adapter.load_factors(path)


def test_load_rejects_shape_mismatch(tmp_path):
    rng = np.random.default_rng(4)
    adapter = make_adapter(rng, out_dim=12, in_dim=10, rank=4)
    path = tmp_path / "proj.lora"
    adapter.save(path)
    other = make_adapter(rng, out_dim=12, in_dim=10, rank=3)
    with pytest.raises(ValueError, match="shapes do not match"):
        other.load_factors(path)
