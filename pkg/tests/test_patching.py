import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sensorformer.numerics import ShapeError
from sensorformer.patching import (
    ConfigError,
    PatchConfig,
    PatchEmbedding,
    PatchSet,
    embed_patches,
    extract_patches,
    pad_series,
    patch_count,
    positional_encoding,
)


class TestPatchCount:
    def test_default_geometry(self):
        assert patch_count(96, 32, 8) == 10
        assert PatchConfig().N == 10

    def test_boundary(self):
        for S in (1, 3, 50):
            assert patch_count(7, 7, S) == 2

    def test_large_stride(self):
        assert patch_count(96, 32, 64) == 3

    def test_patch_longer_than_lookback(self):
        with pytest.raises(ConfigError):
            patch_count(8, 9, 1)

    def test_config_validation_lists_problems(self):
        with pytest.raises(ConfigError, match="P=40.*d_model=7"):
            PatchConfig(L=32, P=40, S=8, d_model=7)


class TestPad:
    def test_definition(self):
        assert pad_series([1, 2, 3], 2).tolist() == [1, 2, 3, 3, 3]

    def test_zero_stride(self):
        assert pad_series([1, 2, 3], 0).tolist() == [1, 2, 3]

    def test_tail_repeats_last(self, rng):
        x = rng.standard_normal(96)
        out = pad_series(x, 8)
        assert out.shape == (104,)
        assert (out[-9:] == x[95]).all()
        np.testing.assert_array_equal(out[:96], x)

    def test_empty(self):
        with pytest.raises(ValueError):
            pad_series([], 2)


class TestExtract:
    def test_hand_enumeration(self):
        ps = extract_patches([[1.0, 2.0, 3.0, 4.0]], PatchConfig(L=4, P=2, S=2, d_model=2))
        assert ps.N == 3
        assert ps.values[0].tolist() == [[1, 2], [3, 4], [4, 4]]

    def test_constant_series(self):
        ps = extract_patches(np.full((3, 96), 2.5), PatchConfig())
        assert (ps.values == 2.5).all()

    def test_overlap(self, rng):
        ps = extract_patches(rng.standard_normal((1, 96)), PatchConfig())
        for j in range(ps.N - 1):
            np.testing.assert_array_equal(ps.values[0, j, 8:], ps.values[0, j + 1, :24])

    def test_starts_at_multiples_of_stride(self, rng):
        x = rng.standard_normal((2, 50))
        cfg = PatchConfig(L=50, P=12, S=5, d_model=4)
        padded = pad_series(x, 5)
        ps = extract_patches(x, cfg)
        for j in range(cfg.N):
            np.testing.assert_array_equal(ps.values[:, j], padded[:, j * 5:j * 5 + 12])

    def test_wrong_length(self):
        with pytest.raises(ShapeError):
            extract_patches(np.zeros((2, 10)), PatchConfig(L=12, P=4, S=4, d_model=2))

    @settings(max_examples=80, deadline=None)
    @given(st.integers(1, 64).flatmap(lambda L: st.tuples(st.just(L), st.integers(1, L), st.integers(1, 70))))
    def test_round_trip_count(self, geom):
        L, P, S = geom
        x = np.arange(L, dtype=float)[None, :] + 1
        ps = extract_patches(x, PatchConfig(L=L, P=P, S=S, d_model=2))
        assert ps.N == patch_count(L, P, S)
        assert ps.values[0, -1, -1] == x[0, -1]


class TestPositionalEncoding:
    def test_position_zero(self):
        assert positional_encoding(1, 8)[0].tolist() == [0, 1] * 4

    def test_closed_form(self):
        pe = positional_encoding(3, 6)
        assert pe[1, 0] == pytest.approx(math.sin(1.0), abs=1e-15)
        assert pe[2, 3] == pytest.approx(math.cos(2 / 10000 ** (2 / 6)), abs=1e-15)

    def test_range(self):
        pe = positional_encoding(1000, 256)
        assert pe.min() >= -1 and pe.max() <= 1

    def test_odd_width(self):
        with pytest.raises(ConfigError):
            positional_encoding(4, 5)


class TestEmbedding:
    def test_zero_patches_give_positional_encoding(self, rng):
        cfg = PatchConfig(L=16, P=4, S=4, d_model=6)
        emb = PatchEmbedding(cfg, rng)
        emb.b.data[:] = 0
        out = embed_patches(PatchSet(np.zeros((2, cfg.N, 4))), emb)
        np.testing.assert_array_equal(out.data[0], positional_encoding(cfg.N, 6))
        np.testing.assert_array_equal(out.data[1], positional_encoding(cfg.N, 6))

    def test_weight_sharing(self, rng):
        cfg = PatchConfig(L=16, P=4, S=4, d_model=6)
        x = rng.standard_normal(16)
        out = embed_patches(extract_patches(np.stack([x, x]), cfg), PatchEmbedding(cfg, rng))
        np.testing.assert_array_equal(out.data[0], out.data[1])

    def test_shape_contract(self, rng):
        cfg = PatchConfig()
        out = embed_patches(extract_patches(rng.standard_normal((2, 96)), cfg), PatchEmbedding(cfg, rng))
        assert out.shape == (2, 10, 256)

    def test_variable_equivariance(self, rng):
        cfg = PatchConfig(L=16, P=4, S=4, d_model=6)
        x = rng.standard_normal((4, 16))
        emb = PatchEmbedding(cfg, rng)
        perm = [2, 0, 3, 1]
        a = embed_patches(extract_patches(x, cfg), emb).data
        b = embed_patches(extract_patches(x[perm], cfg), emb).data
        np.testing.assert_array_equal(a[perm], b)

    def test_manual_formula(self, rng):
        cfg = PatchConfig(L=16, P=4, S=4, d_model=6)
        emb = PatchEmbedding(cfg, rng)
        ps = extract_patches(rng.standard_normal((2, 16)), cfg)
        out = embed_patches(ps, emb).data
        pe = positional_encoding(cfg.N, 6)
        i, j = 1, 3
        expected = ps.values[i, j] @ emb.W.data + emb.b.data + pe[j]
        np.testing.assert_allclose(out[i, j], expected, atol=1e-14)

    def test_shape_mismatch(self, rng):
        emb = PatchEmbedding(PatchConfig(L=16, P=4, S=4, d_model=6), rng)
        with pytest.raises(ShapeError):
            emb(np.zeros((2, 5, 3)))
