import json

import numpy as np
import pytest

import oracles
from sensorformer.data import (
    DataError,
    LagEdge,
    LagSpec,
    MultivariateSeries,
    chronological_split,
    default_synthetic,
    load_csv,
    make_windows,
    save_csv,
    split_spec,
    synth_lagged,
    window_arrays,
    window_count,
    write_synthetic,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestLoad:
    def test_plain(self, tmp_path):
        s = load_csv(write(tmp_path, "a,b\n1,2\n3,4\n5,6\n"))
        assert s.values.shape == (3, 2) and s.names == ["a", "b"] and s.timestamps is None

    def test_date_column_excluded(self, tmp_path):
        s = load_csv(write(tmp_path, "date,x,y,z\n2016-07-01 00:00:00,1,2,3\n2016-07-01 01:00:00,4,5,6\n"))
        assert s.D == 3 and s.timestamps[1] == "2016-07-01 01:00:00"
        assert s.values.tolist() == [[1, 2, 3], [4, 5, 6]]

    def test_unparseable_cell_names_location(self, tmp_path):
        with pytest.raises(DataError, match=r"row 3, column 'b'"):
            load_csv(write(tmp_path, "a,b\n1,2\n3,oops\n"))

    def test_missing_value_rejected(self, tmp_path):
        with pytest.raises(DataError, match="row 2"):
            load_csv(write(tmp_path, "a,b\n1,nan\n"))

    def test_empty(self, tmp_path):
        with pytest.raises(DataError, match="empty"):
            load_csv(write(tmp_path, ""))

    def test_round_trip_full_precision(self, tmp_path, rng):
        s = MultivariateSeries(["p", "q"], rng.standard_normal((20, 2)) * 1e5, [f"t{i}" for i in range(20)])
        path = str(tmp_path / "r.csv")
        save_csv(s, path)
        back = load_csv(path)
        assert back.values.tobytes() == s.values.tobytes()
        assert back.timestamps == s.timestamps


class TestSplit:
    def test_named_dataset_counts(self):
        T, L, H = 17420, 96, 96
        spec = split_spec(T, L, H, "ETTh1")
        counts = [window_count(b - a, L, H) for a, b in (spec.train, spec.val, spec.test)]
        assert counts == [8545, 2881, 2881]

    def test_minute_dataset_counts(self):
        spec = split_spec(69680, 96, 96, "ETTm1")
        assert [window_count(b - a, 96, 96) for a, b in (spec.train, spec.val, spec.test)] == [34465, 11521, 11521]

    def test_ratio_split(self):
        spec = split_spec(1000, 10, 5)
        assert spec.train == (0, 700)
        assert spec.val[1] - spec.val[0] - 10 == 100
        assert spec.test[1] - spec.test[0] - 10 == 200

    def test_overhang(self, rng):
        s = MultivariateSeries(["a"], np.arange(1000.0)[:, None])
        train, val, test = chronological_split(s, 24, 12)
        first_val = make_windows(val, 24, 12)[0]
        assert first_val.x_his[-1, 0] == train.values[-1, 0] == 699
        assert first_val.x_future[0, 0] == 700
        assert make_windows(test, 24, 12)[0].x_future[0, 0] == 800

    def test_too_short(self):
        with pytest.raises(DataError):
            split_spec(100, 96, 96)
        with pytest.raises(DataError):
            split_spec(1000, 96, 96, "ETTh1")


class TestWindows:
    def test_count(self):
        s = MultivariateSeries(["a"], np.zeros((200, 1)))
        assert len(make_windows(s, 96, 96)) == 9

    def test_non_overlapping_stride(self):
        v = np.arange(100.0)[:, None]
        x, y = window_arrays(v, 10, 5, stride=10)
        assert x.shape == (9, 10, 1)
        starts = x[:, 0, 0].tolist()
        assert starts == [10.0 * k for k in range(9)]

    def test_contents_vs_index_oracle(self, rng):
        v = rng.standard_normal((40, 3))
        ws = make_windows(MultivariateSeries(list("abc"), v), 7, 4)
        assert len(ws) == 40 - 7 - 4 + 1
        for w in ws:
            k = w.index
            assert oracles.max_abs_diff(w.x_his.tolist(), v[k:k + 7].tolist()) == 0
            assert oracles.max_abs_diff(w.x_future.tolist(), v[k + 7:k + 11].tolist()) == 0

    def test_no_windows(self):
        with pytest.raises(DataError):
            window_arrays(np.zeros((10, 1)), 8, 4)


class TestSynthetic:
    def test_patch_lag_arithmetic(self):
        assert LagEdge(0, 1, 16).delay // 8 == 2

    def test_noiseless_exact_shift(self):
        s = synth_lagged(2, 500, LagSpec((LagEdge(0, 1, 16, 1.0),), 0.0), seed=3)
        np.testing.assert_array_equal(s.values[16:, 1], s.values[:-16, 0])
        corr = np.corrcoef(s.values[16:, 1], s.values[:-16, 0])[0, 1]
        assert corr == pytest.approx(1.0, abs=1e-12)

    def test_gain_and_noise(self):
        s = synth_lagged(2, 3000, LagSpec((LagEdge(0, 1, 5, 0.5),), 0.1), seed=1)
        resid = s.values[5:, 1] - 0.5 * s.values[:-5, 0]
        assert resid.std() == pytest.approx(0.1, rel=0.1)

    def test_aligned_patches_pcc_near_one(self):
        s = synth_lagged(2, 400, LagSpec((LagEdge(0, 1, 16),), 0.0), seed=2)
        a, b = s.values[100:132, 0], s.values[116:148, 1]
        assert oracles.pearson(a.tolist(), b.tolist()) == pytest.approx(1.0, abs=1e-12)

    def test_chain_and_jitter(self):
        spec = LagSpec((LagEdge(0, 1, 8), LagEdge(1, 2, 0, 2.0), LagEdge(0, 3, 10, 1.0, jitter=2)), 0.0, 50)
        s = synth_lagged(4, 600, spec, seed=0)
        np.testing.assert_allclose(s.values[:, 2], 2 * s.values[:, 1])
        lags = set()
        for k in range(20, 600):
            for d in range(8, 13):
                if s.values[k, 3] == s.values[k - d, 0]:
                    lags.add(d)
        assert lags <= set(range(8, 13)) and len(lags) > 1

    def test_zero_lag_cycle(self):
        with pytest.raises(DataError, match="cycle"):
            synth_lagged(2, 100, LagSpec((LagEdge(0, 1, 0), LagEdge(1, 0, 0))), seed=0)

    def test_lagged_cycle_allowed(self):
        s = synth_lagged(2, 100, LagSpec((LagEdge(0, 1, 3, 0.5), LagEdge(1, 0, 4, 0.5))), seed=0)
        assert np.isfinite(s.values).all()

    def test_deterministic(self):
        a, b = default_synthetic(T=300, seed=5), default_synthetic(T=300, seed=5)
        assert a.values.tobytes() == b.values.tobytes()
        assert default_synthetic(T=300, seed=6).values.tobytes() != a.values.tobytes()

    def test_sidecar(self, tmp_path):
        s = default_synthetic(T=200)
        path = str(tmp_path / "syn.csv")
        write_synthetic(s, path)
        meta = json.load(open(path + ".meta.json"))
        assert [e["delay"] for e in meta["lag_spec"]["edges"]] == [16, 24]
        assert LagSpec.from_dict(meta["lag_spec"]) == LagSpec.from_dict(s.meta["lag_spec"])
        assert load_csv(path).values.shape == (200, 4)
