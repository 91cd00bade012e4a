import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cqrnn.data import (
    CensoredDataset,
    SplitConfig,
    Standardizer,
    load_csv,
    save_csv,
    split,
    standardize_apply,
    standardize_fit,
)
from cqrnn.exceptions import DataError, DataValidationError, ParseError, SchemaError


def _ds(n=10, d=2, seed=0):
    r = np.random.default_rng(seed)
    t = r.normal(5, 1, n)
    c = r.normal(5.5, 1, n)
    return CensoredDataset(r.uniform(0, 2, (n, d)), np.minimum(t, c), (t <= c).astype(int),
                           true_targets=t)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestDataset:
    def test_counts(self):
        ds = CensoredDataset(np.zeros((3, 1)), [1.0, 2.0, 3.0], [1, 0, 1])
        assert (ds.n_censored, ds.n_observed) == (1, 2)
        assert ds.censored.tolist() == [False, True, False]

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            CensoredDataset(np.zeros((3, 1)), [1.0, 2.0], [1, 0])

    def test_bad_indicator(self):
        with pytest.raises(DataError):
            CensoredDataset(np.zeros((2, 1)), [1.0, 2.0], [1, 2])

    def test_true_target_consistency(self):
        with pytest.raises(DataError):
            CensoredDataset(np.zeros((1, 1)), [2.0], [1], true_targets=[3.0])
        with pytest.raises(DataError):
            CensoredDataset(np.zeros((1, 1)), [3.0], [0], true_targets=[2.0])

    def test_arrays_are_read_only(self):
        ds = _ds()
        with pytest.raises(ValueError):
            ds.labels[0] = 1.0


class TestCsv:
    def test_three_rows(self, tmp_path):
        p = _write(tmp_path, "x1,y,delta\n0.1,1.0,1\n0.2,2.0,0\n0.3,3.0,1\n")
        ds = load_csv(p)
        assert ds.n_censored == 1 and ds.n_observed == 2
        assert ds.labels.tolist() == [1.0, 2.0, 3.0]

    def test_bad_indicator_names_row(self, tmp_path):
        rows = "".join(f"0.{i},{i}.0,1\n" for i in range(1, 5))
        p = _write(tmp_path, "x1,y,delta\n" + rows + "0.5,5.0,2\n")
        with pytest.raises(DataValidationError, match="row 5"):
            load_csv(p)

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataValidationError, match="no rows"):
            load_csv(_write(tmp_path, ""))

    def test_header_only(self, tmp_path):
        with pytest.raises(DataValidationError, match="no rows"):
            load_csv(_write(tmp_path, "x1,y,delta\n"))

    def test_missing_column(self, tmp_path):
        with pytest.raises(SchemaError, match="delta"):
            load_csv(_write(tmp_path, "x1,y\n1,2\n"))

    def test_non_numeric_cell(self, tmp_path):
        with pytest.raises(ParseError, match="row 2"):
            load_csv(_write(tmp_path, "x1,y,delta\n1,2,1\n1,abc,1\n"))

    def test_crlf_and_custom_columns(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_bytes(b"age,time,event\r\n50,3.5,1\r\n61,2.0,0\r\n")
        ds = load_csv(p, feature_columns=["age"], label_column="time", indicator_column="event")
        assert ds.features[:, 0].tolist() == [50.0, 61.0]
        assert ds.indicators.tolist() == [1, 0]

    def test_round_trip(self, tmp_path):
        ds = _ds(25, 3)
        save_csv(ds, tmp_path / "r.csv")
        back = load_csv(tmp_path / "r.csv")
        assert np.allclose(back.features, ds.features, atol=1e-12, rtol=0)
        assert np.allclose(back.labels, ds.labels, atol=1e-12, rtol=0)
        assert np.array_equal(back.indicators, ds.indicators)
        assert np.allclose(back.true_targets, ds.true_targets, atol=1e-12, rtol=0)

    @settings(max_examples=25, deadline=None)
    @given(x=hnp.arrays(float, (6, 2), elements=st.floats(-1e6, 1e6)),
           y=hnp.arrays(float, 6, elements=st.floats(-1e6, 1e6)),
           d=hnp.arrays(np.int8, 6, elements=st.integers(0, 1)))
    def test_round_trip_is_exact(self, tmp_path_factory, x, y, d):
        path = tmp_path_factory.mktemp("rt") / "h.csv"
        ds = CensoredDataset(x, y, d)
        save_csv(ds, path)
        back = load_csv(path)
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.indicators, ds.indicators)


class TestSplit:
    def test_sizes(self):
        tr, te = split(_ds(10), SplitConfig(0.2, 7))
        assert (len(tr), len(te)) == (8, 2)

    def test_deterministic(self):
        ds = _ds(40)
        a = split(ds, SplitConfig(0.25, 3))
        b = split(ds, SplitConfig(0.25, 3))
        assert np.array_equal(a[0].labels, b[0].labels)
        assert np.array_equal(a[1].features, b[1].features)

    def test_seeds_give_different_partitions(self):
        ds = _ds(20)
        parts = {tuple(split(ds, SplitConfig(0.2, s))[1].labels) for s in range(100)}
        assert len(parts) > 90

    def test_too_small(self):
        with pytest.raises(DataError):
            split(_ds(1), SplitConfig())

    @pytest.mark.parametrize("f", [0.0, 1.0, -0.1])
    def test_fraction_bounds(self, f):
        with pytest.raises(DataError):
            SplitConfig(f, 0)

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(2, 60), f=st.floats(0.05, 0.95), seed=st.integers(0, 2**31))
    def test_partition_is_a_bijection(self, n, f, seed):
        ds = _ds(n, 2, seed % 97)
        try:
            tr, te = split(ds, SplitConfig(f, seed))
        except DataError:
            # only allowed when one side would be empty
            assert int(np.floor(n * (1 - f))) in (0, n)
            return
        assert len(tr) == int(np.floor(n * (1 - f)))

        def triples(d):
            return sorted(zip(map(tuple, d.features), d.labels, d.indicators))

        assert sorted(triples(tr) + triples(te)) == triples(ds)


class TestStandardize:
    def test_constant_column(self):
        ds = CensoredDataset(np.ones((3, 1)), [1.0, 2.0, 3.0], [1, 1, 1])
        assert np.array_equal(standardize_apply(standardize_fit(ds), ds).features, np.zeros((3, 1)))

    def test_population_std(self):
        ds = CensoredDataset(np.array([[0.0], [2.0]]), [1.0, 2.0], [1, 1])
        sc = standardize_fit(ds)
        assert sc.mean.tolist() == [1.0] and sc.std.tolist() == [1.0]
        assert standardize_apply(sc, ds).features[:, 0].tolist() == [-1.0, 1.0]

    def test_labels_untouched(self):
        tr, te = _ds(30), _ds(12, seed=4)
        out = standardize_apply(standardize_fit(tr), te)
        assert out.labels.tobytes() == te.labels.tobytes()
        assert out.indicators.tobytes() == te.indicators.tobytes()

    def test_dict_round_trip(self):
        sc = standardize_fit(_ds(15, 3))
        back = Standardizer.from_dict(sc.to_dict())
        assert np.array_equal(back.mean, sc.mean) and np.array_equal(back.std, sc.std)
