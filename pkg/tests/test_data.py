import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from triage_cascade import errors
from triage_cascade.data import (CohortSplit, FeatureSchema, Preprocessor, SynthConfig, default_schema,
                                 fit_preprocessor, generate_cohort, label_intercept, load_cohort, load_schema,
                                 parse_row, save_schema, split_cohort, synth_schema, write_cohort)


def _tiny_schema(**kw):
    base = dict(basic_numeric=("A", "B"), basic_categorical={"G": ("x", "y", "z")},
                advanced_numeric=("V1", "V2"), label_column="Y", demographic_columns=(("AGE", "numeric"),),
                advanced_available_column="HAS")
    base.update(kw)
    return FeatureSchema(**base)


def _raw(**kw):
    row = {"RID": "p1", "A": "1.0", "B": "2.0", "G": "x", "V1": "0.5", "V2": "", "Y": "1", "HAS": "1", "AGE": "70"}
    row.update(kw)
    return row


class TestSchema:
    def test_default_schema_shape(self):
        s = default_schema()
        assert s.d_b == 9
        assert s.d_a == 329
        assert s.label_column == "CONVERTED_2Y"

    def test_round_trip(self, tmp_path):
        s = synth_schema()
        save_schema(s, tmp_path / "s.json")
        assert load_schema(tmp_path / "s.json") == s
        assert load_schema(tmp_path / "s.json").fingerprint() == s.fingerprint()

    def test_column_in_two_groups_rejected(self):
        with pytest.raises(errors.InvalidConfig):
            _tiny_schema(advanced_numeric=("A",))

    def test_unknown_demographic_kind_rejected(self):
        with pytest.raises(errors.InvalidConfig):
            _tiny_schema(demographic_columns=(("AGE", "ordinal"),))


class TestParseRow:
    def test_valid_row(self):
        r = parse_row(_raw(), _tiny_schema(), 1)
        assert r.basic == {"A": 1.0, "B": 2.0, "G": "x"}
        assert r.label == 1
        assert r.has_advanced
        assert r.advanced[0] == 0.5 and math.isnan(r.advanced[1])
        assert r.demographics["AGE"] == 70.0

    def test_missing_basic_value(self):
        with pytest.raises(errors.MissingBasicValue) as exc:
            parse_row(_raw(B=""), _tiny_schema(), 4)
        assert exc.value.context["row"] == 4 and exc.value.context["col"] == "B"

    def test_unknown_category(self):
        with pytest.raises(errors.UnknownCategory) as exc:
            parse_row(_raw(G="w"), _tiny_schema(), 2)
        assert exc.value.context["token"] == "w"

    @pytest.mark.parametrize("label", ["2", "yes", "0.5", ""])
    def test_non_binary_label(self, label):
        with pytest.raises(errors.NonBinaryLabel):
            parse_row(_raw(Y=label), _tiny_schema(), 1)

    def test_label_optional_for_prediction(self):
        assert parse_row(_raw(Y=""), _tiny_schema(), 1, require_label=False).label is None

    def test_indicator_zero_means_no_advanced(self):
        assert parse_row(_raw(HAS="0"), _tiny_schema(), 1).advanced is None

    def test_blank_indicator_inferred(self):
        assert parse_row(_raw(HAS=""), _tiny_schema(), 1).has_advanced
        assert not parse_row(_raw(HAS="", V1=""), _tiny_schema(), 1).has_advanced


class TestCohortIO:
    def test_write_load_round_trip(self, tmp_path):
        c = generate_cohort(SynthConfig(n_total=30, d_a=5, seed=3))
        write_cohort(c, tmp_path / "c.csv")
        back = load_cohort(tmp_path / "c.csv", c.schema)
        assert back.ids == c.ids
        for a, b in zip(c.rows, back.rows):
            assert a.basic == b.basic and a.label == b.label and a.demographics == b.demographics
            if a.advanced is None:
                assert b.advanced is None
            else:
                np.testing.assert_array_equal(a.advanced, b.advanced)

    def test_missing_column(self, tmp_path):
        c = generate_cohort(SynthConfig(n_total=10, d_a=3))
        write_cohort(c, tmp_path / "c.csv")
        with open(tmp_path / "c.csv") as fh:
            rows = list(csv.reader(fh))
        drop = rows[0].index("MMSE")
        with open(tmp_path / "d.csv", "w", newline="") as fh:
            csv.writer(fh).writerows([r[:drop] + r[drop + 1:] for r in rows])
        with pytest.raises(errors.MissingColumn) as exc:
            load_cohort(tmp_path / "d.csv", c.schema)
        assert exc.value.context["name"] == "MMSE"

    def test_duplicate_ids(self, tmp_path):
        c = generate_cohort(SynthConfig(n_total=10, d_a=3))
        c.rows[1].id = c.rows[0].id
        write_cohort(c, tmp_path / "c.csv")
        with pytest.raises(errors.DuplicateId):
            load_cohort(tmp_path / "c.csv", c.schema)


class TestSplit:
    def test_paper_shape(self):
        c = generate_cohort(SynthConfig())
        s = split_cohort(c, 100, 7)
        assert (len(c), len(c.advanced_ids())) == (1142, 551)
        assert (len(s.basic_train), len(s.advanced_train), len(s.test)) == (1042, 451, 100)

    def test_partition_invariants(self, small_cohort):
        s = split_cohort(small_cohort, 40, 1)
        assert not set(s.test) & set(s.basic_train)
        assert set(s.advanced_train) <= set(s.basic_train)
        assert set(s.test) | set(s.advanced_train) == set(small_cohort.advanced_ids())
        assert set(s.test) | set(s.basic_train) == set(small_cohort.ids)

    def test_deterministic_and_serializable(self, small_cohort):
        a, b = split_cohort(small_cohort, 40, 5), split_cohort(small_cohort, 40, 5)
        assert a == b
        assert CohortSplit.from_dict(a.to_dict()) == a

    def test_test_too_large(self, small_cohort):
        with pytest.raises(errors.TestTooLarge):
            split_cohort(small_cohort, len(small_cohort.advanced_ids()) + 1, 0)


class TestPreprocessor:
    def test_train_columns_standardized(self, small_cohort):
        rows = small_cohort.rows
        prep = fit_preprocessor(rows, small_cohort.schema)
        X = prep.transform(rows)
        nb = prep.n_basic_numeric
        np.testing.assert_allclose(X[:, :nb].mean(0), 0, atol=1e-12)
        np.testing.assert_allclose(X[:, :nb].std(0), 1, atol=1e-12)
        assert X.shape[1] == prep.width == len(prep.feature_names())

    def test_one_hot_blocks_sum_to_one(self, small_cohort):
        prep = fit_preprocessor(small_cohort.rows, small_cohort.schema)
        X = prep.transform(small_cohort.rows)
        for col, idx in prep.groups().items():
            if col in prep.categorical:
                np.testing.assert_array_equal(X[:, idx].sum(1), 1.0)

    def test_groups_partition_columns(self, small_cohort):
        prep = fit_preprocessor(small_cohort.select(small_cohort.advanced_ids()), small_cohort.schema,
                                use_advanced=True)
        cols = sorted(c for idx in prep.groups().values() for c in idx)
        assert cols == list(range(prep.width))

    def test_unseen_category_maps_to_zero_block(self, small_cohort):
        rows = [r for r in small_cohort.rows if r.basic["CDRGLOB"] != "2"]
        prep = fit_preprocessor(rows, small_cohort.schema)
        assert "2" not in prep.categorical["CDRGLOB"]
        odd = [r for r in small_cohort.rows if r.basic["CDRGLOB"] == "2"][:1]
        if odd:
            X = prep.transform(odd)
            assert X[0, prep.groups()["CDRGLOB"]].sum() == 0.0

    def test_constant_column_maps_to_zero(self, small_cohort):
        rows = small_cohort.rows[:20]
        const = [type(r)(r.id, {**r.basic, "MMSE": 1.0}, r.advanced, r.label) for r in rows]
        prep = fit_preprocessor(const, small_cohort.schema)
        X = prep.transform(const)
        assert np.all(X[:, prep.groups()["MMSE"][0]] == 0.0)

    def test_median_imputation_for_advanced(self, small_cohort):
        rows = small_cohort.select(small_cohort.advanced_ids())
        prep = fit_preprocessor(rows, small_cohort.schema, use_advanced=True)
        r = rows[0]
        gap = type(r)(r.id, r.basic, r.advanced.copy(), r.label)
        gap.advanced[0] = np.nan
        col = prep.groups()[small_cohort.schema.advanced_numeric[0]][0]
        expected = (prep.medians[prep.n_basic_numeric] - prep.means[prep.n_basic_numeric]) / prep.stds[prep.n_basic_numeric]
        assert prep.transform([gap])[0, col] == pytest.approx(expected)

    def test_serialization_is_exact(self, small_cohort):
        prep = fit_preprocessor(small_cohort.rows, small_cohort.schema)
        back = Preprocessor.from_dict(prep.to_dict())
        np.testing.assert_array_equal(back.transform(small_cohort.rows), prep.transform(small_cohort.rows))

    def test_empty_fit(self, small_cohort):
        with pytest.raises(errors.EmptyFit):
            fit_preprocessor(small_cohort.rows[:1], small_cohort.schema)

    def test_empty_transform(self, small_cohort):
        prep = fit_preprocessor(small_cohort.rows, small_cohort.schema)
        assert prep.transform([]).shape == (0, prep.width)


class TestGenerator:
    def test_deterministic(self):
        a = generate_cohort(SynthConfig(n_total=50, d_a=4, seed=9))
        b = generate_cohort(SynthConfig(n_total=50, d_a=4, seed=9))
        assert [r.basic for r in a.rows] == [r.basic for r in b.rows]
        assert a.labels().tolist() == b.labels().tolist()

    def test_smoke_size(self):
        c = generate_cohort(SynthConfig(n_total=50))
        assert len(c) == 50
        assert len(c.advanced_ids()) == math.ceil(50 * 551 / 1142)

    @pytest.mark.parametrize("slope", [0.5, 2.5, 8.0, math.inf])
    def test_label_intercept_hits_rate(self, slope):
        import mpmath as mp
        b = label_intercept(slope, 0.3)
        if math.isinf(slope):
            rate = float(mp.ncdf(b))
        else:
            f = lambda r: mp.npdf(r) / (1 + mp.exp(-(slope * r + b)))  # noqa: E731
            rate = float(mp.quad(f, [-mp.inf, -b / slope, mp.inf]))
        assert rate == pytest.approx(0.3, abs=1e-9)

    def test_empirical_base_rate(self):
        c = generate_cohort(SynthConfig(n_total=20000, d_a=2, seed=4))
        assert c.labels().mean() == pytest.approx(0.3, abs=0.015)

    def test_noise_free_limit_is_separable(self):
        from triage_cascade.evaluation import auroc
        c = generate_cohort(SynthConfig(n_total=2000, d_a=3, basic_noise=0.0, advanced_noise=0.0,
                                        label_slope=math.inf, seed=2))
        y = c.labels()
        assert auroc(np.array([r.basic["ADAS11"] for r in c.rows]), y) == 1.0
        v = np.array([r.advanced[0] for r in c.select(c.advanced_ids())])
        ya = c.labels(c.advanced_ids())
        assert max(auroc(v, ya), auroc(-v, ya)) == 1.0  # loading sign is random

    def test_demographics_independent_of_label(self):
        from triage_cascade.evaluation import welch_t
        c = generate_cohort(SynthConfig(n_total=4000, d_a=2, seed=11))
        y = c.labels().astype(bool)
        age = np.array([r.demographics["AGE"] for r in c.rows])
        assert welch_t(age[y], age[~y]) > 0.001

    @pytest.mark.parametrize("field,value", [("n_total", 1), ("advanced_fraction", 0.0), ("basic_noise", -1.0),
                                             ("conversion_base_rate", 1.0), ("label_slope", 0.0), ("d_b", 2)])
    def test_invalid_config(self, field, value):
        with pytest.raises(errors.InvalidConfig):
            generate_cohort(SynthConfig(**{field: value}))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(4, 60), frac=st.floats(0.2, 1.0), seed=st.integers(0, 10_000))
def test_advanced_subset_size(n, frac, seed):
    c = generate_cohort(SynthConfig(n_total=n, advanced_fraction=frac, d_a=2, seed=seed))
    assert len(c.advanced_ids()) == min(n, math.ceil(frac * n - 1e-9))
    assert set(c.labels().tolist()) <= {0, 1}
