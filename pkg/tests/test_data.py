import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embrich.data import (
    ColumnSchema,
    DatasetConfig,
    SyntheticSpec,
    TabularDataset,
    dataset_config_from_json,
    encode_and_scale,
    encode_target,
    generate_synthetic,
    impute_missing,
    load_dataset,
    stratified_sample,
    write_csv,
)
from embrich.classifiers import ClassifierConfig, predict_label, rf_fit
from embrich.errors import (
    ConfigError,
    InvalidSpec,
    MoreThanTwoClasses,
    ParseError,
    SchemaMismatch,
    UnknownPositiveLabel,
)


def _config(tmp_path, rows, schema=None, **kwargs):
    schema = schema or (
        ColumnSchema("age", "numeric"),
        ColumnSchema("job", "categorical", missing_markers=("", "?")),
    )
    path = tmp_path / "data.csv"
    header = ",".join([c.name for c in schema] + ["label"])
    path.write_text("\n".join([header] + rows) + "\n")
    defaults = dict(
        path=str(path),
        target_column="label",
        schema=schema,
        task="binary",
        positive_label="yes",
    )
    defaults.update(kwargs)
    return DatasetConfig(**defaults)


class TestLoadDataset:
    def test_rows_with_missing_target_are_dropped(self, tmp_path):
        config = _config(tmp_path, ["39,clerk,yes", "40,cook,", "41,clerk,no"])
        ds = load_dataset(config)
        assert ds.n == 2
        assert ds.targets == ("yes", "no")

    def test_sampling_not_applied_at_load(self, tmp_path):
        rows = [f"{i},clerk,{'yes' if i % 2 else 'no'}" for i in range(10)]
        config = _config(tmp_path, rows, sample_fraction=0.5)
        assert load_dataset(config).n == 10

    def test_non_numeric_cell_raises_parse_error(self, tmp_path):
        config = _config(tmp_path, ["abc,clerk,yes"])
        with pytest.raises(ParseError) as exc:
            load_dataset(config)
        assert exc.value.column == "age"

    def test_missing_markers_become_missing_cells(self, tmp_path):
        config = _config(tmp_path, ["39,?,yes", "40,cook,no"])
        ds = load_dataset(config)
        assert ds.rows[0][1] is None

    def test_header_mismatch(self, tmp_path):
        schema = (ColumnSchema("age", "numeric"), ColumnSchema("extra", "categorical"))
        path = tmp_path / "data.csv"
        path.write_text("age,label\n39,yes\n")
        config = DatasetConfig(
            path=str(path), target_column="label", schema=schema,
            task="binary", positive_label="yes",
        )
        with pytest.raises(SchemaMismatch):
            load_dataset(config)

    def test_missing_file(self, tmp_path):
        config = _config(tmp_path, ["1,a,yes"])
        object.__setattr__(config, "path", str(tmp_path / "nope.csv"))
        with pytest.raises(FileNotFoundError):
            load_dataset(config)

    def test_header_order_insensitive(self, tmp_path):
        schema = (ColumnSchema("age", "numeric"), ColumnSchema("job", "categorical"))
        path = tmp_path / "data.csv"
        path.write_text("label,job,age\nyes,clerk,39\n")
        config = DatasetConfig(
            path=str(path), target_column="label", schema=schema,
            task="binary", positive_label="yes",
        )
        ds = load_dataset(config)
        assert ds.rows[0] == (39.0, "clerk")


def _inline_dataset(cells, targets, schema, **kwargs):
    config = DatasetConfig(
        path="<memory>", target_column="label", schema=schema,
        task=kwargs.pop("task", "binary"),
        positive_label=kwargs.pop("positive_label", None),
        **kwargs,
    )
    return TabularDataset(config=config, rows=tuple(map(tuple, cells)), targets=tuple(targets))


class TestStratifiedSample:
    def _dataset(self, n_a=70, n_b=30):
        schema = (ColumnSchema("x", "numeric"),)
        cells = [(float(i),) for i in range(n_a + n_b)]
        targets = ["a"] * n_a + ["b"] * n_b
        return _inline_dataset(cells, targets, schema, positive_label="a")

    def test_fraction_one_is_identity(self):
        ds = self._dataset()
        assert stratified_sample(ds, 1.0, seed=1).rows == ds.rows

    def test_per_class_rounding(self):
        ds = self._dataset()
        out = stratified_sample(ds, 0.1, seed=1)
        counts = {t: out.targets.count(t) for t in set(out.targets)}
        assert counts == {"a": 7, "b": 3}

    def test_deterministic(self):
        ds = self._dataset()
        assert stratified_sample(ds, 0.3, 9).rows == stratified_sample(ds, 0.3, 9).rows

    def test_minimum_one_per_class(self):
        ds = self._dataset(n_a=99, n_b=1)
        out = stratified_sample(ds, 0.05, seed=0)
        assert out.targets.count("b") == 1

    def test_original_order_preserved(self):
        ds = self._dataset()
        out = stratified_sample(ds, 0.5, seed=2)
        xs = [row[0] for row in out.rows]
        assert xs == sorted(xs)

    @given(st.integers(10, 60), st.integers(10, 60), st.floats(0.2, 1.0), st.integers(0, 99))
    @settings(max_examples=40, deadline=None)
    def test_proportions_within_one(self, n_a, n_b, fraction, seed):
        ds = self._dataset(n_a, n_b)
        out = stratified_sample(ds, fraction, seed)
        for label, count in (("a", n_a), ("b", n_b)):
            kept = out.targets.count(label)
            assert abs(kept - fraction * count) <= 1


class TestImputeMissing:
    schema = (ColumnSchema("num", "numeric"), ColumnSchema("cat", "categorical"))

    def test_mode_and_mean(self):
        ds = _inline_dataset(
            [(1.0, "a"), (None, "a"), (3.0, "b"), (2.0, None)],
            ["y", "y", "n", "n"],
            self.schema, positive_label="y",
        )
        out = impute_missing(ds)
        assert out.rows[1][0] == 2.0  # mean of 1, 3, 2
        assert out.rows[3][1] == "a"  # mode

    def test_mode_tie_breaks_lexicographically(self):
        ds = _inline_dataset(
            [(1.0, "a"), (1.0, "b"), (1.0, None)],
            ["y", "n", "y"],
            self.schema, positive_label="y",
        )
        assert impute_missing(ds).rows[2][1] == "a"

    def test_idempotent(self):
        ds = _inline_dataset(
            [(1.0, None), (None, "b"), (3.0, "b")],
            ["y", "n", "y"],
            self.schema, positive_label="y",
        )
        once = impute_missing(ds)
        assert impute_missing(once).rows == once.rows

    def test_all_missing_column(self):
        from embrich.errors import AllMissingColumn

        ds = _inline_dataset(
            [(1.0, None), (2.0, None)], ["y", "n"], self.schema, positive_label="y"
        )
        with pytest.raises(AllMissingColumn):
            impute_missing(ds)


class TestEncodeAndScale:
    def test_one_hot_keeps_all_levels(self):
        schema = (ColumnSchema("c", "categorical"),)
        ds = _inline_dataset([("a",), ("b",), ("a",)], ["y", "n", "y"], schema, positive_label="y")
        fm = encode_and_scale(ds)
        assert fm.names == ("c=a", "c=b")
        assert fm.values.tolist() == [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]

    def test_population_std_scaling(self):
        schema = (ColumnSchema("x", "numeric"),)
        ds = _inline_dataset([(1.0,), (2.0,), (3.0,)], ["y", "n", "y"], schema, positive_label="y")
        fm = encode_and_scale(ds)
        expected = 1.0 / math.sqrt(2.0 / 3.0)
        assert fm.values[:, 0] == pytest.approx([-expected, 0.0, expected], abs=1e-12)
        assert fm.scaler["x"] == (2.0, pytest.approx(math.sqrt(2.0 / 3.0)))

    def test_constant_column_becomes_zeros(self):
        schema = (ColumnSchema("x", "numeric"),)
        ds = _inline_dataset([(5.0,), (5.0,), (5.0,)], ["y", "n", "y"], schema, positive_label="y")
        fm = encode_and_scale(ds)
        assert fm.values[:, 0].tolist() == [0.0, 0.0, 0.0]
        assert fm.scaler["x"][1] == 1.0

    def test_one_hot_block_rows_sum_to_one(self, text_signal_dataset):
        ds = impute_missing(text_signal_dataset)
        fm = encode_and_scale(ds)
        block = [j for j, name in enumerate(fm.names) if name.startswith("cat0=")]
        assert np.allclose(fm.values[:, block].sum(axis=1), 1.0)

    def test_no_non_finite(self, text_signal_dataset):
        fm = encode_and_scale(impute_missing(text_signal_dataset))
        assert np.isfinite(fm.values).all()

    def test_text_only_columns_excluded(self, text_signal_dataset):
        fm = encode_and_scale(impute_missing(text_signal_dataset))
        assert not any(name.startswith("signal") for name in fm.names)


class TestEncodeTarget:
    def test_binary_positive_label(self):
        schema = (ColumnSchema("x", "numeric"),)
        ds = _inline_dataset(
            [(1.0,), (2.0,)], [">50K", "<=50K"], schema, positive_label=">50K"
        )
        y = encode_target(ds)
        assert y.values.tolist() == [1, 0]
        assert y.class_names == ("<=50K", ">50K")

    def test_multiclass_lexicographic(self):
        schema = (ColumnSchema("x", "numeric"),)
        ds = _inline_dataset(
            [(1.0,), (2.0,), (3.0,)], ["vgood", "acc", "unacc"], schema, task="multiclass"
        )
        y = encode_target(ds)
        assert y.class_names == ("acc", "unacc", "vgood")
        assert y.values.tolist() == [2, 0, 1]

    def test_three_labels_under_binary(self):
        schema = (ColumnSchema("x", "numeric"),)
        ds = _inline_dataset(
            [(1.0,), (2.0,), (3.0,)], ["a", "b", "c"], schema, positive_label="a"
        )
        with pytest.raises(MoreThanTwoClasses):
            encode_target(ds)

    def test_unknown_positive_label(self):
        schema = (ColumnSchema("x", "numeric"),)
        ds = _inline_dataset([(1.0,), (2.0,)], ["a", "b"], schema, positive_label="zzz")
        with pytest.raises(UnknownPositiveLabel):
            encode_target(ds)


class TestGenerateSynthetic:
    def test_deterministic(self):
        spec = SyntheticSpec(25, 2, 1, "signal", noise_seed=4)
        assert generate_synthetic(spec) == generate_synthetic(spec)

    def test_too_small(self):
        with pytest.raises(InvalidSpec):
            generate_synthetic(SyntheticSpec(10, 2, 1, "signal", noise_seed=4))

    def test_depth_one_tree_fits_noiseless_signal(self):
        spec = SyntheticSpec(60, 1, 0, "signal", noise_seed=2)
        ds = generate_synthetic(spec)
        fm = encode_and_scale(ds)
        y = encode_target(ds)
        config = ClassifierConfig(
            kind="random_forest", trees=1, max_depth=1, subsample_features="all"
        )
        model = rf_fit(fm.values, y, config)
        assert (predict_label(model, fm.values) == y.values).mean() == 1.0

    def test_metadata_documents_formula(self):
        ds = generate_synthetic(SyntheticSpec(30, 1, 1, "signal", noise_seed=1))
        assert "signal" in ds.metadata["formula"]

    def test_round_trip_through_csv(self, tmp_path):
        ds = generate_synthetic(SyntheticSpec(30, 2, 1, "signal", noise_seed=8))
        path = tmp_path / "synth.csv"
        write_csv(ds, str(path))
        loaded = load_dataset(ds.config.__class__(**{**ds.config.__dict__, "path": str(path)}))
        assert loaded.targets == ds.targets
        assert loaded.rows[0][:2] == pytest.approx(ds.rows[0][:2])


class TestConfigJson:
    def test_from_json_requires_keys(self):
        with pytest.raises(ConfigError):
            dataset_config_from_json({"path": "x.csv"})

    def test_round_trip(self):
        doc = {
            "path": "x.csv",
            "target_column": "y",
            "task": "binary",
            "positive_label": "p",
            "columns": [{"name": "a", "kind": "numeric", "missing_markers": ["", "?"]}],
            "text_only_columns": [],
            "sample_fraction": 0.5,
            "seed": 3,
        }
        config = dataset_config_from_json(doc)
        assert config.sample_fraction == 0.5
        assert config.schema[0].missing_markers == ("", "?")
