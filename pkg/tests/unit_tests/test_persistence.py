"""Tests for CSV and JSON persistence and synthetic data."""

import numpy as np
import pytest

from onepoint_dsgt.datagen import train_test_split, two_clusters
from onepoint_dsgt.metrics import IterationRecord, RunTrace
from onepoint_dsgt.objective import Dataset
from onepoint_dsgt.persistence import (
    dumps,
    read_dataset,
    read_json,
    read_trace,
    write_dataset,
    write_json,
    write_sweep,
    write_trace,
)


@pytest.fixture
def trace():
    rng = np.random.default_rng(0)
    return RunTrace(
        [
            IterationRecord(
                k=k,
                loss=float(rng.random()),
                divergence=float(rng.random()) * 1e-9,
                consensus=1.0 / 3.0,
                cum_regret=float(k) + 0.1,
                accuracy=0.5 + k / 1000,
            )
            for k in (0, 10, 20)
        ]
    )


class TestTraceFiles:
    """Test trace CSV files."""

    def test_round_trip_is_exact(self, trace, tmp_path):
        path = write_trace(trace, tmp_path / "trace.csv")
        assert read_trace(path).records == trace.records

    def test_header(self, trace, tmp_path):
        path = write_trace(trace, tmp_path / "nested" / "trace.csv")
        header = path.read_text().splitlines()[0]
        assert header == "k,loss,divergence,consensus,cum_regret,accuracy"

    def test_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            read_trace(path)


class TestDatasetFiles:
    """Test dataset CSV files."""

    def test_round_trip(self, tmp_path):
        data = two_clusters(50, 3, 2.0, seed=1)
        restored = read_dataset(write_dataset(data, tmp_path / "data.csv"))
        np.testing.assert_array_equal(restored.features, data.features)
        np.testing.assert_array_equal(restored.labels, data.labels)

    def test_header_names_features_then_label(self, tmp_path):
        data = Dataset(features=np.eye(3), labels=np.array([1.0, -1.0, 1.0]))
        path = write_dataset(data, tmp_path / "data.csv")
        assert path.read_text().splitlines()[0] == "f0,f1,f2,label"

    def test_missing_label_column(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("f0,f1\n1,2\n")
        with pytest.raises(ValueError, match="label"):
            read_dataset(path)


class TestJson:
    """Test canonical JSON output."""

    def test_sorted_and_deterministic(self, tmp_path):
        payload = {"b": np.float64(1.5), "a": np.arange(3), "c": {"z": 1, "y": None}}
        text = dumps(payload)
        assert text.index('"a"') < text.index('"b"')
        assert text == dumps(dict(reversed(list(payload.items()))))
        path = write_json(payload, tmp_path / "out.json")
        assert read_json(path) == {"a": [0, 1, 2], "b": 1.5, "c": {"y": None, "z": 1}}

    def test_rejects_unknown_objects(self):
        with pytest.raises(TypeError):
            dumps({"x": object()})

    def test_sweep_table(self, tmp_path):
        rows = [
            {"upsilon1": 0.75, "upsilon2": 0.25, "metric": "divergence", "slope": -0.5, "status": "ok"},
            {"upsilon1": 0.4, "upsilon2": 0.3, "metric": "all", "slope": None, "status": "skipped: bad"},
        ]
        lines = write_sweep(rows, tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == "upsilon1,upsilon2,metric,slope,status"
        assert lines[2] == "0.40000000000000002,0.29999999999999999,all,,skipped: bad"


class TestSyntheticData:
    """Test two-cluster data generation."""

    def test_deterministic_and_balanced(self):
        a = two_clusters(101, 4, 3.0, seed=5)
        b = two_clusters(101, 4, 3.0, seed=5)
        np.testing.assert_array_equal(a.features, b.features)
        assert np.sum(a.labels == 1.0) == 50

    def test_clusters_are_separated(self):
        data = two_clusters(4000, 2, 6.0, seed=0)
        pos = data.features[data.labels == 1.0].mean(axis=0)
        neg = data.features[data.labels == -1.0].mean(axis=0)
        assert np.linalg.norm(pos - neg) == pytest.approx(6.0, rel=0.05)

    @pytest.mark.parametrize("args", [(1, 2, 1.0), (10, 0, 1.0), (10, 2, -1.0)])
    def test_invalid_arguments(self, args):
        with pytest.raises(ValueError):
            two_clusters(*args, seed=0)

    def test_split_holds_out_last_rows(self):
        data = two_clusters(100, 2, 1.0, seed=0)
        train, test = train_test_split(data, 0.2)
        assert train.m == 80 and test.m == 20
        np.testing.assert_array_equal(test.features, data.features[80:])

    def test_split_without_test_rows(self):
        train, test = train_test_split(two_clusters(10, 2, 1.0, seed=0), 0.01)
        assert test is None
        assert train.m == 10
