import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskmerge.baseline import (
    NaiveModel,
    composition_key,
    fit_naive,
    load_naive,
    predict_naive,
    save_naive,
)
from taskmerge.features import Dataset, FeatureVector, encode
from taskmerge.gbdt import ModelFormatError
from taskmerge.oracle import OracleConfig, generate_dataset
from taskmerge.workload import Kind, Operation, VideoMeta


def row(b=0, s=0, r=0, mpeg4=0, vp9=0, hevc=0, size=900.0):
    return [2.0, size, 30.0, 1280.0, 720.0, b, s, r, mpeg4, vp9, hevc]


def dataset(rows, targets):
    return Dataset(np.array(rows, dtype=float), targets)


class TestFit:
    def test_single_key(self):
        model = fit_naive(dataset([row(b=2), row(b=2, size=300.0), row(b=2, size=2000.0)], [0.1, 0.2, 0.6]))
        assert model.table == {(2, 0, 0, 0, 0, 0): pytest.approx(0.3)}

    def test_two_keys(self):
        model = fit_naive(dataset([row(b=2), row(b=2), row(s=3)], [0.2, 0.4, 0.3]))
        assert model.table[(2, 0, 0, 0, 0, 0)] == pytest.approx(0.3)
        assert model.table[(0, 3, 0, 0, 0, 0)] == pytest.approx(0.3)
        assert model.global_mean == pytest.approx(0.3)

    def test_key_ignores_statics(self):
        assert composition_key(row(b=1, vp9=1, size=100.0)) == composition_key(row(b=1, vp9=1, size=2000.0))

    def test_noise_free_oracle_two_bitrates(self):
        data = generate_dataset(60, 12, OracleConfig(vic_noise_sigma=0.0, codec_noise_sigma=0.0, rng_seed=4))
        model = fit_naive(data)
        assert model.table[(2, 0, 0, 0, 0, 0)] == pytest.approx(0.26, abs=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            fit_naive(Dataset(np.empty((0, 11)), []))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 3), st.integers(0, 2), st.floats(0.0, 0.99)), min_size=1, max_size=25),
           st.randoms(use_true_random=False))
    def test_permutation_invariant(self, items, rnd):
        shuffled = list(items)
        rnd.shuffle(shuffled)
        fit = lambda xs: fit_naive(dataset([row(b=b, s=s) for b, s, _ in xs], [t for _, _, t in xs]))
        a, b = fit(items), fit(shuffled)
        assert a.table == b.table and a.global_mean == b.global_mean


class TestPredict:
    @pytest.fixture
    def model(self):
        return fit_naive(dataset([row(b=2), row(b=2), row(s=3)], [0.2, 0.4, 0.5]))

    def test_seen_key(self, model):
        assert predict_naive(model, row(b=2, size=123.0)) == pytest.approx(0.3)

    def test_unseen_key_falls_back(self, model):
        assert predict_naive(model, row(r=4)) == pytest.approx(model.global_mean)

    def test_feature_vector_input(self, model):
        video = VideoMeta("v", 2.0, 500.0, 30.0, 1280, 720)
        fv = encode(video, [Operation(Kind.BITRATE, "512K"), Operation(Kind.BITRATE, "768K")])
        assert isinstance(fv, FeatureVector)
        assert predict_naive(model, fv) == pytest.approx(0.3)

    def test_one_sample(self):
        model = fit_naive(dataset([row(b=1, hevc=1)], [0.12]))
        assert predict_naive(model, row(b=1, hevc=1)) == 0.12

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 3), st.floats(0.0, 0.99)), min_size=1, max_size=20),
           st.integers(1, 5))
    def test_within_training_range(self, items, probe):
        y = [t for _, t in items]
        model = fit_naive(dataset([row(b=b) for b, _ in items], y))
        p = predict_naive(model, row(b=probe))
        assert min(y) - 1e-12 <= p <= max(y) + 1e-12


class TestPersistence:
    def test_round_trip(self, tmp_path):
        model = fit_naive(dataset([row(b=2), row(s=1, vp9=1), row(r=3)], [0.25, 0.05, 0.4]))
        path = tmp_path / "naive.model"
        save_naive(model, path)
        back = load_naive(path)
        assert back == model
        probe = np.array([row(b=2), row(r=3), row(r=1)])
        assert back.predict(probe).tobytes() == model.predict(probe).tobytes()

    def test_kind_tag(self, tmp_path):
        path = tmp_path / "naive.model"
        save_naive(NaiveModel({}, 0.2), path)
        assert json.loads(path.read_text())["kind"] == "naive"

    def test_bad_key_length(self, tmp_path):
        path = tmp_path / "naive.model"
        path.write_text(json.dumps({
            "format": "taskmerge-model", "version": 1, "kind": "naive",
            "feature_count": 11, "global_mean": 0.1, "table": [{"key": [1, 0], "mean": 0.2}],
        }))
        with pytest.raises(ModelFormatError):
            load_naive(path)
