import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_task
from taskmerge.features import write_csv
from taskmerge.oracle import (
    CASE_CATEGORIES,
    OracleConfig,
    exec_time_group,
    exec_time_individual,
    exec_time_merged,
    generate_cases,
    generate_dataset,
    load_config,
    merge_saving,
    phase_profile,
    save_config,
)
from taskmerge.workload import PARAMETERS, InvalidGroupError, Kind, Operation, VideoMeta, all_operations

VIC_KINDS = (Kind.BITRATE, Kind.FRAMERATE, Kind.RESOLUTION)


def same_kind(kind, k):
    return [Operation(kind, p) for p in PARAMETERS[kind][:k]]


class TestPhaseProfile:
    @pytest.mark.parametrize("kind", VIC_KINDS)
    def test_shared_phases_are_calibrated_fraction(self, video, quiet_cfg, kind):
        p = phase_profile(video, Operation(kind, PARAMETERS[kind][0]), quiet_cfg)
        assert p.shared / p.total == pytest.approx(0.52, abs=1e-12)

    def test_reference_segment_takes_one_second(self, video, quiet_cfg):
        assert exec_time_individual(video, Operation(Kind.BITRATE, "512K"), quiet_cfg) == pytest.approx(1.0)

    def test_deterministic(self, video):
        cfg = OracleConfig()
        op = Operation(Kind.CODEC, "hevc")
        assert phase_profile(video, op, cfg) == phase_profile(video, op, cfg)

    def test_seed_changes_noise(self, video):
        op = Operation(Kind.CODEC, "hevc")
        assert phase_profile(video, op, OracleConfig(rng_seed=1)) != phase_profile(video, op, OracleConfig(rng_seed=2))

    def test_vp9_ratio_bounded_by_eight(self, video, quiet_cfg):
        vic = exec_time_individual(video, Operation(Kind.BITRATE, "512K"), quiet_cfg)
        vp9 = exec_time_individual(video, Operation(Kind.CODEC, "vp9"), quiet_cfg)
        assert 4.0 <= vp9 / vic <= 8.0

    def test_codec_multiplier_scales_transform_and_encode(self, video, quiet_cfg):
        vic = phase_profile(video, Operation(Kind.BITRATE, "512K"), quiet_cfg)
        for codec, mult in quiet_cfg.codec_time_multiplier.items():
            p = phase_profile(video, Operation(Kind.CODEC, codec), quiet_cfg)
            assert p.transform + p.encode == pytest.approx(mult * (vic.transform + vic.encode))
            assert p.shared == pytest.approx(vic.shared)


def test_zero_duration_video_is_rejected():
    with pytest.raises(ValueError):
        VideoMeta("s", 0.0, 100.0, 30.0, 1280, 720)


class TestMergedTime:
    def test_singleton_equals_individual(self, video):
        cfg = OracleConfig()
        for op in all_operations():
            assert exec_time_merged(video, [op], cfg) == exec_time_individual(video, op, cfg)
            assert merge_saving(video, [op], cfg) == 0.0

    @pytest.mark.parametrize("k", [2, 3, 4, 5])
    @pytest.mark.parametrize("kind", VIC_KINDS)
    def test_same_kind_closed_form(self, video, quiet_cfg, kind, k):
        assert merge_saving(video, same_kind(kind, k), quiet_cfg) == pytest.approx((k - 1) * 0.52 / k, abs=1e-12)

    def test_two_tasks_save_26_percent(self, video, quiet_cfg):
        assert merge_saving(video, same_kind(Kind.BITRATE, 2), quiet_cfg) == pytest.approx(0.26, abs=1e-12)

    def test_three_tasks_near_37_percent(self, video, quiet_cfg):
        s = merge_saving(video, same_kind(Kind.FRAMERATE, 3), quiet_cfg)
        assert s == pytest.approx(2 * 0.52 / 3)
        assert abs(s - 0.37) <= 0.04

    def test_four_tasks_near_40_percent(self, video, quiet_cfg):
        assert abs(merge_saving(video, same_kind(Kind.RESOLUTION, 4), quiet_cfg) - 0.39) <= 0.04

    def test_identical_tasks_piggyback(self, video, quiet_cfg):
        op = Operation(Kind.BITRATE, "512K")
        assert merge_saving(video, [op, op], quiet_cfg) == pytest.approx(0.5)

    def test_mixed_kinds_share_fetch_and_decode_only(self, video, quiet_cfg):
        a, b = Operation(Kind.BITRATE, "512K"), Operation(Kind.RESOLUTION, "720x480")
        pa, pb = phase_profile(video, a, quiet_cfg), phase_profile(video, b, quiet_cfg)
        expected = pa.total + pb.total - (pb.fetch + pb.decode)
        assert exec_time_merged(video, [a, b], quiet_cfg) == pytest.approx(expected)

    def test_degree_limits(self, video):
        with pytest.raises(InvalidGroupError):
            exec_time_merged(video, [], OracleConfig())
        with pytest.raises(InvalidGroupError):
            exec_time_merged(video, all_operations()[:6], OracleConfig())

    def test_group_across_segments_rejected(self, video):
        other = VideoMeta("segB", 2.0, 500.0, 30.0, 1280, 720)
        tasks = [make_task("a", video, "bitrate", "512K"), make_task("b", other, "bitrate", "768K")]
        with pytest.raises(InvalidGroupError):
            exec_time_group(tasks, OracleConfig())

    def test_codec_merge_saves_less_than_vic_merge(self, video, quiet_cfg):
        vic = merge_saving(video, [Operation(Kind.BITRATE, "512K"), Operation(Kind.FRAMERATE, "10")], quiet_cfg)
        vp9 = merge_saving(video, [Operation(Kind.BITRATE, "512K"), Operation(Kind.CODEC, "vp9")], quiet_cfg)
        assert vp9 < vic


videos = st.builds(
    VideoMeta,
    segment_id=st.sampled_from(["s1", "s2", "s3"]),
    duration=st.floats(0.1, 2.0),
    size=st.floats(20.0, 3000.0),
    framerate=st.just(30.0),
    width=st.just(1280),
    height=st.just(720),
)
op_groups = st.lists(st.sampled_from(all_operations()), min_size=2, max_size=5)


@settings(max_examples=200, deadline=None)
@given(videos, op_groups, st.integers(0, 2**32))
def test_noise_free_subadditivity(v, ops, seed):
    cfg = OracleConfig(vic_noise_sigma=0.0, codec_noise_sigma=0.0, rng_seed=seed)
    individual = sum(exec_time_individual(v, op, cfg) for op in ops)
    assert exec_time_merged(v, ops, cfg) < individual


@settings(max_examples=200, deadline=None)
@given(videos, op_groups, st.integers(0, 2**32))
def test_noisy_saving_in_unit_interval_and_order_free(v, ops, seed):
    cfg = OracleConfig(rng_seed=seed)
    s = merge_saving(v, ops, cfg)
    assert 0.0 <= s < 1.0
    assert merge_saving(v, list(reversed(ops)), cfg) == pytest.approx(s, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(videos, st.sampled_from(VIC_KINDS))
def test_same_kind_saving_increases_with_degree(v, kind):
    cfg = OracleConfig(vic_noise_sigma=0.0, codec_noise_sigma=0.0)
    savings = [merge_saving(v, same_kind(kind, k), cfg) for k in range(1, 6)]
    assert all(b > a for a, b in zip(savings, savings[1:]))


def test_codec_slower_than_any_vic_over_corpus():
    cfg = OracleConfig(vic_noise_sigma=0.0, codec_noise_sigma=0.0)
    for video, _, _ in generate_cases(60, 1, cfg):
        slowest_vic = max(exec_time_individual(video, op, cfg) for op in all_operations() if op.kind.is_vic)
        fastest_codec = min(exec_time_individual(video, Operation(Kind.CODEC, c), cfg) for c in PARAMETERS[Kind.CODEC])
        assert fastest_codec > slowest_vic


class TestGenerateDataset:
    def test_byte_identical_for_same_seed(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(generate_dataset(1, 1, OracleConfig(rng_seed=5)), a)
        write_csv(generate_dataset(1, 1, OracleConfig(rng_seed=5)), b)
        assert a.read_bytes() == b.read_bytes()

    def test_cardinality_and_range(self):
        ds = generate_dataset(100, 50, OracleConfig(rng_seed=11))
        assert len(ds) == 5000
        assert np.all((ds.y >= 0.0) & (ds.y < 1.0))
        assert np.all(ds.X[:, 0] <= 2.0) and np.all(ds.X[:, :5] > 0)
        assert set(ds.degrees) == {2, 3, 4, 5}
        assert np.all(ds.X[:, 8:11].sum(axis=1) <= 1)

    def test_categories_stratified(self):
        cats = [c for _, _, c in generate_cases(10, 12, OracleConfig())]
        assert {cats.count(c) for c in CASE_CATEGORIES} == {40}

    def test_degree_two_same_kind_mean_near_26_percent(self):
        cfg = OracleConfig(rng_seed=3)
        savings = [
            merge_saving(v, ops, cfg)
            for v, ops, cat in generate_cases(400, 12, cfg)
            if cat == "same_kind_vic" and len(ops) == 2
        ]
        assert len(savings) == 400
        # Direct average of the oracle labels.
        assert abs(math.fsum(savings) / len(savings) - 0.26) <= 0.02


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        cfg = OracleConfig(vic_noise_sigma=0.1, rng_seed=99, codec_time_multiplier={"mpeg4": 2, "hevc": 3, "vp9": 7})
        path = tmp_path / "oracle.json"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "oracle.json"
        path.write_text('{"bogus": 1}')
        with pytest.raises(ValueError):
            load_config(path)

    @pytest.mark.parametrize("kwargs", [
        {"vic_shared_fraction": 1.0},
        {"vic_noise_sigma": -0.1},
        {"codec_time_multiplier": {"mpeg4": 0.5, "hevc": 4, "vp9": 8}},
        {"codec_time_multiplier": {"mpeg4": 2}},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            OracleConfig(**kwargs)
