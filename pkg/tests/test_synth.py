import json

import numpy as np
import pytest

from vsatraj import dataset, synth


@pytest.fixture(scope="module")
def small():
    cfg = synth.HighwayConfig(vehicles=40, duration=120.0, lane_change_rate=2.0, seed=3)
    return cfg, synth.generate(cfg)


def test_generation_is_deterministic(small):
    cfg, tracks = small
    again = synth.generate(synth.HighwayConfig(**cfg.to_dict() | {"speed_range": cfg.speed_range}))
    for a, b in zip(tracks, again):
        np.testing.assert_array_equal(a.track.x, b.track.x)
        np.testing.assert_array_equal(a.track.y, b.track.y)
        assert a.lane_changes == b.lane_changes


def test_ego_and_shapes(small):
    cfg, tracks = small
    assert len(tracks) == cfg.vehicles + 1
    assert tracks[0].is_ego and not any(t.is_ego for t in tracks[1:])
    assert tracks[0].lane_changes == []
    for g in tracks:
        assert len(g.track) == cfg.n_frames
        assert g.type_label in synth.TYPE_PROBS


def test_lane_changes_follow_min_jerk_profile(small):
    cfg, tracks = small
    m = cfg.lane_change_frames
    seen = 0
    for g in tracks:
        for start, end, a, b in g.lane_changes:
            seen += 1
            assert end - start == m and abs(a - b) == 1 and 0 <= b < cfg.lanes
            y = g.true_xy[start:end + 1, 1]
            np.testing.assert_allclose(y[[0, -1]], [(a + 0.5) * cfg.lane_width, (b + 0.5) * cfg.lane_width])
            assert np.all(np.diff(y) * (b - a) >= -1e-12)
            switch = start + (m + 1) // 2
            assert g.lane[switch - 1] == a and g.lane[switch] == b
    assert seen > 0


def test_min_jerk_boundary_conditions():
    s, ds, dds = synth.min_jerk(np.array([0.0, 0.5, 1.0]))
    np.testing.assert_allclose(s, [0, 0.5, 1])
    np.testing.assert_allclose(ds[[0, 2]], 0)
    np.testing.assert_allclose(dds, 0, atol=1e-12)


def test_no_two_vehicles_share_a_lane_within_min_gap_at_manoeuvre_start(small):
    cfg, tracks = small
    xs = np.stack([g.true_xy[:, 0] for g in tracks])
    lanes = np.stack([g.lane for g in tracks])
    for i, g in enumerate(tracks):
        for start, _, _, b in g.lane_changes:
            near = np.abs(xs[:, start] - xs[i, start]) < cfg.min_gap
            near[i] = False
            assert not np.any(near & (lanes[:, start] == b))


def test_zero_noise_observation_equals_truth():
    cfg = synth.HighwayConfig(vehicles=5, duration=30.0, seed=1)
    for g in synth.generate(cfg):
        np.testing.assert_array_equal(g.track.x, g.true_xy[:, 0])
        np.testing.assert_array_equal(g.track.vy, g.true_v[:, 1])


def test_noise_is_truncated():
    cfg = synth.HighwayConfig(vehicles=20, duration=60.0, noise_std=0.1, velocity_noise_std=0.5, seed=2)
    for g in synth.generate(cfg):
        assert np.max(np.abs(g.track.x - g.true_xy[:, 0])) < 0.3
        assert np.max(np.abs(g.track.vx - g.true_v[:, 0])) < 1.5


def test_lane_change_count_matches_rate():
    counts = []
    for seed in range(3):
        cfg = synth.HighwayConfig(vehicles=100, duration=600.0, lane_change_rate=0.5, seed=seed)
        counts.append(sum(len(g.lane_changes) for g in synth.generate(cfg)))
        assert abs(counts[-1] / synth.expected_lane_change_count(cfg) - 1) < 0.15


def test_expected_future_share_against_monte_carlo():
    cfg = synth.HighwayConfig(lane_change_rate=3.0, lane_change_duration=4.0)
    rng = np.random.default_rng(0)
    r, T, w = 3.0 / 60, cfg.lane_change_frames * cfg.frame_period, 5.0
    # simulate one long renewal sequence and probe random windows
    gaps = T + rng.exponential(1 / r, 200_000)
    switches = np.cumsum(gaps)
    probes = rng.uniform(switches[10], switches[-10], 200_000)
    idx = np.searchsorted(switches, probes, side="right")
    hit = switches[idx] <= probes + w
    assert synth.expected_future_share(cfg) == pytest.approx(hit.mean(), rel=0.01)
    assert synth.expected_future_share(synth.HighwayConfig(lane_change_rate=0.0)) == 0.0


def test_config_validation_and_io(tmp_path):
    with pytest.raises(synth.ConfigError):
        synth.HighwayConfig(lanes=1).validate()
    with pytest.raises(synth.ConfigError):
        synth.HighwayConfig(speed_range=(30, 20)).validate()
    with pytest.raises(synth.ConfigError):
        synth.HighwayConfig.from_dict({"lanez": 3})
    path = tmp_path / "hw.toml"
    path.write_text("[highway]\nlanes = 4\nspeed_range = [20, 25]\n")
    cfg = synth.HighwayConfig.from_file(path)
    assert cfg.lanes == 4 and cfg.speed_range == (20.0, 25.0)
    jpath = tmp_path / "hw.json"
    jpath.write_text(json.dumps(cfg.to_dict()))
    assert synth.HighwayConfig.from_file(jpath) == cfg


def test_export_roundtrip_and_ground_truth(tmp_path, small):
    _, tracks = small
    path = synth.export(tracks, tmp_path / "out.csv")
    loaded = dataset.load(path)
    assert [t.object_id for t in loaded] == [g.object_id for g in tracks]
    np.testing.assert_allclose(loaded[3].x, tracks[3].track.x)
    np.testing.assert_array_equal(loaded[3].lane, tracks[3].lane)
    truth = json.loads(json.dumps(synth.ground_truth(tracks)))
    assert truth["0"]["is_ego"] is True
    assert sum(len(v["lane_changes"]) for v in truth.values()) == sum(len(g.lane_changes) for g in tracks)
