import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vsatraj import hrr
from vsatraj.scene import (MalformedSnapshotError, SceneEncoder, SceneError, SceneSnapshot, SceneVector,
                           UnsupportedProbeError, Vocabulary, encode_scene_power, encode_scene_power_ego,
                           encode_scene_reference, encode_scene_scalar, encode_snapshots, heat_map)


@pytest.fixture(scope="module")
def vocab():
    return Vocabulary.create(512, 0)


@pytest.fixture(scope="module")
def small_vocab():
    return Vocabulary.create(32, 3)


def random_scene(rng, n_others=4, ego=True):
    others = [(rng.uniform(-60, 60), rng.uniform(-8, 8), rng.choice(["car", "truck", "motorcycle"]), k + 1)
              for k in range(n_others)]
    return SceneSnapshot.build(0.0, (rng.uniform(-5, 5), rng.uniform(-2, 2)), rng.choice(["car", "truck"]),
                               others, (rng.uniform(-30, 30), rng.uniform(-6, 6)) if ego else None)


def test_vocabulary_is_reproducible_and_spread(vocab):
    again = Vocabulary.create(512, 0)
    for name in vocab.names:
        np.testing.assert_array_equal(vocab[name], again[name])
    assert vocab.max_cross_similarity() < 0.2
    for name in ("X", "Y"):
        np.testing.assert_allclose(np.abs(np.fft.fft(vocab[name])), 1.0, atol=1e-9)


def test_vocabulary_json_roundtrip(tmp_path, vocab):
    path = tmp_path / "vocab.json"
    vocab.save(path)
    loaded = Vocabulary.load(path)
    np.testing.assert_array_equal(loaded["TARGET"], vocab["TARGET"])
    with pytest.raises(SceneError):
        Vocabulary.from_json({**vocab.to_json(), "version": 99})


@pytest.mark.parametrize("variant", ["power", "scalar", "power_ego"])
@pytest.mark.parametrize("scale", [1.0, 7.5, (50.0, 5.0)])
def test_batched_encoder_matches_term_by_term(small_vocab, variant, scale):
    rng = np.random.default_rng(1)
    snaps = [random_scene(rng, n) for n in (0, 1, 3, 7)]
    batch = encode_snapshots(snaps, small_vocab, variant, 40.0, scale)
    for snap, row in zip(snaps, batch):
        ref = encode_scene_reference(snap, small_vocab, variant, 40.0, scale)
        np.testing.assert_allclose(row, ref, atol=1e-10)


def test_single_scene_helpers(vocab):
    snap = random_scene(np.random.default_rng(2))
    for fn, variant in ((encode_scene_power, "power"), (encode_scene_power_ego, "power_ego")):
        sv = fn(snap, vocab)
        assert isinstance(sv, SceneVector) and sv.variant == variant and sv.dimension == 512
        np.testing.assert_allclose(sv.values, encode_scene_reference(snap, vocab, variant), atol=1e-10)
    np.testing.assert_allclose(encode_scene_scalar(snap, vocab).values,
                               encode_scene_reference(snap, vocab, "scalar"), atol=1e-10)


def test_objects_beyond_radius_are_ignored(vocab):
    near = SceneSnapshot.build(target=(0, 0), others=[(10, 3.5, "car", 4)])
    far = SceneSnapshot.build(target=(0, 0), others=[(10, 3.5, "car", 4), (41, 0, "truck", 5)])
    np.testing.assert_array_equal(encode_snapshots([near], vocab), encode_snapshots([far], vocab))


def test_power_ego_adds_exactly_the_ego_term(vocab):
    snap = SceneSnapshot.build(target=(0, 0), others=[(12, 3.5, "car", 2)], ego=(-20, 3.5))
    diff = encode_scene_power_ego(snap, vocab).values - encode_scene_power(snap, vocab).values
    term = hrr.bind_all([vocab["EGO"], hrr.power(vocab.X, -20.0), hrr.power(vocab.Y, 3.5)])
    np.testing.assert_allclose(diff, term, atol=1e-10)


def test_target_term_is_recoverable(vocab):
    snap = SceneSnapshot.build(target=(0.0, 0.0), others=[(15, 3.5, "truck", 1), (-25, -3.5, "car", 2)])
    s = encode_scene_power(snap, vocab).values
    probe = hrr.bind(vocab["TARGET"], vocab.type_vector("car"))
    assert hrr.similarity(s, probe) > 0.7
    assert hrr.similarity(s, hrr.bind(vocab["TARGET"], vocab.type_vector("truck"))) < 0.3


def test_heat_map_locality_over_random_scenes(vocab):
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(100):
        pos = (rng.uniform(-35, 35), rng.uniform(-8, 8))
        scene = encode_scene_power(SceneSnapshot.build(target=pos), vocab)
        hx, hy = heat_map(scene, vocab, step=0.5).argmax()
        hits += abs(hx - pos[0]) <= 0.5 and abs(hy - pos[1]) <= 0.5
    assert hits >= 95


def test_heat_map_matches_direct_similarity(small_vocab):
    snap = SceneSnapshot.build(target=(1.0, -0.5), others=[(3.0, 2.0, "car", 1)])
    scene = encode_scene_power(snap, small_vocab, scale=2.0)
    hm = heat_map(scene, small_vocab, probe="car", x_range=(-2, 2), y_range=(-1, 1), step=1.0)
    for i, x in enumerate(hm.x):
        for j, y in enumerate(hm.y):
            key = hrr.bind_all([small_vocab.type_vector("car"), hrr.power(small_vocab.X, x / 2.0),
                                hrr.power(small_vocab.Y, y / 2.0)])
            assert hm.similarity[i, j] == pytest.approx(hrr.similarity(scene.values, key), abs=1e-10)


def test_heat_map_finds_two_neighbours(vocab):
    snap = SceneSnapshot.build(target=(0, 0), others=[(15, 3.5, "car", 1), (-20, -3.5, "car", 2)])
    hm = heat_map(encode_scene_power(snap, vocab), vocab, probe="car")
    peaks = sorted(hm.local_maxima(0.5))
    assert [(x, y) for x, y, _ in peaks] == [(-20.0, -3.5), (15.0, 3.5)]


def test_heat_map_csv(tmp_path, small_vocab):
    scene = encode_scene_power(SceneSnapshot.build(target=(0, 0)), small_vocab)
    hm = heat_map(scene, small_vocab, x_range=(0, 1), y_range=(0, 1), step=0.5)
    hm.to_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "x,y,similarity" and len(lines) == 1 + 9


def test_scalar_scene_cannot_be_probed(vocab):
    scene = encode_scene_scalar(SceneSnapshot.build(target=(1, 1)), vocab)
    with pytest.raises(UnsupportedProbeError):
        heat_map(scene, vocab)


def test_malformed_snapshots(vocab):
    with pytest.raises(MalformedSnapshotError):
        encode_snapshots([SceneSnapshot.build(target=None)], vocab)
    with pytest.raises(MalformedSnapshotError):
        encode_snapshots([SceneSnapshot.build(target=(np.nan, 0))], vocab)
    with pytest.raises(MalformedSnapshotError):
        encode_snapshots([SceneSnapshot.build(target=(0, 0))], vocab, "power_ego")
    with pytest.raises(SceneError):
        encode_snapshots([SceneSnapshot.build(target=(0, 0))], vocab, "power", radius=0)
    with pytest.raises(SceneError):
        encode_snapshots([SceneSnapshot.build(target=(0, 0))], vocab, "power", scale=-1.0)
    with pytest.raises(SceneError):
        SceneSnapshot.build(target=(0, 0), target_type="bicycle")


def test_empty_batch(vocab):
    assert encode_snapshots([], vocab).shape == (0, 512)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 6))
def test_encoding_is_order_invariant_in_ids(seed, n):
    v = Vocabulary.create(16, 1)
    rng = np.random.default_rng(seed)
    snap = random_scene(rng, n)
    perm = rng.permutation(n)
    shuffled = SceneSnapshot(snap.timestamp, snap.target_position, snap.target_type, snap.other_positions[perm],
                             snap.other_types[perm], snap.other_ids[perm], snap.ego_position)
    np.testing.assert_array_equal(encode_snapshots([snap], v, "power_ego"), encode_snapshots([shuffled], v, "power_ego"))


def test_scene_encoder_estimator():
    class FakeSample:
        def __init__(self, rng):
            self.snaps = [random_scene(rng, 2) for _ in range(3)]
            self.history_positions = np.array([s.target_position for s in self.snaps])

        def snapshots(self):
            return self.snaps

    rng = np.random.default_rng(5)
    samples = [FakeSample(rng) for _ in range(2)]
    enc = SceneEncoder("power_ego", dimension=32, seed=3).fit()
    out = enc.transform(samples)
    assert out.shape == (2, 3, 32)
    np.testing.assert_allclose(out[1, 2], encode_scene_reference(samples[1].snaps[2], enc.vocabulary_, "power_ego"),
                               atol=1e-10)
    num = SceneEncoder("numerical").fit().transform(samples)
    assert num.shape == (2, 3, 2)
    with pytest.raises(SceneError):
        SceneEncoder("bogus").fit()
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        SceneEncoder().transform(samples)
