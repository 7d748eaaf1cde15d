import numpy as np
import pytest

from gestureskel import skeleton as sk


def random_sequence(frames=1, seed=0):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(-0.2, 1.2, size=(frames, sk.NUM_KEYPOINTS, 2))
    conf = rng.uniform(0, 1, size=(frames, sk.NUM_KEYPOINTS))
    return sk.SkeletonSequence(coords, conf)


def uniform_frame(point):
    coords = np.tile(np.asarray(point, dtype=float), (sk.NUM_KEYPOINTS, 1))
    return sk.SkeletonSequence(coords[None], np.ones((1, sk.NUM_KEYPOINTS)))


class TestLocalEncoding:
    def test_coincident_roots_give_zero_offsets(self):
        seq = uniform_frame((0.3, 0.4))
        lm = sk.to_local(seq)
        vals = lm.values.reshape(sk.NUM_KEYPOINTS, 2)
        anchor = lm.root_map.anchor
        assert np.allclose(vals[anchor], (0.3, 0.4))
        mask = np.ones(sk.NUM_KEYPOINTS, dtype=bool)
        mask[anchor] = False
        assert np.all(vals[mask] == 0)

    def test_direct_subtraction(self):
        seq = uniform_frame((0.5, 0.5))
        coords = seq.coords.copy()
        coords[0, sk.LEFT_SHOULDER] = (0.4, 0.5)
        coords[0, sk.RIGHT_SHOULDER] = (0.6, 0.5)
        coords[0, sk.LEFT_WRIST] = (0.3, 0.6)
        coords[0, 91] = (0.32, 0.62)
        seq = sk.SkeletonSequence(coords, seq.confidence)
        vals = sk.to_local(seq).values.reshape(sk.NUM_KEYPOINTS, 2)
        assert np.allclose(vals[sk.LEFT_WRIST], (-0.2, 0.1))
        assert np.allclose(vals[91], (0.02, 0.02))

    def test_roundtrip_random_frames(self):
        seq = random_sequence(frames=1000, seed=42)
        back = sk.from_local(sk.to_local(seq))
        assert np.abs(back.coords - seq.coords).max() < 1e-6

    def test_from_local_zero_offsets(self):
        values = np.zeros((1, sk.MOTION_DIM))
        roots = sk.DEFAULT_ROOT_MAP
        values[0, 2 * roots.anchor: 2 * roots.anchor + 2] = (0.5, 0.5)
        seq = sk.from_local(sk.LocalMotionSequence(values, roots))
        assert np.allclose(seq.coords, 0.5)
        assert np.all(seq.confidence == 1.0)

    def test_from_local_single_hand_offset(self):
        roots = sk.DEFAULT_ROOT_MAP
        values = np.zeros((1, sk.MOTION_DIM))
        values[0, 2 * roots.anchor: 2 * roots.anchor + 2] = (0.5, 0.5)
        values[0, 2 * 92: 2 * 92 + 2] = (0.01, 0.0)
        seq = sk.from_local(sk.LocalMotionSequence(values, roots))
        wrist = seq.coords[0, roots.left_hand_root]
        assert np.allclose(seq.coords[0, 92] - wrist, (0.01, 0.0))
        mask = np.ones(sk.NUM_KEYPOINTS, dtype=bool)
        mask[92] = False
        assert np.allclose(seq.coords[0, mask], 0.5)

    def test_from_local_rejects_mismatched_roots(self):
        lm = sk.to_local(random_sequence(seed=1))
        other = sk.RootMap(face_root=1)
        with pytest.raises(ValueError, match="root map"):
            sk.from_local(lm, other)

    def test_translation_changes_only_anchor_entries(self):
        seq = random_sequence(frames=4, seed=5)
        shifted = sk.SkeletonSequence(seq.coords + np.array([0.13, -0.07]), seq.confidence)
        a = sk.to_local(seq).values
        b = sk.to_local(shifted).values
        anchor = sk.DEFAULT_ROOT_MAP.anchor
        cols = [2 * anchor, 2 * anchor + 1]
        diff = b - a
        assert np.allclose(diff[:, cols[0]], 0.13, atol=1e-12)
        assert np.allclose(diff[:, cols[1]], -0.07, atol=1e-12)
        other = np.delete(diff, cols, axis=1)
        assert np.abs(other).max() < 1e-12

    def test_index_partition_is_total_and_disjoint(self):
        groups = sk.DEFAULT_ROOT_MAP.groups()
        seen = []
        for indices in groups.values():
            seen.extend(indices)
        assert sorted(seen) == list(range(sk.NUM_KEYPOINTS))

    def test_single_keypoint_body_root(self):
        roots = sk.RootMap(body_root=(0, 0))
        seq = random_sequence(frames=8, seed=9)
        back = sk.from_local(sk.to_local(seq, roots))
        assert np.abs(back.coords - seq.coords).max() < 1e-6


class TestSmoothing:
    def test_window_one_is_identity(self):
        seq = random_sequence(frames=10, seed=2)
        out = sk.smooth(seq, window=1)
        assert np.array_equal(out.coords, seq.coords)

    def test_constant_sequence_unchanged(self):
        coords = np.tile(random_sequence(seed=3).coords, (12, 1, 1))
        seq = sk.SkeletonSequence(coords, np.ones(coords.shape[:2]))
        for window in (3, 5, 9):
            out = sk.smooth(seq, window=window)
            assert np.abs(out.coords - coords).max() < 1e-12

    def test_interior_matches_direct_mean(self):
        frames = 21
        tri = np.abs((np.arange(frames) % 8) - 4).astype(float)
        coords = np.zeros((frames, sk.NUM_KEYPOINTS, 2))
        coords[:, :, 1] = tri[:, None]
        seq = sk.SkeletonSequence(coords, np.ones((frames, sk.NUM_KEYPOINTS)))
        out = sk.smooth(seq, window=5, exclude=())
        for f in range(2, frames - 2):
            expected = tri[f - 2: f + 3].mean()
            assert abs(out.coords[f, 0, 1] - expected) < 1e-9

    def test_mouth_kept_bit_identical(self):
        seq = random_sequence(frames=30, seed=4)
        out = sk.smooth(seq, window=7)
        mouth = list(sk.MOUTH_INDICES)
        assert np.array_equal(out.coords[:, mouth], seq.coords[:, mouth])
        others = [i for i in range(sk.NUM_KEYPOINTS) if i not in sk.MOUTH_INDICES]
        assert not np.array_equal(out.coords[:, others], seq.coords[:, others])

    def test_even_window_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            sk.smooth(random_sequence(frames=5), window=4)

    def test_window_longer_than_sequence_gives_full_mean(self):
        seq = random_sequence(frames=3, seed=6)
        out = sk.smooth(seq, window=9, exclude=())
        expected = seq.coords.mean(axis=0)
        assert np.allclose(out.coords, expected[None], atol=1e-12)


class TestNormalization:
    def test_identical_frames_floor_std(self):
        lm = sk.to_local(uniform_frame((0.4, 0.6)))
        stats = sk.fit_normalization([lm, lm, lm])
        assert np.allclose(stats.mean, lm.values[0])
        assert np.all(stats.std == sk.STD_FLOOR)

    def test_population_std(self):
        values = np.zeros((2, sk.MOTION_DIM))
        values[1, 0] = 2.0
        stats = sk.fit_normalization([values])
        assert stats.mean[0] == 1.0
        assert stats.std[0] == 1.0

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(7)
        corpus = [rng.normal(size=(n, sk.MOTION_DIM)) for n in (10, 25, 3)]
        stats = sk.fit_normalization(corpus)
        stacked = np.concatenate(corpus)
        mean = stacked.sum(axis=0) / len(stacked)
        var = ((stacked - mean) ** 2).sum(axis=0) / len(stacked)
        assert np.abs(stats.mean - mean).max() < 1e-9
        assert np.abs(stats.std - np.sqrt(var)).max() < 1e-9

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            sk.fit_normalization([])

    def test_normalize_mean_gives_zero(self):
        seq = random_sequence(frames=50, seed=8)
        lm = sk.to_local(seq)
        stats = sk.fit_normalization([lm])
        mean_lm = sk.LocalMotionSequence(np.tile(stats.mean, (2, 1)), lm.root_map)
        normed = sk.normalize(mean_lm, stats)
        assert np.abs(normed.values).max() < 1e-9

    def test_normalize_roundtrip(self):
        seq = random_sequence(frames=40, seed=9)
        lm = sk.to_local(seq)
        stats = sk.fit_normalization([lm])
        back = sk.denormalize(sk.normalize(lm, stats), stats)
        assert np.abs(back.values - lm.values).max() < 1e-9

    def test_one_std_above_mean_maps_to_one(self):
        stats = sk.NormalizationStats(np.full(sk.MOTION_DIM, 0.5),
                                      np.full(sk.MOTION_DIM, 2.0))
        lm = sk.LocalMotionSequence(np.full((1, sk.MOTION_DIM), 2.5))
        assert np.allclose(sk.normalize(lm, stats).values, 1.0)


class TestHandsAndWidth:
    def test_hand_extraction_counts(self):
        hands = sk.extract_hand_skeletons(random_sequence(frames=5, seed=10))
        assert hands.num_keypoints == 42
        assert hands.num_frames == 5

    def test_hand_index_layout(self):
        seq = random_sequence(frames=2, seed=11)
        hands = sk.extract_hand_skeletons(seq)
        assert np.array_equal(hands.coords[:, 0], seq.coords[:, 91])
        assert np.array_equal(hands.coords[:, 21], seq.coords[:, 112])

    def test_scatter_gather_roundtrip(self):
        seq = random_sequence(frames=3, seed=12)
        hands = sk.extract_hand_skeletons(seq)
        rebuilt = seq.coords.copy()
        rebuilt[:, 91:133] = 0.0
        rebuilt[:, 91:133] = hands.coords
        assert np.array_equal(rebuilt, seq.coords)

    def test_shoulder_width_examples(self):
        seq = uniform_frame((0.0, 0.0))
        coords = seq.coords.copy()
        coords[0, sk.LEFT_SHOULDER] = (0.4, 0.5)
        coords[0, sk.RIGHT_SHOULDER] = (0.6, 0.5)
        frame = sk.SkeletonSequence(coords, seq.confidence).frame(0)
        assert sk.shoulder_width(frame) == pytest.approx(0.2)
        assert sk.shoulder_width(uniform_frame((0.2, 0.7)).frame(0)) == 0.0

    def test_shoulder_width_matches_formula(self):
        frame = random_sequence(seed=13).frame(0)
        a = frame.coords[sk.LEFT_SHOULDER]
        b = frame.coords[sk.RIGHT_SHOULDER]
        expected = ((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2) ** 0.5
        assert sk.shoulder_width(frame) == pytest.approx(expected, abs=1e-12)


class TestValidation:
    def test_rejects_nonfinite_coords(self):
        coords = np.zeros((1, sk.NUM_KEYPOINTS, 2))
        coords[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            sk.SkeletonSequence(coords, np.ones((1, sk.NUM_KEYPOINTS)))

    def test_rejects_bad_confidence(self):
        coords = np.zeros((1, sk.NUM_KEYPOINTS, 2))
        with pytest.raises(ValueError, match="confidence"):
            sk.SkeletonSequence(coords, np.full((1, sk.NUM_KEYPOINTS), 1.5))

    def test_to_local_requires_full_body(self):
        hands = sk.extract_hand_skeletons(random_sequence(seed=14))
        with pytest.raises(ValueError, match="keypoints"):
            sk.to_local(hands)

    def test_root_map_rejects_non_body_roots(self):
        with pytest.raises(ValueError, match="body keypoint"):
            sk.RootMap(face_root=30)


class TestSkeletonFiles:
    def test_roundtrip_preserves_float32_payload(self, tmp_path):
        records = [("clip_a", random_sequence(frames=7, seed=15)),
                   ("clip_b", random_sequence(frames=3, seed=16))]
        path = tmp_path / "clips.skel"
        sk.write_skeleton_file(path, records)
        loaded = dict(sk.read_skeleton_file(path))
        assert set(loaded) == {"clip_a", "clip_b"}
        for clip_id, seq in records:
            got = loaded[clip_id]
            assert got.num_frames == seq.num_frames
            assert np.array_equal(got.coords, seq.coords.astype(np.float32).astype(np.float64))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.skel"
        path.write_bytes(b"NOTSKEL0" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            sk.read_skeleton_file(path)

    def test_manifest_roundtrip(self, tmp_path):
        entries = [("clip_a", 7), ("clip_b", 3)]
        path = tmp_path / "clips.txt"
        sk.write_skeleton_manifest(path, entries)
        assert sk.read_skeleton_manifest(path) == entries
