import struct

import numpy as np
import pytest

from gestureskel import audio


def make_features(rows, seed=0, rate=50.0):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(rows, audio.AUDIO_DIM)).astype(np.float32).astype(np.float64)
    return audio.AudioFeatureSequence(values, rate)


class TestFeatureFiles:
    def test_shape_echo(self, tmp_path):
        feat = make_features(100)
        path = tmp_path / "a.feat"
        audio.save_features(path, feat)
        loaded = audio.load_features(path)
        assert loaded.values.shape == (100, audio.AUDIO_DIM)
        assert loaded.source_rate == 50.0

    def test_roundtrip_bit_exact(self, tmp_path):
        feat = make_features(37, seed=3, rate=25.0)
        path = tmp_path / "b.feat"
        audio.save_features(path, feat)
        loaded = audio.load_features(path)
        assert np.array_equal(loaded.values, feat.values)

    def test_wrong_column_count_rejected(self, tmp_path):
        path = tmp_path / "bad.feat"
        rows, cols = 4, 767
        payload = np.zeros((rows, cols), dtype="<f4").tobytes()
        path.write_bytes(audio.FEATURE_MAGIC + struct.pack("<IIf", rows, cols, 50.0) + payload)
        with pytest.raises(ValueError, match="767"):
            audio.load_features(path)

    def test_nonfinite_payload_rejected(self, tmp_path):
        path = tmp_path / "nan.feat"
        rows = 2
        payload = np.full((rows, audio.AUDIO_DIM), np.nan, dtype="<f4").tobytes()
        path.write_bytes(audio.FEATURE_MAGIC + struct.pack("<IIf", rows, audio.AUDIO_DIM, 50.0) + payload)
        with pytest.raises(ValueError, match="finite"):
            audio.load_features(path)

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "short.feat"
        path.write_bytes(audio.FEATURE_MAGIC + struct.pack("<IIf", 10, audio.AUDIO_DIM, 50.0))
        with pytest.raises(ValueError, match="size mismatch"):
            audio.load_features(path)


class TestAlignment:
    def test_double_rate_reduces_to_pairwise_average(self):
        feat = make_features(500, seed=1, rate=50.0)
        out = audio.align_to_frames(feat, 250)
        assert out.values.shape == (250, audio.AUDIO_DIM)
        # Frame midpoints at 25 FPS land halfway between consecutive 50 Hz rows.
        for f in (0, 100, 249):
            expected = 0.5 * (feat.values[2 * f] + feat.values[2 * f + 1])
            assert np.abs(out.values[f] - expected).max() < 1e-9

    def test_identity_when_timelines_match(self):
        feat = make_features(80, seed=2, rate=25.0)
        out = audio.align_to_frames(feat, 80)
        assert np.abs(out.values - feat.values).max() < 1e-6

    def test_constant_track_stays_constant(self):
        values = np.full((40, audio.AUDIO_DIM), 0.7)
        feat = audio.AudioFeatureSequence(values, 50.0)
        for frames in (1, 7, 100):
            out = audio.align_to_frames(feat, frames)
            assert out.values.shape[0] == frames
            assert np.allclose(out.values, 0.7)

    def test_output_bounded_by_input_range(self):
        feat = make_features(33, seed=4, rate=43.0)
        out = audio.align_to_frames(feat, 57)
        lo = feat.values.min(axis=0) - 1e-12
        hi = feat.values.max(axis=0) + 1e-12
        assert np.all(out.values >= lo) and np.all(out.values <= hi)

    def test_requested_length_always_honoured(self):
        feat = make_features(11, seed=5, rate=50.0)
        for frames in (1, 2, 11, 300):
            assert audio.align_to_frames(feat, frames).values.shape[0] == frames

    def test_single_row_broadcasts(self):
        feat = make_features(1, seed=6)
        out = audio.align_to_frames(feat, 9)
        assert np.allclose(out.values, feat.values[0])

    def test_invalid_frame_count(self):
        with pytest.raises(ValueError):
            audio.align_to_frames(make_features(5), 0)


class TestValidation:
    def test_aligned_sequence_passes(self):
        report = audio.validate_features(make_features(80, rate=25.0), 80)
        assert report.ok and report.issues == ()

    def test_length_mismatch_reported(self):
        report = audio.validate_features(make_features(79, rate=25.0), 80)
        assert not report.ok
        assert any("length mismatch" in issue for issue in report.issues)

    def test_nan_cell_named(self):
        feat = make_features(5, rate=25.0)
        values = feat.values.copy()
        values[3, 17] = np.nan
        broken = object.__new__(audio.AudioFeatureSequence)
        object.__setattr__(broken, "values", values)
        object.__setattr__(broken, "source_rate", 25.0)
        report = audio.validate_features(broken, 5)
        assert not report.ok
        assert any("row 3, column 17" in issue for issue in report.issues)


class TestSyntheticWalk:
    def test_deterministic_and_shaped(self):
        a = audio.synthetic_walk(40, seed=9)
        b = audio.synthetic_walk(40, seed=9)
        c = audio.synthetic_walk(40, seed=10)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)
        assert a.values.shape == (40, audio.AUDIO_DIM)
