"""Synthesis, mel inversion, and objective evaluation."""

import json

import numpy as np
import pytest

from lrtts.acoustic import AcousticConfig, AcousticModel
from lrtts.corpus import (DurationSequence, MelConfig, PhonemeSequence,
                          SpeakerEmbedding, Vocabulary, extract_mel,
                          write_mel_cache)
from lrtts.duration import DurationConfig, DurationModel
from lrtts.errors import ValidationError
from lrtts.pipeline import PipelineConfig
from lrtts.synth import (SynthBundle, SynthesisRequest, duration_rmse,
                         emit_report, eval_mel_distance, evaluate_directories,
                         gap_closure, mel_invert, synthesize, write_wav)

from conftest import make_mel


def untrained_bundle(seed=0):
    cfg = PipelineConfig.desk("tgt", seed=seed)
    vocab = Vocabulary([f"p{i}" for i in range(6)])
    mel_cfg = MelConfig(n_bins=cfg.mel_bins, win_length=512, hop_length=128)
    acoustic = AcousticModel(cfg.acoustic_config(len(vocab)))
    acoustic.eval()
    duration = DurationModel(cfg.duration_config(len(vocab)))
    duration.eval()
    rng = np.random.default_rng(seed)
    speakers = {"tgt": SpeakerEmbedding("tgt", rng.standard_normal(cfg.speaker_dim))}
    return SynthBundle(acoustic=acoustic, duration=duration,
                       centroid=np.zeros(acoustic.config.vae_latent),
                       vocabulary=vocab, speakers=speakers, mel_config=mel_cfg,
                       config=cfg)


class TestSynthesize:
    def test_frame_conservation_random_inputs(self):
        bundle = untrained_bundle()
        rng = np.random.default_rng(0)
        from lrtts.duration import predict_durations, quantize_durations
        for _ in range(10):
            n = int(rng.integers(1, 8))
            req = SynthesisRequest(PhonemeSequence(rng.integers(0, 6, size=n)), "tgt")
            expected = quantize_durations(predict_durations(
                req.phonemes, bundle.speakers["tgt"], bundle.duration)).total
            mel = synthesize(req, bundle)
            assert mel.n_frames == expected

    def test_deterministic(self):
        bundle = untrained_bundle()
        req = SynthesisRequest(PhonemeSequence(np.array([0, 2, 4])), "tgt")
        a = synthesize(req, bundle)
        b = synthesize(req, bundle)
        assert np.array_equal(a.data, b.data)

    def test_override_durations(self):
        bundle = untrained_bundle()
        req = SynthesisRequest(PhonemeSequence(np.array([0, 1, 2])), "tgt",
                               durations=DurationSequence(np.array([3, 3, 3])))
        assert synthesize(req, bundle).n_frames == 9

    def test_override_z_changes_output(self):
        bundle = untrained_bundle()
        d = DurationSequence(np.array([4, 4]))
        req_a = SynthesisRequest(PhonemeSequence(np.array([0, 1])), "tgt", durations=d)
        req_b = SynthesisRequest(PhonemeSequence(np.array([0, 1])), "tgt", durations=d,
                                 z=np.ones(bundle.centroid.size))
        a, b = synthesize(req_a, bundle), synthesize(req_b, bundle)
        assert not np.array_equal(a.data, b.data)

    def test_unknown_speaker(self):
        bundle = untrained_bundle()
        req = SynthesisRequest(PhonemeSequence(np.array([0])), "ghost")
        with pytest.raises(ValidationError, match="ghost"):
            synthesize(req, bundle)


def speech_like_tone(cfg, seconds=0.6):
    rate = cfg.sample_rate
    t = np.arange(int(seconds * rate)) / rate
    wav = sum((0.4 / k) * np.sin(2 * np.pi * k * 150.0 * t) for k in range(1, 9))
    wav *= 0.6 + 0.4 * np.sin(2 * np.pi * 2.3 * t)
    return wav / np.max(np.abs(wav))


class TestMelInvert:
    CFG = MelConfig()

    def test_roundtrip_l1_below_half_log_unit(self):
        wav = speech_like_tone(self.CFG)
        mel0 = extract_mel(wav, self.CFG.sample_rate, self.CFG)
        rec = mel_invert(mel0, self.CFG, iterations=60)
        mel1 = extract_mel(rec, self.CFG.sample_rate, self.CFG)
        assert mel1.n_frames == mel0.n_frames
        assert float(np.mean(np.abs(mel1.data - mel0.data))) < 0.5

    def test_output_range_and_length(self):
        mel = make_mel(20, bins=80)
        out = mel_invert(mel, self.CFG, iterations=2)
        assert out.size == self.CFG.win_length + 19 * self.CFG.hop_length
        assert np.max(np.abs(out)) <= 1.0

    def test_zero_iterations_rejected(self):
        mel = make_mel(8, bins=80)
        with pytest.raises(ValidationError, match="iteration"):
            mel_invert(mel, self.CFG, iterations=0)

    def test_config_mismatch_rejected(self):
        mel = make_mel(8, bins=32)
        with pytest.raises(ValidationError, match="match"):
            mel_invert(mel, self.CFG)

    def test_wav_writer(self, tmp_path):
        from scipy.io import wavfile
        out = tmp_path / "x.wav"
        write_wav(out, np.linspace(-1, 1, 400), 22050)
        rate, data = wavfile.read(out)
        assert rate == 22050 and data.dtype == np.int16 and data.size == 400


class TestEvalMetrics:
    def test_identical_mels(self):
        mel = make_mel(10, bins=8)
        out = eval_mel_distance(mel, mel)
        assert out == {"l1": 0.0, "frame_count_delta": 0}

    def test_length_delta_and_overlap(self):
        rng = np.random.default_rng(0)
        a = make_mel(10, bins=8, rng=rng)
        b = make_mel(12, bins=8, rng=np.random.default_rng(0))
        out = eval_mel_distance(a, b)
        assert out["frame_count_delta"] == -2
        assert out["l1"] == pytest.approx(
            float(np.mean(np.abs(a.data[:10] - b.data[:10]))))

    def test_constant_offset(self):
        a = make_mel(6, bins=4)
        shifted = a.data + 1.0
        assert eval_mel_distance(shifted, a)["l1"] == pytest.approx(1.0)

    def test_bin_mismatch(self):
        with pytest.raises(ValidationError, match="bin"):
            eval_mel_distance(make_mel(5, bins=4), make_mel(5, bins=6))

    def test_duration_rmse(self):
        assert duration_rmse(np.array([3.0, 5.0]), np.array([1.0, 5.0])) == \
            pytest.approx(np.sqrt(2.0))


class TestGapClosure:
    def test_paper_naturalness_15min(self):
        assert gap_closure(82.30, 58.73, 64.22) == pytest.approx(23.3, abs=0.1)

    def test_paper_similarity_15min(self):
        assert gap_closure(95.95, 60.43, 66.21) == pytest.approx(16.3, abs=0.1)

    def test_candidate_equals_baseline(self):
        assert gap_closure(90.0, 60.0, 60.0) == 0.0

    def test_undefined_gap(self):
        with pytest.raises(ValidationError):
            gap_closure(50.0, 60.0, 55.0)

    def test_affine_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            r, b = sorted(rng.uniform(10, 90, size=2))[::-1]
            if r - b < 1e-3:
                continue
            c = rng.uniform(0, 100)
            scale = rng.uniform(0.1, 5.0)
            shift = rng.uniform(-50, 50)
            base = gap_closure(r, b, c)
            moved = gap_closure(r * scale + shift, b * scale + shift,
                                c * scale + shift)
            assert moved == pytest.approx(base, rel=1e-9)


class TestReports:
    METRICS = {"aggregate": {"mel_l1_mean": 0.25, "count": 2},
               "metadata": {"alpha": 0.1, "config_hash": "abcd", "seed": 0,
                            "checkpoint": "stage4"}}

    def test_emit_then_parse_equal(self, tmp_path):
        path = tmp_path / "report.json"
        report = emit_report(self.METRICS, path)
        assert json.loads(path.read_text()) == report

    def test_byte_deterministic(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        emit_report(self.METRICS, a)
        emit_report(self.METRICS, b)
        assert a.read_bytes() == b.read_bytes()

    def test_schema_version_present(self, tmp_path):
        path = tmp_path / "r.json"
        report = emit_report(self.METRICS, path)
        assert report["schema_version"] == 1

    def test_directory_evaluation(self, tmp_path):
        pred, gt = tmp_path / "pred", tmp_path / "gt"
        pred.mkdir(), gt.mkdir()
        rng = np.random.default_rng(0)
        for stem in ("u1", "u2"):
            mel = make_mel(9, bins=6, rng=rng)
            write_mel_cache(pred / f"{stem}.mel", mel)
            write_mel_cache(gt / f"{stem}.mel", mel)
        out = evaluate_directories(pred, gt)
        assert out["aggregate"]["count"] == 2
        assert out["aggregate"]["mel_l1_mean"] < 1e-6
        with pytest.raises(ValidationError):
            evaluate_directories(pred, tmp_path / "empty")
