"""Voice conversion: bottleneck shapes, duration preservation, training."""

import numpy as np
import pytest

from lrtts.corpus import DurationSequence, SpeakerEmbedding
from lrtts.errors import ConfigError, ValidationError
from lrtts.vc import (VcConfig, VcModel, VcTrainSettings, augment_corpus,
                      vc_convert, vc_encode_phonemes, vc_prosody_encode, vc_train)

from conftest import make_record


def desk_cfg(**kw):
    return VcConfig.desk(vocab_size=8, mel_bins=10, speaker_dim=6, **kw)


@pytest.fixture(scope="module")
def model():
    m = VcModel(desk_cfg(seed=0))
    m.eval()
    return m


def spk(seed, dim=6, name="s"):
    return SpeakerEmbedding(name, np.random.default_rng(seed).standard_normal(dim))


class TestEncoder:
    def test_pre_conv_input_dimensions(self):
        # embed 64 + speaker 256 concatenated per upsampled frame
        cfg = VcConfig(vocab_size=8, mel_bins=80, speaker_dim=256, embed_dim=64)
        m = VcModel(cfg)
        x, lengths, _ = m.assemble_encoder_input(
            np.array([[1, 2]]), np.array([[1, 1]]), np.zeros((1, 256)))
        assert x.shape == (1, 2, 320)
        assert lengths.tolist() == [2]

    def test_speaker_changes_output(self, model):
        rec = make_record(durations=(2, 3), bins=10)
        a = vc_encode_phonemes(model, rec, spk(1))
        b = vc_encode_phonemes(model, rec, spk(2))
        assert np.mean(np.abs(a - b)) > 0

    def test_zero_duration_phoneme_emits_nothing(self, model):
        rec = make_record(durations=(2, 0, 3), bins=10)
        out = vc_encode_phonemes(model, rec, spk(1))
        assert out.shape[0] == 5

    def test_all_zero_durations_rejected(self, model):
        rec = make_record(durations=(0, 0), bins=10, t=1)
        with pytest.raises(ValidationError):
            vc_encode_phonemes(model, rec, spk(1))


class TestProsody:
    def test_stride_arithmetic(self, model):
        for t, expected in [(8, 2), (9, 3), (1, 1), (4, 1), (5, 2)]:
            rec = make_record(durations=(t,), bins=10)
            seq = vc_prosody_encode(model, rec.mel)
            assert seq.n_frames == expected
            assert seq.n_channels == model.config.prosody_channels

    def test_deterministic(self, model):
        rec = make_record(durations=(7,), bins=10)
        a = vc_prosody_encode(model, rec.mel)
        b = vc_prosody_encode(model, rec.mel)
        assert np.array_equal(a.data, b.data)

    def test_bottleneck_narrower_than_mel(self):
        with pytest.raises(ConfigError):
            VcConfig(vocab_size=4, mel_bins=8, prosody_channels=8)


class TestConvert:
    def test_duration_preserved(self, model):
        rng = np.random.default_rng(0)
        for _ in range(10):
            durs = tuple(int(d) for d in rng.integers(1, 7, size=rng.integers(1, 5)))
            rec = make_record(durations=durs, bins=10, rng=rng)
            out = vc_convert(rec, spk(3), model, spk(4))
            assert out.n_frames == rec.mel.n_frames

    def test_target_embedding_changes_output(self, model):
        rec = make_record(durations=(4, 4), bins=10)
        a = vc_convert(rec, spk(5), model, spk(4))
        b = vc_convert(rec, spk(6), model, spk(4))
        assert np.mean(np.abs(a.data - b.data)) > 0

    def test_speaker_dim_mismatch(self, model):
        rec = make_record(durations=(4,), bins=10)
        with pytest.raises(ValidationError, match="dim"):
            vc_convert(rec, spk(1, dim=9), model, spk(2))


class TestAugment:
    def test_one_synthetic_record_per_source(self, model):
        rng = np.random.default_rng(1)
        sources = [make_record(rec_id=f"u{i}", speaker="sup", durations=(3, 4),
                               bins=10, rng=rng) for i in range(10)]
        table = {"sup": spk(1, name="sup"), "tgt": spk(2, name="tgt")}
        out = augment_corpus(model, sources, table["tgt"], table)
        assert len(out) == 10
        assert all(r.synthetic for r in out)
        assert all(r.speaker_id == "tgt" for r in out)
        for src, dst in zip(sources, out):
            assert dst.durations.total == dst.mel.n_frames
            assert abs(dst.duration_s - src.duration_s) < 1e-12

    def test_mixed_source_speakers_rejected(self, model):
        recs = [make_record(rec_id="a", speaker="s1", durations=(3,), bins=10),
                make_record(rec_id="b", speaker="s2", durations=(3,), bins=10)]
        table = {"s1": spk(1), "s2": spk(2), "tgt": spk(3)}
        with pytest.raises(ValidationError, match="one speaker"):
            augment_corpus(model, recs, table["tgt"], table)


def toy_vc_corpus(bins=10, n_target=4, n_support=4):
    """Deterministic phoneme->band patterns per speaker for overfit tests."""
    rng = np.random.default_rng(7)
    records = []
    floor = float(np.log(1e-5))

    def pattern(phoneme_id, speaker_shift):
        base = np.full(bins, -3.0)
        idx = phoneme_id % bins
        base[idx] = -0.5 + speaker_shift
        base[(idx + 1) % bins] = -1.0 + speaker_shift
        return np.maximum(base, floor + 0.5)

    def build(speaker, shift, count, prefix):
        out = []
        for i in range(count):
            n_ph = int(rng.integers(3, 6))
            ids = rng.integers(0, 8, size=n_ph)
            durs = rng.integers(2, 6, size=n_ph)
            mel_rows = np.concatenate([
                np.tile(pattern(p, shift), (d, 1)) for p, d in zip(ids, durs)])
            rec = make_record(rec_id=f"{prefix}{i}", speaker=speaker,
                              durations=tuple(durs), phoneme_ids=ids,
                              bins=bins, t=len(mel_rows))
            rec.mel.data[...] = mel_rows
            out.append(rec)
        return out

    records += build("tgt", 0.4, n_target, "t")
    records += build("sup", -0.4, n_support, "s")
    table = {"tgt": spk(11, name="tgt"), "sup": spk(12, name="sup")}
    return records, table


class TestTraining:
    def test_toy_training_reconstructs(self):
        # desk budget: 500 multi-speaker steps + 32 target epochs
        records, table = toy_vc_corpus()
        cfg = desk_cfg(seed=0)
        model, log = vc_train(records, table, "tgt", cfg,
                              VcTrainSettings(multi_steps=500, target_epochs=32,
                                              batch_size=4, seed=0))
        target = [r for r in records if r.speaker_id == "tgt"]
        recon = [np.mean(np.abs(vc_convert(r, table["tgt"], model, table["tgt"]).data
                                - r.mel.data)) for r in target]
        assert np.mean(recon) < 0.1
        # self-conversion stays near the training reconstruction loss
        assert recon[0] < 2 * max(log.final_loss, 0.05)

    def test_phase2_sees_only_target(self):
        records, table = toy_vc_corpus(n_target=3, n_support=3)
        cfg = desk_cfg(seed=1)
        _, log = vc_train(records, table, "tgt", cfg,
                          VcTrainSettings(multi_steps=5, target_epochs=2,
                                          batch_size=4, seed=0))
        assert log.phase_speakers[2] == {"tgt"}
        assert "sup" in log.phase_speakers[1]

    def test_seed_determinism(self):
        records, table = toy_vc_corpus(n_target=2, n_support=2)
        cfg = desk_cfg(seed=2)
        s = VcTrainSettings(multi_steps=10, target_epochs=2, batch_size=4, seed=5)
        m1, log1 = vc_train(records, table, "tgt", cfg, s)
        m2, log2 = vc_train(records, table, "tgt", cfg, s)
        assert log1.final_loss == log2.final_loss
        assert m1.checksum() == m2.checksum()

    def test_missing_target_rejected(self):
        records, table = toy_vc_corpus(n_target=2, n_support=2)
        with pytest.raises(ValidationError, match="ghost"):
            vc_train(records, table, "ghost", desk_cfg())
