"""Acoustic model: encoder, VAE, upsampling, decoder, losses, schedules."""

import numpy as np
import pytest

from lrtts.acoustic import (AcousticConfig, AcousticModel, FrameConditioning,
                            GatedConvBlock, KlAnnealSchedule, VaePosterior,
                            build_conditioning_batch, decode, encode_phonemes,
                            frame_to_phoneme_map, kl_anneal_weight, kl_divergence,
                            kl_divergence_t, loss_train, positional_features,
                            sinusoid_embedding, upsample_and_condition,
                            vae_centroid, vae_encode, vae_sample)
from lrtts.corpus import DurationSequence, PhonemeSequence, SpeakerEmbedding
from lrtts.errors import ValidationError
from lrtts.nn import Tensor

from conftest import make_record
from gradcheck import (analytic_grad_entries, numeric_grad_entries,
                       pick_entries, relative_errors)


@pytest.fixture(scope="module")
def paper_model():
    model = AcousticModel(AcousticConfig.paper(vocab_size=12, seed=0))
    model.eval()
    return model


@pytest.fixture(scope="module")
def tiny_model():
    model = AcousticModel(AcousticConfig.tiny(vocab_size=8, seed=1))
    model.eval()
    return model


class TestEncoder:
    def test_single_phoneme_shape(self, paper_model):
        out = encode_phonemes(paper_model, PhonemeSequence(np.array([3])))
        assert out.shape == (1, 512)

    def test_seven_phonemes_hidden_512(self, paper_model):
        out = encode_phonemes(paper_model, PhonemeSequence(np.arange(7)))
        assert out.shape == (7, 512)

    def test_differs_at_changed_position(self, tiny_model):
        a = encode_phonemes(tiny_model, PhonemeSequence(np.array([1, 2, 3, 4, 5])))
        b = encode_phonemes(tiny_model, PhonemeSequence(np.array([1, 2, 7, 4, 5])))
        assert not np.allclose(a[2], b[2])

    def test_empty_rejected(self, tiny_model):
        with pytest.raises(ValidationError):
            PhonemeSequence(np.array([], dtype=np.int64))

    def test_batched_matches_single(self, tiny_model):
        ids_a = np.array([1, 2, 3, 4, 5])
        ids_b = np.array([6, 0, 7])
        batch = np.zeros((2, 5), dtype=np.int64)
        batch[0] = ids_a
        batch[1, :3] = ids_b
        out = tiny_model.encode_batch(batch, np.array([5, 3])).data
        a = encode_phonemes(tiny_model, PhonemeSequence(ids_a))
        b = encode_phonemes(tiny_model, PhonemeSequence(ids_b))
        assert np.allclose(out[0], a)
        assert np.allclose(out[1, :3], b)


class TestVae:
    def test_posterior_dims_64(self, paper_model):
        rec = make_record(durations=(4, 5), bins=80)
        post = vae_encode(paper_model, rec.mel)
        assert post.mu.shape == (64,) and post.log_sigma.shape == (64,)

    def test_deterministic(self, tiny_model):
        rec = make_record(durations=(4, 5), bins=6)
        p1 = vae_encode(tiny_model, rec.mel)
        p2 = vae_encode(tiny_model, rec.mel)
        assert np.array_equal(p1.mu, p2.mu)
        assert np.array_equal(p1.log_sigma, p2.log_sigma)

    def test_single_frame(self, tiny_model):
        rec = make_record(durations=(1,), bins=6)
        post = vae_encode(tiny_model, rec.mel)
        assert np.all(np.isfinite(post.mu))

    def test_sample_collapses_to_mu_at_tiny_sigma(self):
        post = VaePosterior(np.array([0.3, -0.7]), np.array([-745.0, -745.0]))
        z = vae_sample(post, np.random.default_rng(0))
        assert np.allclose(z, post.mu, atol=1e-300)

    def test_sample_reproducible(self):
        post = VaePosterior(np.zeros(4), np.zeros(4))
        a = vae_sample(post, np.random.default_rng(5))
        b = vae_sample(post, np.random.default_rng(5))
        assert np.array_equal(a, b)

    def test_sample_moments(self):
        post = VaePosterior(np.zeros(8), np.zeros(8))
        rng = np.random.default_rng(11)
        draws = np.stack([vae_sample(post, rng) for _ in range(10_000)])
        assert np.all(np.abs(draws.mean(axis=0)) < 0.05)
        assert np.all((draws.var(axis=0) > 0.9) & (draws.var(axis=0) < 1.1))

    def test_centroid_single_record(self, tiny_model):
        rec = make_record(durations=(3, 4), bins=6)
        centroid = vae_centroid(tiny_model, [rec])
        assert np.allclose(centroid, vae_encode(tiny_model, rec.mel).mu)

    def test_centroid_is_mean(self):
        posts = [VaePosterior(np.full(3, 1.0), np.zeros(3)),
                 VaePosterior(np.full(3, 3.0), np.zeros(3))]
        mean = np.mean([p.mu for p in posts], axis=0)
        assert mean[0] == 2.0

    def test_centroid_excludes_synthetic(self, tiny_model):
        rng = np.random.default_rng(3)
        gt = make_record(rec_id="g", durations=(3, 4), bins=6, rng=rng)
        syn = make_record(rec_id="s", durations=(5, 5), bins=6, synthetic=True, rng=rng)
        centroid = vae_centroid(tiny_model, [gt, syn])
        assert np.allclose(centroid, vae_encode(tiny_model, gt.mel).mu)
        with pytest.raises(ValidationError):
            vae_centroid(tiny_model, [syn])

    def test_batched_posterior_matches_single(self, tiny_model):
        rng = np.random.default_rng(9)
        rec_a = make_record(durations=(4, 4), bins=6, rng=rng)
        rec_b = make_record(durations=(2, 3), bins=6, rng=rng)
        batch = np.zeros((2, 8, 6))
        batch[0] = rec_a.mel.data
        batch[1, :5] = rec_b.mel.data
        mu, ls = tiny_model.vae_posterior_batch(batch, np.array([8, 5]))
        assert np.allclose(mu.data[0], vae_encode(tiny_model, rec_a.mel).mu)
        assert np.allclose(mu.data[1], vae_encode(tiny_model, rec_b.mel).mu)
        assert np.allclose(ls.data[1], vae_encode(tiny_model, rec_b.mel).log_sigma)


class TestPositional:
    def test_progress_column_d4(self):
        pos = positional_features(DurationSequence(np.array([4])), width=8)
        assert np.allclose(pos[:, -1], [0.25, 0.5, 0.75, 1.0])

    def test_progress_d1(self):
        pos = positional_features(DurationSequence(np.array([1])), width=8)
        assert pos[:, -1].tolist() == [1.0]

    def test_position_zero_alternates(self):
        emb = sinusoid_embedding(np.array([0.0]), width=8)[0]
        assert np.allclose(emb, [0, 1, 0, 1, 0, 1, 0, 1])

    def test_zero_duration_emits_nothing(self):
        pos = positional_features(DurationSequence(np.array([2, 0, 3])), width=4)
        assert pos.shape == (5, 9)

    def test_all_zero_rejected(self):
        with pytest.raises(ValidationError):
            positional_features(DurationSequence(np.array([0, 0])), width=4)


class TestUpsample:
    SPK = SpeakerEmbedding("s", np.linspace(-1, 1, 4))

    def test_frame_map_2_3(self):
        x = np.random.default_rng(0).standard_normal((2, 6))
        cond = upsample_and_condition(x, np.zeros(3), self.SPK, False,
                                      DurationSequence(np.array([2, 3])), pos_width=4)
        assert cond.n_frames == 5
        assert cond.frame_map.tolist() == [0, 0, 1, 1, 1]

    def test_zero_duration_phoneme_skipped(self):
        x = np.random.default_rng(0).standard_normal((2, 6))
        cond = upsample_and_condition(x, np.zeros(3), self.SPK, False,
                                      DurationSequence(np.array([0, 3])), pos_width=4)
        assert cond.n_frames == 3
        assert cond.frame_map.tolist() == [1, 1, 1]

    def test_synthetic_flag_flips_one_hot_slice_only(self):
        x = np.random.default_rng(0).standard_normal((2, 6))
        d = DurationSequence(np.array([1, 2]))
        a = upsample_and_condition(x, np.zeros(3), self.SPK, False, d, pos_width=4)
        b = upsample_and_condition(x, np.zeros(3), self.SPK, True, d, pos_width=4)
        diff = a.data != b.data
        cols = np.where(diff.any(axis=0))[0]
        start = 6 + 3 + 4  # x_tilde | z | speaker
        assert cols.tolist() == [start, start + 1]

    def test_length_mismatch(self):
        x = np.zeros((2, 6))
        with pytest.raises(ValidationError):
            upsample_and_condition(x, np.zeros(3), self.SPK, False,
                                   DurationSequence(np.array([1, 1, 1])), pos_width=4)

    def test_monotone_map_property(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            frames = rng.integers(0, 5, size=rng.integers(1, 8))
            if frames.sum() == 0:
                continue
            fmap = frame_to_phoneme_map(frames)
            assert fmap.size == frames.sum()
            assert np.all(np.diff(fmap) >= 0)
            # no skips over nonzero-duration phonemes
            assert set(fmap) == {i for i, d in enumerate(frames) if d > 0}


class TestGatedConvBlock:
    def test_zero_weights_identity(self):
        rng = np.random.default_rng(0)
        blk = GatedConvBlock(6, 5, dropout=0.0, rng=rng)
        for p in blk.parameters().values():
            p.data[...] = 0.0
        x = Tensor(rng.standard_normal((1, 7, 6)))
        assert np.allclose(blk(x).data, x.data)

    def test_eval_deterministic(self):
        rng = np.random.default_rng(0)
        blk = GatedConvBlock(6, 5, dropout=0.5, rng=rng)
        blk.eval()
        x = Tensor(rng.standard_normal((1, 7, 6)))
        assert np.array_equal(blk(x).data, blk(x).data)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        blk = GatedConvBlock(4, 5, dropout=0.0, rng=rng)
        blk.eval()
        x = np.random.default_rng(3).standard_normal((1, 6, 4))
        proj = np.random.default_rng(4).standard_normal((1, 6, 4))

        def loss_t():
            return (blk(Tensor(x)) * Tensor(proj)).sum()

        entries = pick_entries(blk.parameters(), 10, np.random.default_rng(5))
        analytic = analytic_grad_entries(loss_t, entries)
        numeric = numeric_grad_entries(lambda: float(loss_t().data), entries)
        assert np.all(relative_errors(analytic, numeric) <= 1e-4)


class TestDecoder:
    def test_shape_5x80(self, paper_model):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 512))
        cond = upsample_and_condition(x, np.zeros(64),
                                      SpeakerEmbedding("s", np.zeros(256)), False,
                                      DurationSequence(np.array([2, 3])), pos_width=32)
        out = decode(paper_model, cond)
        assert out.shape == (5, 80)

    def test_frame_conservation_random(self, tiny_model):
        rng = np.random.default_rng(1)
        cfg = tiny_model.config
        for _ in range(20):
            n = int(rng.integers(1, 6))
            frames = rng.integers(0, 4, size=n)
            if frames.sum() == 0:
                frames[rng.integers(0, n)] = 1
            x = rng.standard_normal((n, cfg.enc_hidden))
            cond = upsample_and_condition(
                x, np.zeros(cfg.vae_latent),
                SpeakerEmbedding("s", np.zeros(cfg.speaker_dim)), False,
                DurationSequence(frames), pos_width=cfg.pos_width)
            assert decode(tiny_model, cond).shape == (frames.sum(), cfg.mel_bins)

    def test_recurrent_stack_is_causal(self, tiny_model):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 10, tiny_model.config.dec_hidden))
        base = tiny_model.decoder_recurrent(Tensor(x)).data
        perturbed = x.copy()
        perturbed[0, 6, :] += 1.0
        out = tiny_model.decoder_recurrent(Tensor(perturbed)).data
        assert np.array_equal(out[0, :6], base[0, :6])
        assert not np.allclose(out[0, 6:], base[0, 6:])


class TestKl:
    def test_standard_normal_zero(self):
        assert kl_divergence(VaePosterior(np.zeros(5), np.zeros(5))) == 0.0

    def test_unit_mean_half(self):
        assert abs(kl_divergence(VaePosterior(np.array([1.0]), np.array([0.0]))) - 0.5) < 1e-12

    def test_sigma_e_closed_form(self):
        val = kl_divergence(VaePosterior(np.array([0.0]), np.array([1.0])))
        expected = 0.5 * (np.e ** 2 - 3.0)
        assert abs(val - expected) < 1e-12
        assert abs(val - 2.19453) < 1e-5

    def test_non_negative_property(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            post = VaePosterior(rng.standard_normal(6) * 3,
                                rng.standard_normal(6) * 2)
            assert kl_divergence(post) >= 0.0

    def test_tensor_matches_scalar(self):
        rng = np.random.default_rng(1)
        mu = rng.standard_normal((3, 4))
        ls = rng.standard_normal((3, 4))
        batch = kl_divergence_t(Tensor(mu), Tensor(ls)).data
        for b in range(3):
            assert abs(batch[b] - kl_divergence(VaePosterior(mu[b], ls[b]))) < 1e-12


class TestLossTrain:
    def test_perfect_prediction_zero(self):
        y = np.ones((4, 3))
        post = VaePosterior(np.zeros(2), np.zeros(2))
        assert loss_train(y, y, post, gamma=1.0) == 0.0

    def test_gamma_zero_pure_l1(self):
        a = np.zeros((2, 2))
        b = np.full((2, 2), 3.0)
        post = VaePosterior(np.array([5.0]), np.array([1.0]))
        assert loss_train(a, b, post, gamma=0.0) == 3.0

    def test_hand_computed_case(self):
        a = np.zeros((2, 2))
        b = np.ones((2, 2))
        post = VaePosterior(np.array([1.0]), np.array([0.0]))
        assert abs(loss_train(a, b, post, gamma=0.5) - 1.25) < 1e-12

    def test_shape_mismatch(self):
        post = VaePosterior(np.zeros(1), np.zeros(1))
        with pytest.raises(ValidationError):
            loss_train(np.zeros((2, 2)), np.zeros((3, 2)), post, gamma=0.0)


class TestKlAnneal:
    SCHED = KlAnnealSchedule(start=1000, end=10_000, gamma_max=1e-2)

    def test_midpoint_half(self):
        assert abs(kl_anneal_weight(5500, self.SCHED) - 0.5e-2) < 1e-15

    def test_far_before_start_near_zero(self):
        assert kl_anneal_weight(0, self.SCHED) < 0.01 * self.SCHED.gamma_max

    def test_boundaries(self):
        assert kl_anneal_weight(self.SCHED.start, self.SCHED) < 0.01 * self.SCHED.gamma_max
        assert kl_anneal_weight(self.SCHED.end, self.SCHED) > 0.99 * self.SCHED.gamma_max

    def test_monotone(self):
        values = [kl_anneal_weight(s, self.SCHED) for s in range(0, 12_000, 37)]
        assert all(b >= a for a, b in zip(values, values[1:]))


class TestConditioningBatch:
    def test_matches_single(self, tiny_model):
        cfg = tiny_model.config
        rng = np.random.default_rng(6)
        x = rng.standard_normal((2, 4, cfg.enc_hidden))
        z = rng.standard_normal((2, cfg.vae_latent))
        speakers = rng.standard_normal((2, cfg.speaker_dim))
        durations = np.array([[2, 0, 3, 1], [1, 1, 0, 0]])
        cond, lengths, fmap = build_conditioning_batch(
            Tensor(x), Tensor(z), speakers, np.array([False, True]), durations,
            cfg.pos_width)
        assert lengths.tolist() == [6, 2]
        single = upsample_and_condition(
            x[1], z[1], SpeakerEmbedding("s", speakers[1]), True,
            DurationSequence(durations[1]), pos_width=cfg.pos_width)
        assert np.allclose(cond.data[1, :2], single.data)
        assert fmap[1, :2].tolist() == single.frame_map.tolist()
