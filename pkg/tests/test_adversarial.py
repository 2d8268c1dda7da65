"""Adversarial fine-tuning: crops, hinge losses, conditional discriminator."""

import numpy as np
import pytest

from lrtts.adversarial import (CROP_FRAMES, Discriminator, DiscriminatorConfig,
                               MelCrop, crop_random, crop_tensors, discriminate,
                               loss_discriminator, loss_discriminator_t,
                               loss_gan_finetune, loss_generator,
                               loss_generator_t, sample_crop_start)
from lrtts.errors import ValidationError
from lrtts.nn import Adam, Tensor
from lrtts.toydata import crop_task_batch


class TestCropSampling:
    def test_exact_length_starts_at_zero(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            assert sample_crop_start(64, rng) == 0

    def test_too_short_signals_skip(self):
        rng = np.random.default_rng(0)
        assert sample_crop_start(63, rng) is None
        crop = crop_random(np.zeros((63, 8)), np.zeros((63, 4)), np.zeros(2), rng)
        assert crop is None

    def test_uniform_coverage(self):
        rng = np.random.default_rng(3)
        counts = np.zeros(37, dtype=int)
        for _ in range(10_000):
            counts[sample_crop_start(100, rng)] += 1
        expectation = 10_000 / 37
        assert np.all(counts >= 0.5 * expectation)
        assert np.all(counts <= 1.5 * expectation)

    def test_chunks_share_start(self):
        rng = np.random.default_rng(1)
        mel = np.arange(100)[:, None] * np.ones((1, 8))
        emb = np.arange(100)[:, None] * np.ones((1, 4))
        for _ in range(20):
            crop = crop_random(mel, emb, np.zeros(2), rng)
            assert crop.mel[0, 0] == crop.embeddings[0, 0] == crop.start_frame
            assert crop.mel.shape[0] == CROP_FRAMES

    def test_crop_tensors_alignment(self):
        mel = Tensor(np.arange(80, dtype=float)[:, None] * np.ones((1, 3)))
        emb = Tensor(np.arange(80, dtype=float)[:, None] * np.ones((1, 2)))
        m, e = crop_tensors(mel, emb, start=10)
        assert m.data[0, 0] == e.data[0, 0] == 10.0

    def test_mismatched_inputs_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValidationError):
            crop_random(np.zeros((70, 8)), np.zeros((71, 4)), np.zeros(2), rng)


class TestLosses:
    def test_generator_values(self):
        assert loss_generator(0.8, 0.3) == pytest.approx(0.5)
        assert loss_generator(0.4, 0.4) == 0.0
        assert loss_generator(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_discriminator_hinge_values(self):
        assert loss_discriminator(2.0, -2.0) == 0.0
        assert loss_discriminator(0.0, 0.0) == 2.0
        assert loss_discriminator(0.5, 0.5) == pytest.approx(2.0)

    def test_hinge_nonnegative_and_zero_condition(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            real = rng.standard_normal(4) * 3
            fake = rng.standard_normal(4) * 3
            val = loss_discriminator(real, fake)
            assert val >= 0.0
            if np.all(real >= 1.0) and np.all(fake <= -1.0):
                assert val == 0.0
            elif np.any(real < 1.0) or np.any(fake > -1.0):
                assert val > 0.0

    def test_gan_finetune_combination(self):
        assert loss_gan_finetune(1.0, 0.5, alpha=2.0) == 2.0
        assert loss_gan_finetune(0.7, 123.0, alpha=0.0) == 0.7
        with pytest.raises(ValidationError):
            loss_gan_finetune(1.0, 1.0, alpha=-0.1)

    def test_tensor_losses_match_scalar(self):
        rng = np.random.default_rng(1)
        real = rng.standard_normal(6)
        fake = rng.standard_normal(6)
        assert float(loss_generator_t(Tensor(real), Tensor(fake)).data) == \
            pytest.approx(loss_generator(real, fake))
        assert float(loss_discriminator_t(Tensor(real), Tensor(fake)).data) == \
            pytest.approx(loss_discriminator(real, fake))


def desk_disc(conditioned=True, seed=0, bins=16, latent=4, emb=6):
    cfg = DiscriminatorConfig.desk(mel_bins=bins, latent_dim=latent, emb_dim=emb,
                                   conditioned=conditioned, seed=seed)
    return Discriminator(cfg)


class TestDiscriminator:
    def test_scalar_per_crop(self):
        model = desk_disc()
        model.eval()
        rng = np.random.default_rng(0)
        scores = model.score_batch(rng.standard_normal((5, 64, 16)),
                                   rng.standard_normal((5, 64, 6)),
                                   rng.standard_normal((5, 4)))
        assert scores.shape == (5,)

    def test_deterministic_in_eval(self):
        model = desk_disc()
        model.eval()
        rng = np.random.default_rng(1)
        crop = MelCrop(rng.standard_normal((64, 16)), rng.standard_normal((64, 6)),
                       rng.standard_normal(4), 0)
        assert discriminate(model, crop) == discriminate(model, crop)

    def test_conditioning_pathway_connected(self):
        model = desk_disc(seed=2)
        model.eval()
        rng = np.random.default_rng(2)
        mel = rng.standard_normal((64, 16))
        z = rng.standard_normal(4)
        a = discriminate(model, MelCrop(mel, np.eye(6)[np.zeros(64, int)], z, 0))
        b = discriminate(model, MelCrop(mel, np.eye(6)[np.full(64, 3)], z, 0))
        assert a != b

    def test_wrong_crop_length_rejected(self):
        model = desk_disc()
        with pytest.raises(ValidationError, match="64"):
            model.score_batch(np.zeros((1, 32, 16)), np.zeros((1, 32, 6)),
                              np.zeros((1, 4)))


def train_crop_discriminator(conditioned: bool, steps: int = 300, seed: int = 0,
                             batch: int = 16):
    """Train on the matched/mismatched task; returns held-out accuracy."""
    rng = np.random.default_rng(seed)
    model = desk_disc(conditioned=conditioned, seed=seed)
    model.train(True)
    opt = Adam(model.parameters())
    for _ in range(steps):
        mel, emb, z, is_real = crop_task_batch(rng, batch)
        scores = model.score_batch(mel, emb if conditioned else None,
                                   z if conditioned else None)
        # hinge on matched (real) vs mismatched (fake)
        loss = loss_discriminator_t(_take(scores, np.flatnonzero(is_real)),
                                    _take(scores, np.flatnonzero(~is_real)))
        model.zero_grad()
        loss.backward()
        opt.step(lr=1e-3)
    model.eval()
    eval_rng = np.random.default_rng(seed + 1000)
    mel, emb, z, is_real = crop_task_batch(eval_rng, 400)
    scores = model.score_batch(mel, emb if conditioned else None,
                               z if conditioned else None).data
    pred_real = scores > 0
    return float(np.mean(pred_real == is_real))


def _take(scores, idx):
    from lrtts.nn import concat
    return concat([scores[int(i)].reshape(1) for i in idx], axis=0)


class TestConditioningValue:
    def test_conditional_separates_mismatches(self):
        acc = train_crop_discriminator(conditioned=True, steps=250, seed=0)
        assert acc >= 0.9

    def test_unconditioned_stays_at_chance(self):
        acc = train_crop_discriminator(conditioned=False, steps=250, seed=0)
        assert acc <= 0.6

    def test_spectral_norm_bounded_after_training(self):
        rng = np.random.default_rng(0)
        model = desk_disc(conditioned=True, seed=3)
        model.train(True)
        opt = Adam(model.parameters())
        for _ in range(120):
            mel, emb, z, is_real = crop_task_batch(rng, 8)
            scores = model.score_batch(mel, emb, z)
            loss = loss_discriminator_t(_take(scores, np.flatnonzero(is_real)),
                                        _take(scores, np.flatnonzero(~is_real)))
            model.zero_grad()
            loss.backward()
            opt.step(lr=1e-3)
        model.eval()
        for name, sn in model.spectral_norm_layers().items():
            w = sn.normalized_weight()
            top = np.linalg.svd(sn._matrix(w), compute_uv=False)[0]
            assert 0.95 <= top <= 1.05, f"{name}: {top}"
